// flashabft: FlashAttention-2 accelerator model with fused online ABFT checking
// Copyright 2026 The flashabft Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <bit>
#include <cstdint>
#include <string>

#include "flashabft/matrix.hpp"

namespace flashabft {

inline constexpr std::uint64_t kFnvOffset = 0xCBF29CE484222325ull;
inline constexpr std::uint64_t kFnvPrime = 0x100000001B3ull;

inline std::uint64_t fnv1a64_byte(std::uint64_t h, std::uint8_t b) {
  return (h ^ b) * kFnvPrime;
}

inline std::uint64_t fnv1a64_u64(std::uint64_t h, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) h = fnv1a64_byte(h, static_cast<std::uint8_t>(v >> (8 * i)));
  return h;
}

inline std::string hex64(std::uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i) {
    s[static_cast<std::size_t>(i)] = digits[v & 0xF];
    v >>= 4;
  }
  return s;
}

// Content digest of a matrix: dimensions plus the little-endian bytes of
// every element's bit pattern.
inline std::string digest_matrix(const Matrix& m) {
  std::uint64_t h = kFnvOffset;
  h = fnv1a64_u64(h, m.rows);
  h = fnv1a64_u64(h, m.cols);
  for (double x : m.data) h = fnv1a64_u64(h, std::bit_cast<std::uint64_t>(x));
  return hex64(h);
}

}  // namespace flashabft
