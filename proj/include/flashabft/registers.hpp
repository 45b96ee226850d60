// flashabft: FlashAttention-2 accelerator model with fused online ABFT checking
// Copyright 2026 The flashabft Authors
// SPDX-License-Identifier: Apache-2.0
//
// Register-level storage inventory of the accelerator. Fault sampling picks
// a uniform bit over the whole inventory, so a register's hit probability is
// proportional to its width. The kernel classes (query/output/max/sum-exp
// plus the k/v staging registers) always dominate the checker classes
// (lane-check/global-check/sumrow) in bit count.

#pragma once

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "flashabft/attention.hpp"
#include "flashabft/numerics.hpp"
#include "flashabft/rng.hpp"

namespace flashabft {

enum class RegisterClass : std::uint8_t {
  kQuery = 0,
  kOutput,
  kMax,
  kSumExp,
  kLaneCheck,
  kGlobalCheck,
  kSumrow,
  kKeyStage,
  kValueStage,
};

inline constexpr std::size_t kNumRegisterClasses = 9;

constexpr const char* to_string(RegisterClass c) {
  switch (c) {
    case RegisterClass::kQuery: return "query";
    case RegisterClass::kOutput: return "output";
    case RegisterClass::kMax: return "max";
    case RegisterClass::kSumExp: return "sum_exp";
    case RegisterClass::kLaneCheck: return "lane_check";
    case RegisterClass::kGlobalCheck: return "global_check";
    case RegisterClass::kSumrow: return "sumrow";
    case RegisterClass::kKeyStage: return "key_stage";
    default: return "value_stage";
  }
}

inline RegisterClass register_class_from_string(const std::string& s) {
  for (std::size_t i = 0; i < kNumRegisterClasses; ++i) {
    const auto c = static_cast<RegisterClass>(i);
    if (s == to_string(c)) return c;
  }
  throw std::invalid_argument("unknown register class: " + s);
}

constexpr bool is_checker_class(RegisterClass c) {
  return c == RegisterClass::kLaneCheck || c == RegisterClass::kGlobalCheck ||
         c == RegisterClass::kSumrow;
}

struct RegisterEntry {
  RegisterClass cls;
  std::uint32_t lane;     // lane index for per-lane classes, 0 otherwise
  std::uint32_t element;  // vector element for vector registers, 0 otherwise
  std::uint32_t width;    // bits
};

struct RegisterInventory {
  std::vector<RegisterEntry> entries;
  std::vector<std::uint64_t> cum_bits;  // exclusive prefix sums, ends at total
  std::uint64_t total_bits = 0;
  std::array<std::uint64_t, kNumRegisterClasses> class_bits{};

  std::uint64_t bits_of(RegisterClass c) const {
    return class_bits[static_cast<std::size_t>(c)];
  }
  std::uint64_t kernel_bits() const {
    std::uint64_t n = 0;
    for (std::size_t i = 0; i < kNumRegisterClasses; ++i) {
      if (!is_checker_class(static_cast<RegisterClass>(i))) n += class_bits[i];
    }
    return n;
  }
  std::uint64_t checker_bits() const { return total_bits - kernel_bits(); }

  // Map a global bit index to (entry, bit within register).
  std::pair<const RegisterEntry*, std::uint32_t> locate(std::uint64_t bit) const {
    if (bit >= total_bits) throw std::out_of_range("inventory bit index out of range");
    std::size_t lo = 0, hi = entries.size();
    while (lo + 1 < hi) {
      const std::size_t mid = (lo + hi) / 2;
      if (cum_bits[mid] <= bit) lo = mid;
      else hi = mid;
    }
    return {&entries[lo], static_cast<std::uint32_t>(bit - cum_bits[lo])};
  }
};

inline Format register_format(RegisterClass c, const PrecisionPolicy& p) {
  switch (c) {
    case RegisterClass::kQuery:
    case RegisterClass::kKeyStage:
    case RegisterClass::kValueStage:
      return p.datapath;
    case RegisterClass::kOutput:
      return p.output_accum;
    case RegisterClass::kMax:
    case RegisterClass::kSumExp:
      return p.stats;
    default:
      return PrecisionPolicy::kChecksumFormat;
  }
}

// Enumerate every storage element of the lane array, the shared staging
// registers and the checker state. Deterministic given the config.
inline RegisterInventory build_inventory(const KernelConfig& cfg) {
  cfg.validate();
  const std::size_t b = cfg.block_size, d = cfg.hidden_dim;
  RegisterInventory inv;
  inv.entries.reserve(b * (2 * d + 3) + 2 * d + 2);

  auto push = [&](RegisterClass cls, std::uint32_t lane, std::uint32_t element) {
    const auto width =
        static_cast<std::uint32_t>(width_bits(register_format(cls, cfg.precision)));
    inv.entries.push_back({cls, lane, element, width});
  };

  for (std::uint32_t lane = 0; lane < b; ++lane) {
    for (std::uint32_t j = 0; j < d; ++j) push(RegisterClass::kQuery, lane, j);
    for (std::uint32_t j = 0; j < d; ++j) push(RegisterClass::kOutput, lane, j);
    push(RegisterClass::kMax, lane, 0);
    push(RegisterClass::kSumExp, lane, 0);
    push(RegisterClass::kLaneCheck, lane, 0);
  }
  for (std::uint32_t j = 0; j < d; ++j) push(RegisterClass::kKeyStage, 0, j);
  for (std::uint32_t j = 0; j < d; ++j) push(RegisterClass::kValueStage, 0, j);
  push(RegisterClass::kSumrow, 0, 0);
  push(RegisterClass::kGlobalCheck, 0, 0);

  inv.cum_bits.resize(inv.entries.size());
  std::uint64_t acc = 0;
  for (std::size_t i = 0; i < inv.entries.size(); ++i) {
    inv.cum_bits[i] = acc;
    acc += inv.entries[i].width;
    inv.class_bits[static_cast<std::size_t>(inv.entries[i].cls)] += inv.entries[i].width;
  }
  inv.total_bits = acc;
  return inv;
}

}  // namespace flashabft
