// flashabft: FlashAttention-2 accelerator model with fused online ABFT checking
// Copyright 2026 The flashabft Authors
// SPDX-License-Identifier: Apache-2.0
//
// Bit-exact emulation of the accelerator number formats. The datapath value
// domain is double; every emulated-format value is kept as the double that
// decodes exactly from its storage bit pattern, so encoding is lossless and
// fault injection can flip stored bits directly.

#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>

namespace flashabft {

enum class Format : std::uint8_t { kBf16, kFp32, kFp64 };

constexpr int width_bits(Format f) {
  switch (f) {
    case Format::kBf16: return 16;
    case Format::kFp32: return 32;
    default: return 64;
  }
}

constexpr const char* to_string(Format f) {
  switch (f) {
    case Format::kBf16: return "bf16";
    case Format::kFp32: return "fp32";
    default: return "fp64";
  }
}

inline Format format_from_string(const std::string& s) {
  if (s == "bf16") return Format::kBf16;
  if (s == "fp32") return Format::kFp32;
  if (s == "fp64") return Format::kFp64;
  throw std::invalid_argument("unknown format: " + s);
}

// BFloat16: 1 sign, 8 exponent, 7 mantissa bits.
inline constexpr std::uint16_t kBf16QuietNan = 0x7FC0;
inline constexpr std::uint16_t kBf16Inf = 0x7F80;

inline double decode_bf16(std::uint16_t bits) {
  if ((bits & 0x7FFFu) > 0x7F80u) {
    // NaN: build the double directly so payloads (and quiet-ness) survive;
    // an FP conversion instruction would quiet a signaling payload.
    const std::uint64_t sign = static_cast<std::uint64_t>(bits >> 15) << 63;
    const std::uint64_t payload = static_cast<std::uint64_t>(bits & 0x7Fu) << 45;
    return std::bit_cast<double>(sign | 0x7FF0000000000000ull | payload);
  }
  return static_cast<double>(
      std::bit_cast<float>(static_cast<std::uint32_t>(bits) << 16));
}

// Round a double to the nearest BFloat16 (ties to even), directly on the
// bit pattern so no intermediate float rounding can disturb ties. Overflow
// goes to infinity, NaN keeps its top payload bits (decode/encode round-trips
// are therefore the identity on all 2^16 patterns).
inline std::uint16_t round_to_bf16_bits(double x, bool flush_subnormals = false) {
  const std::uint64_t bits = std::bit_cast<std::uint64_t>(x);
  const auto sign = static_cast<std::uint16_t>((bits >> 48) & 0x8000u);
  const std::uint64_t abs = bits & 0x7FFFFFFFFFFFFFFFull;
  if (abs > 0x7FF0000000000000ull) {  // NaN
    auto payload = static_cast<std::uint16_t>((bits >> 45) & 0x7Fu);
    if (payload == 0) payload = 0x40;  // keep it a NaN after truncation
    return static_cast<std::uint16_t>(sign | 0x7F80u | payload);
  }
  if (abs == 0x7FF0000000000000ull) return static_cast<std::uint16_t>(sign | kBf16Inf);
  const int exp = static_cast<int>(abs >> 52);
  if (exp == 0) return sign;  // below 2^-1022: rounds to zero in bf16
  const int unbiased = exp - 1023;
  if (unbiased >= 128) return static_cast<std::uint16_t>(sign | kBf16Inf);
  const std::uint64_t sig = (1ull << 52) | (abs & 0xFFFFFFFFFFFFFull);
  const bool subnormal_target = unbiased < -126;
  const int drop = subnormal_target ? 45 + (-126 - unbiased) : 45;
  if (drop >= 54) return sign;  // too small to round up to the least subnormal
  std::uint64_t keep = sig >> drop;
  const std::uint64_t round = (sig >> (drop - 1)) & 1ull;
  const bool sticky = (sig & ((1ull << (drop - 1)) - 1ull)) != 0;
  if (round && (sticky || (keep & 1ull))) ++keep;
  std::uint16_t out;
  if (!subnormal_target) {
    int e = unbiased + 127;
    if (keep == 256) {  // mantissa carry
      keep = 128;
      ++e;
      if (e >= 255) return static_cast<std::uint16_t>(sign | kBf16Inf);
    }
    out = static_cast<std::uint16_t>(sign | (e << 7) | (keep & 0x7Fu));
  } else {
    // keep in [0,128]; 128 lands exactly on the minimum normal encoding.
    out = static_cast<std::uint16_t>(sign | keep);
  }
  if (flush_subnormals && (out & 0x7F80u) == 0 && (out & 0x7Fu) != 0) {
    return sign;
  }
  return out;
}

inline double round_to_bf16(double x, bool flush_subnormals = false) {
  return decode_bf16(round_to_bf16_bits(x, flush_subnormals));
}

inline double round_to_fp32(double x) {
  return static_cast<double>(static_cast<float>(x));
}

// Round a value into the given storage format. fp64 is the identity.
inline double round_value(Format f, double x, bool flush_subnormals = false) {
  switch (f) {
    case Format::kBf16: return round_to_bf16(x, flush_subnormals);
    case Format::kFp32: return round_to_fp32(x);
    default: return x;
  }
}

// Arithmetic results canonicalize NaN payloads so runs stay bit-reproducible.
inline double op_round(Format f, double x, bool flush_subnormals = false) {
  const double r = round_value(f, x, flush_subnormals);
  return std::isnan(r) ? std::numeric_limits<double>::quiet_NaN() : r;
}

// A stored BFloat16 value; `bits` is the architectural register content.
struct Bf16 {
  std::uint16_t bits = 0;

  static Bf16 from_double(double x, bool flush_subnormals = false) {
    return Bf16{round_to_bf16_bits(x, flush_subnormals)};
  }
  double to_double() const { return decode_bf16(bits); }
  bool operator==(const Bf16&) const = default;
};

enum class Bf16Op : std::uint8_t { kAdd, kMul, kDiv, kMax, kExp };

// Datapath arithmetic: compute in real64, round once, canonicalize NaN.
// kMax returns the larger operand's stored pattern (IEEE NaN propagation).
inline Bf16 bf16_op(Bf16Op op, Bf16 a, Bf16 b = Bf16{}) {
  const double da = a.to_double();
  const double db = b.to_double();
  switch (op) {
    case Bf16Op::kAdd: return Bf16{round_to_bf16_bits(op_round(Format::kBf16, da + db))};
    case Bf16Op::kMul: return Bf16{round_to_bf16_bits(op_round(Format::kBf16, da * db))};
    case Bf16Op::kDiv: return Bf16{round_to_bf16_bits(op_round(Format::kBf16, da / db))};
    case Bf16Op::kExp: return Bf16{round_to_bf16_bits(op_round(Format::kBf16, std::exp(da)))};
    case Bf16Op::kMax:
      if (std::isnan(da) || std::isnan(db)) return Bf16{kBf16QuietNan};
      return db >= da ? b : a;
  }
  return Bf16{kBf16QuietNan};
}

// Flip exactly one bit of a stored pattern. Width is the register width.
inline std::uint64_t flip_bit(std::uint64_t pattern, unsigned width, unsigned index) {
  if (width == 0 || width > 64) throw std::out_of_range("flip_bit: bad register width");
  if (index >= width) throw std::out_of_range("flip_bit: bit index out of range");
  return pattern ^ (1ull << index);
}

// Encode a stored register value into its format's bit pattern. Register
// values are rounded on every write, so this encoding is exact.
inline std::uint64_t encode_register(Format f, double value) {
  switch (f) {
    case Format::kBf16: return round_to_bf16_bits(value);
    case Format::kFp32: return std::bit_cast<std::uint32_t>(static_cast<float>(value));
    default: return std::bit_cast<std::uint64_t>(value);
  }
}

inline double decode_register(Format f, std::uint64_t pattern) {
  switch (f) {
    case Format::kBf16: return decode_bf16(static_cast<std::uint16_t>(pattern));
    case Format::kFp32: return static_cast<double>(std::bit_cast<float>(static_cast<std::uint32_t>(pattern)));
    default: return std::bit_cast<double>(pattern);
  }
}

inline double flip_register_bit(Format f, double value, unsigned bit) {
  const std::uint64_t pattern = encode_register(f, value);
  return decode_register(f, flip_bit(pattern, static_cast<unsigned>(width_bits(f)), bit));
}

// Number-format policy for one kernel run. Checksum accumulators are always
// 64-bit; that is a fixed property of the checker, not a knob.
struct PrecisionPolicy {
  Format datapath = Format::kFp64;
  Format output_accum = Format::kFp64;
  Format stats = Format::kFp64;  // m and ell registers
  bool flush_subnormals = false;

  static constexpr Format kChecksumFormat = Format::kFp64;

  static PrecisionPolicy fp64() { return {}; }
  static PrecisionPolicy fp32() {
    return {Format::kFp32, Format::kFp32, Format::kFp32, false};
  }
  // bf16 datapath with the usual wider multiply-accumulate: fp32 output
  // accumulators, bf16 m/ell registers. An all-bf16 pipeline is spelled
  // "bf16/bf16/bf16".
  static PrecisionPolicy bf16() {
    return {Format::kBf16, Format::kFp32, Format::kBf16, false};
  }

  std::string name() const {
    if (*this == fp64()) return "fp64";
    if (*this == fp32()) return "fp32";
    if (*this == bf16()) return "bf16";
    return std::string(to_string(datapath)) + "/" + to_string(output_accum) + "/" +
           to_string(stats);
  }

  static PrecisionPolicy parse(const std::string& s) {
    if (s == "fp64") return fp64();
    if (s == "fp32") return fp32();
    if (s == "bf16") return bf16();
    // "dp/accum/stats" spelled out explicitly
    const auto a = s.find('/');
    if (a != std::string::npos) {
      const auto b = s.find('/', a + 1);
      if (b == std::string::npos) throw std::invalid_argument("bad policy: " + s);
      PrecisionPolicy p;
      p.datapath = format_from_string(s.substr(0, a));
      p.output_accum = format_from_string(s.substr(a + 1, b - a - 1));
      p.stats = format_from_string(s.substr(b + 1));
      return p;
    }
    throw std::invalid_argument("unknown policy: " + s);
  }

  bool operator==(const PrecisionPolicy&) const = default;
};

}  // namespace flashabft
