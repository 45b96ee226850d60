// flashabft: FlashAttention-2 accelerator model with fused online ABFT checking
// Copyright 2026 The flashabft Authors
// SPDX-License-Identifier: Apache-2.0
//
// Deterministic random streams. All randomness in the project flows from one
// master seed through explicit stream tags, so any run can be replayed from
// its manifest. std::normal_distribution is not pinned across standard
// library implementations, so the Gaussian generator is hand-rolled.

#pragma once

#include <cmath>
#include <cstdint>

namespace flashabft {

inline constexpr std::uint64_t kSplitMix64Gamma = 0x9E3779B97F4A7C15ull;

inline std::uint64_t splitmix64_finalize(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next() {
    state_ += kSplitMix64Gamma;
    return splitmix64_finalize(state_);
  }

 private:
  std::uint64_t state_;
};

// Child-seed derivation: mixes a stream tag and an index into the master
// seed. Used for per-campaign, per-trial and input-generation streams.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream_tag,
                                 std::uint64_t index = 0) {
  std::uint64_t z = splitmix64_finalize(master ^ (stream_tag * kSplitMix64Gamma));
  return splitmix64_finalize(z + index * kSplitMix64Gamma);
}

// Uniform in (0, 1]; never zero so it is safe under log().
inline double uniform01(SplitMix64& g) {
  return (static_cast<double>(g.next() >> 11) + 1.0) * 0x1.0p-53;
}

// Uniform integer in [0, n) without modulo bias (Lemire's method).
inline std::uint64_t bounded(SplitMix64& g, std::uint64_t n) {
  using u128 = unsigned __int128;
  std::uint64_t x = g.next();
  u128 m = static_cast<u128>(x) * static_cast<u128>(n);
  auto low = static_cast<std::uint64_t>(m);
  if (low < n) {
    const std::uint64_t threshold = -n % n;
    while (low < threshold) {
      x = g.next();
      m = static_cast<u128>(x) * static_cast<u128>(n);
      low = static_cast<std::uint64_t>(m);
    }
  }
  return static_cast<std::uint64_t>(m >> 64);
}

// Standard normal via Box-Muller, pairwise cached.
class GaussianStream {
 public:
  explicit GaussianStream(std::uint64_t seed) : g_(seed) {}

  double next() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    const double u1 = uniform01(g_);
    const double u2 = uniform01(g_);
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(theta);
    have_spare_ = true;
    return r * std::cos(theta);
  }

 private:
  SplitMix64 g_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace flashabft
