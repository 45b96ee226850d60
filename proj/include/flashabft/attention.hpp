// flashabft: FlashAttention-2 accelerator model with fused online ABFT checking
// Copyright 2026 The flashabft Authors
// SPDX-License-Identifier: Apache-2.0
//
// The three attention formulations: dense reference (golden oracle), the
// two-pass lazy-softmax-division kernel, and the single-pass streaming kernel
// with delayed softmax division. The streaming per-step update is shared with
// the block-parallel engine so that B=1 scheduling is bit-identical to the
// single-lane kernel.

#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "flashabft/matrix.hpp"
#include "flashabft/numerics.hpp"

namespace flashabft {

struct KernelConfig {
  std::size_t block_size = 16;  // parallel query lanes
  std::size_t seq_len = 0;      // N: keys/values streamed per query
  std::size_t hidden_dim = 0;   // d
  PrecisionPolicy precision = PrecisionPolicy::fp64();
  bool scale_scores = false;  // apply 1/sqrt(d) to scores

  void validate() const {
    if (block_size < 1 || seq_len < 1 || hidden_dim < 1) {
      throw std::invalid_argument("kernel config: B, N, d must all be >= 1");
    }
  }
};

// Per-query registers of one accelerator lane.
struct LaneState {
  std::vector<double> q;  // datapath format
  std::vector<double> o;  // output-accumulator format
  double m = -std::numeric_limits<double>::infinity();
  double ell = 0.0;
  double c = 0.0;  // per-query checksum lane, always fp64
  std::size_t step = 0;
};

// Dot product with every multiply and accumulate rounded to the datapath
// format, matching a sequential multiply-accumulate unit.
inline double rounded_dot(std::span<const double> a, std::span<const double> b,
                          Format f, bool ftz = false) {
  double acc = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) {
    acc = op_round(f, acc + op_round(f, a[j] * b[j], ftz), ftz);
  }
  return acc;
}

namespace detail {

inline double nan_propagating_max(double a, double b) {
  if (std::isnan(a) || std::isnan(b)) return std::numeric_limits<double>::quiet_NaN();
  return b >= a ? b : a;
}

struct StepResult {
  double rescale = 0.0;  // e^{m_prev - m_new}, datapath value
  double weight = 0.0;   // e^{s - m_new}, datapath value
  double score = 0.0;
};

// One streaming step of the softmax statistics: score, running max and
// running sum of exponentials. The first step's rescale factor is defined
// as 0 while m is still at its -inf initialization.
inline StepResult stats_step(std::span<const double> q, std::span<const double> k,
                             double& m, double& ell, const KernelConfig& cfg) {
  const PrecisionPolicy& p = cfg.precision;
  const bool ftz = p.flush_subnormals;
  double s = rounded_dot(q, k, p.datapath, ftz);
  if (cfg.scale_scores) {
    const double scale = round_value(p.datapath,
                                     1.0 / std::sqrt(static_cast<double>(cfg.hidden_dim)), ftz);
    s = op_round(p.datapath, s * scale, ftz);
  }
  const double m_new = op_round(p.stats, nan_propagating_max(m, s), ftz);
  const bool first = std::isinf(m) && m < 0;
  const double rescale =
      first ? 0.0
            : op_round(p.datapath, std::exp(op_round(p.datapath, m - m_new, ftz)), ftz);
  const double weight =
      op_round(p.datapath, std::exp(op_round(p.datapath, s - m_new, ftz)), ftz);
  ell = op_round(p.stats, op_round(p.stats, ell * rescale, ftz) + weight, ftz);
  m = m_new;
  return {rescale, weight, s};
}

inline void accumulate_output(std::span<double> o, std::span<const double> v,
                              double rescale, double weight, Format acc, bool ftz) {
  for (std::size_t j = 0; j < o.size(); ++j) {
    o[j] = op_round(acc, op_round(acc, o[j] * rescale, ftz) +
                             op_round(acc, v[j] * weight, ftz),
                    ftz);
  }
}

inline double canonical_fp64(double x) {
  return std::isnan(x) ? std::numeric_limits<double>::quiet_NaN() : x;
}

}  // namespace detail

// Dense reference: row-softmax(Q K^T) V with max subtraction, all real64
// regardless of the policy. This is the golden oracle.
inline Matrix reference_attention(const Matrix& Q, const Matrix& K, const Matrix& V,
                                  const KernelConfig& cfg) {
  require_attention_dims(Q, K, V);
  cfg.validate();
  const std::size_t n_q = Q.rows, n = K.rows, d = Q.cols;
  const double scale = cfg.scale_scores ? 1.0 / std::sqrt(static_cast<double>(d)) : 1.0;
  Matrix O(n_q, d, MatrixRole::kOutput);
  std::vector<double> s(n);
  for (std::size_t i = 0; i < n_q; ++i) {
    double m = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < n; ++k) {
      double acc = 0.0;
      for (std::size_t j = 0; j < d; ++j) acc += Q.at(i, j) * K.at(k, j);
      s[k] = acc * scale;
      m = std::max(m, s[k]);
    }
    double ell = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      s[k] = std::exp(s[k] - m);
      ell += s[k];
    }
    for (std::size_t j = 0; j < d; ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < n; ++k) acc += s[k] * V.at(k, j);
      O.at(i, j) = acc / ell;
    }
  }
  return O;
}

// Two-pass kernel: pass 1 finds all scores and the global max, pass 2
// accumulates the weighted values and the sum of exponentials, and the
// softmax division happens once at the end.
inline std::vector<double> lazy_attention(std::span<const double> q, const Matrix& K,
                                          const Matrix& V, const KernelConfig& cfg) {
  require_attention_dims(Matrix(1, q.size()), K, V);
  cfg.validate();
  if (q.size() != K.cols) throw std::invalid_argument("lazy_attention: |q| != d");
  const PrecisionPolicy& p = cfg.precision;
  const bool ftz = p.flush_subnormals;
  const std::size_t n = K.rows, d = K.cols;

  std::vector<double> qr(d);
  for (std::size_t j = 0; j < d; ++j) qr[j] = round_value(p.datapath, q[j], ftz);

  std::vector<double> s(n);
  double m = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> k_row(d);
    for (std::size_t j = 0; j < d; ++j) k_row[j] = round_value(p.datapath, K.at(i, j), ftz);
    s[i] = rounded_dot(qr, k_row, p.datapath, ftz);
    if (cfg.scale_scores) {
      const double scale = round_value(p.datapath,
                                       1.0 / std::sqrt(static_cast<double>(d)), ftz);
      s[i] = op_round(p.datapath, s[i] * scale, ftz);
    }
    m = op_round(p.stats, detail::nan_propagating_max(m, s[i]), ftz);
  }

  std::vector<double> o(d, 0.0);
  double ell = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double w =
        op_round(p.datapath, std::exp(op_round(p.datapath, s[i] - m, ftz)), ftz);
    for (std::size_t j = 0; j < d; ++j) {
      const double vj = round_value(p.datapath, V.at(i, j), ftz);
      o[j] = op_round(p.output_accum, o[j] + op_round(p.output_accum, vj * w, ftz), ftz);
    }
    ell = op_round(p.stats, ell + w, ftz);
  }

  std::vector<double> out(d);
  for (std::size_t j = 0; j < d; ++j) out[j] = op_round(p.datapath, o[j] / ell, ftz);
  return out;
}

// Single-pass streaming kernel with delayed softmax division. Returns the
// normalized output and the final lane state (m_N, ell_N exposed for the
// checker and for tests).
inline std::pair<std::vector<double>, LaneState> flash_attention2(
    std::span<const double> q, const Matrix& K, const Matrix& V,
    const KernelConfig& cfg) {
  require_attention_dims(Matrix(1, q.size()), K, V);
  cfg.validate();
  if (q.size() != K.cols) throw std::invalid_argument("flash_attention2: |q| != d");
  const PrecisionPolicy& p = cfg.precision;
  const bool ftz = p.flush_subnormals;
  const std::size_t n = K.rows, d = K.cols;

  LaneState lane;
  lane.q.resize(d);
  lane.o.assign(d, 0.0);
  for (std::size_t j = 0; j < d; ++j) lane.q[j] = round_value(p.datapath, q[j], ftz);

  std::vector<double> k_row(d), v_row(d);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      k_row[j] = round_value(p.datapath, K.at(i, j), ftz);
      v_row[j] = round_value(p.datapath, V.at(i, j), ftz);
    }
    const auto step = detail::stats_step(lane.q, k_row, lane.m, lane.ell, cfg);
    detail::accumulate_output(lane.o, v_row, step.rescale, step.weight,
                              p.output_accum, ftz);
    ++lane.step;
  }

  std::vector<double> out(d);
  for (std::size_t j = 0; j < d; ++j) {
    out[j] = op_round(p.datapath, lane.o[j] / lane.ell, ftz);
  }
  return {std::move(out), std::move(lane)};
}

}  // namespace flashabft
