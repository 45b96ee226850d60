// flashabft: FlashAttention-2 accelerator model with fused online ABFT checking
// Copyright 2026 The flashabft Authors
// SPDX-License-Identifier: Apache-2.0
//
// Checksum machinery: offline checksum oracles over the dense softmax matrix,
// the merged per-step update used by the streaming checker, the actual output
// checksum, and the flag comparison. Checksum arithmetic is always fp64.

#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "flashabft/attention.hpp"
#include "flashabft/matrix.hpp"
#include "flashabft/numerics.hpp"

namespace flashabft {

enum class VerdictCategory : std::uint8_t { kDetected, kFalsePositive, kSilent, kMasked };

constexpr const char* to_string(VerdictCategory v) {
  switch (v) {
    case VerdictCategory::kDetected: return "detected";
    case VerdictCategory::kFalsePositive: return "false_positive";
    case VerdictCategory::kSilent: return "silent";
    default: return "masked";
  }
}

struct Verdict {
  VerdictCategory category = VerdictCategory::kMasked;
  double predicted = 0.0;
  double actual = 0.0;
  double abs_diff = 0.0;  // |predicted - actual| when both finite
};

// Relative error with a unit floor so near-zero checksums do not blow up.
inline double rel_err(double a, double b) {
  const double scale = std::max({std::fabs(a), std::fabs(b), 1.0});
  return std::fabs(a - b) / scale;
}

// Per-row sums of V, accumulated in fp64.
inline std::vector<double> sumrow_vector(const Matrix& V) {
  std::vector<double> out(V.rows, 0.0);
  for (std::size_t k = 0; k < V.rows; ++k) {
    double acc = 0.0;
    for (std::size_t j = 0; j < V.cols; ++j) acc += V.at(k, j);
    out[k] = acc;
  }
  return out;
}

// Per-column sums of the row-softmax matrix S.
inline std::vector<double> sumcol_vector(const Matrix& S) {
  std::vector<double> out(S.cols, 0.0);
  for (std::size_t i = 0; i < S.rows; ++i) {
    for (std::size_t k = 0; k < S.cols; ++k) out[k] += S.at(i, k);
  }
  return out;
}

namespace detail {

// Dense fp64 row-softmax of Q K^T with max subtraction.
inline Matrix dense_softmax(const Matrix& Q, const Matrix& K, bool scale_scores) {
  const std::size_t n_q = Q.rows, n = K.rows, d = Q.cols;
  const double scale = scale_scores ? 1.0 / std::sqrt(static_cast<double>(d)) : 1.0;
  Matrix S(n_q, n, MatrixRole::kScores);
  for (std::size_t i = 0; i < n_q; ++i) {
    double m = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < n; ++k) {
      double acc = 0.0;
      for (std::size_t j = 0; j < d; ++j) acc += Q.at(i, j) * K.at(k, j);
      S.at(i, k) = acc * scale;
      m = std::max(m, S.at(i, k));
    }
    double ell = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      S.at(i, k) = std::exp(S.at(i, k) - m);
      ell += S.at(i, k);
    }
    for (std::size_t k = 0; k < n; ++k) S.at(i, k) /= ell;
  }
  return S;
}

}  // namespace detail

struct OfflineCheckForms {
  double sumcol_form = 0.0;    // dot of per-column S checksums with per-row V checksums
  double per_query_form = 0.0; // sum over queries of per-query checks
};

// Both algebraic routes to the offline checksum, computed independently.
// The summation-interchange identity says they agree in real arithmetic.
inline OfflineCheckForms offline_check_forms(const Matrix& Q, const Matrix& K,
                                             const Matrix& V, bool scale_scores = false) {
  require_attention_dims(Q, K, V);
  const Matrix S = detail::dense_softmax(Q, K, scale_scores);
  const std::vector<double> srow = sumrow_vector(V);

  OfflineCheckForms forms;
  const std::vector<double> scol = sumcol_vector(S);
  double check = 0.0;
  for (std::size_t k = 0; k < S.cols; ++k) check += scol[k] * srow[k];
  forms.sumcol_form = check;

  double per_query = 0.0;
  for (std::size_t i = 0; i < S.rows; ++i) {
    double cq = 0.0;
    for (std::size_t k = 0; k < S.cols; ++k) cq += S.at(i, k) * srow[k];
    per_query += cq;
  }
  forms.per_query_form = per_query;
  return forms;
}

inline constexpr double kInterchangeTolerance = 1e-12;

// Offline checksum oracle. Validates the summation-interchange identity at
// runtime and returns the per-column-checksum form.
inline double offline_check(const Matrix& Q, const Matrix& K, const Matrix& V,
                            bool scale_scores = false) {
  const OfflineCheckForms f = offline_check_forms(Q, K, V, scale_scores);
  if (rel_err(f.sumcol_form, f.per_query_form) > kInterchangeTolerance) {
    throw std::runtime_error(
        "offline_check: summation-interchange identity violated (" +
        std::to_string(f.sumcol_form) + " vs " + std::to_string(f.per_query_form) + ")");
  }
  return f.sumcol_form;
}

// Merged per-step update of the extended output vector o* = [c | o].
// Element 0 is the per-query checksum lane and always accumulates in fp64;
// the remaining elements follow the output-accumulator format.
inline void merged_update_split(double& check_lane, std::span<double> o,
                                double check_input, std::span<const double> v,
                                double rescale, double weight,
                                const PrecisionPolicy& p) {
  detail::accumulate_output(o, v, rescale, weight, p.output_accum, p.flush_subnormals);
  check_lane = detail::canonical_fp64(check_lane * rescale + check_input * weight);
}

inline void merged_update(std::span<double> o_star, std::span<const double> v_star,
                          double rescale, double weight, const PrecisionPolicy& p) {
  if (o_star.size() != v_star.size() || o_star.empty()) {
    throw std::invalid_argument("merged_update: o* and v* must have equal size >= 1");
  }
  merged_update_split(o_star[0], o_star.subspan(1), v_star[0], v_star.subspan(1),
                      rescale, weight, p);
}

// Sum of all elements of the output matrix, accumulated in fp64.
inline double actual_checksum(const Matrix& O) {
  double acc = 0.0;
  for (double x : O.data) acc += x;
  return acc;
}

// Flag decision. In faithful mode (default) any comparison involving NaN
// yields no flag, reproducing silent-through-NaN behavior; in nan_aware mode
// a non-finite value on exactly one side flags.
inline bool checksum_flag(double predicted, double actual, double tolerance,
                          bool nan_aware = false) {
  if (tolerance <= 0.0) throw std::invalid_argument("checksum_flag: tolerance must be > 0");
  if (nan_aware && (std::isfinite(predicted) != std::isfinite(actual))) return true;
  return std::fabs(predicted - actual) > tolerance;  // false whenever NaN appears
}

inline Verdict make_verdict(VerdictCategory cat, double predicted, double actual) {
  Verdict v;
  v.category = cat;
  v.predicted = predicted;
  v.actual = actual;
  v.abs_diff = (std::isfinite(predicted) && std::isfinite(actual))
                   ? std::fabs(predicted - actual)
                   : std::numeric_limits<double>::quiet_NaN();
  return v;
}

}  // namespace flashabft
