// flashabft: FlashAttention-2 accelerator model with fused online ABFT checking
// Copyright 2026 The flashabft Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <bit>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "flashabft/numerics.hpp"
#include "flashabft/rng.hpp"

namespace flashabft {

enum class MatrixRole : std::uint8_t { kQuery, kKey, kValue, kOutput, kScores, kGeneric };

// Row-major dense real64 matrix with a role tag.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  MatrixRole role = MatrixRole::kGeneric;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, MatrixRole ro = MatrixRole::kGeneric)
      : rows(r), cols(c), role(ro), data(r * c, 0.0) {}

  double& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

  std::span<double> row(std::size_t r) { return {data.data() + r * cols, cols}; }
  std::span<const double> row(std::size_t r) const {
    return {data.data() + r * cols, cols};
  }
};

// Bitwise equality (the fault-verdict notion of "output corrupted").
inline bool bitwise_equal(const Matrix& a, const Matrix& b) {
  if (a.rows != b.rows || a.cols != b.cols) return false;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    if (std::bit_cast<std::uint64_t>(a.data[i]) !=
        std::bit_cast<std::uint64_t>(b.data[i])) {
      return false;
    }
  }
  return true;
}

inline Matrix round_matrix(const Matrix& m, Format f, bool flush_subnormals = false) {
  Matrix out = m;
  for (double& x : out.data) x = round_value(f, x, flush_subnormals);
  return out;
}

inline Matrix gaussian_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed,
                              MatrixRole role = MatrixRole::kGeneric,
                              double scale = 1.0) {
  Matrix m(rows, cols, role);
  GaussianStream g(seed);
  for (double& x : m.data) x = scale * g.next();
  return m;
}

// Q: Nq x d, K: N x d, V: N x d.
inline void require_attention_dims(const Matrix& Q, const Matrix& K, const Matrix& V) {
  if (Q.rows == 0 || Q.cols == 0 || K.rows == 0 || V.rows == 0) {
    throw std::invalid_argument("attention inputs must be non-empty");
  }
  if (Q.cols != K.cols) {
    throw std::invalid_argument("hidden-dimension mismatch: Q has " +
                                std::to_string(Q.cols) + " cols, K has " +
                                std::to_string(K.cols));
  }
  if (K.cols != V.cols) {
    throw std::invalid_argument("hidden-dimension mismatch between K and V");
  }
  if (K.rows != V.rows) {
    throw std::invalid_argument("sequence-length mismatch between K and V");
  }
}

}  // namespace flashabft
