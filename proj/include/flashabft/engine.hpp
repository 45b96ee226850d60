// flashabft: FlashAttention-2 accelerator model with fused online ABFT checking
// Copyright 2026 The flashabft Authors
// SPDX-License-Identifier: Apache-2.0
//
// Cycle-level block-parallel schedule. Queries are processed in ceil(Nq/B)
// blocks; within a block, cycle i streams (k_i, v_i) to all lanes and each
// lane advances one step; an epilogue cycle performs the per-lane divisions.
// Architectural registers persist across blocks and are reset or overwritten
// by the schedule, never cleared out-of-band.
//
// Per-cycle order: (1) stage k/v, (2) run the cycle tap (the fault window),
// (3) latch the streamed row checksum from staging, (4) lane compute. All
// reads of stored state happen after the tap, so a start-of-cycle bit flip
// is visible to everything the cycle computes.

#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <utility>
#include <vector>

#include "flashabft/attention.hpp"
#include "flashabft/checker.hpp"
#include "flashabft/matrix.hpp"

namespace flashabft {

// Architectural register storage of the lane array plus checker state.
struct RegisterFile {
  std::size_t lanes = 0;
  std::size_t dim = 0;
  std::vector<double> q;        // lanes x dim, datapath format
  std::vector<double> o;        // lanes x dim, output-accumulator format
  std::vector<double> m;        // per lane, stats format
  std::vector<double> ell;      // per lane, stats format
  std::vector<double> c;        // per lane, fp64
  std::vector<double> k_stage;  // dim, datapath format (shared)
  std::vector<double> v_stage;  // dim, datapath format (shared)
  double sumrow = 0.0;          // fp64, refreshed every stream cycle
  double global_check = 0.0;    // fp64, accumulated at epilogues

  RegisterFile(std::size_t b, std::size_t d)
      : lanes(b),
        dim(d),
        q(b * d, 0.0),
        o(b * d, 0.0),
        m(b, -std::numeric_limits<double>::infinity()),
        ell(b, 0.0),
        c(b, 0.0),
        k_stage(d, 0.0),
        v_stage(d, 0.0) {}

  std::span<double> q_lane(std::size_t lane) { return {q.data() + lane * dim, dim}; }
  std::span<double> o_lane(std::size_t lane) { return {o.data() + lane * dim, dim}; }
  std::span<const double> q_lane(std::size_t lane) const {
    return {q.data() + lane * dim, dim};
  }
  std::span<const double> o_lane(std::size_t lane) const {
    return {o.data() + lane * dim, dim};
  }
};

struct CycleContext {
  std::size_t global_cycle = 0;
  std::size_t block = 0;
  std::size_t cycle_in_block = 0;  // == seq_len for the epilogue cycle
  bool epilogue = false;
  std::size_t active_lanes = 0;
  RegisterFile& regs;
  const KernelConfig& cfg;
};

using CycleTap = std::function<void(CycleContext&)>;

inline std::size_t num_blocks(const KernelConfig& cfg, std::size_t num_queries) {
  return (num_queries + cfg.block_size - 1) / cfg.block_size;
}

// Each block takes N stream cycles plus one epilogue cycle.
inline std::size_t schedule_cycles(const KernelConfig& cfg, std::size_t num_queries) {
  return num_blocks(cfg, num_queries) * (cfg.seq_len + 1);
}

struct EngineResult {
  Matrix output;
  double predicted = 0.0;  // global predicted checksum (fused runs only)
};

namespace detail {

inline EngineResult run_engine(const Matrix& Q, const Matrix& K, const Matrix& V,
                               const KernelConfig& cfg, const CycleTap* tap,
                               bool with_checker) {
  require_attention_dims(Q, K, V);
  cfg.validate();
  if (cfg.seq_len != K.rows || cfg.hidden_dim != Q.cols) {
    throw std::invalid_argument("kernel config does not match input dimensions");
  }
  const PrecisionPolicy& p = cfg.precision;
  const bool ftz = p.flush_subnormals;
  const std::size_t n_q = Q.rows, n = K.rows, d = K.cols, b_sz = cfg.block_size;
  const std::size_t blocks = num_blocks(cfg, n_q);

  RegisterFile regs(b_sz, d);
  Matrix O(n_q, d, MatrixRole::kOutput);
  std::size_t global_cycle = 0;

  for (std::size_t b = 0; b < blocks; ++b) {
    const std::size_t base = b * b_sz;
    const std::size_t active = std::min(b_sz, n_q - base);
    // Block start: preload active queries (atomic, not a fault window) and
    // reset the per-lane accumulators. Inactive lanes keep stale state.
    for (std::size_t lane = 0; lane < active; ++lane) {
      auto q_lane = regs.q_lane(lane);
      for (std::size_t j = 0; j < d; ++j) {
        q_lane[j] = round_value(p.datapath, Q.at(base + lane, j), ftz);
      }
    }
    for (std::size_t lane = 0; lane < b_sz; ++lane) {
      regs.m[lane] = -std::numeric_limits<double>::infinity();
      regs.ell[lane] = 0.0;
      regs.c[lane] = 0.0;
      auto o_lane = regs.o_lane(lane);
      for (std::size_t j = 0; j < d; ++j) o_lane[j] = 0.0;
    }

    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < d; ++j) {
        regs.k_stage[j] = round_value(p.datapath, K.at(i, j), ftz);
        regs.v_stage[j] = round_value(p.datapath, V.at(i, j), ftz);
      }
      if (tap) {
        CycleContext ctx{global_cycle, b, i, false, active, regs, cfg};
        (*tap)(ctx);
      }
      if (with_checker) {
        double acc = 0.0;
        for (std::size_t j = 0; j < d; ++j) acc += regs.v_stage[j];
        regs.sumrow = acc;
      }
      for (std::size_t lane = 0; lane < active; ++lane) {
        const auto step = stats_step(regs.q_lane(lane), regs.k_stage, regs.m[lane],
                                     regs.ell[lane], cfg);
        if (with_checker) {
          merged_update_split(regs.c[lane], regs.o_lane(lane), regs.sumrow,
                              regs.v_stage, step.rescale, step.weight, p);
        } else {
          accumulate_output(regs.o_lane(lane), regs.v_stage, step.rescale,
                            step.weight, p.output_accum, ftz);
        }
      }
      ++global_cycle;
    }

    // Epilogue: per-lane divisions; the global check accumulates lane checks
    // in lane order.
    if (tap) {
      CycleContext ctx{global_cycle, b, n, true, active, regs, cfg};
      (*tap)(ctx);
    }
    for (std::size_t lane = 0; lane < active; ++lane) {
      const auto o_lane = regs.o_lane(lane);
      for (std::size_t j = 0; j < d; ++j) {
        O.at(base + lane, j) = op_round(p.datapath, o_lane[j] / regs.ell[lane], ftz);
      }
      if (with_checker) {
        const double check_q = canonical_fp64(regs.c[lane] / regs.ell[lane]);
        regs.global_check = canonical_fp64(regs.global_check + check_q);
      }
    }
    ++global_cycle;
  }

  return {std::move(O), regs.global_check};
}

}  // namespace detail

// Kernel-only block schedule (no checker wired in).
inline Matrix run_block_schedule(const Matrix& Q, const Matrix& K, const Matrix& V,
                                 const KernelConfig& cfg, const CycleTap* tap = nullptr) {
  return detail::run_engine(Q, K, V, cfg, tap, /*with_checker=*/false).output;
}

// Block schedule with the checker wired in: the streamed row checksum feeds
// every lane's merged update, and the epilogue accumulates c_N / ell_N per
// lane into the global predicted checksum.
inline std::pair<Matrix, double> fused_kernel(const Matrix& Q, const Matrix& K,
                                              const Matrix& V, const KernelConfig& cfg,
                                              const CycleTap* tap = nullptr) {
  EngineResult r = detail::run_engine(Q, K, V, cfg, tap, /*with_checker=*/true);
  return {std::move(r.output), r.predicted};
}

}  // namespace flashabft
