// flashabft: FlashAttention-2 accelerator model with fused online ABFT checking
// Copyright 2026 The flashabft Authors
// SPDX-License-Identifier: Apache-2.0
//
// Campaign orchestration: seeded fault-injection campaigns against one golden
// run, tolerance calibration from fault-free runs, and the detection-rate
// sweep over hidden dimensions. Campaigns fan out across worker threads with
// per-campaign child seeds; results are written into indexed slots and
// reduced in index order, so reports are independent of the worker count.

#pragma once

#include <algorithm>
#include <array>
#include <atomic>
#include <cstdint>
#include <limits>
#include <mutex>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "flashabft/digest.hpp"
#include "flashabft/faults.hpp"
#include "flashabft/version.hpp"

namespace flashabft {

// Seed-stream tags (see derive_seed); recorded here so a manifest plus the
// master seed reproduces every random draw in a run.
inline constexpr std::uint64_t kInputStreamTag = 0x1AB0;
inline constexpr std::uint64_t kCampaignStreamTag = 0xFA07;
inline constexpr std::uint64_t kCalibrationStreamTag = 0xCA1B;

enum class InputSource : std::uint8_t { kSyntheticGaussian, kFile };

struct FaultCountRange {
  std::uint32_t min = 1;
  std::uint32_t max = 1;
};

struct CampaignConfig {
  std::uint32_t num_campaigns = 2000;
  FaultCountRange faults_per_campaign{1, 1};
  std::size_t seq_len = 256;
  std::size_t hidden_dim = 128;
  std::size_t block_size = 16;
  PrecisionPolicy precision = PrecisionPolicy::bf16();
  bool scale_scores = false;
  double tolerance = 1e-6;
  bool tolerance_calibrated = false;
  bool nan_aware = false;
  std::uint64_t master_seed = 0;
  InputSource input_source = InputSource::kSyntheticGaussian;
  bool keep_records = false;
  unsigned num_threads = 0;  // 0 = hardware concurrency; never part of reports

  KernelConfig kernel() const {
    KernelConfig k;
    k.block_size = block_size;
    k.seq_len = seq_len;
    k.hidden_dim = hidden_dim;
    k.precision = precision;
    k.scale_scores = scale_scores;
    return k;
  }

  void validate() const {
    if (num_campaigns < 1) throw std::invalid_argument("num_campaigns must be >= 1");
    if (faults_per_campaign.min > faults_per_campaign.max) {
      throw std::invalid_argument("fault count range is inverted");
    }
    kernel().validate();
  }
};

struct CampaignRecord {
  std::uint32_t index = 0;
  std::uint64_t child_seed = 0;
  std::vector<FaultSpec> faults;
  VerdictCategory verdict = VerdictCategory::kMasked;
  double predicted = 0.0;
  double actual = 0.0;
  bool output_corrupted = false;
  bool flagged = false;
};

struct CategoryCounts {
  std::uint64_t detected = 0;
  std::uint64_t false_positive = 0;
  std::uint64_t silent = 0;
  std::uint64_t masked = 0;

  std::uint64_t total() const { return detected + false_positive + silent + masked; }
  void add(VerdictCategory v) {
    switch (v) {
      case VerdictCategory::kDetected: ++detected; break;
      case VerdictCategory::kFalsePositive: ++false_positive; break;
      case VerdictCategory::kSilent: ++silent; break;
      case VerdictCategory::kMasked: ++masked; break;
    }
  }
};

struct CategoryRates {
  double detected = 0.0;
  double false_positive = 0.0;
  double silent = 0.0;
  double masked = 0.0;
};

struct RunManifest {
  std::string tool_version;
  std::uint64_t master_seed = 0;
  std::string q_digest, k_digest, v_digest;
};

struct CampaignReport {
  CampaignConfig config;
  RunManifest manifest;
  CategoryCounts counts;
  std::array<CategoryCounts, kNumRegisterClasses> by_first_fault_class{};
  double golden_predicted = 0.0;
  double golden_actual = 0.0;
  std::vector<CampaignRecord> records;  // only when config.keep_records

  // Rates over all campaigns (four categories).
  CategoryRates rates() const {
    const auto n = static_cast<double>(counts.total());
    if (n == 0) return {};
    return {static_cast<double>(counts.detected) / n,
            static_cast<double>(counts.false_positive) / n,
            static_cast<double>(counts.silent) / n,
            static_cast<double>(counts.masked) / n};
  }

  // Rates normalized over the three flagged-vs-corrupted categories, the
  // convention of hardware fault-injection reports that fold masked runs out.
  CategoryRates non_masked_rates() const {
    const auto n = static_cast<double>(counts.detected + counts.false_positive +
                                       counts.silent);
    if (n == 0) return {};
    return {static_cast<double>(counts.detected) / n,
            static_cast<double>(counts.false_positive) / n,
            static_cast<double>(counts.silent) / n, 0.0};
  }
};

namespace detail {

inline unsigned resolve_threads(unsigned requested) {
  if (requested > 0) return requested;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? hw : 1;
}

// Run fn(i) for i in [0, n) across workers; any exception is rethrown.
template <typename Fn>
void parallel_for_indexed(std::uint64_t n, unsigned threads, Fn&& fn) {
  threads = std::min<std::uint64_t>(resolve_threads(threads), std::max<std::uint64_t>(n, 1));
  if (threads <= 1) {
    for (std::uint64_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::uint64_t> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  pool.reserve(threads);
  for (unsigned t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      while (!failed.load(std::memory_order_relaxed)) {
        const std::uint64_t i = next.fetch_add(1, std::memory_order_relaxed);
        if (i >= n) break;
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!error) error = std::current_exception();
          failed.store(true, std::memory_order_relaxed);
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace detail

// Synthetic inputs: i.i.d. standard normal sampled at fp64, then rounded to
// the datapath format. Queries equal the sequence length (full self-attention).
struct CampaignInputs {
  Matrix Q, K, V;
};

inline CampaignInputs make_campaign_inputs(const CampaignConfig& cfg) {
  const bool ftz = cfg.precision.flush_subnormals;
  const Format dp = cfg.precision.datapath;
  auto gen = [&](std::uint64_t role_index, MatrixRole role) {
    Matrix m = gaussian_matrix(cfg.seq_len, cfg.hidden_dim,
                               derive_seed(cfg.master_seed, kInputStreamTag,
                                           cfg.hidden_dim * 4 + role_index),
                               role);
    return round_matrix(m, dp, ftz);
  };
  return {gen(0, MatrixRole::kQuery), gen(1, MatrixRole::kKey), gen(2, MatrixRole::kValue)};
}

inline RunManifest make_manifest(const CampaignConfig& cfg, const Matrix& Q,
                                 const Matrix& K, const Matrix& V) {
  RunManifest m;
  m.tool_version = std::string(kToolName) + " " + kToolVersion;
  m.master_seed = cfg.master_seed;
  m.q_digest = digest_matrix(Q);
  m.k_digest = digest_matrix(K);
  m.v_digest = digest_matrix(V);
  return m;
}

// One campaign batch: golden run once, then per-campaign seeded fault lists,
// faulty reruns, and verdict tallies. Deterministic given the config.
inline CampaignReport run_campaigns(const CampaignConfig& cfg, const Matrix& Q,
                                    const Matrix& K, const Matrix& V) {
  cfg.validate();
  require_attention_dims(Q, K, V);
  const KernelConfig kcfg = cfg.kernel();

  const auto [golden_O, golden_pred] = fused_kernel(Q, K, V, kcfg);
  const RegisterInventory inv = build_inventory(kcfg);
  const std::uint64_t cycles = schedule_cycles(kcfg, Q.rows);

  std::vector<CampaignRecord> results(cfg.num_campaigns);
  const Matrix& golden = golden_O;
  detail::parallel_for_indexed(
      cfg.num_campaigns, cfg.num_threads, [&](std::uint64_t i) {
        CampaignRecord rec;
        rec.index = static_cast<std::uint32_t>(i);
        rec.child_seed = derive_seed(cfg.master_seed, kCampaignStreamTag, i);
        SplitMix64 rng(rec.child_seed);
        std::uint32_t n_faults = cfg.faults_per_campaign.min;
        if (cfg.faults_per_campaign.max > cfg.faults_per_campaign.min) {
          n_faults += static_cast<std::uint32_t>(bounded(
              rng, cfg.faults_per_campaign.max - cfg.faults_per_campaign.min + 1));
        }
        rec.faults.reserve(n_faults);
        for (std::uint32_t f = 0; f < n_faults; ++f) {
          rec.faults.push_back(sample_fault(rng, inv, cycles));
        }
        const auto [faulty_O, predicted] = run_with_faults(Q, K, V, kcfg, rec.faults);
        const InjectionOutcome outcome = evaluate_injection(
            golden, faulty_O, predicted, cfg.tolerance, cfg.nan_aware);
        rec.verdict = outcome.verdict.category;
        rec.predicted = outcome.verdict.predicted;
        rec.actual = outcome.verdict.actual;
        rec.output_corrupted = outcome.output_corrupted;
        rec.flagged = outcome.checker_flagged;
        results[i] = std::move(rec);
      });

  CampaignReport report;
  report.config = cfg;
  report.manifest = make_manifest(cfg, Q, K, V);
  report.golden_predicted = golden_pred;
  report.golden_actual = actual_checksum(golden_O);
  for (const CampaignRecord& rec : results) {
    report.counts.add(rec.verdict);
    if (!rec.faults.empty()) {
      report.by_first_fault_class[static_cast<std::size_t>(rec.faults.front().cls)].add(
          rec.verdict);
    }
  }
  if (cfg.keep_records) report.records = std::move(results);
  return report;
}

inline CampaignReport run_campaigns(const CampaignConfig& cfg) {
  const CampaignInputs in = make_campaign_inputs(cfg);
  return run_campaigns(cfg, in.Q, in.K, in.V);
}

// Tolerance calibration: the largest |predicted - actual| over fault-free
// runs on fresh random inputs, times a safety factor of 10. Zero false flags
// on the calibration corpus hold by construction.
inline constexpr double kCalibrationSafetyFactor = 10.0;

inline double calibrate_tolerance(const CampaignConfig& cfg, std::uint32_t num_trials) {
  if (num_trials < 100) {
    throw std::invalid_argument("calibrate_tolerance: at least 100 trials required");
  }
  const KernelConfig kcfg = cfg.kernel();
  kcfg.validate();
  const bool ftz = cfg.precision.flush_subnormals;
  const Format dp = cfg.precision.datapath;

  std::vector<double> disc(num_trials, 0.0);
  detail::parallel_for_indexed(num_trials, cfg.num_threads, [&](std::uint64_t t) {
    auto gen = [&](std::uint64_t role) {
      Matrix m = gaussian_matrix(cfg.seq_len, cfg.hidden_dim,
                                 derive_seed(cfg.master_seed, kCalibrationStreamTag,
                                             t * 3 + role));
      return round_matrix(m, dp, ftz);
    };
    const Matrix Q = gen(0), K = gen(1), V = gen(2);
    const auto [O, predicted] = fused_kernel(Q, K, V, kcfg);
    disc[t] = std::fabs(predicted - actual_checksum(O));
  });
  const double max_disc = *std::max_element(disc.begin(), disc.end());
  return std::max(max_disc * kCalibrationSafetyFactor,
                  std::numeric_limits<double>::min());
}

struct SweepRow {
  std::size_t dim = 0;
  double checker_bit_fraction = 0.0;
  CampaignReport report;
};

struct SweepTable {
  std::vector<SweepRow> rows;
};

// Campaigns per hidden dimension. With require_fp_decreasing set, throws
// unless the false-positive rate strictly decreases along the given dims.
inline SweepTable detection_vs_dimension_sweep(const std::vector<std::size_t>& dims,
                                               const CampaignConfig& base,
                                               bool require_fp_decreasing = false) {
  if (dims.empty()) throw std::invalid_argument("sweep: dims must be non-empty");
  SweepTable table;
  table.rows.reserve(dims.size());
  for (const std::size_t d : dims) {
    CampaignConfig cfg = base;
    cfg.hidden_dim = d;
    SweepRow row;
    row.dim = d;
    const RegisterInventory inv = build_inventory(cfg.kernel());
    row.checker_bit_fraction =
        static_cast<double>(inv.checker_bits()) / static_cast<double>(inv.total_bits);
    row.report = run_campaigns(cfg);
    table.rows.push_back(std::move(row));
  }
  if (require_fp_decreasing) {
    for (std::size_t i = 1; i < table.rows.size(); ++i) {
      const double prev = table.rows[i - 1].report.non_masked_rates().false_positive;
      const double cur = table.rows[i].report.non_masked_rates().false_positive;
      if (!(cur < prev)) {
        throw std::runtime_error(
            "false-positive rate not strictly decreasing from d=" +
            std::to_string(table.rows[i - 1].dim) + " to d=" +
            std::to_string(table.rows[i].dim));
      }
    }
  }
  return table;
}

}  // namespace flashabft
