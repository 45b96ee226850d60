// flashabft: FlashAttention-2 accelerator model with fused online ABFT checking
// Copyright 2026 The flashabft Authors
// SPDX-License-Identifier: Apache-2.0
//
// Bit-flip fault injection. A fault is one (cycle, register, bit) triple;
// the flip lands on stored state at the start of the target cycle, before
// anything that cycle reads. Registers are architectural, so a fault
// addressed to a lane lands in whatever query block is live at its cycle.

#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "flashabft/checker.hpp"
#include "flashabft/engine.hpp"
#include "flashabft/registers.hpp"
#include "flashabft/rng.hpp"

namespace flashabft {

struct FaultSpec {
  std::uint64_t cycle = 0;  // global cycle index across all blocks
  RegisterClass cls = RegisterClass::kQuery;
  std::uint32_t lane = 0;
  std::uint32_t element = 0;
  std::uint32_t bit = 0;

  bool operator==(const FaultSpec&) const = default;
};

// Uniform cycle, uniform bit over the whole inventory (register selection
// probability proportional to its width). Deterministic given the generator.
inline FaultSpec sample_fault(SplitMix64& rng, const RegisterInventory& inv,
                              std::uint64_t schedule_cycles) {
  if (inv.total_bits == 0) throw std::invalid_argument("sample_fault: empty inventory");
  if (schedule_cycles == 0) throw std::invalid_argument("sample_fault: empty schedule");
  FaultSpec spec;
  spec.cycle = bounded(rng, schedule_cycles);
  const auto [entry, bit] = inv.locate(bounded(rng, inv.total_bits));
  spec.cls = entry->cls;
  spec.lane = entry->lane;
  spec.element = entry->element;
  spec.bit = bit;
  return spec;
}

inline void validate_fault(const FaultSpec& spec, const KernelConfig& cfg,
                           std::uint64_t total_cycles) {
  if (spec.cycle >= total_cycles) {
    throw std::invalid_argument("fault cycle " + std::to_string(spec.cycle) +
                                " outside schedule of " + std::to_string(total_cycles) +
                                " cycles");
  }
  const bool per_lane = spec.cls == RegisterClass::kQuery ||
                        spec.cls == RegisterClass::kOutput ||
                        spec.cls == RegisterClass::kMax ||
                        spec.cls == RegisterClass::kSumExp ||
                        spec.cls == RegisterClass::kLaneCheck;
  if (per_lane && spec.lane >= cfg.block_size) {
    throw std::invalid_argument("fault lane out of range");
  }
  const bool vector_reg = spec.cls == RegisterClass::kQuery ||
                          spec.cls == RegisterClass::kOutput ||
                          spec.cls == RegisterClass::kKeyStage ||
                          spec.cls == RegisterClass::kValueStage;
  if (vector_reg && spec.element >= cfg.hidden_dim) {
    throw std::invalid_argument("fault element out of range");
  }
  const auto width =
      static_cast<std::uint32_t>(width_bits(register_format(spec.cls, cfg.precision)));
  if (spec.bit >= width) {
    throw std::invalid_argument("fault bit " + std::to_string(spec.bit) +
                                " out of range for " + std::to_string(width) +
                                "-bit register");
  }
}

inline void apply_fault(RegisterFile& regs, const FaultSpec& spec,
                        const PrecisionPolicy& p) {
  const Format f = register_format(spec.cls, p);
  const auto flip = [&](double& slot) { slot = flip_register_bit(f, slot, spec.bit); };
  switch (spec.cls) {
    case RegisterClass::kQuery: flip(regs.q[spec.lane * regs.dim + spec.element]); break;
    case RegisterClass::kOutput: flip(regs.o[spec.lane * regs.dim + spec.element]); break;
    case RegisterClass::kMax: flip(regs.m[spec.lane]); break;
    case RegisterClass::kSumExp: flip(regs.ell[spec.lane]); break;
    case RegisterClass::kLaneCheck: flip(regs.c[spec.lane]); break;
    case RegisterClass::kGlobalCheck: flip(regs.global_check); break;
    case RegisterClass::kSumrow: flip(regs.sumrow); break;
    case RegisterClass::kKeyStage: flip(regs.k_stage[spec.element]); break;
    case RegisterClass::kValueStage: flip(regs.v_stage[spec.element]); break;
  }
}

inline CycleTap make_fault_tap(std::vector<FaultSpec> faults) {
  return [faults = std::move(faults)](CycleContext& ctx) {
    for (const FaultSpec& f : faults) {
      if (f.cycle == ctx.global_cycle) apply_fault(ctx.regs, f, ctx.cfg.precision);
    }
  };
}

// Fused kernel under a list of injected bit flips. Every spec is validated
// before execution starts.
inline std::pair<Matrix, double> run_with_faults(const Matrix& Q, const Matrix& K,
                                                 const Matrix& V, const KernelConfig& cfg,
                                                 std::span<const FaultSpec> faults) {
  const std::uint64_t total = schedule_cycles(cfg, Q.rows);
  for (const FaultSpec& f : faults) validate_fault(f, cfg, total);
  if (faults.empty()) return fused_kernel(Q, K, V, cfg);
  const CycleTap tap = make_fault_tap({faults.begin(), faults.end()});
  return fused_kernel(Q, K, V, cfg, &tap);
}

// Verdict category as a pure function of (corrupted, flagged).
inline VerdictCategory classify(const Matrix& golden_O, const Matrix& faulty_O,
                                bool flagged) {
  if (golden_O.rows != faulty_O.rows || golden_O.cols != faulty_O.cols) {
    throw std::invalid_argument("classify: output shape mismatch");
  }
  const bool corrupted = !bitwise_equal(golden_O, faulty_O);
  if (corrupted) return flagged ? VerdictCategory::kDetected : VerdictCategory::kSilent;
  return flagged ? VerdictCategory::kFalsePositive : VerdictCategory::kMasked;
}

struct InjectionOutcome {
  Verdict verdict;
  bool output_corrupted = false;
  bool checker_flagged = false;
};

inline InjectionOutcome evaluate_injection(const Matrix& golden_O, const Matrix& faulty_O,
                                           double predicted, double tolerance,
                                           bool nan_aware) {
  const double actual = actual_checksum(faulty_O);
  InjectionOutcome out;
  out.checker_flagged = checksum_flag(predicted, actual, tolerance, nan_aware);
  out.output_corrupted = !bitwise_equal(golden_O, faulty_O);
  out.verdict =
      make_verdict(classify(golden_O, faulty_O, out.checker_flagged), predicted, actual);
  return out;
}

// True when the addressed state can provably never reach an output or a
// checksum: flips on registers that are dead at their cycle. The sumrow
// register is refreshed from staging after the fault window on every stream
// cycle and is unread at epilogues, so flips on it never propagate.
inline bool fault_provably_dead(const FaultSpec& spec, const KernelConfig& cfg,
                                std::size_t num_queries) {
  const std::size_t cycles_per_block = cfg.seq_len + 1;
  const std::size_t block = spec.cycle / cycles_per_block;
  const std::size_t cycle_in_block = spec.cycle % cycles_per_block;
  const bool epilogue = cycle_in_block == cfg.seq_len;

  if (spec.cls == RegisterClass::kSumrow) return true;
  if (epilogue && (spec.cls == RegisterClass::kQuery || spec.cls == RegisterClass::kMax ||
                   spec.cls == RegisterClass::kKeyStage ||
                   spec.cls == RegisterClass::kValueStage)) {
    return true;  // epilogue reads only o, ell, c and the global accumulator
  }
  const bool per_lane = spec.cls == RegisterClass::kQuery ||
                        spec.cls == RegisterClass::kOutput ||
                        spec.cls == RegisterClass::kMax ||
                        spec.cls == RegisterClass::kSumExp ||
                        spec.cls == RegisterClass::kLaneCheck;
  if (per_lane) {
    const std::size_t base = block * cfg.block_size;
    const std::size_t active =
        base < num_queries ? std::min(cfg.block_size, num_queries - base) : 0;
    if (spec.lane >= active) return true;  // lane idle in the live block
  }
  return false;
}

}  // namespace flashabft
