// flashabft: FlashAttention-2 accelerator model with fused online ABFT checking
// Copyright 2026 The flashabft Authors
// SPDX-License-Identifier: Apache-2.0

#include "flashabft/faults.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <map>

#include "flashabft/matrix.hpp"
#include "flashabft/registers.hpp"
#include "flashabft/rng.hpp"

namespace flashabft {
namespace {

KernelConfig make_cfg(std::size_t n, std::size_t d,
                      PrecisionPolicy p = PrecisionPolicy::fp64(),
                      std::size_t block = 16) {
  KernelConfig cfg;
  cfg.block_size = block;
  cfg.seq_len = n;
  cfg.hidden_dim = d;
  cfg.precision = p;
  return cfg;
}

TEST(Inventory, HandComputedBitTotals) {
  // B=1, d=2, bf16 datapath / fp32 accumulators: q=32, o=64, m=16, ell=16,
  // c=64, k-stage=32, v-stage=32, sumrow=64, global=64 -> 384 bits.
  KernelConfig cfg = make_cfg(4, 2, PrecisionPolicy::bf16(), 1);
  const RegisterInventory inv = build_inventory(cfg);
  EXPECT_EQ(inv.total_bits, 384u);
  EXPECT_EQ(inv.bits_of(RegisterClass::kQuery), 32u);
  EXPECT_EQ(inv.bits_of(RegisterClass::kOutput), 64u);
  EXPECT_EQ(inv.bits_of(RegisterClass::kMax), 16u);
  EXPECT_EQ(inv.bits_of(RegisterClass::kSumExp), 16u);
  EXPECT_EQ(inv.bits_of(RegisterClass::kLaneCheck), 64u);
  EXPECT_EQ(inv.bits_of(RegisterClass::kGlobalCheck), 64u);
  EXPECT_EQ(inv.bits_of(RegisterClass::kSumrow), 64u);
  EXPECT_EQ(inv.bits_of(RegisterClass::kKeyStage), 32u);
  EXPECT_EQ(inv.bits_of(RegisterClass::kValueStage), 32u);
}

TEST(Inventory, DoublingLanesDoublesLaneClassesOnly) {
  const KernelConfig c1 = make_cfg(4, 8, PrecisionPolicy::bf16(), 4);
  const KernelConfig c2 = make_cfg(4, 8, PrecisionPolicy::bf16(), 8);
  const RegisterInventory a = build_inventory(c1);
  const RegisterInventory b = build_inventory(c2);
  for (const RegisterClass cls : {RegisterClass::kQuery, RegisterClass::kOutput,
                                  RegisterClass::kMax, RegisterClass::kSumExp,
                                  RegisterClass::kLaneCheck}) {
    EXPECT_EQ(b.bits_of(cls), 2 * a.bits_of(cls));
  }
  for (const RegisterClass cls : {RegisterClass::kGlobalCheck, RegisterClass::kSumrow,
                                  RegisterClass::kKeyStage, RegisterClass::kValueStage}) {
    EXPECT_EQ(b.bits_of(cls), a.bits_of(cls));
  }
}

TEST(Inventory, CheckerFractionSmallAndKernelDominates) {
  const RegisterInventory inv =
      build_inventory(make_cfg(256, 128, PrecisionPolicy::bf16(), 16));
  const double frac =
      static_cast<double>(inv.checker_bits()) / static_cast<double>(inv.total_bits);
  EXPECT_LT(frac, 0.05);
  EXPECT_GT(inv.kernel_bits(), inv.checker_bits());
  // Checker fraction shrinks as the hidden dimension grows.
  const RegisterInventory small =
      build_inventory(make_cfg(256, 64, PrecisionPolicy::bf16(), 16));
  const double frac_small =
      static_cast<double>(small.checker_bits()) / static_cast<double>(small.total_bits);
  EXPECT_GT(frac_small, frac);
}

TEST(SampleFault, SingleBitInventoryAlwaysBitZero) {
  RegisterInventory inv;
  inv.entries.push_back({RegisterClass::kGlobalCheck, 0, 0, 1});
  inv.cum_bits = {0};
  inv.total_bits = 1;
  SplitMix64 g(5);
  for (int i = 0; i < 20; ++i) {
    const FaultSpec f = sample_fault(g, inv, 10);
    EXPECT_EQ(f.bit, 0u);
    EXPECT_EQ(f.cls, RegisterClass::kGlobalCheck);
    EXPECT_LT(f.cycle, 10u);
  }
}

TEST(SampleFault, ClassHitRatesMatchBitFractions) {
  const KernelConfig cfg = make_cfg(32, 16, PrecisionPolicy::bf16(), 4);
  const RegisterInventory inv = build_inventory(cfg);
  SplitMix64 g(99);
  constexpr int kSamples = 100000;
  std::array<std::uint64_t, kNumRegisterClasses> hits{};
  for (int i = 0; i < kSamples; ++i) {
    const FaultSpec f = sample_fault(g, inv, schedule_cycles(cfg, 32));
    ++hits[static_cast<std::size_t>(f.cls)];
  }
  for (std::size_t c = 0; c < kNumRegisterClasses; ++c) {
    const double expected =
        static_cast<double>(inv.class_bits[c]) / static_cast<double>(inv.total_bits);
    const double observed = static_cast<double>(hits[c]) / kSamples;
    EXPECT_NEAR(observed, expected, 0.01) << to_string(static_cast<RegisterClass>(c));
  }
}

TEST(SampleFault, DeterministicGivenSeed) {
  const KernelConfig cfg = make_cfg(16, 8, PrecisionPolicy::bf16(), 4);
  const RegisterInventory inv = build_inventory(cfg);
  SplitMix64 a(123), b(123);
  for (int i = 0; i < 50; ++i) {
    EXPECT_EQ(sample_fault(a, inv, 100), sample_fault(b, inv, 100));
  }
}

TEST(RunWithFaults, EmptyListIsBitIdenticalToFused) {
  const Matrix Q = gaussian_matrix(9, 8, 301);
  const Matrix K = gaussian_matrix(12, 8, 302);
  const Matrix V = gaussian_matrix(12, 8, 303);
  const KernelConfig cfg = make_cfg(12, 8, PrecisionPolicy::bf16(), 4);
  const auto [O1, p1] = fused_kernel(Q, K, V, cfg);
  const auto [O2, p2] = run_with_faults(Q, K, V, cfg, {});
  EXPECT_TRUE(bitwise_equal(O1, O2));
  EXPECT_EQ(std::bit_cast<std::uint64_t>(p1), std::bit_cast<std::uint64_t>(p2));
}

TEST(RunWithFaults, InvalidSpecRejectedBeforeExecution) {
  const Matrix Q = gaussian_matrix(4, 4, 311);
  const Matrix K = gaussian_matrix(4, 4, 312);
  const Matrix V = gaussian_matrix(4, 4, 313);
  const KernelConfig cfg = make_cfg(4, 4, PrecisionPolicy::bf16(), 4);
  FaultSpec bad_cycle{schedule_cycles(cfg, 4), RegisterClass::kQuery, 0, 0, 0};
  EXPECT_THROW((void)run_with_faults(Q, K, V, cfg, {{bad_cycle}}), std::invalid_argument);
  FaultSpec bad_bit{0, RegisterClass::kQuery, 0, 0, 16};  // bf16 register
  EXPECT_THROW((void)run_with_faults(Q, K, V, cfg, {{bad_bit}}), std::invalid_argument);
  FaultSpec bad_lane{0, RegisterClass::kMax, 4, 0, 0};
  EXPECT_THROW((void)run_with_faults(Q, K, V, cfg, {{bad_lane}}), std::invalid_argument);
  FaultSpec bad_elem{0, RegisterClass::kValueStage, 0, 4, 0};
  EXPECT_THROW((void)run_with_faults(Q, K, V, cfg, {{bad_elem}}), std::invalid_argument);
}

TEST(RunWithFaults, GlobalCheckSignFlipIsFalsePositive) {
  const std::size_t n = 32, d = 8;
  const Matrix Q = gaussian_matrix(n, d, 321);
  const Matrix K = gaussian_matrix(n, d, 322);
  const Matrix V = gaussian_matrix(n, d, 323);
  const KernelConfig cfg = make_cfg(n, d, PrecisionPolicy::fp64(), 8);
  const auto [golden, gpred] = fused_kernel(Q, K, V, cfg);

  // Flip the global accumulator's sign bit at the last epilogue cycle.
  const FaultSpec spec{schedule_cycles(cfg, n) - 1, RegisterClass::kGlobalCheck, 0, 0, 63};
  const auto [faulty, fpred] = run_with_faults(Q, K, V, cfg, {{spec}});
  EXPECT_TRUE(bitwise_equal(golden, faulty));
  ASSERT_GT(std::fabs(gpred), 1e-3);  // seeded instance has a sizable check
  const InjectionOutcome out = evaluate_injection(golden, faulty, fpred, 1e-6, false);
  EXPECT_TRUE(out.checker_flagged);
  EXPECT_EQ(out.verdict.category, VerdictCategory::kFalsePositive);
}

TEST(RunWithFaults, OutputExponentFlipEarlyIsDetected) {
  const std::size_t n = 256, d = 16;
  const Matrix Q = gaussian_matrix(32, d, 331);
  const Matrix K = gaussian_matrix(n, d, 332);
  Matrix V = gaussian_matrix(n, d, 333);
  // Pin the element so that after cycle 0 the o-register holds 0.75
  // (binary exponent 1022) and flipping exponent bit 62 lands on a huge
  // finite value rather than the NaN encoding.
  V.at(0, 3) = 0.75;
  const KernelConfig cfg = make_cfg(n, d, PrecisionPolicy::fp64(), 16);
  const auto [golden, gpred] = fused_kernel(Q, K, V, cfg);
  (void)gpred;
  const FaultSpec spec{1, RegisterClass::kOutput, 2, 3, 62};
  const auto [faulty, fpred] = run_with_faults(Q, K, V, cfg, {{spec}});
  const InjectionOutcome out = evaluate_injection(golden, faulty, fpred, 1e-6, false);
  EXPECT_TRUE(out.output_corrupted);
  EXPECT_TRUE(out.checker_flagged);
  EXPECT_EQ(out.verdict.category, VerdictCategory::kDetected);
  EXPECT_GT(std::fabs(out.verdict.predicted - out.verdict.actual), 1e-3);
}

TEST(RunWithFaults, QueryFlipAtEpilogueIsMasked) {
  // A q-register bit flipped after its block's last read never propagates.
  const std::size_t n = 16, d = 8;
  const Matrix Q = gaussian_matrix(4, d, 341);
  const Matrix K = gaussian_matrix(n, d, 342);
  const Matrix V = gaussian_matrix(n, d, 343);
  const KernelConfig cfg = make_cfg(n, d, PrecisionPolicy::bf16(), 4);
  const auto [golden, gpred] = fused_kernel(Q, K, V, cfg);
  const FaultSpec spec{/*epilogue cycle=*/n, RegisterClass::kQuery, 1, 2, 14};
  EXPECT_TRUE(fault_provably_dead(spec, cfg, 4));
  const auto [faulty, fpred] = run_with_faults(Q, K, V, cfg, {{spec}});
  EXPECT_TRUE(bitwise_equal(golden, faulty));
  EXPECT_EQ(std::bit_cast<std::uint64_t>(gpred), std::bit_cast<std::uint64_t>(fpred));
}

TEST(RunWithFaults, FaultLocalityAcrossBlocks) {
  // Blocks completed before the fault cycle are bit-identical to golden.
  const std::size_t n = 12, d = 6, n_q = 12, b = 4;
  const Matrix Q = gaussian_matrix(n_q, d, 351);
  const Matrix K = gaussian_matrix(n, d, 352);
  const Matrix V = gaussian_matrix(n, d, 353);
  const KernelConfig cfg = make_cfg(n, d, PrecisionPolicy::bf16(), b);
  const auto [golden, gpred] = fused_kernel(Q, K, V, cfg);
  (void)gpred;
  // Fault in the middle of block 1 (cycles 13..25).
  const FaultSpec spec{(n + 1) + 5, RegisterClass::kOutput, 2, 1, 30};
  const auto [faulty, fpred] = run_with_faults(Q, K, V, cfg, {{spec}});
  (void)fpred;
  for (std::size_t i = 0; i < b; ++i) {  // block 0 rows untouched
    for (std::size_t j = 0; j < d; ++j) {
      ASSERT_EQ(std::bit_cast<std::uint64_t>(golden.at(i, j)),
                std::bit_cast<std::uint64_t>(faulty.at(i, j)));
    }
  }
  // Block 2 rows are also untouched: lane state resets at block start.
  for (std::size_t i = 2 * b; i < 3 * b; ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      ASSERT_EQ(std::bit_cast<std::uint64_t>(golden.at(i, j)),
                std::bit_cast<std::uint64_t>(faulty.at(i, j)));
    }
  }
}

TEST(RunWithFaults, SensitivityOfOutputRegisterFlips) {
  // Sampled property: at fp64, flipping any mantissa bit above bit 0 of a
  // live o-register at a pre-epilogue cycle either moves the actual
  // checksum by more than 1e-6 or changes the output matrix.
  const std::size_t n = 24, d = 8, n_q = 8;
  const Matrix Q = gaussian_matrix(n_q, d, 361);
  const Matrix K = gaussian_matrix(n, d, 362);
  const Matrix V = gaussian_matrix(n, d, 363);
  const KernelConfig cfg = make_cfg(n, d, PrecisionPolicy::fp64(), 4);
  const auto [golden, gpred] = fused_kernel(Q, K, V, cfg);
  (void)gpred;
  const double golden_actual = actual_checksum(golden);
  SplitMix64 g(364);
  for (int trial = 0; trial < 40; ++trial) {
    FaultSpec spec;
    spec.cls = RegisterClass::kOutput;
    spec.lane = static_cast<std::uint32_t>(bounded(g, 4));
    spec.element = static_cast<std::uint32_t>(bounded(g, d));
    spec.bit = 1 + static_cast<std::uint32_t>(bounded(g, 51));  // mantissa, above bit 0
    const std::uint64_t block = bounded(g, 2);
    // Pre-epilogue cycles past the block's first step: a flip at the very
    // first cycle lands on o = 0 and is erased by the rescale-by-zero.
    spec.cycle = block * (n + 1) + 1 + bounded(g, n - 1);
    const auto [faulty, fpred] = run_with_faults(Q, K, V, cfg, {{spec}});
    (void)fpred;
    const bool moved = std::fabs(actual_checksum(faulty) - golden_actual) > 1e-6;
    const bool changed = !bitwise_equal(golden, faulty);
    ASSERT_TRUE(moved || changed) << "trial " << trial;
  }
}

TEST(Classify, CategoryMapping) {
  Matrix a(2, 2), b(2, 2);
  a.at(0, 0) = 1.0;
  b.at(0, 0) = 1.0;
  EXPECT_EQ(classify(a, b, true), VerdictCategory::kFalsePositive);
  EXPECT_EQ(classify(a, b, false), VerdictCategory::kMasked);
  b.at(1, 1) = 0.5;
  EXPECT_EQ(classify(a, b, true), VerdictCategory::kDetected);
  EXPECT_EQ(classify(a, b, false), VerdictCategory::kSilent);
  Matrix c(1, 2);
  EXPECT_THROW(classify(a, c, false), std::invalid_argument);
  // -0.0 vs +0.0 is a bit-wise difference.
  Matrix z1(1, 1), z2(1, 1);
  z2.at(0, 0) = -0.0;
  EXPECT_EQ(classify(z1, z2, false), VerdictCategory::kSilent);
}

TEST(ProvablyDead, InactiveLanesAndEpilogueState) {
  const KernelConfig cfg = make_cfg(16, 8, PrecisionPolicy::bf16(), 4);
  // 10 queries over block size 4: the final block has 2 active lanes.
  const std::size_t last_block_cycle = 2 * 17 + 3;
  EXPECT_TRUE(fault_provably_dead({last_block_cycle, RegisterClass::kOutput, 3, 0, 0},
                                  cfg, 10));
  EXPECT_FALSE(fault_provably_dead({last_block_cycle, RegisterClass::kOutput, 1, 0, 0},
                                   cfg, 10));
  EXPECT_TRUE(fault_provably_dead({5, RegisterClass::kSumrow, 0, 0, 0}, cfg, 10));
  EXPECT_TRUE(fault_provably_dead({16, RegisterClass::kKeyStage, 0, 0, 0}, cfg, 10));
  EXPECT_FALSE(fault_provably_dead({16, RegisterClass::kSumExp, 1, 0, 0}, cfg, 10));
  EXPECT_FALSE(fault_provably_dead({3, RegisterClass::kQuery, 0, 0, 0}, cfg, 10));
}

TEST(NanInjection, FaithfulSilentNanAwareDetected) {
  // Targeted exponent-field injection producing NaN in an o-register.
  Matrix Q(1, 2), K(1, 2), V(1, 2);
  Q.at(0, 0) = 1.0;
  K.at(0, 0) = 1.0;
  V.at(0, 0) = 1.5;  // o[0] = 1.5 after the only stream cycle
  V.at(0, 1) = 0.25;
  const KernelConfig cfg = make_cfg(1, 2, PrecisionPolicy::bf16(), 1);
  const auto [golden, gpred] = fused_kernel(Q, K, V, cfg);
  (void)gpred;
  // 1.5 in fp32 (the o-accumulator format) has exponent 0111_1111; flipping
  // the exponent MSB (bit 30) yields an all-ones exponent with a nonzero
  // mantissa: NaN.
  const FaultSpec spec{/*epilogue cycle=*/1, RegisterClass::kOutput, 0, 0, 30};
  const auto [faulty, fpred] = run_with_faults(Q, K, V, cfg, {{spec}});
  EXPECT_TRUE(std::isnan(faulty.at(0, 0)));
  const InjectionOutcome faithful = evaluate_injection(golden, faulty, fpred, 1e-6, false);
  EXPECT_EQ(faithful.verdict.category, VerdictCategory::kSilent);
  const InjectionOutcome aware = evaluate_injection(golden, faulty, fpred, 1e-6, true);
  EXPECT_EQ(aware.verdict.category, VerdictCategory::kDetected);
}

}  // namespace
}  // namespace flashabft
