// flashabft: FlashAttention-2 accelerator model with fused online ABFT checking
// Copyright 2026 The flashabft Authors
// SPDX-License-Identifier: Apache-2.0
//
// Command-line surface. Subcommands: attn, campaign, inject, calibrate,
// gen-data. Exit codes: 0 ok, 1 usage error, 2 validation error, 3 internal.

#include <cstdint>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "flashabft/flashabft.hpp"
#include "flashabft/io.hpp"

namespace {

using namespace flashabft;

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitValidation = 2;
constexpr int kExitInternal = 3;

struct InputOptions {
  std::string q_path, k_path, v_path;
  std::vector<std::uint64_t> synthetic;  // N d
  std::uint64_t queries = 0;             // synthetic only; default N
  std::uint64_t seed = 0;
};

void add_input_flags(CLI::App* cmd, InputOptions& in) {
  cmd->add_option("--q", in.q_path, "query matrix file");
  cmd->add_option("--k", in.k_path, "key matrix file");
  cmd->add_option("--v", in.v_path, "value matrix file");
  cmd->add_option("--synthetic", in.synthetic,
                  "generate standard-normal inputs: SEQ_LEN DIM")
      ->expected(2);
  cmd->add_option("--queries", in.queries, "synthetic query count (default: SEQ_LEN)");
  cmd->add_option("--seed", in.seed, "master seed for all randomness");
}

struct LoadedInputs {
  Matrix Q, K, V;
  std::string source;
};

LoadedInputs load_inputs(const InputOptions& in, const PrecisionPolicy& policy) {
  LoadedInputs out;
  if (!in.synthetic.empty()) {
    if (!in.q_path.empty() || !in.k_path.empty() || !in.v_path.empty()) {
      throw std::invalid_argument("--synthetic excludes --q/--k/--v");
    }
    const std::size_t n = in.synthetic[0], d = in.synthetic[1];
    const std::size_t n_q = in.queries ? in.queries : n;
    if (n < 1 || d < 1 || n_q < 1) {
      throw std::invalid_argument("--synthetic dimensions must be >= 1");
    }
    const auto gen = [&](std::uint64_t role, std::size_t rows, MatrixRole mrole) {
      Matrix m = gaussian_matrix(rows, d,
                                 derive_seed(in.seed, kInputStreamTag, d * 4 + role), mrole);
      return round_matrix(m, policy.datapath, policy.flush_subnormals);
    };
    out.Q = gen(0, n_q, MatrixRole::kQuery);
    out.K = gen(1, n, MatrixRole::kKey);
    out.V = gen(2, n, MatrixRole::kValue);
    out.source = "synthetic-gaussian";
  } else {
    if (in.q_path.empty() || in.k_path.empty() || in.v_path.empty()) {
      throw std::invalid_argument("provide --q/--k/--v files or --synthetic N d");
    }
    out.Q = read_matrix_file(in.q_path);
    out.K = read_matrix_file(in.k_path);
    out.V = read_matrix_file(in.v_path);
    out.Q.role = MatrixRole::kQuery;
    out.K.role = MatrixRole::kKey;
    out.V.role = MatrixRole::kValue;
    out.source = "file";
  }
  require_attention_dims(out.Q, out.K, out.V);
  return out;
}

json manifest_json(const LoadedInputs& in, std::uint64_t seed) {
  RunManifest m;
  m.tool_version = std::string(kToolName) + " " + kToolVersion;
  m.master_seed = seed;
  m.q_digest = digest_matrix(in.Q);
  m.k_digest = digest_matrix(in.K);
  m.v_digest = digest_matrix(in.V);
  return to_json(m);
}

void emit(const json& j, const std::string& out_path) {
  if (out_path.empty()) {
    std::cout << j.dump(2) << "\n";
  } else {
    std::ofstream f(out_path);
    if (!f) throw std::invalid_argument("cannot open for write: " + out_path);
    f << j.dump(2) << "\n";
  }
}

void emit_text(const std::string& text, const std::string& out_path) {
  if (out_path.empty()) {
    std::cout << text;
  } else {
    std::ofstream f(out_path);
    if (!f) throw std::invalid_argument("cannot open for write: " + out_path);
    f << text;
  }
}

// Parse "k" or "kmin:kmax".
FaultCountRange parse_fault_range(const std::string& s) {
  FaultCountRange r;
  const auto colon = s.find(':');
  if (colon == std::string::npos) {
    r.min = r.max = static_cast<std::uint32_t>(std::stoul(s));
  } else {
    r.min = static_cast<std::uint32_t>(std::stoul(s.substr(0, colon)));
    r.max = static_cast<std::uint32_t>(std::stoul(s.substr(colon + 1)));
  }
  if (r.min > r.max) throw std::invalid_argument("--faults range is inverted");
  return r;
}

// --- attn -----------------------------------------------------------------

struct AttnOptions {
  InputOptions in;
  std::string policy = "fp64";
  std::uint64_t block = 16;
  bool scale = false;
  bool check = false;
  bool nan_aware = false;
  double tolerance = 0.0;
  bool has_tolerance = false;
  std::uint64_t calib_trials = 100;
  std::string out_matrix;
  std::string out_format = "fp64";
  std::string out_json;
};

int run_attn(const AttnOptions& opt) {
  const PrecisionPolicy policy = PrecisionPolicy::parse(opt.policy);
  const LoadedInputs in = load_inputs(opt.in, policy);

  KernelConfig cfg;
  cfg.block_size = opt.block;
  cfg.seq_len = in.K.rows;
  cfg.hidden_dim = in.Q.cols;
  cfg.precision = policy;
  cfg.scale_scores = opt.scale;
  cfg.validate();

  json out{{"kind", "attn_result"},
           {"policy", policy.name()},
           {"queries", in.Q.rows},
           {"seq_len", cfg.seq_len},
           {"hidden_dim", cfg.hidden_dim},
           {"block_size", cfg.block_size},
           {"scale_scores", cfg.scale_scores},
           {"input_source", in.source},
           {"manifest", manifest_json(in, opt.in.seed)}};

  Matrix O;
  if (opt.check) {
    double tolerance = opt.tolerance;
    bool calibrated = false;
    if (!opt.has_tolerance) {
      CampaignConfig ccfg;
      ccfg.seq_len = cfg.seq_len;
      ccfg.hidden_dim = cfg.hidden_dim;
      ccfg.block_size = cfg.block_size;
      ccfg.precision = policy;
      ccfg.scale_scores = cfg.scale_scores;
      ccfg.master_seed = opt.in.seed;
      tolerance = calibrate_tolerance(ccfg, static_cast<std::uint32_t>(opt.calib_trials));
      calibrated = true;
    }
    const auto [fused_O, predicted] = fused_kernel(in.Q, in.K, in.V, cfg);
    O = fused_O;
    const double actual = actual_checksum(O);
    const bool flagged = checksum_flag(predicted, actual, tolerance, opt.nan_aware);
    out["check"] = json{{"predicted", predicted},
                        {"actual", actual},
                        {"abs_diff", std::fabs(predicted - actual)},
                        {"tolerance", tolerance},
                        {"tolerance_calibrated", calibrated},
                        {"nan_aware", opt.nan_aware},
                        {"flagged", flagged},
                        {"verdict", flagged ? "flagged" : "no fault"}};
  } else {
    O = run_block_schedule(in.Q, in.K, in.V, cfg);
  }

  if (!opt.out_matrix.empty()) {
    write_matrix_file(opt.out_matrix, O, format_from_string(opt.out_format));
    out["output_file"] = opt.out_matrix;
  } else {
    out["output_checksum"] = actual_checksum(O);
  }
  emit(out, opt.out_json);
  return kExitOk;
}

// --- campaign / calibrate ---------------------------------------------------

struct CampaignOptions {
  std::string q_path, k_path, v_path;
  std::uint64_t campaigns = 2000;
  std::string faults = "1";
  std::uint64_t seq_len = 256;
  std::vector<std::uint64_t> dims = {128};
  std::uint64_t block = 16;
  std::string policy = "bf16";
  bool scale = false;
  std::uint64_t seed = 0;
  double tolerance = 1e-6;
  bool has_tolerance = false;
  bool calibrate = false;
  std::uint64_t calib_trials = 100;
  bool nan_aware = false;
  bool records = false;
  std::uint64_t threads = 0;
  std::string format = "json";
  std::string out;
};

CampaignConfig base_config(const CampaignOptions& opt) {
  CampaignConfig cfg;
  cfg.num_campaigns = static_cast<std::uint32_t>(opt.campaigns);
  cfg.faults_per_campaign = parse_fault_range(opt.faults);
  cfg.seq_len = opt.seq_len;
  cfg.block_size = opt.block;
  cfg.precision = PrecisionPolicy::parse(opt.policy);
  cfg.scale_scores = opt.scale;
  cfg.tolerance = opt.tolerance;
  cfg.nan_aware = opt.nan_aware;
  cfg.master_seed = opt.seed;
  cfg.keep_records = opt.records;
  cfg.num_threads = static_cast<unsigned>(opt.threads);
  return cfg;
}

int run_campaign(const CampaignOptions& opt) {
  if (opt.calibrate && opt.has_tolerance) {
    throw std::invalid_argument("--calibrate and --tolerance are mutually exclusive");
  }
  const bool file_inputs =
      !opt.q_path.empty() || !opt.k_path.empty() || !opt.v_path.empty();
  CampaignConfig cfg = base_config(opt);
  LoadedInputs in;
  std::vector<std::uint64_t> dims = opt.dims;
  if (file_inputs) {
    InputOptions io;
    io.q_path = opt.q_path;
    io.k_path = opt.k_path;
    io.v_path = opt.v_path;
    io.seed = opt.seed;
    in = load_inputs(io, cfg.precision);
    cfg.input_source = InputSource::kFile;
    cfg.seq_len = in.K.rows;
    dims = {in.Q.cols};
  }
  SweepTable table;
  for (const std::uint64_t d : dims) {
    CampaignConfig dcfg = cfg;
    dcfg.hidden_dim = d;
    if (opt.calibrate) {
      dcfg.tolerance =
          calibrate_tolerance(dcfg, static_cast<std::uint32_t>(opt.calib_trials));
      dcfg.tolerance_calibrated = true;
    }
    SweepRow row;
    row.dim = d;
    const RegisterInventory inv = build_inventory(dcfg.kernel());
    row.checker_bit_fraction =
        static_cast<double>(inv.checker_bits()) / static_cast<double>(inv.total_bits);
    row.report = file_inputs ? run_campaigns(dcfg, in.Q, in.K, in.V)
                             : run_campaigns(dcfg);
    table.rows.push_back(std::move(row));
  }

  if (opt.format == "csv") {
    emit_text(sweep_to_csv(table), opt.out);
  } else if (table.rows.size() == 1) {
    emit(to_json(table.rows[0].report), opt.out);
  } else {
    emit(to_json(table), opt.out);
  }
  return kExitOk;
}

int run_calibrate(const CampaignOptions& opt) {
  CampaignConfig cfg = base_config(opt);
  cfg.hidden_dim = opt.dims.at(0);
  const double tol = calibrate_tolerance(cfg, static_cast<std::uint32_t>(opt.calib_trials));
  emit(json{{"kind", "calibration"},
            {"tolerance", tol},
            {"trials", opt.calib_trials},
            {"safety_factor", kCalibrationSafetyFactor},
            {"config", config_to_json(cfg)}},
       opt.out);
  return kExitOk;
}

// --- inject -----------------------------------------------------------------

struct InjectOptions {
  InputOptions in;
  std::string fault_spec_path;
  std::string policy = "bf16";
  std::uint64_t block = 16;
  bool scale = false;
  double tolerance = 1e-6;
  bool calibrate = false;
  std::uint64_t calib_trials = 100;
  bool nan_aware = false;
  std::string out_json;
};

int run_inject(const InjectOptions& opt) {
  const PrecisionPolicy policy = PrecisionPolicy::parse(opt.policy);
  const LoadedInputs in = load_inputs(opt.in, policy);
  const std::vector<FaultSpec> faults = read_fault_specs(opt.fault_spec_path);

  KernelConfig cfg;
  cfg.block_size = opt.block;
  cfg.seq_len = in.K.rows;
  cfg.hidden_dim = in.Q.cols;
  cfg.precision = policy;
  cfg.scale_scores = opt.scale;
  cfg.validate();

  double tolerance = opt.tolerance;
  bool calibrated = false;
  if (opt.calibrate) {
    CampaignConfig ccfg;
    ccfg.seq_len = cfg.seq_len;
    ccfg.hidden_dim = cfg.hidden_dim;
    ccfg.block_size = cfg.block_size;
    ccfg.precision = policy;
    ccfg.scale_scores = cfg.scale_scores;
    ccfg.master_seed = opt.in.seed;
    tolerance = calibrate_tolerance(ccfg, static_cast<std::uint32_t>(opt.calib_trials));
    calibrated = true;
  }

  const auto [golden, golden_pred] = fused_kernel(in.Q, in.K, in.V, cfg);
  const auto [faulty, predicted] = run_with_faults(in.Q, in.K, in.V, cfg, faults);
  const InjectionOutcome outcome =
      evaluate_injection(golden, faulty, predicted, tolerance, opt.nan_aware);

  std::size_t differing = 0;
  double max_abs_diff = 0.0;
  json first_diff;
  for (std::size_t i = 0; i < golden.rows; ++i) {
    for (std::size_t j = 0; j < golden.cols; ++j) {
      const double g = golden.at(i, j), f = faulty.at(i, j);
      if (std::bit_cast<std::uint64_t>(g) == std::bit_cast<std::uint64_t>(f)) continue;
      if (differing == 0) {
        first_diff = json{{"row", i}, {"col", j}, {"golden", g}, {"faulty", f}};
      }
      ++differing;
      const double diff = std::fabs(g - f);
      if (std::isfinite(diff) && diff > max_abs_diff) max_abs_diff = diff;
    }
  }

  json out{{"kind", "injection_result"},
           {"verdict", to_string(outcome.verdict.category)},
           {"flagged", outcome.checker_flagged},
           {"output_corrupted", outcome.output_corrupted},
           {"predicted", outcome.verdict.predicted},
           {"actual", outcome.verdict.actual},
           {"golden_predicted", golden_pred},
           {"tolerance", tolerance},
           {"tolerance_calibrated", calibrated},
           {"nan_aware", opt.nan_aware},
           {"faults", to_json(faults)},
           {"diff_summary",
            json{{"differing_elements", differing}, {"max_abs_diff", max_abs_diff}}},
           {"policy", policy.name()},
           {"manifest", manifest_json(in, opt.in.seed)}};
  if (differing > 0) out["diff_summary"]["first"] = first_diff;
  emit(out, opt.out_json);
  return kExitOk;
}

// --- gen-data ----------------------------------------------------------------

struct GenOptions {
  std::uint64_t rows = 0, cols = 0;
  std::uint64_t seed = 0;
  double scale = 1.0;
  std::string from_csv;
  std::string out;
  std::string format = "fp64";
};

int run_gen(const GenOptions& opt) {
  Matrix m;
  if (!opt.from_csv.empty()) {
    m = read_matrix_csv(opt.from_csv);
  } else {
    if (opt.rows < 1 || opt.cols < 1) {
      throw std::invalid_argument("--rows/--cols must be >= 1 (or use --from-csv)");
    }
    m = gaussian_matrix(opt.rows, opt.cols, opt.seed, MatrixRole::kGeneric, opt.scale);
  }
  write_matrix_file(opt.out, m, format_from_string(opt.format));
  emit(json{{"kind", "gen_data"},
            {"file", opt.out},
            {"rows", m.rows},
            {"cols", m.cols},
            {"element_format", opt.format},
            {"digest", digest_matrix(m)}},
       "");
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{std::string(kToolName) +
               ": streaming-attention accelerator model with online checksum "
               "checking and bit-flip fault injection"};
  app.set_version_flag("--version", std::string(kToolName) + " " + kToolVersion);
  app.require_subcommand(1);

  AttnOptions attn;
  CLI::App* attn_cmd = app.add_subcommand("attn", "run one attention computation");
  add_input_flags(attn_cmd, attn.in);
  attn_cmd->add_option("--policy", attn.policy, "fp64|fp32|bf16 or dp/accum/stats");
  attn_cmd->add_option("--block", attn.block, "parallel query lanes");
  attn_cmd->add_flag("--scale", attn.scale, "apply 1/sqrt(d) score scaling");
  attn_cmd->add_flag("--check", attn.check, "run the fused checksum and verdict");
  attn_cmd->add_flag("--nan-aware", attn.nan_aware, "flag non-finite checksum mismatches");
  attn_cmd->add_option("--tolerance", attn.tolerance, "absolute checksum tolerance")
      ->each([&attn](const std::string&) { attn.has_tolerance = true; });
  attn_cmd->add_option("--calib-trials", attn.calib_trials,
                       "fault-free calibration trials when no tolerance given");
  attn_cmd->add_option("--out", attn.out_matrix, "write the output matrix here");
  attn_cmd->add_option("--out-format", attn.out_format, "fp64|fp32|bf16 output elements");
  attn_cmd->add_option("--json", attn.out_json, "write the JSON result here (default stdout)");

  CampaignOptions camp;
  CLI::App* camp_cmd =
      app.add_subcommand("campaign", "run seeded fault-injection campaigns");
  camp_cmd->add_option("--q", camp.q_path, "query matrix file (default: synthetic)");
  camp_cmd->add_option("--k", camp.k_path, "key matrix file");
  camp_cmd->add_option("--v", camp.v_path, "value matrix file");
  camp_cmd->add_option("--campaigns", camp.campaigns, "number of campaigns");
  camp_cmd->add_option("--faults", camp.faults, "faults per campaign: K or KMIN:KMAX");
  camp_cmd->add_option("--seq-len", camp.seq_len, "sequence length N");
  camp_cmd->add_option("--dim", camp.dims, "hidden dimension(s); repeat for a sweep");
  camp_cmd->add_option("--block", camp.block, "parallel query lanes");
  camp_cmd->add_option("--policy", camp.policy, "number-format policy");
  camp_cmd->add_flag("--scale", camp.scale, "apply 1/sqrt(d) score scaling");
  camp_cmd->add_option("--seed", camp.seed, "master seed");
  camp_cmd->add_option("--tolerance", camp.tolerance, "absolute checksum tolerance")
      ->each([&camp](const std::string&) { camp.has_tolerance = true; });
  camp_cmd->add_flag("--calibrate", camp.calibrate, "calibrate the tolerance first");
  camp_cmd->add_option("--calib-trials", camp.calib_trials, "calibration trials");
  camp_cmd->add_flag("--nan-aware", camp.nan_aware, "flag non-finite checksum mismatches");
  camp_cmd->add_flag("--records", camp.records, "embed per-campaign records");
  camp_cmd->add_option("--threads", camp.threads, "worker threads (0 = auto)");
  camp_cmd->add_option("--format", camp.format, "json|csv")
      ->check(CLI::IsMember({"json", "csv"}));
  camp_cmd->add_option("--out", camp.out, "write the report here (default stdout)");

  CampaignOptions calib;
  CLI::App* calib_cmd =
      app.add_subcommand("calibrate", "measure the fault-free checksum noise floor");
  calib_cmd->add_option("--seq-len", calib.seq_len, "sequence length N");
  calib_cmd->add_option("--dim", calib.dims, "hidden dimension")->expected(1);
  calib_cmd->add_option("--block", calib.block, "parallel query lanes");
  calib_cmd->add_option("--policy", calib.policy, "number-format policy");
  calib_cmd->add_flag("--scale", calib.scale, "apply 1/sqrt(d) score scaling");
  calib_cmd->add_option("--seed", calib.seed, "master seed");
  calib_cmd->add_option("--trials", calib.calib_trials, "fault-free trials (>= 100)");
  calib_cmd->add_option("--threads", calib.threads, "worker threads (0 = auto)");
  calib_cmd->add_option("--out", calib.out, "write the JSON here (default stdout)");

  InjectOptions inj;
  CLI::App* inj_cmd = app.add_subcommand("inject", "replay serialized fault specs");
  add_input_flags(inj_cmd, inj.in);
  inj_cmd->add_option("--fault-spec", inj.fault_spec_path, "JSON fault spec (list or one)")
      ->required();
  inj_cmd->add_option("--policy", inj.policy, "number-format policy");
  inj_cmd->add_option("--block", inj.block, "parallel query lanes");
  inj_cmd->add_flag("--scale", inj.scale, "apply 1/sqrt(d) score scaling");
  inj_cmd->add_option("--tolerance", inj.tolerance, "absolute checksum tolerance");
  inj_cmd->add_flag("--calibrate", inj.calibrate, "calibrate the tolerance first");
  inj_cmd->add_option("--calib-trials", inj.calib_trials, "calibration trials");
  inj_cmd->add_flag("--nan-aware", inj.nan_aware, "flag non-finite checksum mismatches");
  inj_cmd->add_option("--json", inj.out_json, "write the JSON result here");

  GenOptions gen;
  CLI::App* gen_cmd = app.add_subcommand("gen-data", "write matrix files");
  gen_cmd->add_option("--rows", gen.rows, "rows of the generated matrix");
  gen_cmd->add_option("--cols", gen.cols, "columns of the generated matrix");
  gen_cmd->add_option("--seed", gen.seed, "generator seed");
  gen_cmd->add_option("--scale", gen.scale, "multiply samples by this factor");
  gen_cmd->add_option("--from-csv", gen.from_csv, "convert a CSV file instead");
  gen_cmd->add_option("--out", gen.out, "output matrix file")->required();
  gen_cmd->add_option("--format", gen.format, "fp64|fp32|bf16 stored elements");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*attn_cmd) return run_attn(attn);
    if (*camp_cmd) return run_campaign(camp);
    if (*calib_cmd) return run_calibrate(calib);
    if (*inj_cmd) return run_inject(inj);
    if (*gen_cmd) return run_gen(gen);
    return kExitUsage;
  } catch (const std::invalid_argument& e) {
    std::cerr << "validation error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::out_of_range& e) {
    std::cerr << "validation error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return kExitInternal;
  }
}
