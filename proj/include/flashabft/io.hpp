// flashabft: FlashAttention-2 accelerator model with fused online ABFT checking
// Copyright 2026 The flashabft Authors
// SPDX-License-Identifier: Apache-2.0
//
// External formats: the binary matrix container, CSV import, JSON
// serialization of fault specs and campaign reports, and the table-shaped
// sweep CSV. Everything here is byte-deterministic given the same data.
//
// Matrix container layout (little-endian):
//   bytes 0..5   magic "FABFT1"
//   byte  6      element format (0 = fp64, 1 = fp32, 2 = bf16)
//   byte  7      reserved, zero
//   bytes 8..11  rows (u32)
//   bytes 12..15 cols (u32)
//   bytes 16..   row-major elements in the stored format

#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#if __has_include(<nlohmann/json.hpp>)
#include <nlohmann/json.hpp>
#else
#include <json.hpp>  // vendored single-header copy
#endif

#include "flashabft/campaign.hpp"
#include "flashabft/faults.hpp"
#include "flashabft/matrix.hpp"

namespace flashabft {

inline constexpr std::array<char, 6> kMatrixMagic = {'F', 'A', 'B', 'F', 'T', '1'};

inline std::uint8_t format_code(Format f) {
  switch (f) {
    case Format::kFp64: return 0;
    case Format::kFp32: return 1;
    default: return 2;
  }
}

inline Format format_from_code(std::uint8_t code) {
  switch (code) {
    case 0: return Format::kFp64;
    case 1: return Format::kFp32;
    case 2: return Format::kBf16;
    default: throw std::invalid_argument("matrix file: unknown element format code");
  }
}

namespace detail {

template <typename T>
void put_le(std::string& out, T v) {
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }
}

template <typename T>
T get_le(const std::string& in, std::size_t pos) {
  T v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    v |= static_cast<T>(static_cast<std::uint8_t>(in[pos + i])) << (8 * i);
  }
  return v;
}

}  // namespace detail

inline std::string serialize_matrix(const Matrix& m, Format elem_format) {
  std::string out;
  out.reserve(16 + m.data.size() * 8);
  out.append(kMatrixMagic.data(), kMatrixMagic.size());
  out.push_back(static_cast<char>(format_code(elem_format)));
  out.push_back(0);
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(m.rows));
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(m.cols));
  for (double x : m.data) {
    switch (elem_format) {
      case Format::kFp64:
        detail::put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(x));
        break;
      case Format::kFp32:
        detail::put_le<std::uint32_t>(out,
                                      std::bit_cast<std::uint32_t>(static_cast<float>(x)));
        break;
      case Format::kBf16:
        detail::put_le<std::uint16_t>(out, round_to_bf16_bits(x));
        break;
    }
  }
  return out;
}

inline Matrix deserialize_matrix(const std::string& bytes) {
  if (bytes.size() < 16 ||
      !std::equal(kMatrixMagic.begin(), kMatrixMagic.end(), bytes.begin())) {
    throw std::invalid_argument("matrix file: bad magic");
  }
  const Format f = format_from_code(static_cast<std::uint8_t>(bytes[6]));
  const auto rows = detail::get_le<std::uint32_t>(bytes, 8);
  const auto cols = detail::get_le<std::uint32_t>(bytes, 12);
  const std::size_t elem_size = static_cast<std::size_t>(width_bits(f)) / 8;
  const std::size_t expected = 16 + static_cast<std::size_t>(rows) * cols * elem_size;
  if (bytes.size() != expected) {
    throw std::invalid_argument("matrix file: payload length mismatch");
  }
  Matrix m(rows, cols);
  std::size_t pos = 16;
  for (double& x : m.data) {
    switch (f) {
      case Format::kFp64:
        x = std::bit_cast<double>(detail::get_le<std::uint64_t>(bytes, pos));
        break;
      case Format::kFp32:
        x = static_cast<double>(
            std::bit_cast<float>(detail::get_le<std::uint32_t>(bytes, pos)));
        break;
      case Format::kBf16:
        x = decode_bf16(detail::get_le<std::uint16_t>(bytes, pos));
        break;
    }
    pos += elem_size;
  }
  return m;
}

inline void write_matrix_file(const std::string& path, const Matrix& m,
                              Format elem_format = Format::kFp64) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::invalid_argument("cannot open for write: " + path);
  const std::string bytes = serialize_matrix(m, elem_format);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw std::runtime_error("write failed: " + path);
}

inline Matrix read_matrix_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::invalid_argument("cannot open: " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return deserialize_matrix(ss.str());
}

// CSV import: one row per line, elements separated by commas or whitespace.
inline Matrix matrix_from_csv(std::istream& in) {
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    for (char& ch : line) {
      if (ch == ',' || ch == ';' || ch == '\t') ch = ' ';
    }
    std::istringstream ls(line);
    std::vector<double> row;
    double x;
    while (ls >> x) row.push_back(x);
    if (!row.empty()) rows.push_back(std::move(row));
  }
  if (rows.empty()) throw std::invalid_argument("csv: no data rows");
  const std::size_t cols = rows.front().size();
  for (const auto& r : rows) {
    if (r.size() != cols) throw std::invalid_argument("csv: ragged rows");
  }
  Matrix m(rows.size(), cols);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < cols; ++j) m.at(i, j) = rows[i][j];
  }
  return m;
}

inline Matrix read_matrix_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::invalid_argument("cannot open: " + path);
  return matrix_from_csv(f);
}

// ---------------------------------------------------------------------------
// JSON
// ---------------------------------------------------------------------------

using json = nlohmann::json;

inline json to_json(const FaultSpec& f) {
  return json{{"cycle", f.cycle},
              {"register", to_string(f.cls)},
              {"lane", f.lane},
              {"element", f.element},
              {"bit", f.bit}};
}

inline FaultSpec fault_from_json(const json& j) {
  FaultSpec f;
  f.cycle = j.at("cycle").get<std::uint64_t>();
  f.cls = register_class_from_string(j.at("register").get<std::string>());
  f.lane = j.value("lane", 0u);
  f.element = j.value("element", 0u);
  f.bit = j.at("bit").get<std::uint32_t>();
  return f;
}

inline json to_json(const std::vector<FaultSpec>& faults) {
  json arr = json::array();
  for (const auto& f : faults) arr.push_back(to_json(f));
  return arr;
}

inline std::vector<FaultSpec> faults_from_json(const json& j) {
  std::vector<FaultSpec> out;
  if (j.is_object()) {
    out.push_back(fault_from_json(j));
    return out;
  }
  for (const auto& item : j) out.push_back(fault_from_json(item));
  return out;
}

inline std::vector<FaultSpec> read_fault_specs(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::invalid_argument("cannot open: " + path);
  json j;
  f >> j;
  return faults_from_json(j);
}

inline json to_json(const RunManifest& m) {
  return json{{"tool_version", m.tool_version},
              {"master_seed", m.master_seed},
              {"input_digests",
               json{{"q", m.q_digest}, {"k", m.k_digest}, {"v", m.v_digest}}}};
}

inline json to_json(const CategoryCounts& c) {
  return json{{"detected", c.detected},
              {"false_positive", c.false_positive},
              {"silent", c.silent},
              {"masked", c.masked}};
}

inline json to_json(const CategoryRates& r, bool with_masked) {
  json j{{"detected", r.detected},
         {"false_positive", r.false_positive},
         {"silent", r.silent}};
  if (with_masked) j["masked"] = r.masked;
  return j;
}

inline json config_to_json(const CampaignConfig& c) {
  return json{{"num_campaigns", c.num_campaigns},
              {"faults_per_campaign",
               json{{"min", c.faults_per_campaign.min}, {"max", c.faults_per_campaign.max}}},
              {"seq_len", c.seq_len},
              {"hidden_dim", c.hidden_dim},
              {"block_size", c.block_size},
              {"policy", c.precision.name()},
              {"scale_scores", c.scale_scores},
              {"tolerance", c.tolerance},
              {"tolerance_calibrated", c.tolerance_calibrated},
              {"nan_aware", c.nan_aware},
              {"master_seed", c.master_seed},
              {"input_source",
               c.input_source == InputSource::kSyntheticGaussian ? "synthetic-gaussian"
                                                                 : "file"}};
}

inline json to_json(const CampaignRecord& r) {
  return json{{"index", r.index},        {"child_seed", r.child_seed},
              {"faults", to_json(r.faults)}, {"verdict", to_string(r.verdict)},
              {"predicted", r.predicted},    {"actual", r.actual},
              {"output_corrupted", r.output_corrupted}, {"flagged", r.flagged}};
}

inline json to_json(const CampaignReport& rep, bool include_records = true) {
  json by_class = json::object();
  for (std::size_t i = 0; i < kNumRegisterClasses; ++i) {
    const auto& c = rep.by_first_fault_class[i];
    if (c.total() > 0) by_class[to_string(static_cast<RegisterClass>(i))] = to_json(c);
  }
  json j{{"schema_version", 1},
         {"kind", "campaign_report"},
         {"config", config_to_json(rep.config)},
         {"manifest", to_json(rep.manifest)},
         {"golden", json{{"predicted", rep.golden_predicted},
                         {"actual", rep.golden_actual}}},
         {"counts", to_json(rep.counts)},
         {"rates", to_json(rep.rates(), true)},
         {"non_masked_rates", to_json(rep.non_masked_rates(), false)},
         {"by_first_fault_class", by_class}};
  if (include_records && rep.config.keep_records) {
    json arr = json::array();
    for (const auto& r : rep.records) arr.push_back(to_json(r));
    j["records"] = arr;
  }
  return j;
}

// Table-shaped CSV: verdict categories as rows, hidden dimensions as columns.
inline std::string sweep_to_csv(const SweepTable& table) {
  std::ostringstream out;
  out << "category";
  for (const auto& row : table.rows) out << ",d=" << row.dim;
  out << "\n";
  const auto emit = [&](const std::string& name, auto getter) {
    out << name;
    for (const auto& row : table.rows) {
      std::ostringstream v;
      v.precision(6);
      v << getter(row);
      out << "," << v.str();
    }
    out << "\n";
  };
  emit("detected", [](const SweepRow& r) { return r.report.non_masked_rates().detected; });
  emit("false_positive",
       [](const SweepRow& r) { return r.report.non_masked_rates().false_positive; });
  emit("silent", [](const SweepRow& r) { return r.report.non_masked_rates().silent; });
  emit("raw_detected", [](const SweepRow& r) { return r.report.rates().detected; });
  emit("raw_false_positive",
       [](const SweepRow& r) { return r.report.rates().false_positive; });
  emit("raw_silent", [](const SweepRow& r) { return r.report.rates().silent; });
  emit("raw_masked", [](const SweepRow& r) { return r.report.rates().masked; });
  emit("checker_bit_fraction", [](const SweepRow& r) { return r.checker_bit_fraction; });
  return out.str();
}

inline json to_json(const SweepTable& table) {
  json rows = json::array();
  for (const auto& row : table.rows) {
    rows.push_back(json{{"hidden_dim", row.dim},
                        {"checker_bit_fraction", row.checker_bit_fraction},
                        {"report", to_json(row.report, false)}});
  }
  return json{{"kind", "dimension_sweep"}, {"rows", rows}};
}

}  // namespace flashabft
