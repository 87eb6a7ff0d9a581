#pragma once
/*
 * File formats: benchmark CSV, latency-model / device / policy documents,
 * kernel tensor files and the provenance stamp every output carries.
 *
 * Tensor file (binary): 4 x uint32 little-endian dims (K, K, C1, C2) then
 * K*K*C1*C2 float64 little-endian values, (K, K, C1, C2) row-major.
 * Tensor file (text, *.txt): the four dims on the first line, then the
 * values in the same order, whitespace separated. '#' starts a comment.
 */

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "mobiledet/arch_json.hpp"
#include "mobiledet/controller.hpp"
#include "mobiledet/cost_model.hpp"
#include "mobiledet/json_util.hpp"
#include "mobiledet/tucker.hpp"

namespace mobiledet {

inline constexpr const char* kToolName = "mobiledet";
inline constexpr const char* kToolVersion = "0.1.0";

struct Provenance {
  std::string invocation;
  std::uint64_t seed = 0;
};

inline json_util::Json meta_json(const Provenance& p) {
  json_util::Json j;
  j["tool"] = kToolName;
  j["version"] = kToolVersion;
  j["invocation"] = p.invocation;
  j["seed"] = p.seed;
  return j;
}

/// Copy of `doc` with the meta key first.
inline json_util::Json stamped(const json_util::Json& doc, const Provenance& p) {
  json_util::Json out;
  out[json_util::kMetaKey] = meta_json(p);
  for (auto it = doc.begin(); it != doc.end(); ++it) out[it.key()] = it.value();
  return out;
}

/// '#' comment lines for CSV outputs.
inline std::string csv_preamble(const Provenance& p) {
  return std::string("# ") + kToolName + " " + kToolVersion + "\n# invocation: " + p.invocation +
         "\n# seed: " + std::to_string(p.seed) + "\n";
}

inline std::string fmt(double v) {
  std::ostringstream ss;
  ss.precision(17);
  ss << v;
  return ss.str();
}

// ---------------------------------------------------------------------------
// Benchmarks

inline constexpr const char* kBenchmarkCsv = "benchmarks.csv";

/// Writes one architecture document per record plus `benchmarks.csv` into `dir`.
inline void write_benchmarks(const std::filesystem::path& dir, const std::vector<BenchmarkRecord>& records,
                             const Provenance& p) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory '" + dir.string() + "': " + ec.message());
  std::string csv = csv_preamble(p) + "arch_file,latency_ms\n";
  for (const auto& r : records) {
    json_util::write_file((dir / r.arch_file).string(), stamped(to_json(r.arch), p).dump(2) + "\n");
    csv += r.arch_file + "," + fmt(r.latency_ms) + "\n";
  }
  json_util::write_file((dir / kBenchmarkCsv).string(), csv);
}

namespace detail {

inline std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline double parse_double(const std::string& s, const std::string& where) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    throw ParseError(where + ": expected a number, got '" + s + "'");
  }
  if (used != s.size()) throw ParseError(where + ": expected a number, got '" + s + "'");
  return v;
}

}  // namespace detail

/// Reads `arch_file,latency_ms` rows; architecture paths are relative to the CSV.
inline std::vector<BenchmarkRecord> read_benchmarks(const std::string& csv_path) {
  std::istringstream in(json_util::read_file(csv_path));
  const auto base = std::filesystem::path(csv_path).parent_path();
  std::vector<BenchmarkRecord> out;
  std::string line;
  bool header = false;
  for (int lineno = 1; std::getline(in, line); ++lineno) {
    line = detail::trim(line);
    if (line.empty() || line[0] == '#') continue;
    const auto where = csv_path + ":" + std::to_string(lineno);
    if (!header) {
      if (line != "arch_file,latency_ms") throw ParseError(where + ": expected header 'arch_file,latency_ms'");
      header = true;
      continue;
    }
    const auto comma = line.find(',');
    if (comma == std::string::npos || line.find(',', comma + 1) != std::string::npos)
      throw ParseError(where + ": expected 2 columns");
    BenchmarkRecord r;
    r.arch_file = detail::trim(line.substr(0, comma));
    r.latency_ms = detail::parse_double(detail::trim(line.substr(comma + 1)), where);
    if (!(r.latency_ms > 0.0)) throw ValidationError(where + ": latency must be > 0");
    r.arch = load_network((base / r.arch_file).string());
    out.push_back(std::move(r));
  }
  if (!header) throw ParseError(csv_path + ": missing header");
  return out;
}

// ---------------------------------------------------------------------------
// Latency model

inline json_util::Json to_json(const LatencyModel& m) {
  json_util::Json j;
  j["space_ref"] = m.space_ref;
  j["buckets"] = m.buckets;
  j["weights"] = m.weights;
  j["intercept"] = m.intercept;
  j["lambda"] = m.ridge_lambda;
  j["train_r2"] = m.train_r2;
  j["holdout_r2"] = m.holdout_r2 ? json_util::Json(*m.holdout_r2) : json_util::Json(nullptr);
  j["channel_bands"] = m.features.channel_bands;
  return j;
}

inline LatencyModel latency_model_from_json(const json_util::Json& j) {
  using namespace json_util;
  const std::string root = "$";
  check_keys(j, root, {"space_ref", "buckets", "weights", "intercept", "lambda", "train_r2", "holdout_r2",
                       "channel_bands"});
  LatencyModel m;
  m.space_ref = get_string(j, root, "space_ref");
  const auto& buckets = get_array(j, root, "buckets");
  const auto& weights = get_array(j, root, "weights");
  if (buckets.size() != weights.size()) throw ParseError("$: buckets and weights differ in length");
  for (std::size_t i = 0; i < buckets.size(); ++i) {
    if (!buckets[i].is_string()) throw ParseError(index_path(root, "buckets", i) + ": expected a string");
    if (!weights[i].is_number()) throw ParseError(index_path(root, "weights", i) + ": expected a number");
    m.buckets.push_back(buckets[i].get<std::string>());
    m.weights.push_back(weights[i].get<double>());
    if (i > 0 && !(m.buckets[i - 1] < m.buckets[i]))
      throw ParseError(index_path(root, "buckets", i) + ": buckets must be sorted and unique");
  }
  m.intercept = get_double(j, root, "intercept");
  m.ridge_lambda = get_double(j, root, "lambda");
  m.train_r2 = get_double(j, root, "train_r2");
  if (j.contains("holdout_r2") && !j["holdout_r2"].is_null()) m.holdout_r2 = get_double(j, root, "holdout_r2");
  if (j.contains("channel_bands")) m.features.channel_bands = get_bool(j, root, "channel_bands");
  return m;
}

inline LatencyModel load_latency_model(const std::string& path) {
  return latency_model_from_json(json_util::parse(json_util::read_file(path), path));
}

// ---------------------------------------------------------------------------
// Device profiles

inline json_util::Json to_json(const DeviceProfile& d) {
  json_util::Json j;
  j["name"] = d.name;
  json_util::Json rates;
  for (std::size_t c = 0; c < kNumOpClasses; ++c) rates[op_class_name(static_cast<OpClass>(c))] = d.rates[c];
  j["rates"] = std::move(rates);
  j["overhead_ms"] = d.overhead_ms;
  j["noise_sigma"] = d.noise_sigma;
  j["adaptation"] = adaptation_name(d.adaptation);
  return j;
}

inline DeviceProfile device_from_json(const json_util::Json& j) {
  using namespace json_util;
  const std::string root = "$";
  check_keys(j, root, {"name", "rates", "overhead_ms", "noise_sigma", "adaptation"});
  DeviceProfile d;
  d.name = get_string(j, root, "name");
  const auto& rates = field(j, root, "rates");
  check_keys(rates, "$.rates", {"regular_conv", "depthwise_conv", "pointwise_conv", "se_block"});
  for (std::size_t c = 0; c < kNumOpClasses; ++c)
    d.rates[c] = get_double(rates, "$.rates", op_class_name(static_cast<OpClass>(c)));
  if (j.contains("overhead_ms")) d.overhead_ms = get_double(j, root, "overhead_ms");
  if (j.contains("noise_sigma")) d.noise_sigma = get_double(j, root, "noise_sigma");
  if (j.contains("adaptation")) d.adaptation = parse_adaptation(get_string(j, root, "adaptation"));
  check_profile(d);
  return d;
}

/// A builtin profile name (cpu_sim, accel_sim, dsp_sim) or a device document path.
inline DeviceProfile load_device(const std::string& ref) {
  if (auto d = builtin_device(ref)) return *d;
  if (!std::filesystem::exists(ref))
    throw IoError("unknown device '" + ref + "' (builtin: cpu_sim, accel_sim, dsp_sim)");
  return device_from_json(json_util::parse(json_util::read_file(ref), ref));
}

// ---------------------------------------------------------------------------
// Policy checkpoint

struct PolicyCheckpoint {
  std::string space_ref;
  CategoricalPolicy policy;
  AdamState adam;
  BaselineState baseline;
  std::int64_t step = 0;
};

inline json_util::Json to_json(const PolicyCheckpoint& c) {
  json_util::Json j;
  j["space_ref"] = c.space_ref;
  j["logits"] = c.policy.logits;
  json_util::Json adam;
  adam["lr"] = c.adam.lr;
  adam["beta1"] = c.adam.beta1;
  adam["beta2"] = c.adam.beta2;
  adam["epsilon"] = c.adam.epsilon;
  adam["step"] = c.adam.step;
  adam["m"] = c.adam.m;
  adam["v"] = c.adam.v;
  j["adam"] = std::move(adam);
  json_util::Json b;
  b["value"] = c.baseline.value;
  b["decay"] = c.baseline.decay;
  b["initialized"] = c.baseline.initialized;
  j["baseline"] = std::move(b);
  j["step"] = c.step;
  return j;
}

namespace detail {

inline std::vector<std::vector<double>> matrix_from_json(const json_util::Json& a, const std::string& path) {
  if (!a.is_array()) throw ParseError(path + ": expected an array of arrays");
  std::vector<std::vector<double>> out;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!a[i].is_array()) throw ParseError(path + "[" + std::to_string(i) + "]: expected an array");
    auto& row = out.emplace_back();
    for (std::size_t k = 0; k < a[i].size(); ++k) {
      if (!a[i][k].is_number())
        throw ParseError(path + "[" + std::to_string(i) + "][" + std::to_string(k) + "]: expected a number");
      row.push_back(a[i][k].get<double>());
      if (!std::isfinite(row.back())) throw ValidationError(path + ": non-finite value");
    }
  }
  return out;
}

}  // namespace detail

inline PolicyCheckpoint checkpoint_from_json(const json_util::Json& j) {
  using namespace json_util;
  const std::string root = "$";
  check_keys(j, root, {"space_ref", "logits", "adam", "baseline", "step"});
  PolicyCheckpoint c;
  c.space_ref = get_string(j, root, "space_ref");
  c.policy.logits = detail::matrix_from_json(field(j, root, "logits"), "$.logits");
  const auto& adam = field(j, root, "adam");
  check_keys(adam, "$.adam", {"lr", "beta1", "beta2", "epsilon", "step", "m", "v"});
  c.adam.lr = get_double(adam, "$.adam", "lr");
  c.adam.beta1 = get_double(adam, "$.adam", "beta1");
  c.adam.beta2 = get_double(adam, "$.adam", "beta2");
  c.adam.epsilon = get_double(adam, "$.adam", "epsilon");
  c.adam.step = get_int(adam, "$.adam", "step");
  c.adam.m = detail::matrix_from_json(field(adam, "$.adam", "m"), "$.adam.m");
  c.adam.v = detail::matrix_from_json(field(adam, "$.adam", "v"), "$.adam.v");
  const auto& b = field(j, root, "baseline");
  check_keys(b, "$.baseline", {"value", "decay", "initialized"});
  c.baseline.value = get_double(b, "$.baseline", "value");
  c.baseline.decay = get_double(b, "$.baseline", "decay");
  c.baseline.initialized = get_bool(b, "$.baseline", "initialized");
  c.step = get_int(j, root, "step");
  return c;
}

inline PolicyCheckpoint load_checkpoint(const std::string& path) {
  return checkpoint_from_json(json_util::parse(json_util::read_file(path), path));
}

/// Throws unless the checkpoint's logits have the shape of `space`'s decisions.
inline void check_checkpoint(const PolicyCheckpoint& c, const SpaceSpec& space, const std::string& space_ref) {
  if (c.space_ref != space_ref)
    throw ValidationError("checkpoint was made for space '" + c.space_ref + "', not '" + space_ref + "'");
  if (c.policy.logits.size() != space.decisions.size())
    throw ValidationError("checkpoint has " + std::to_string(c.policy.logits.size()) + " decisions, space has " +
                          std::to_string(space.decisions.size()));
  for (std::size_t d = 0; d < space.decisions.size(); ++d)
    if (c.policy.logits[d].size() != space.decisions[d].choices.size())
      throw ValidationError("checkpoint decision " + std::to_string(d) + " has the wrong number of choices");
}

// ---------------------------------------------------------------------------
// Kernel tensors

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_f64(std::string& out, double d) {
  const auto v = std::bit_cast<std::uint64_t>(d);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline std::uint64_t get_le(const std::string& in, std::size_t pos, int bytes) {
  std::uint64_t v = 0;
  for (int i = 0; i < bytes; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[pos + i])) << (8 * i);
  return v;
}

inline bool is_text_path(const std::string& path) {
  return std::filesystem::path(path).extension() == ".txt";
}

}  // namespace detail

inline std::string encode_tensor(const ConvKernel& w) {
  std::string out;
  for (int d : {w.k, w.k, w.c1, w.c2}) detail::put_u32(out, static_cast<std::uint32_t>(d));
  for (double v : w.data) detail::put_f64(out, v);
  return out;
}

inline ConvKernel decode_tensor(const std::string& bytes, const std::string& source) {
  if (bytes.size() < 16) throw ParseError(source + ": truncated tensor header");
  std::uint32_t dims[4];
  for (int i = 0; i < 4; ++i) dims[i] = static_cast<std::uint32_t>(detail::get_le(bytes, 4 * i, 4));
  if (dims[0] != dims[1]) throw ParseError(source + ": kernel must be square");
  if (dims[0] == 0 || dims[2] == 0 || dims[3] == 0 || dims[0] > 4096 || dims[2] > 65536 || dims[3] > 65536)
    throw ParseError(source + ": implausible tensor dims");
  const std::size_t n = std::size_t{dims[0]} * dims[1] * dims[2] * dims[3];
  if (bytes.size() != 16 + 8 * n)
    throw ParseError(source + ": expected " + std::to_string(16 + 8 * n) + " bytes, got " +
                     std::to_string(bytes.size()));
  ConvKernel w(static_cast<int>(dims[0]), static_cast<int>(dims[2]), static_cast<int>(dims[3]));
  for (std::size_t i = 0; i < n; ++i) w.data[i] = std::bit_cast<double>(detail::get_le(bytes, 16 + 8 * i, 8));
  check_kernel(w);
  return w;
}

inline std::string tensor_to_text(const ConvKernel& w) {
  std::string out = std::to_string(w.k) + " " + std::to_string(w.k) + " " + std::to_string(w.c1) + " " +
                    std::to_string(w.c2) + "\n";
  for (std::size_t i = 0; i < w.data.size(); ++i) {
    out += fmt(w.data[i]);
    out += (i + 1) % static_cast<std::size_t>(w.c2) == 0 ? '\n' : ' ';
  }
  return out;
}

inline ConvKernel tensor_from_text(const std::string& text, const std::string& source) {
  std::istringstream lines(text);
  std::string line, body;
  while (std::getline(lines, line)) {
    if (auto h = line.find('#'); h != std::string::npos) line.erase(h);
    body += line + "\n";
  }
  std::istringstream in(body);
  long long dims[4];
  for (auto& d : dims)
    if (!(in >> d)) throw ParseError(source + ": expected 4 dims");
  if (dims[0] != dims[1]) throw ParseError(source + ": kernel must be square");
  for (auto d : dims)
    if (d < 1 || d > 65536) throw ParseError(source + ": implausible tensor dims");
  ConvKernel w(static_cast<int>(dims[0]), static_cast<int>(dims[2]), static_cast<int>(dims[3]));
  for (std::size_t i = 0; i < w.data.size(); ++i) {
    std::string tok;
    if (!(in >> tok)) throw ParseError(source + ": expected " + std::to_string(w.data.size()) + " values, got " +
                                       std::to_string(i));
    w.data[i] = detail::parse_double(tok, source + ": value " + std::to_string(i));
  }
  std::string extra;
  if (in >> extra) throw ParseError(source + ": trailing data after tensor values");
  check_kernel(w);
  return w;
}

/// Text format for *.txt paths, binary otherwise.
inline ConvKernel read_tensor(const std::string& path) {
  const auto content = json_util::read_file(path);
  return detail::is_text_path(path) ? tensor_from_text(content, path) : decode_tensor(content, path);
}

inline void write_tensor(const std::string& path, const ConvKernel& w) {
  json_util::write_file(path, detail::is_text_path(path) ? tensor_to_text(w) : encode_tensor(w));
}

}  // namespace mobiledet
