#pragma once
/*
 * Latency: parametric device simulators (ground truth for desk-scale runs)
 * and a linear regression surrogate fitted from benchmark records.
 */

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mobiledet/analysis.hpp"
#include "mobiledet/errors.hpp"
#include "mobiledet/search_space.hpp"

namespace mobiledet {

struct DeviceProfile {
  std::string name = "custom";
  /// ms per 10^6 MAdds, indexed by OpClass.
  std::array<double, kNumOpClasses> rates{1.0, 1.0, 1.0, 1.0};
  double overhead_ms = 0.0;  // per layer, stem included
  double noise_sigma = 0.0;  // relative std-dev of the multiplicative noise
  Adaptation adaptation = Adaptation::kNeutral;  // search-space adaptation for this target

  double rate(OpClass c) const { return rates[static_cast<std::size_t>(c)]; }
  double& rate(OpClass c) { return rates[static_cast<std::size_t>(c)]; }
};

inline void check_profile(const DeviceProfile& dev) {
  for (double r : dev.rates)
    if (!(r >= 0.0) || !std::isfinite(r)) throw ValidationError("device '" + dev.name + "': rates must be >= 0");
  if (!(dev.overhead_ms >= 0.0)) throw ValidationError("device '" + dev.name + "': overhead must be >= 0");
  if (!(dev.noise_sigma >= 0.0)) throw ValidationError("device '" + dev.name + "': noise_sigma must be >= 0");
}

/// Uniform cost per MAdd.
inline DeviceProfile cpu_sim() {
  DeviceProfile d;
  d.name = "cpu_sim";
  d.rates = {1.0, 1.0, 1.0, 1.0};
  d.adaptation = Adaptation::kCpuLike;
  return d;
}

/// Depthwise MAdds cost 21x regular ones, so a regular conv with 7x the MAdds
/// of a depthwise one runs 3x as fast. SE blocks are poorly supported.
inline DeviceProfile accel_sim() {
  DeviceProfile d;
  d.name = "accel_sim";
  d.rates = {1.0, 21.0, 1.0, 50.0};
  d.adaptation = Adaptation::kNeutral;
  return d;
}

inline DeviceProfile dsp_sim() {
  DeviceProfile d = accel_sim();
  d.name = "dsp_sim";
  d.adaptation = Adaptation::kDspLike;
  return d;
}

inline std::optional<DeviceProfile> builtin_device(const std::string& name) {
  if (name == "cpu_sim") return cpu_sim();
  if (name == "accel_sim") return accel_sim();
  if (name == "dsp_sim") return dsp_sim();
  return std::nullopt;
}

inline double op_latency(const DeviceProfile& dev, const ConvOp& op) {
  return dev.rate(op.op_class) * static_cast<double>(op.madds) / 1e6;
}

/// Noise-free latency in ms.
inline double expected_latency(const DeviceProfile& dev, const NetworkSpec& net) {
  const auto trace = derive_shapes(net);
  double ms = op_latency(dev, stem_op(net)) + dev.overhead_ms;
  std::size_t i = 0;
  for (const auto& block : net.blocks) {
    for (const auto& layer : block.layers) {
      const auto& s = trace.layers[i++];
      for (const auto& op : layer_ops(layer, s.in_height, s.in_width)) ms += op_latency(dev, op);
      ms += dev.overhead_ms;
    }
  }
  return ms;
}

/// expected_latency * (1 + eps), eps ~ N(0, noise_sigma). The factor is
/// floored at 1e-3 so latencies stay positive.
template <class Rng>
double simulate_latency(const DeviceProfile& dev, const NetworkSpec& net, Rng& rng) {
  const double base = expected_latency(dev, net);
  if (dev.noise_sigma == 0.0) return base;
  std::normal_distribution<double> eps(0.0, dev.noise_sigma);
  return base * std::max(1.0 + eps(rng), 1e-3);
}

// ---------------------------------------------------------------------------

struct BenchmarkRecord {
  std::string arch_file;
  NetworkSpec arch;
  double latency_ms = 0.0;
};

template <class Rng>
std::vector<BenchmarkRecord> generate_benchmarks(const SpaceSpec& space, const DeviceProfile& dev, std::size_t n,
                                                 Rng& rng) {
  if (n < 1) throw ValidationError("benchmark count must be >= 1");
  check_profile(dev);
  std::vector<BenchmarkRecord> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto dv = random_sample(space, rng);
    BenchmarkRecord r;
    char name[32];
    std::snprintf(name, sizeof name, "arch_%05zu.json", i);
    r.arch_file = name;
    r.arch = decode(space, dv);
    r.latency_ms = simulate_latency(dev, r.arch, rng);
    out.push_back(std::move(r));
  }
  return out;
}

// ---------------------------------------------------------------------------

struct LatencyModel {
  std::string space_ref;
  std::vector<std::string> buckets;  // sorted; column order of `weights`
  std::vector<double> weights;
  double intercept = 0.0;
  double ridge_lambda = 0.0;
  double train_r2 = 0.0;
  std::optional<double> holdout_r2;
  FeatureOptions features;
};

inline constexpr double kDefaultRidgeLambda = 1e-6;

inline constexpr int kTikhonovPasses = 2;

/// Weighted ridge regression with an unpenalized intercept:
///   minimize  sum_i w_i (x_i.beta + b - y_i)^2 + lambda |beta|^2
/// solved through the centered normal equations with an LDLT factorization,
/// followed by kTikhonovPasses iterated-Tikhonov corrections.
inline LatencyModel fit_features(const std::vector<FeatureVector>& rows, const std::vector<double>& targets,
                                 const std::vector<double>& sample_weights, double ridge_lambda,
                                 const FeatureOptions& opts = {}) {
  const std::size_t n = rows.size();
  if (n < 2) throw ValidationError("fit needs at least 2 records");
  if (targets.size() != n || sample_weights.size() != n) throw ValidationError("fit: size mismatch");
  if (!(ridge_lambda >= 0.0)) throw ValidationError("ridge lambda must be >= 0");

  LatencyModel model;
  model.ridge_lambda = ridge_lambda;
  model.features = opts;
  for (const auto& r : rows)
    for (const auto& [k, _] : r) model.buckets.push_back(k);
  std::sort(model.buckets.begin(), model.buckets.end());
  model.buckets.erase(std::unique(model.buckets.begin(), model.buckets.end()), model.buckets.end());
  const auto p = static_cast<Eigen::Index>(model.buckets.size());

  Eigen::MatrixXd x = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), p);
  Eigen::VectorXd y(static_cast<Eigen::Index>(n));
  Eigen::VectorXd w(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    for (const auto& [k, c] : rows[i]) {
      const auto col = std::lower_bound(model.buckets.begin(), model.buckets.end(), k) - model.buckets.begin();
      x(static_cast<Eigen::Index>(i), col) = c;
    }
    y(static_cast<Eigen::Index>(i)) = targets[i];
    if (!(sample_weights[i] > 0.0)) throw ValidationError("sample weights must be > 0");
    w(static_cast<Eigen::Index>(i)) = sample_weights[i];
  }

  const double wsum = w.sum();
  const Eigen::RowVectorXd x_mean = (w.transpose() * x) / wsum;
  const double y_mean = w.dot(y) / wsum;
  const Eigen::MatrixXd xc = x.rowwise() - x_mean;
  const Eigen::VectorXd yc = y.array() - y_mean;

  Eigen::MatrixXd a = xc.transpose() * w.asDiagonal() * xc;
  a.diagonal().array() += ridge_lambda;
  const Eigen::VectorXd b = xc.transpose() * (w.asDiagonal() * yc);

  Eigen::LDLT<Eigen::MatrixXd> ldlt(a);
  if (ldlt.info() != Eigen::Success) throw SingularSystemError("normal equations could not be factored");
  if (p > 0 && ridge_lambda == 0.0) {
    const auto d = ldlt.vectorD().cwiseAbs();
    if (d.minCoeff() <= 1e-10 * std::max(1.0, d.maxCoeff()))
      throw SingularSystemError("normal equations are singular (collinear features); use ridge lambda > 0");
  }
  // Iterated Tikhonov: the penalized factorization is reused to correct
  // against the unpenalized system, shrinking the bias by lambda / (s + lambda)
  // per pass along each eigen-direction s.
  Eigen::VectorXd beta = p > 0 ? Eigen::VectorXd(ldlt.solve(b)) : Eigen::VectorXd();
  if (p > 0 && ridge_lambda > 0.0) {
    a.diagonal().array() -= ridge_lambda;
    for (int pass = 0; pass < kTikhonovPasses; ++pass) beta += ldlt.solve(b - a * beta);
  }

  model.weights.assign(beta.data(), beta.data() + beta.size());
  model.intercept = y_mean - (p > 0 ? x_mean.dot(beta) : 0.0);
  return model;
}

inline double predict_features(const LatencyModel& model, const FeatureVector& f) {
  double out = model.intercept;
  for (const auto& [k, c] : f) {
    auto it = std::lower_bound(model.buckets.begin(), model.buckets.end(), k);
    if (it == model.buckets.end() || *it != k) throw UnknownBucketError("feature bucket '" + k + "' is not in the model");
    out += model.weights[static_cast<std::size_t>(it - model.buckets.begin())] * c;
  }
  return out;
}

inline double predict(const LatencyModel& model, const NetworkSpec& net) {
  return predict_features(model, network_features(net, model.features));
}

/// 1 - SSres/SStot. When SStot == 0 the result is 1 if SSres == 0 and 0 otherwise.
inline double r2_score(const std::vector<double>& predicted, const std::vector<double>& actual) {
  if (predicted.size() != actual.size() || actual.empty()) throw ValidationError("r2: size mismatch");
  double mean = 0.0;
  for (double v : actual) mean += v;
  mean /= static_cast<double>(actual.size());
  double ss_res = 0.0, ss_tot = 0.0;
  for (std::size_t i = 0; i < actual.size(); ++i) {
    ss_res += (predicted[i] - actual[i]) * (predicted[i] - actual[i]);
    ss_tot += (actual[i] - mean) * (actual[i] - mean);
  }
  if (ss_tot == 0.0) return ss_res == 0.0 ? 1.0 : 0.0;
  return 1.0 - ss_res / ss_tot;
}

inline double r2(const LatencyModel& model, const std::vector<BenchmarkRecord>& records) {
  std::vector<double> pred, actual;
  for (const auto& r : records) {
    pred.push_back(predict(model, r.arch));
    actual.push_back(r.latency_ms);
  }
  return r2_score(pred, actual);
}

/// Fits on `records` (features checked against `space`) and records the training r^2.
inline LatencyModel fit(const std::vector<BenchmarkRecord>& records, const SpaceSpec& space,
                        double ridge_lambda = kDefaultRidgeLambda, const FeatureOptions& opts = {},
                        std::string space_ref = {}) {
  std::vector<FeatureVector> rows;
  std::vector<double> y;
  for (const auto& r : records) {
    if (!(r.latency_ms > 0.0)) throw ValidationError("benchmark latency must be > 0 (" + r.arch_file + ")");
    rows.push_back(extract_features(r.arch, space, opts));
    y.push_back(r.latency_ms);
  }
  auto model = fit_features(rows, y, std::vector<double>(rows.size(), 1.0), ridge_lambda, opts);
  model.space_ref = std::move(space_ref);
  std::vector<double> pred;
  for (const auto& row : rows) pred.push_back(predict_features(model, row));
  model.train_r2 = r2_score(pred, y);
  return model;
}

}  // namespace mobiledet
