#pragma once
/*
 * Search orchestration: couples a space, a quality oracle, a latency source
 * and the controller. Also provides the exhaustive optimum and a best-of-n
 * random baseline used as references.
 */

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "mobiledet/analysis.hpp"
#include "mobiledet/arch_json.hpp"
#include "mobiledet/controller.hpp"
#include "mobiledet/cost_model.hpp"
#include "mobiledet/hash.hpp"
#include "mobiledet/search_space.hpp"

namespace mobiledet {

inline std::uint64_t arch_hash(const NetworkSpec& net) { return fnv1a64(to_json(net).dump()); }

// ---------------------------------------------------------------------------
// Quality oracles

class QualityOracle {
 public:
  virtual ~QualityOracle() = default;
  /// Quality in [0, 1]; deterministic in (net, seed).
  virtual double evaluate(const NetworkSpec& net, std::uint64_t seed) const = 0;
  virtual double evaluate_noiseless(const NetworkSpec& net) const = 0;
  virtual std::string descriptor() const = 0;
};

inline double clamp01(double q) { return std::clamp(q, 0.0, 1.0); }

inline double gaussian_noise(double sigma, std::uint64_t seed) {
  if (sigma == 0.0) return 0.0;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, sigma);
  return n(rng);
}

/// Quality linear in the cost-model feature counts. Buckets without an
/// explicit weight get a deterministic pseudo-random weight in
/// [0, max_weight) derived from (weight_seed, bucket).
class LinearFeatureOracle final : public QualityOracle {
 public:
  struct Config {
    std::map<std::string, double> weights;
    std::uint64_t weight_seed = 1;
    double max_weight = 0.05;
    double bias = 0.0;
    double noise_sigma = 0.0;
  };

  explicit LinearFeatureOracle(Config cfg) : cfg_(std::move(cfg)) {}

  double weight(const std::string& bucket) const {
    if (auto it = cfg_.weights.find(bucket); it != cfg_.weights.end()) return it->second;
    const auto h = mix64(fnv1a64(bucket) ^ mix64(cfg_.weight_seed));
    return cfg_.max_weight * static_cast<double>(h >> 11) * 0x1.0p-53;
  }

  double evaluate_noiseless(const NetworkSpec& net) const override {
    double q = cfg_.bias;
    for (const auto& [k, c] : network_features(net)) q += c * weight(k);
    return clamp01(q);
  }

  double evaluate(const NetworkSpec& net, std::uint64_t seed) const override {
    double q = cfg_.bias;
    for (const auto& [k, c] : network_features(net)) q += c * weight(k);
    return clamp01(q + gaussian_noise(cfg_.noise_sigma, seed));
  }

  std::string descriptor() const override {
    return "linear_feature(seed=" + std::to_string(cfg_.weight_seed) + ",max_weight=" + format_number(cfg_.max_weight) +
           ",noise=" + format_number(cfg_.noise_sigma) + ")";
  }

 private:
  Config cfg_;
};

/// Quality rises with capacity and saturates:
///   q = q_max * (1 - exp(-capacity / scale)) + early_bonus * early_regular_fraction
/// where capacity is the MAdds (in millions) weighted per operation class.
class AffinityOracle final : public QualityOracle {
 public:
  struct Config {
    /// Quality per MAdd by OpClass (regular, depthwise, pointwise, SE).
    std::array<double, kNumOpClasses> class_weights{0.5, 1.0, 1.0, 1.0};
    double scale_mmadds = 400.0;
    double q_max = 0.9;
    double early_bonus = 0.0;
    double noise_sigma = 0.01;
  };

  explicit AffinityOracle(Config cfg) : cfg_(cfg) {
    if (!(cfg_.scale_mmadds > 0.0)) throw ValidationError("affinity oracle scale must be > 0");
  }

  const Config& config() const { return cfg_; }

  double capacity(const NetworkSpec& net) const {
    const auto trace = derive_shapes(net);
    auto weighted = [&](const ConvOp& op) {
      return cfg_.class_weights[static_cast<std::size_t>(op.op_class)] * static_cast<double>(op.madds);
    };
    double cap = weighted(stem_op(net));
    std::size_t i = 0;
    for (const auto& block : net.blocks)
      for (const auto& layer : block.layers) {
        const auto& s = trace.layers[i++];
        for (const auto& op : layer_ops(layer, s.in_height, s.in_width)) cap += weighted(op);
      }
    return cap / 1e6;
  }

  double evaluate_noiseless(const NetworkSpec& net) const override {
    double q = cfg_.q_max * (1.0 - std::exp(-capacity(net) / cfg_.scale_mmadds));
    if (cfg_.early_bonus != 0.0) q += cfg_.early_bonus * regular_conv_fractions(net).early;
    return clamp01(q);
  }

  double evaluate(const NetworkSpec& net, std::uint64_t seed) const override {
    double q = cfg_.q_max * (1.0 - std::exp(-capacity(net) / cfg_.scale_mmadds));
    if (cfg_.early_bonus != 0.0) q += cfg_.early_bonus * regular_conv_fractions(net).early;
    return clamp01(q + gaussian_noise(cfg_.noise_sigma, seed));
  }

  std::string descriptor() const override {
    return "affinity(scale=" + format_number(cfg_.scale_mmadds) + ",q_max=" + format_number(cfg_.q_max) +
           ",regular_weight=" + format_number(cfg_.class_weights[0]) + ",early_bonus=" +
           format_number(cfg_.early_bonus) + ",noise=" + format_number(cfg_.noise_sigma) + ")";
  }

 private:
  Config cfg_;
};

// ---------------------------------------------------------------------------
// Latency sources

class LatencySource {
 public:
  virtual ~LatencySource() = default;
  virtual double latency(const NetworkSpec& net, std::uint64_t seed) const = 0;
  virtual double latency_noiseless(const NetworkSpec& net) const = 0;
  virtual std::string descriptor() const = 0;
};

class SimulatorLatency final : public LatencySource {
 public:
  explicit SimulatorLatency(DeviceProfile dev) : dev_(std::move(dev)) { check_profile(dev_); }

  double latency(const NetworkSpec& net, std::uint64_t seed) const override {
    std::mt19937_64 rng(seed);
    return simulate_latency(dev_, net, rng);
  }
  double latency_noiseless(const NetworkSpec& net) const override { return expected_latency(dev_, net); }
  std::string descriptor() const override { return "simulator:" + dev_.name; }
  const DeviceProfile& device() const { return dev_; }

 private:
  DeviceProfile dev_;
};

class ModelLatency final : public LatencySource {
 public:
  explicit ModelLatency(LatencyModel model) : model_(std::move(model)) {}

  double latency(const NetworkSpec& net, std::uint64_t) const override { return predict(model_, net); }
  double latency_noiseless(const NetworkSpec& net) const override { return predict(model_, net); }
  std::string descriptor() const override { return "model:" + model_.space_ref; }

 private:
  LatencyModel model_;
};

/// Median noise-free latency of `n` uniform samples (lower median for even n).
template <class Rng>
double median_latency(const SpaceSpec& space, const LatencySource& source, std::size_t n, Rng& rng) {
  if (n < 1) throw ValidationError("median_latency needs n >= 1");
  std::vector<double> lat;
  lat.reserve(n);
  for (std::size_t i = 0; i < n; ++i) lat.push_back(source.latency_noiseless(decode(space, random_sample(space, rng))));
  std::sort(lat.begin(), lat.end());
  return lat[(n - 1) / 2];
}

// ---------------------------------------------------------------------------

enum class NoiseMode { kPerArchitecture, kIid };

struct SearchConfig {
  int steps = 5000;
  int samples_per_step = 1;
  double tau = -0.3;
  double budget_ms = 1.0;
  std::uint64_t seed = 0;
  NoiseMode noise_mode = NoiseMode::kPerArchitecture;
  int log_every = 1;
  double lr = 5e-3;
  double beta1 = 0.0;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double baseline_decay = 0.9;

  RewardConfig reward_config() const { return {tau, budget_ms}; }
};

inline void check_config(const SearchConfig& cfg) {
  if (cfg.steps < 1) throw ValidationError("steps must be >= 1");
  if (cfg.samples_per_step < 1) throw ValidationError("samples_per_step must be >= 1");
  if (!(cfg.budget_ms > 0.0)) throw ValidationError("budget must be > 0");
  if (cfg.log_every < 1) throw ValidationError("log_every must be >= 1");
}

struct StepSample {
  DecisionVector dv;
  double quality = 0.0;
  double latency_ms = 0.0;
  double reward = 0.0;
};

struct StepRecord {
  int step = 0;
  std::vector<StepSample> samples;
  double entropy = 0.0;
  double baseline = 0.0;
};

struct ArchEvaluation {
  DecisionVector dv;
  NetworkSpec net;
  double quality = 0.0;
  double latency_ms = 0.0;
  double reward = 0.0;
};

struct SearchLog {
  std::vector<StepRecord> steps;
  ArchEvaluation final;
};

struct SearchResult {
  NetworkSpec best;
  SearchLog log;
  CategoricalPolicy policy;
  AdamState adam;
  BaselineState baseline;
};

inline ArchEvaluation evaluate_noiseless(const SpaceSpec& space, const DecisionVector& dv, const QualityOracle& oracle,
                                         const LatencySource& latency, const RewardConfig& rc) {
  ArchEvaluation e;
  e.dv = dv;
  e.net = decode(space, dv);
  e.quality = oracle.evaluate_noiseless(e.net);
  e.latency_ms = latency.latency_noiseless(e.net);
  e.reward = reward(e.quality, e.latency_ms, rc);
  return e;
}

/// Continues from the given controller state. Adam hyper-parameters and the
/// baseline decay are taken from `cfg`; moments and step count are kept.
inline SearchResult run_search(const SpaceSpec& space, const QualityOracle& oracle, const LatencySource& latency,
                               const SearchConfig& cfg, CategoricalPolicy policy, AdamState adam,
                               BaselineState baseline) {
  check_config(cfg);
  if (policy.logits.size() != space.decisions.size()) throw ValidationError("policy does not match the space");
  for (std::size_t d = 0; d < space.decisions.size(); ++d)
    if (policy.logits[d].size() != space.decisions[d].choices.size())
      throw ValidationError("policy does not match the space at decision " + std::to_string(d));
  const auto rc = cfg.reward_config();
  SearchResult res;
  res.policy = std::move(policy);
  res.adam = std::move(adam);
  res.adam.lr = cfg.lr;
  res.adam.beta1 = cfg.beta1;
  res.adam.beta2 = cfg.beta2;
  res.adam.epsilon = cfg.epsilon;
  res.baseline = baseline;
  res.baseline.decay = cfg.baseline_decay;

  std::mt19937_64 rng(combine_seed(cfg.seed, 0x5eed));
  std::vector<Transition> batch;
  for (int step = 0; step < cfg.steps; ++step) {
    StepRecord rec;
    rec.step = step;
    batch.clear();
    for (int i = 0; i < cfg.samples_per_step; ++i) {
      auto s = sample(res.policy, rng);
      StepSample out;
      out.dv = s.dv;
      try {
        const auto net = decode(space, s.dv);
        const std::uint64_t noise_seed =
            cfg.noise_mode == NoiseMode::kPerArchitecture
                ? combine_seed(cfg.seed, arch_hash(net))
                : combine_seed(cfg.seed, static_cast<std::uint64_t>(step) * cfg.samples_per_step + i);
        out.quality = oracle.evaluate(net, combine_seed(noise_seed, 1));
        out.latency_ms = latency.latency(net, combine_seed(noise_seed, 2));
        out.reward = reward(out.quality, out.latency_ms, rc);
      } catch (const Error& e) {
        throw SearchError("step " + std::to_string(step) + ": " + e.what());
      }
      if (!std::isfinite(out.reward)) throw SearchError("step " + std::to_string(step) + ": non-finite reward");
      batch.push_back({s.dv, s.logprob, out.reward});
      rec.samples.push_back(std::move(out));
    }
    reinforce_step(res.policy, batch, res.baseline, res.adam);
    rec.entropy = entropy(res.policy);
    rec.baseline = res.baseline.value;
    if (step % cfg.log_every == 0 || step + 1 == cfg.steps) res.log.steps.push_back(std::move(rec));
  }

  res.log.final = evaluate_noiseless(space, most_likely(res.policy), oracle, latency, rc);
  res.best = res.log.final.net;
  return res;
}

inline SearchResult run_search(const SpaceSpec& space, const QualityOracle& oracle, const LatencySource& latency,
                               const SearchConfig& cfg) {
  return run_search(space, oracle, latency, cfg, CategoricalPolicy::uniform(space), AdamState{}, BaselineState{});
}

/// Noise-free reward of every architecture; ties keep the lexicographically first.
inline ArchEvaluation exhaustive_best(const SpaceSpec& space, const QualityOracle& oracle, const LatencySource& latency,
                                      const RewardConfig& rc) {
  auto it = enumerate(space);
  DecisionVector dv;
  std::optional<ArchEvaluation> best;
  while (it.next(dv)) {
    const auto net = decode(space, dv);
    const double q = oracle.evaluate_noiseless(net);
    const double c = latency.latency_noiseless(net);
    const double r = reward(q, c, rc);
    if (!best || r > best->reward) best = ArchEvaluation{dv, net, q, c, r};
  }
  return *best;
}

/// Best noise-free reward among n uniform samples (first found on ties).
template <class Rng>
ArchEvaluation random_search_baseline(const SpaceSpec& space, const QualityOracle& oracle, const LatencySource& latency,
                                      const RewardConfig& rc, std::size_t n, Rng& rng) {
  if (n < 1) throw ValidationError("random search needs n >= 1");
  std::optional<ArchEvaluation> best;
  for (std::size_t i = 0; i < n; ++i) {
    auto e = evaluate_noiseless(space, random_sample(space, rng), oracle, latency, rc);
    if (!best || e.reward > best->reward) best = std::move(e);
  }
  return *best;
}

// ---------------------------------------------------------------------------
// Search-space ablation

struct AblationRow {
  std::string space;
  std::string device;
  std::string method;  // "exhaustive" or "search"
  double budget_ms = 0.0;
  double reward = 0.0;
  double quality = 0.0;
  double latency_ms = 0.0;
  Count madds = 0;
  Count params = 0;
  double frac_regular_all = 0.0;
  double frac_regular_early = 0.0;
  NetworkSpec best;
};

struct AblationConfig {
  SearchConfig search;          // tau, seed and (when searching) steps
  double budget_ms = 0.0;       // <= 0: median latency of `budget_samples` draws
  std::size_t budget_samples = 256;
};

/// For each device the budget is shared by all variants: either fixed, or the
/// median latency of random samples from the largest variant's space.
inline std::vector<AblationRow> ablation_report(const std::vector<SpaceVariant>& variants,
                                                const std::vector<DeviceProfile>& devices, const Layout& layout,
                                                const QualityOracle& oracle, const AblationConfig& cfg,
                                                const SpaceMenus& menus = {},
                                                std::uint64_t enumeration_cap = kDefaultEnumerationCap) {
  if (variants.empty() || devices.empty()) throw ValidationError("ablation needs at least one space and one device");
  std::vector<AblationRow> rows;
  for (const auto& dev : devices) {
    SimulatorLatency lat(dev);
    double budget = cfg.budget_ms;
    if (!(budget > 0.0)) {
      const auto largest = *std::max_element(variants.begin(), variants.end());
      const auto ref = build_space(largest, dev.adaptation, layout, menus, enumeration_cap);
      std::mt19937_64 rng(combine_seed(cfg.search.seed, fnv1a64(dev.name)));
      budget = median_latency(ref, lat, cfg.budget_samples, rng);
    }
    for (auto v : variants) {
      const auto space = build_space(v, dev.adaptation, layout, menus, enumeration_cap);
      AblationRow row;
      row.space = variant_name(v);
      row.device = dev.name;
      row.budget_ms = budget;
      const RewardConfig rc{cfg.search.tau, budget};
      ArchEvaluation best;
      if (space_size(space) <= space.enumeration_cap) {
        row.method = "exhaustive";
        best = exhaustive_best(space, oracle, lat, rc);
      } else {
        row.method = "search";
        auto sc = cfg.search;
        sc.budget_ms = budget;
        best = run_search(space, oracle, lat, sc).log.final;
      }
      const auto cost = network_cost(best.net);
      const auto frac = regular_conv_fractions(best.net);
      row.reward = best.reward;
      row.quality = best.quality;
      row.latency_ms = best.latency_ms;
      row.madds = cost.total_madds;
      row.params = cost.total_params;
      row.frac_regular_all = frac.all;
      row.frac_regular_early = frac.early;
      row.best = best.net;
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

}  // namespace mobiledet
