#pragma once
/*
 * REINFORCE controller over independent categorical decisions.
 *
 * reward  R = quality + tau * |latency / budget - 1|,  tau < 0
 * grad    d/dlogits_d = mean_batch (R - baseline) * (onehot(chosen_d) - softmax(logits_d))
 *
 * Logits are updated by gradient ascent with Adam; the baseline is an
 * exponential moving average of batch-mean rewards, updated after each step.
 */

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "mobiledet/errors.hpp"
#include "mobiledet/search_space.hpp"

namespace mobiledet {

struct CategoricalPolicy {
  std::vector<std::vector<double>> logits;  // one vector per decision

  static CategoricalPolicy uniform(const SpaceSpec& space) {
    CategoricalPolicy p;
    for (const auto& d : space.decisions) p.logits.emplace_back(d.choices.size(), 0.0);
    return p;
  }
};

inline std::vector<double> softmax(const std::vector<double>& logits) {
  std::vector<double> p(logits.size());
  if (logits.empty()) return p;
  const double mx = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) z += (p[i] = std::exp(logits[i] - mx));
  for (auto& v : p) v /= z;
  return p;
}

inline std::vector<double> log_softmax(const std::vector<double>& logits) {
  std::vector<double> out(logits.size());
  if (logits.empty()) return out;
  const double mx = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (double l : logits) z += std::exp(l - mx);
  const double lse = mx + std::log(z);
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] = logits[i] - lse;
  return out;
}

inline double log_prob(const CategoricalPolicy& policy, const DecisionVector& dv) {
  if (dv.size() != policy.logits.size()) throw RangeError("decision vector size does not match policy");
  double lp = 0.0;
  for (std::size_t d = 0; d < dv.size(); ++d) lp += log_softmax(policy.logits[d]).at(static_cast<std::size_t>(dv[d]));
  return lp;
}

struct PolicySample {
  DecisionVector dv;
  double logprob = 0.0;
};

/// Independent categorical draw per decision, by inverse CDF on a uniform.
template <class Rng>
PolicySample sample(const CategoricalPolicy& policy, Rng& rng) {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  PolicySample s;
  s.dv.reserve(policy.logits.size());
  for (const auto& l : policy.logits) {
    const auto p = softmax(l);
    const double u = unif(rng);
    double acc = 0.0;
    std::size_t pick = p.size() - 1;
    for (std::size_t i = 0; i < p.size(); ++i) {
      acc += p[i];
      if (u < acc) {
        pick = i;
        break;
      }
    }
    s.dv.push_back(static_cast<int>(pick));
    s.logprob += std::log(p[pick]);
  }
  return s;
}

/// Argmax per decision, lowest index on ties.
inline DecisionVector most_likely(const CategoricalPolicy& policy) {
  DecisionVector dv;
  for (const auto& l : policy.logits)
    dv.push_back(static_cast<int>(std::max_element(l.begin(), l.end()) - l.begin()));
  return dv;
}

/// Sum of per-decision Shannon entropies, in nats.
inline double entropy(const CategoricalPolicy& policy) {
  double h = 0.0;
  for (const auto& l : policy.logits) {
    const auto p = softmax(l);
    const auto lp = log_softmax(l);
    for (std::size_t i = 0; i < p.size(); ++i)
      if (p[i] > 0.0) h -= p[i] * lp[i];
  }
  return h;
}

struct RewardConfig {
  double tau = -0.3;
  double budget_ms = 1.0;
};

inline double reward(double quality, double latency_ms, const RewardConfig& cfg) {
  if (!(cfg.budget_ms > 0.0)) throw ValidationError("latency budget must be > 0");
  if (!(latency_ms > 0.0)) throw ValidationError("latency must be > 0");
  return quality + cfg.tau * std::abs(latency_ms / cfg.budget_ms - 1.0);
}

struct AdamState {
  double lr = 5e-3;
  double beta1 = 0.0;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::int64_t step = 0;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
};

struct BaselineState {
  double value = 0.0;
  double decay = 0.9;
  bool initialized = false;
};

struct Transition {
  DecisionVector dv;
  double logprob = 0.0;
  double reward = 0.0;
};

/// Mean over the batch of advantage * d logprob / d logits, with a fixed baseline.
inline std::vector<std::vector<double>> reinforce_gradient(const CategoricalPolicy& policy,
                                                           const std::vector<Transition>& batch, double baseline) {
  std::vector<std::vector<double>> g;
  for (const auto& l : policy.logits) g.emplace_back(l.size(), 0.0);
  if (batch.empty()) return g;
  std::vector<std::vector<double>> probs;
  for (const auto& l : policy.logits) probs.push_back(softmax(l));
  const double inv_n = 1.0 / static_cast<double>(batch.size());
  for (const auto& t : batch) {
    if (t.dv.size() != policy.logits.size()) throw RangeError("transition does not match policy");
    const double adv = (t.reward - baseline) * inv_n;
    for (std::size_t d = 0; d < g.size(); ++d)
      for (std::size_t i = 0; i < g[d].size(); ++i)
        g[d][i] += adv * ((static_cast<int>(i) == t.dv[d] ? 1.0 : 0.0) - probs[d][i]);
  }
  return g;
}

/// One policy-gradient ascent step. The baseline is initialized to the first
/// batch's mean reward and updated (EMA) after the gradient is taken.
inline void reinforce_step(CategoricalPolicy& policy, const std::vector<Transition>& batch, BaselineState& baseline,
                           AdamState& adam) {
  if (batch.empty()) throw ValidationError("reinforce_step needs a non-empty batch");
  double mean_r = 0.0;
  for (const auto& t : batch) {
    if (!std::isfinite(t.reward)) throw SearchError("non-finite reward");
    mean_r += t.reward;
  }
  mean_r /= static_cast<double>(batch.size());
  if (!baseline.initialized) {
    baseline.value = mean_r;
    baseline.initialized = true;
  }

  const auto g = reinforce_gradient(policy, batch, baseline.value);
  if (adam.m.size() != policy.logits.size()) {
    adam.m.clear();
    adam.v.clear();
    for (const auto& l : policy.logits) {
      adam.m.emplace_back(l.size(), 0.0);
      adam.v.emplace_back(l.size(), 0.0);
    }
  }
  ++adam.step;
  const double c1 = 1.0 - std::pow(adam.beta1, static_cast<double>(adam.step));
  const double c2 = 1.0 - std::pow(adam.beta2, static_cast<double>(adam.step));
  for (std::size_t d = 0; d < g.size(); ++d) {
    for (std::size_t i = 0; i < g[d].size(); ++i) {
      auto& m = adam.m[d][i];
      auto& v = adam.v[d][i];
      m = adam.beta1 * m + (1.0 - adam.beta1) * g[d][i];
      v = adam.beta2 * v + (1.0 - adam.beta2) * g[d][i] * g[d][i];
      policy.logits[d][i] += adam.lr * (m / c1) / (std::sqrt(v / c2) + adam.epsilon);
    }
  }
  baseline.value = baseline.decay * baseline.value + (1.0 - baseline.decay) * mean_r;
}

}  // namespace mobiledet
