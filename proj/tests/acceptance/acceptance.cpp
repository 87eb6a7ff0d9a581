// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.
//
//   acceptance            all criteria
//   acceptance 1 5 6      a subset

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "mobiledet/arch_json.hpp"
#include "mobiledet/search_driver.hpp"
#include "mobiledet/tucker.hpp"
#include "support/brute_force.hpp"

using namespace mobiledet;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  int id;
  const char* title;
  double limit_s;
  std::function<Outcome()> run;
};

std::string num(double v, int precision = 6) {
  std::ostringstream ss;
  ss.precision(precision);
  ss << v;
  return ss.str();
}

// ---------------------------------------------------------------------------

Outcome cost_model_fidelity() {
  const auto space = build_space(SpaceVariant::kIbnFusedTucker, Adaptation::kNeutral, toy2_layout());
  DeviceProfile dev = accel_sim();
  dev.noise_sigma = 0.01;
  std::mt19937_64 rng(1);
  const auto train = generate_benchmarks(space, dev, 2000, rng);
  const auto held_out = generate_benchmarks(space, dev, 500, rng);
  const auto model = fit(train, space);
  const double r2v = r2(model, held_out);
  return {r2v >= 0.99, "held-out r2 " + num(r2v) + " (train " + num(model.train_r2) + ", " +
                           std::to_string(model.buckets.size()) + " buckets)"};
}

Outcome analyzer_equivalence() {
  std::mt19937_64 rng(2);
  Layout odd = default_layout();
  odd.input_resolution = 321;
  const SpaceVariant variants[] = {SpaceVariant::kIbnOnly, SpaceVariant::kIbnFused, SpaceVariant::kIbnFusedTucker};
  const Adaptation adaptations[] = {Adaptation::kNeutral, Adaptation::kCpuLike, Adaptation::kDspLike};
  int mismatches = 0;
  Count largest = 0;
  for (int i = 0; i < 100; ++i) {
    const auto space = build_space(variants[i % 3], adaptations[(i / 3) % 3], i % 2 ? odd : default_layout());
    const auto net = decode(space, random_sample(space, rng));
    const auto ours = network_cost(net);
    const auto ref = oracle::count_network(net);
    bool ok = ours.total_madds == ref.total_madds && ours.total_params == ref.total_params &&
              ours.stem.madds == ref.stem.madds && ours.layers.size() == ref.layers.size();
    for (std::size_t l = 0; ok && l < ref.layers.size(); ++l)
      ok = ours.layers[l].madds == ref.layers[l].madds && ours.layers[l].params == ref.layers[l].params;
    mismatches += ok ? 0 : 1;
    largest = std::max(largest, ref.total_madds);
  }
  return {mismatches == 0, std::to_string(100 - mismatches) + "/100 exact (largest net " + std::to_string(largest) +
                               " MAdds)"};
}

Outcome depthwise_calibration() {
  // The depthwise stage of an IBN layer against a regular conv with 7x its MAdds.
  LayerSpec ibn;
  ibn.kind = Ibn{3, 4.0};
  ibn.c_in = 16;
  ibn.c_out = 16;
  const auto ops = layer_ops(ibn, 14, 14);
  const auto dw = *std::find_if(ops.begin(), ops.end(),
                                [](const ConvOp& op) { return op.op_class == OpClass::kDepthwiseConv; });
  const auto regular = detail::make_conv(dw.kernel, dw.c_in, 7, false, 1, dw.out_h, dw.out_w);
  if (regular.madds != 7 * dw.madds) return {false, "regular conv is not 7x the depthwise MAdds"};
  const auto dev = accel_sim();
  const double ratio = op_latency(dev, dw) / op_latency(dev, regular);
  return {std::abs(ratio / 3.0 - 1.0) <= 0.01,
          "depthwise " + num(op_latency(dev, dw)) + " ms, regular " + num(op_latency(dev, regular)) +
              " ms, speedup " + num(ratio)};
}

Outcome controller_optimality() {
  const auto space = build_space(SpaceVariant::kIbnFusedTucker, Adaptation::kNeutral, toy2_layout());
  const LinearFeatureOracle oracle({});
  const SimulatorLatency lat(accel_sim());
  std::mt19937_64 budget_rng(0);
  const double budget = median_latency(space, lat, 256, budget_rng);
  const RewardConfig rc{-0.3, budget};
  const auto best = exhaustive_best(space, oracle, lat, rc);
  const auto best_doc = to_json(best.net);

  int matches = 0, within = 0;
  double regret = 0.0, final_entropy = 0.0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    SearchConfig cfg;
    cfg.steps = 5000;
    cfg.budget_ms = budget;
    cfg.seed = seed;
    cfg.log_every = 5000;
    const auto res = run_search(space, oracle, lat, cfg);
    matches += to_json(res.best) == best_doc ? 1 : 0;
    const double last = res.log.steps.back().samples.back().latency_ms;
    within += std::abs(last / budget - 1.0) <= 0.10 ? 1 : 0;
    regret += best.reward - res.log.final.reward;
    final_entropy += res.log.steps.back().entropy / 10.0;
  }
  return {matches >= 9 && within == 10,
          std::to_string(space_size(space).convert_to<long long>()) + " archs; argmax matched in " +
              std::to_string(matches) + "/10 seeds; final sample within 10% of budget in " + std::to_string(within) +
              "/10; mean reward regret " + num(regret / 10.0, 4) + "; mean final entropy " + num(final_entropy, 3) +
              " of " + num(entropy(CategoricalPolicy::uniform(space)), 3) + " nats"};
}

Outcome gradient_check() {
  const auto space = build_space(SpaceVariant::kIbnFusedTucker, Adaptation::kNeutral, toy3_layout());
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n(0.0, 1.0);
  auto policy = CategoricalPolicy::uniform(space);
  for (auto& row : policy.logits)
    for (auto& v : row) v = n(rng);
  std::vector<Transition> batch;
  for (int i = 0; i < 16; ++i) {
    const auto s = sample(policy, rng);
    batch.push_back({s.dv, s.logprob, n(rng)});
  }
  const double baseline = 0.1;
  auto objective = [&](const CategoricalPolicy& p) {
    double s = 0.0;
    for (const auto& t : batch) s += (t.reward - baseline) * log_prob(p, t.dv);
    return s / static_cast<double>(batch.size());
  };
  const auto g = reinforce_gradient(policy, batch, baseline);
  const double h = 1e-5;
  double worst = 0.0;
  for (std::size_t d = 0; d < policy.logits.size(); ++d)
    for (std::size_t i = 0; i < policy.logits[d].size(); ++i) {
      auto plus = policy, minus = policy;
      plus.logits[d][i] += h;
      minus.logits[d][i] -= h;
      worst = std::max(worst, std::abs((objective(plus) - objective(minus)) / (2 * h) - g[d][i]));
    }
  return {worst <= 1e-4, "max abs error " + num(worst, 3)};
}

Outcome tucker_checks() {
  std::mt19937_64 rng(6);
  std::normal_distribution<double> n(0.0, 1.0);
  auto kernel = [&](int k, int c1, int c2) {
    ConvKernel w(k, c1, c2);
    for (auto& v : w.data) v = n(rng);
    return w;
  };
  double full_err = 0.0, seq_dev = 0.0;
  for (auto [k, c1, c2] : {std::tuple{3, 16, 16}, std::tuple{5, 8, 12}, std::tuple{3, 24, 8}}) {
    const auto w = kernel(k, c1, c2);
    const auto f = tucker2(w, c1, c2);
    full_err = std::max(full_err, rel_error(w, f));
    FeatureMap in(8, 8, c1);
    for (auto& v : in.data) v = n(rng);
    const auto direct = apply_conv(w, in);
    const auto seq = apply_sequence(f, in);
    double scale = 0.0, dev = 0.0;
    for (std::size_t i = 0; i < direct.data.size(); ++i) {
      scale = std::max(scale, std::abs(direct.data[i]));
      dev = std::max(dev, std::abs(direct.data[i] - seq.data[i]));
    }
    seq_dev = std::max(seq_dev, dev / scale);
  }
  const auto w = kernel(3, 12, 12);
  bool monotone = true;
  std::vector<std::vector<double>> err(13, std::vector<double>(13, 0.0));
  for (int r1 = 1; r1 <= 12; ++r1)
    for (int r2 = 1; r2 <= 12; ++r2) err[r1][r2] = rel_error(w, tucker2(w, r1, r2));
  for (int r1 = 1; r1 <= 12; ++r1)
    for (int r2 = 1; r2 <= 12; ++r2) {
      if (r1 < 12 && err[r1 + 1][r2] > err[r1][r2] + 1e-12) monotone = false;
      if (r2 < 12 && err[r1][r2 + 1] > err[r1][r2] + 1e-12) monotone = false;
    }
  return {full_err <= 1e-10 && seq_dev <= 1e-6 && monotone,
          "full-rank error " + num(full_err, 3) + ", sequence deviation " + num(seq_dev, 3) + ", monotone " +
              (monotone ? "yes" : "no")};
}

// Criteria 7 and 8 share the exhaustive ablation runs.
struct AblationRuns {
  std::vector<std::vector<AblationRow>> per_seed;  // toy3, AffinityOracle, five seeds
  bool subsumption = true;
  int triples = 0;
};

const AblationRuns& ablation_runs() {
  static const AblationRuns runs = [] {
    AblationRuns out;
    const std::vector<SpaceVariant> variants{SpaceVariant::kIbnOnly, SpaceVariant::kIbnFused,
                                             SpaceVariant::kIbnFusedTucker};
    const AffinityOracle affinity({});
    const LinearFeatureOracle linear({});
    auto check_order = [&](const std::vector<AblationRow>& rows) {
      for (std::size_t i = 0; i + 2 < rows.size(); i += 3) {  // device-major, variants in order
        out.subsumption = out.subsumption && rows[i + 2].reward >= rows[i + 1].reward &&
                          rows[i + 1].reward >= rows[i].reward;
        ++out.triples;
      }
    };
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      AblationConfig cfg;
      cfg.search.seed = seed;
      out.per_seed.push_back(ablation_report(variants, {cpu_sim(), accel_sim()}, toy3_layout(), affinity, cfg));
      check_order(out.per_seed.back());
    }
    AblationConfig cfg;
    for (const auto& layout : {toy2_layout(), toy3_layout()}) {
      check_order(ablation_report(variants, {cpu_sim(), accel_sim(), dsp_sim()}, layout, linear, cfg));
      if (layout == toy2_layout())
        check_order(ablation_report(variants, {cpu_sim(), accel_sim(), dsp_sim()}, layout, affinity, cfg));
    }
    check_order(ablation_report(variants, {dsp_sim()}, toy3_layout(), affinity, cfg));
    return out;
  }();
  return runs;
}

const AblationRow& row(const std::vector<AblationRow>& rows, const char* space, const char* device) {
  return *std::find_if(rows.begin(), rows.end(),
                       [&](const AblationRow& r) { return r.space == space && r.device == device; });
}

Outcome ablation() {
  const auto& runs = ablation_runs();
  const double noise_band = AffinityOracle::Config{}.noise_sigma;
  int accel_gain = 0;
  double early_accel = 0.0, early_cpu = 0.0, worst_cpu_gap = 0.0, mean_accel_gain = 0.0;
  for (const auto& rows : runs.per_seed) {
    const auto& a_full = row(rows, "ibn_fused_tucker", "accel_sim");
    const auto& a_ibn = row(rows, "ibn", "accel_sim");
    const auto& c_full = row(rows, "ibn_fused_tucker", "cpu_sim");
    const auto& c_ibn = row(rows, "ibn", "cpu_sim");
    accel_gain += a_full.reward > a_ibn.reward ? 1 : 0;
    mean_accel_gain += (a_full.reward - a_ibn.reward) / static_cast<double>(runs.per_seed.size());
    early_accel += a_full.frac_regular_early / static_cast<double>(runs.per_seed.size());
    early_cpu += c_full.frac_regular_early / static_cast<double>(runs.per_seed.size());
    worst_cpu_gap = std::max(worst_cpu_gap, std::abs(c_full.reward - c_ibn.reward));
  }
  const int seeds = static_cast<int>(runs.per_seed.size());
  return {accel_gain == seeds && early_accel > early_cpu && worst_cpu_gap <= noise_band,
          "accel_sim full space beats IBN-only in " + std::to_string(accel_gain) + "/" + std::to_string(seeds) +
              " seeds (mean gain " + num(mean_accel_gain, 4) + "); early regular fraction accel " +
              num(early_accel, 3) + " vs cpu " + num(early_cpu, 3) + "; cpu_sim gap " + num(worst_cpu_gap, 3) +
              " (band " + num(noise_band, 3) + ")"};
}

Outcome subsumption() {
  const auto& runs = ablation_runs();
  return {runs.subsumption, std::to_string(runs.triples) + " (layout, device, oracle) triples ordered"};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> all{
      {1, "cost-model fidelity", 60.0, cost_model_fidelity},
      {2, "analyzer oracle equivalence", 10.0, analyzer_equivalence},
      {3, "depthwise/regular calibration", 1.0, depthwise_calibration},
      {4, "controller optimality on toy space", 300.0, controller_optimality},
      {5, "REINFORCE gradient check", 1.0, gradient_check},
      {6, "Tucker decomposition", 10.0, tucker_checks},
      {7, "qualitative ablation", 600.0, ablation},
      {8, "subsumption", 600.0, subsumption},
  };
  std::set<int> wanted;
  for (int i = 1; i < argc; ++i) wanted.insert(std::atoi(argv[i]));

  int failed = 0;
  for (const auto& c : all) {
    if (!wanted.empty() && !wanted.count(c.id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool in_time = secs < c.limit_s;
    const bool pass = o.pass && in_time;
    failed += pass ? 0 : 1;
    std::printf("%s criterion %d: %s: %s; %.2f s (limit %.0f s)%s\n", pass ? "PASS" : "FAIL", c.id, c.title,
                o.detail.c_str(), secs, c.limit_s, in_time ? "" : " TIME EXCEEDED");
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
