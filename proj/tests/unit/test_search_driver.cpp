#include <catch_amalgamated.hpp>

#include <algorithm>
#include <random>

#include "mobiledet/arch_json.hpp"
#include "mobiledet/search_driver.hpp"

using namespace mobiledet;

namespace {

Layout tiny_layout() {
  Layout l;
  l.input_resolution = 64;
  l.stem_channels = 16;
  l.blocks = {{16, 1, 1}};
  return l;
}

SpaceSpec toy(SpaceVariant v = SpaceVariant::kIbnOnly) {
  return build_space(v, Adaptation::kNeutral, toy2_layout());
}

SearchConfig short_config(double budget, int steps = 50) {
  SearchConfig c;
  c.steps = steps;
  c.budget_ms = budget;
  c.seed = 7;
  return c;
}

LinearFeatureOracle::Config noisy_linear() {
  LinearFeatureOracle::Config c;
  c.noise_sigma = 0.02;
  return c;
}

}  // namespace

TEST_CASE("quality oracles", "[search_driver]") {
  const auto space = toy(SpaceVariant::kIbnFusedTucker);
  std::mt19937_64 rng(1);
  const auto net = decode(space, random_sample(space, rng));

  SECTION("linear oracle is the weighted feature sum, clamped") {
    LinearFeatureOracle::Config c;
    c.weights[bucket_key("stem", 3, 32, 160, 160, 2, {})] = 0.25;
    const LinearFeatureOracle o(c);
    double expect = 0.0;
    for (const auto& [k, n] : network_features(net)) expect += n * o.weight(k);
    CHECK(o.evaluate_noiseless(net) == Catch::Approx(expect));
    CHECK(o.weight(bucket_key("stem", 3, 32, 160, 160, 2, {})) == 0.25);
    c.bias = 5.0;
    CHECK(LinearFeatureOracle(c).evaluate_noiseless(net) == 1.0);
  }
  SECTION("implicit weights are deterministic and bounded") {
    const LinearFeatureOracle a({}), b({});
    CHECK(a.weight("x") == b.weight("x"));
    for (const auto* k : {"a", "b", "c", "ibn_k3_e4|32|32|80x80|s2"}) {
      CHECK(a.weight(k) >= 0.0);
      CHECK(a.weight(k) < 0.05);
    }
  }
  SECTION("noise is deterministic per seed and stays in [0, 1]") {
    const LinearFeatureOracle o(noisy_linear());
    CHECK(o.evaluate(net, 5) == o.evaluate(net, 5));
    CHECK(o.evaluate(net, 5) != o.evaluate(net, 6));
    const AffinityOracle aff({});
    for (std::uint64_t s = 0; s < 100; ++s) {
      const double q = aff.evaluate(net, s);
      CHECK(q >= 0.0);
      CHECK(q <= 1.0);
    }
  }
  SECTION("affinity quality rises with capacity") {
    const auto small = decode(space, DecisionVector(space.decisions.size(), 0));
    auto big_dv = DecisionVector(space.decisions.size(), 0);
    big_dv[0] = 6;
    const AffinityOracle aff({});
    CHECK(aff.evaluate_noiseless(decode(space, big_dv)) > aff.evaluate_noiseless(small));
    CHECK_THROWS_AS(AffinityOracle(AffinityOracle::Config{{1, 1, 1, 1}, 0.0}), ValidationError);
  }
}

TEST_CASE("run_search", "[search_driver]") {
  const auto space = toy();
  const LinearFeatureOracle oracle(noisy_linear());
  const SimulatorLatency lat(accel_sim());
  std::mt19937_64 rng(2);
  const double budget = median_latency(space, lat, 256, rng);

  SECTION("steps must be positive") {
    CHECK_THROWS_AS(run_search(space, oracle, lat, short_config(budget, 0)), ValidationError);
  }
  SECTION("one step gives one log record") {
    const auto r = run_search(space, oracle, lat, short_config(budget, 1));
    REQUIRE(r.log.steps.size() == 1);
    CHECK(r.log.steps[0].samples.size() == 1);
  }
  SECTION("same seed, same log") {
    auto cfg = short_config(budget, 200);
    cfg.samples_per_step = 3;
    const auto a = run_search(space, oracle, lat, cfg);
    const auto b = run_search(space, oracle, lat, cfg);
    REQUIRE(a.log.steps.size() == b.log.steps.size());
    for (std::size_t i = 0; i < a.log.steps.size(); ++i) {
      CHECK(a.log.steps[i].entropy == b.log.steps[i].entropy);
      CHECK(a.log.steps[i].baseline == b.log.steps[i].baseline);
      for (std::size_t j = 0; j < a.log.steps[i].samples.size(); ++j) {
        CHECK(a.log.steps[i].samples[j].dv == b.log.steps[i].samples[j].dv);
        CHECK(a.log.steps[i].samples[j].reward == b.log.steps[i].samples[j].reward);
      }
    }
    CHECK(a.policy.logits == b.policy.logits);
    cfg.seed = 8;
    CHECK(run_search(space, oracle, lat, cfg).policy.logits != a.policy.logits);
  }
  SECTION("per-architecture noise repeats within a run") {
    auto cfg = short_config(budget, 300);
    const auto r = run_search(space, oracle, lat, cfg);
    std::map<DecisionVector, double> seen;
    int repeats = 0;
    for (const auto& s : r.log.steps) {
      const auto& x = s.samples[0];
      auto [it, fresh] = seen.emplace(x.dv, x.quality);
      if (!fresh) {
        ++repeats;
        CHECK(it->second == x.quality);
      }
    }
    CHECK(repeats > 0);
  }
  SECTION("log cadence keeps the last step") {
    auto cfg = short_config(budget, 95);
    cfg.log_every = 10;
    const auto r = run_search(space, oracle, lat, cfg);
    CHECK(r.log.steps.size() == 11);
    CHECK(r.log.steps.back().step == 94);
  }
  SECTION("resuming continues the same trajectory shape") {
    auto cfg = short_config(budget, 40);
    const auto first = run_search(space, oracle, lat, cfg);
    const auto resumed = run_search(space, oracle, lat, cfg, first.policy, first.adam, first.baseline);
    CHECK(resumed.adam.step == 80);
    CHECK_THROWS_AS(run_search(space, oracle, lat, cfg, CategoricalPolicy{}, AdamState{}, BaselineState{}),
                    ValidationError);
  }
  SECTION("final architecture is decodable and is the policy argmax") {
    const auto r = run_search(space, oracle, lat, short_config(budget, 300));
    CHECK(r.log.final.dv == most_likely(r.policy));
    CHECK(validate(r.best).empty());
    CHECK(r.best == decode(space, r.log.final.dv));
  }
}

TEST_CASE("exhaustive_best", "[search_driver]") {
  const SimulatorLatency lat(accel_sim());
  const LinearFeatureOracle oracle({});

  SECTION("one-decision space") {
    Layout l = tiny_layout();
    SpaceMenus m;
    m.multipliers = {1.0};
    const auto s = build_space(SpaceVariant::kIbnFused, Adaptation::kNeutral, l, m);
    REQUIRE(space_size(s) == 8);
    const RewardConfig rc{-0.3, 1.0};
    const auto best = exhaustive_best(s, oracle, lat, rc);
    for (int i = 0; i < 8; ++i) CHECK(evaluate_noiseless(s, {0, i}, oracle, lat, rc).reward <= best.reward);
  }
  SECTION("reward table of the 112-architecture space") {
    const auto s = toy();
    const RewardConfig rc{-0.3, 100.0};
    const auto best = exhaustive_best(s, oracle, lat, rc);
    for (const DecisionVector& dv : {DecisionVector{0, 0, 0}, {3, 1, 2}, {6, 3, 3}, {2, 0, 3}, {5, 2, 1}}) {
      const auto net = decode(s, dv);
      const double q = oracle.evaluate_noiseless(net);
      const double c = expected_latency(accel_sim(), net);
      const double r = q - 0.3 * std::abs(c / 100.0 - 1.0);
      CHECK(evaluate_noiseless(s, dv, oracle, lat, rc).reward == Catch::Approx(r).epsilon(1e-12));
      CHECK(r <= best.reward);
    }
  }
  SECTION("a dominant latency penalty picks the closest latency") {
    const auto s = toy();
    auto it = enumerate(s);
    DecisionVector dv;
    std::vector<double> lats;
    while (it.next(dv)) lats.push_back(lat.latency_noiseless(decode(s, dv)));
    const double budget = lats[37];
    const auto best = exhaustive_best(s, oracle, lat, {-1e6, budget});
    double min_dev = 1e300;
    for (double c : lats) min_dev = std::min(min_dev, std::abs(c / budget - 1.0));
    CHECK(std::abs(best.latency_ms / budget - 1.0) == Catch::Approx(min_dev).margin(1e-15));
  }
  SECTION("cap") {
    const auto s = build_space(SpaceVariant::kIbnFusedTucker, Adaptation::kNeutral, default_layout());
    CHECK_THROWS_AS(exhaustive_best(s, oracle, lat, {}), CapExceededError);
  }
  SECTION("superset spaces are never worse") {
    const RewardConfig rc{-0.3, 150.0};
    const auto a = exhaustive_best(toy(SpaceVariant::kIbnOnly), oracle, lat, rc).reward;
    const auto b = exhaustive_best(toy(SpaceVariant::kIbnFused), oracle, lat, rc).reward;
    const auto c = exhaustive_best(toy(SpaceVariant::kIbnFusedTucker), oracle, lat, rc).reward;
    CHECK(b >= a);
    CHECK(c >= b);
  }
}

TEST_CASE("random_search_baseline", "[search_driver]") {
  const auto s = toy();
  const LinearFeatureOracle oracle({});
  const SimulatorLatency lat(cpu_sim());
  const RewardConfig rc{-0.3, 150.0};
  std::mt19937_64 rng(3);
  SECTION("n = 1 is a single sample") {
    std::mt19937_64 copy = rng;
    const auto one = random_search_baseline(s, oracle, lat, rc, 1, rng);
    CHECK(one.dv == random_sample(s, copy));
  }
  SECTION("many samples reach the exhaustive optimum") {
    const auto best = exhaustive_best(s, oracle, lat, rc);
    CHECK(random_search_baseline(s, oracle, lat, rc, 5000, rng).reward == best.reward);
  }
  SECTION("n = 0 is rejected") {
    CHECK_THROWS_AS(random_search_baseline(s, oracle, lat, rc, 0, rng), ValidationError);
  }
}

TEST_CASE("ablation_report", "[search_driver]") {
  AblationConfig cfg;
  cfg.search.steps = 20;
  const AffinityOracle oracle({});
  const auto rows = ablation_report({SpaceVariant::kIbnOnly, SpaceVariant::kIbnFusedTucker}, {cpu_sim(), accel_sim()},
                                    toy2_layout(), oracle, cfg);
  REQUIRE(rows.size() == 4);
  for (const auto& r : rows) {
    CHECK(r.method == "exhaustive");
    CHECK(r.budget_ms > 0.0);
    CHECK(r.frac_regular_all >= 0.0);
    CHECK(r.frac_regular_all <= 1.0);
  }
  CHECK(rows[0].budget_ms == rows[1].budget_ms);
  CHECK(rows[1].reward >= rows[0].reward);
  CHECK(rows[3].reward >= rows[2].reward);
  CHECK_THROWS_AS(ablation_report({}, {cpu_sim()}, toy2_layout(), oracle, cfg), ValidationError);
}

TEST_CASE("controller against the random baseline", "[search_driver][slow]") {
  const auto space = toy(SpaceVariant::kIbnFusedTucker);
  const LinearFeatureOracle oracle({});
  const SimulatorLatency lat(accel_sim());
  std::mt19937_64 rng(0);
  const double budget = median_latency(space, lat, 256, rng);
  const RewardConfig rc{-0.3, budget};
  std::vector<double> random_rewards;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    std::mt19937_64 r(seed);
    random_rewards.push_back(random_search_baseline(space, oracle, lat, rc, 1, r).reward);
  }
  std::sort(random_rewards.begin(), random_rewards.end());
  const double median = 0.5 * (random_rewards[4] + random_rewards[5]);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    SearchConfig cfg;
    cfg.steps = 5000;
    cfg.budget_ms = budget;
    cfg.seed = seed;
    cfg.log_every = 5000;
    CHECK(run_search(space, oracle, lat, cfg).log.final.reward >= median);
  }
}
