#include <catch_amalgamated.hpp>

#include <random>
#include <set>

#include "mobiledet/analysis.hpp"
#include "support/brute_force.hpp"
#include "support/nets.hpp"

using namespace mobiledet;

namespace {

LayerSpec layer(LayerKind kind, int c_in, int c_out, int stride = 1, bool se = false) {
  LayerSpec l;
  l.kind = kind;
  l.c_in = c_in;
  l.c_out = c_out;
  l.stride = stride;
  l.use_se = se;
  return l;
}

oracle::Counted brute_layer(const LayerSpec& l, int h, int w) {
  int oh = 0, ow = 0;
  return oracle::count_layer(l, h, w, &oh, &ow);
}

}  // namespace

TEST_CASE("brute-force counter agrees with literal loop nests", "[analysis][oracle]") {
  std::mt19937 rng(1);
  std::uniform_int_distribution<int> ch(1, 6), hw(1, 9), st(1, 2);
  for (int i = 0; i < 200; ++i) {
    const int groups = i % 3 == 0 ? 1 : ch(rng);
    oracle::PrimConv c{i % 2 ? 3 : 1, st(rng), groups, groups * ch(rng), groups * ch(rng)};
    if (i % 5 == 0) c.c_out = c.c_in = groups;  // depthwise
    const int h = hw(rng), w = hw(rng);
    const auto fast = oracle::count_conv(c, h, w);
    const auto slow = oracle::count_conv_literal(c, h, w);
    CHECK(fast.madds == slow.madds);
    CHECK(fast.params == slow.params);
  }
}

TEST_CASE("reference layer costs", "[analysis]") {
  SECTION("IBN k3 e4, 16->16 at 14x14") {
    const auto l = layer(Ibn{3, 4.0}, 16, 16);
    CHECK(internal_widths(l).first == 64);
    CHECK(layer_madds(l, 14, 14) == 514'304);
    CHECK(layer_params(l) == 2'624);
    CHECK(brute_layer(l, 14, 14).madds == 514'304);
    CHECK(brute_layer(l, 14, 14).params == 2'624);
  }
  SECTION("Fused k3 e4, 16->16 at 14x14") {
    const auto l = layer(Fused{3, 4.0}, 16, 16);
    CHECK(layer_madds(l, 14, 14) == 2'007'040);
    CHECK(layer_params(l) == 10'240);
    CHECK(brute_layer(l, 14, 14).madds == 2'007'040);
  }
  SECTION("Tucker k3 0.25/0.75, 32->32 at 14x14") {
    const auto l = layer(Tucker{3, 0.25, 0.75}, 32, 32);
    CHECK(internal_widths(l).first == 8);
    CHECK(internal_widths(l).second == 24);
    CHECK(layer_madds(l, 14, 14) == 539'392);
    CHECK(layer_params(l) == 256 + 1'728 + 768);
    CHECK(brute_layer(l, 14, 14).madds == 539'392);
  }
  SECTION("SE adds two dense layers") {
    const auto plain = layer(Ibn{3, 4.0}, 16, 32);
    const auto se = layer(Ibn{3, 4.0}, 16, 32, 1, true);
    CHECK(layer_madds(se, 14, 14) - layer_madds(plain, 14, 14) == 2 * 32 * 8);
    CHECK(layer_params(se) - layer_params(plain) == 2 * 32 * 8);
  }
  SECTION("stride 2 on odd input") {
    const auto l = layer(Fused{5, 8.0}, 24, 40, 2);
    CHECK(layer_madds(l, 15, 15) == brute_layer(l, 15, 15).madds);
  }
}

TEST_CASE("layer_ops decomposes the layer cost", "[analysis]") {
  std::mt19937_64 rng(4);
  for (int i = 0; i < 40; ++i) {
    const auto net = testnets::random_net(default_layout(), rng);
    const auto trace = derive_shapes(net);
    std::size_t li = 0;
    for (const auto& b : net.blocks)
      for (const auto& l : b.layers) {
        const auto& s = trace.layers[li++];
        Count m = 0, p = 0;
        for (const auto& op : layer_ops(l, s.in_height, s.in_width)) {
          m += op.madds;
          p += op.params;
          if (op.op_class == OpClass::kDepthwiseConv) CHECK(is_ibn(l.kind));
        }
        CHECK(m == layer_madds(l, s.in_height, s.in_width));
        CHECK(p == layer_params(l));
      }
  }
}

TEST_CASE("network_cost", "[analysis]") {
  SECTION("single layer totals are stem plus layer") {
    const auto net = testnets::single_layer(Tucker{5, 0.75, 0.25}, 64, 24, 40, 2);
    const auto c = network_cost(net);
    REQUIRE(c.layers.size() == 1);
    CHECK(c.stem.madds == 32 * 32 * 9 * 3 * 24);
    CHECK(c.total_madds == c.stem.madds + c.layers[0].madds);
    CHECK(c.total_params == c.stem.params + c.layers[0].params);
  }
  SECTION("default all-IBN k3 e4 x1.0 net matches the whole-network counter") {
    const auto s = build_space(SpaceVariant::kIbnOnly, Adaptation::kNeutral, default_layout());
    DecisionVector dv(s.decisions.size(), 0);
    for (std::size_t b = 0; b < s.layout.blocks.size(); ++b) dv[s.multiplier_decision(static_cast<int>(b))] = 3;
    const auto net = decode(s, dv);
    const auto c = network_cost(net);
    const auto o = oracle::count_network(net);
    CHECK(c.total_madds == o.total_madds);
    CHECK(c.total_params == o.total_params);
  }
  SECTION("random nets across variants, adaptations and resolutions") {
    std::mt19937_64 rng(77);
    Layout odd = default_layout();
    odd.input_resolution = 321;
    for (int i = 0; i < 100; ++i) {
      const auto net = testnets::random_net(i % 2 ? odd : default_layout(), rng);
      const auto c = network_cost(net);
      const auto o = oracle::count_network(net);
      REQUIRE(c.layers.size() == o.layers.size());
      CHECK(c.stem.madds == o.stem.madds);
      for (std::size_t l = 0; l < c.layers.size(); ++l) {
        CHECK(c.layers[l].madds == o.layers[l].madds);
        CHECK(c.layers[l].params == o.layers[l].params);
      }
      CHECK(c.total_madds == o.total_madds);
      CHECK(c.total_params == o.total_params);
    }
  }
  SECTION("MAdds scale with resolution squared, params do not change") {
    auto a = testnets::single_layer(Ibn{3, 4.0}, 56, 16, 16);
    auto b = a;
    b.input_resolution = 112;
    CHECK(network_cost(b).total_madds == 4 * network_cost(a).total_madds);
    CHECK(network_cost(b).total_params == network_cost(a).total_params);
  }
}

TEST_CASE("features", "[analysis]") {
  const auto space = build_space(SpaceVariant::kIbnFusedTucker, Adaptation::kNeutral, toy3_layout());

  SECTION("counts sum to layers plus stem") {
    std::mt19937_64 rng(8);
    for (int i = 0; i < 20; ++i) {
      const auto net = decode(space, random_sample(space, rng));
      int total = 0;
      for (const auto& [k, c] : extract_features(net, space)) total += c;
      CHECK(total == static_cast<int>(net.num_layers()) + 1);
    }
  }
  SECTION("two identical layers share a bucket") {
    Layout l;
    l.input_resolution = 64;
    l.stem_channels = 16;
    l.blocks = {{16, 3, 2}};
    const auto s = build_space(SpaceVariant::kIbnOnly, Adaptation::kNeutral, l);
    const auto net = decode(s, {3, 0, 0, 0});
    const auto f = extract_features(net, s);
    CHECK(f.at(bucket_key("ibn_k3_e4", 16, 16, 16, 16, 1, {})) == 2);
    CHECK(f.at(bucket_key("ibn_k3_e4", 16, 16, 32, 32, 2, {})) == 1);
  }
  SECTION("changing one layer kind changes exactly two buckets") {
    const auto a = decode(space, {3, 0, 0, 3, 0});
    const auto b = decode(space, {3, 0, 9, 3, 0});
    const auto fa = extract_features(a, space), fb = extract_features(b, space);
    std::set<std::string> keys;
    for (const auto& [k, _] : fa) keys.insert(k);
    for (const auto& [k, _] : fb) keys.insert(k);
    int differing = 0;
    for (const auto& k : keys) {
      const int x = fa.count(k) ? fa.at(k) : 0;
      const int y = fb.count(k) ? fb.at(k) : 0;
      differing += x != y;
    }
    CHECK(differing == 2);
  }
  SECTION("atoms outside the space are rejected") {
    const auto ibn = build_space(SpaceVariant::kIbnOnly, Adaptation::kNeutral, toy3_layout());
    CHECK_THROWS_AS(extract_features(decode(space, {3, 15, 0, 3, 0}), ibn), ValidationError);
  }
  SECTION("channel bands") {
    CHECK(channel_band(24) == 32);
    CHECK(channel_band(32) == 32);
    CHECK(channel_band(33) == 64);
    FeatureOptions o;
    o.channel_bands = true;
    CHECK(bucket_key("ibn_k3_e4", 24, 40, 8, 8, 1, o) == "ibn_k3_e4|32|64|8x8|s1");
  }
}

TEST_CASE("regular conv fractions", "[analysis]") {
  const auto space = build_space(SpaceVariant::kIbnFusedTucker, Adaptation::kNeutral, toy3_layout());
  // three layers: the early half is layers 0 and 1 (2 * index < 3)
  const auto net = decode(space, {0, 4, 0, 0, 8});
  const auto f = regular_conv_fractions(net);
  CHECK(f.all == Catch::Approx(2.0 / 3.0));
  CHECK(f.early == 0.5);
  CHECK(regular_conv_fractions(decode(space, {0, 4, 12, 0, 0})).early == 1.0);
  CHECK(regular_conv_fractions(decode(space, {0, 0, 0, 0, 4})).early == 0.0);
}
