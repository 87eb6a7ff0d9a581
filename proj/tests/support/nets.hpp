#pragma once
// Hand-built networks shared by the unit tests.

#include <random>

#include "mobiledet/arch_ir.hpp"
#include "mobiledet/search_space.hpp"

namespace testnets {

using namespace mobiledet;

/// Stem plus one block holding a single layer.
inline NetworkSpec single_layer(LayerKind kind, int resolution = 56, int stem = 16, int base = 16, int stride = 1) {
  NetworkSpec net;
  net.input_resolution = resolution;
  net.stem_channels = stem;
  BlockSpec b;
  b.base_channels = base;
  b.multiplier = 1.0;
  b.num_layers = 1;
  b.first_stride = stride;
  LayerSpec l;
  l.kind = kind;
  l.c_in = stem;
  l.c_out = b.out_channels();
  l.stride = stride;
  l.residual = residual_eligible(l);
  b.layers.push_back(l);
  net.blocks.push_back(b);
  assign_endpoints(net);
  return net;
}

/// Random decode from one of the spaces over `layout`.
template <class Rng>
NetworkSpec random_net(const Layout& layout, Rng& rng) {
  static const SpaceVariant variants[] = {SpaceVariant::kIbnOnly, SpaceVariant::kIbnFused,
                                          SpaceVariant::kIbnFusedTucker};
  static const Adaptation adaptations[] = {Adaptation::kNeutral, Adaptation::kCpuLike, Adaptation::kDspLike};
  std::uniform_int_distribution<int> pick(0, 2);
  const auto space = build_space(variants[pick(rng)], adaptations[pick(rng)], layout);
  return decode(space, random_sample(space, rng));
}

}  // namespace testnets
