#pragma once
/*
 * Exact MAdds / parameter accounting and cost-model features.
 *
 * One multiply-accumulate counts as 1 MAdd. Only convolution kernels (and the
 * two fully connected layers of an SE block) contribute; bias, batch norm,
 * activations, residual adds and SE elementwise scaling are free.
 */

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "mobiledet/arch_ir.hpp"
#include "mobiledet/search_space.hpp"

namespace mobiledet {

using Count = std::int64_t;

inline constexpr double kSeSqueezeRatio = 0.25;

/// Reduced width of an SE block on a C-channel tensor.
inline int se_width(int channels) { return round8(kSeSqueezeRatio * channels); }

inline Count se_madds(int channels) { return 2 * Count{channels} * se_width(channels); }
inline Count se_params(int channels) { return se_madds(channels); }

// Closed-form per-kind costs. `r1`, `r2` are the rounded internal widths;
// (h, w) are input dims and (oh, ow) the post-stride dims.

inline Count ibn_madds(Count c1, Count c2, Count k, Count r, Count h, Count w, Count oh, Count ow) {
  return h * w * c1 * r + oh * ow * k * k * r + oh * ow * r * c2;
}

inline Count fused_madds(Count c1, Count c2, Count k, Count r, Count oh, Count ow) {
  return oh * ow * k * k * c1 * r + oh * ow * r * c2;
}

inline Count tucker_madds(Count c1, Count c2, Count k, Count r1, Count r2, Count h, Count w, Count oh, Count ow) {
  return h * w * c1 * r1 + oh * ow * k * k * r1 * r2 + oh * ow * r2 * c2;
}

inline Count ibn_params(Count c1, Count c2, Count k, Count r) { return c1 * r + k * k * r + r * c2; }
inline Count fused_params(Count c1, Count c2, Count k, Count r) { return k * k * c1 * r + r * c2; }
inline Count tucker_params(Count c1, Count c2, Count k, Count r1, Count r2) {
  return c1 * r1 + k * k * r1 * r2 + r2 * c2;
}

inline Count layer_madds(const LayerSpec& layer, int h, int w) {
  if (auto msg = check_kind(layer.kind); !msg.empty()) throw ValidationError(msg);
  if (h < 1 || w < 1 || layer.c_in < 1 || layer.c_out < 1) throw ValidationError("layer dims must be >= 1");
  if (layer.stride != 1 && layer.stride != 2) throw ValidationError("stride must be 1 or 2");
  const int oh = ceil_div(h, layer.stride);
  const int ow = ceil_div(w, layer.stride);
  const int k = kernel_of(layer.kind);
  const auto [r1, r2] = internal_widths(layer);
  Count total = 0;
  switch (layer.kind.index()) {
    case 0: total = ibn_madds(layer.c_in, layer.c_out, k, r1, h, w, oh, ow); break;
    case 1: total = fused_madds(layer.c_in, layer.c_out, k, r1, oh, ow); break;
    default: total = tucker_madds(layer.c_in, layer.c_out, k, r1, r2, h, w, oh, ow); break;
  }
  if (layer.use_se) total += se_madds(layer.c_out);
  return total;
}

inline Count layer_params(const LayerSpec& layer) {
  if (auto msg = check_kind(layer.kind); !msg.empty()) throw ValidationError(msg);
  if (layer.c_in < 1 || layer.c_out < 1) throw ValidationError("layer dims must be >= 1");
  const int k = kernel_of(layer.kind);
  const auto [r1, r2] = internal_widths(layer);
  Count total = 0;
  switch (layer.kind.index()) {
    case 0: total = ibn_params(layer.c_in, layer.c_out, k, r1); break;
    case 1: total = fused_params(layer.c_in, layer.c_out, k, r1); break;
    default: total = tucker_params(layer.c_in, layer.c_out, k, r1, r2); break;
  }
  if (layer.use_se) total += se_params(layer.c_out);
  return total;
}

inline Count stem_madds(const NetworkSpec& net) {
  const Count oh = ceil_div(net.input_resolution, kStemStride);
  return oh * oh * kStemKernel * kStemKernel * kImageChannels * net.stem_channels;
}

inline Count stem_params(const NetworkSpec& net) {
  return Count{kStemKernel} * kStemKernel * kImageChannels * net.stem_channels;
}

// ---------------------------------------------------------------------------
// Constituent operations, classified for latency simulation.

enum class OpClass { kRegularConv, kDepthwiseConv, kPointwiseConv, kSeBlock };

inline constexpr int kNumOpClasses = 4;

inline const char* op_class_name(OpClass c) {
  switch (c) {
    case OpClass::kRegularConv: return "regular_conv";
    case OpClass::kDepthwiseConv: return "depthwise_conv";
    case OpClass::kPointwiseConv: return "pointwise_conv";
    default: return "se_block";
  }
}

struct ConvOp {
  OpClass op_class = OpClass::kRegularConv;
  int kernel = 1;
  int c_in = 0;
  int c_out = 0;
  int stride = 1;
  int out_h = 0;
  int out_w = 0;
  Count madds = 0;
  Count params = 0;
};

namespace detail {

inline ConvOp make_conv(int kernel, int c_in, int c_out, bool depthwise, int stride, int out_h, int out_w) {
  ConvOp op;
  op.kernel = kernel;
  op.c_in = c_in;
  op.c_out = c_out;
  op.stride = stride;
  op.out_h = out_h;
  op.out_w = out_w;
  if (depthwise) {
    op.op_class = OpClass::kDepthwiseConv;
    op.params = Count{kernel} * kernel * c_out;
  } else {
    op.op_class = kernel == 1 ? OpClass::kPointwiseConv : OpClass::kRegularConv;
    op.params = Count{kernel} * kernel * c_in * c_out;
  }
  op.madds = Count{out_h} * out_w * op.params;
  return op;
}

}  // namespace detail

/// The sequence of operations a layer executes; madds/params sum to
/// layer_madds / layer_params.
inline std::vector<ConvOp> layer_ops(const LayerSpec& layer, int h, int w) {
  const int oh = ceil_div(h, layer.stride);
  const int ow = ceil_div(w, layer.stride);
  const int k = kernel_of(layer.kind);
  const auto [r1, r2] = internal_widths(layer);
  std::vector<ConvOp> ops;
  switch (layer.kind.index()) {
    case 0:
      ops.push_back(detail::make_conv(1, layer.c_in, r1, false, 1, h, w));
      ops.push_back(detail::make_conv(k, r1, r1, true, layer.stride, oh, ow));
      ops.push_back(detail::make_conv(1, r1, layer.c_out, false, 1, oh, ow));
      break;
    case 1:
      ops.push_back(detail::make_conv(k, layer.c_in, r1, false, layer.stride, oh, ow));
      ops.push_back(detail::make_conv(1, r1, layer.c_out, false, 1, oh, ow));
      break;
    default:
      ops.push_back(detail::make_conv(1, layer.c_in, r1, false, 1, h, w));
      ops.push_back(detail::make_conv(k, r1, r2, false, layer.stride, oh, ow));
      ops.push_back(detail::make_conv(1, r2, layer.c_out, false, 1, oh, ow));
      break;
  }
  if (layer.use_se) {
    ConvOp se;
    se.op_class = OpClass::kSeBlock;
    se.c_in = layer.c_out;
    se.c_out = layer.c_out;
    se.out_h = 1;
    se.out_w = 1;
    se.madds = se_madds(layer.c_out);
    se.params = se_params(layer.c_out);
    ops.push_back(se);
  }
  return ops;
}

inline ConvOp stem_op(const NetworkSpec& net) {
  const int oh = ceil_div(net.input_resolution, kStemStride);
  return detail::make_conv(kStemKernel, kImageChannels, net.stem_channels, false, kStemStride, oh, oh);
}

// ---------------------------------------------------------------------------

struct LayerCost {
  std::string name;  // "stem" or atom label
  LayerShape shape;
  Count madds = 0;
  Count params = 0;
};

struct CostBreakdown {
  LayerCost stem;
  std::vector<LayerCost> layers;
  Count total_madds = 0;
  Count total_params = 0;
};

inline CostBreakdown network_cost(const NetworkSpec& net) {
  const auto trace = derive_shapes(net);
  CostBreakdown out;
  out.stem = {"stem", trace.stem, stem_madds(net), stem_params(net)};
  out.total_madds = out.stem.madds;
  out.total_params = out.stem.params;
  std::size_t i = 0;
  for (const auto& block : net.blocks) {
    for (const auto& layer : block.layers) {
      const auto& shape = trace.layers[i++];
      LayerCost c{atom_key(layer.kind), shape, layer_madds(layer, shape.in_height, shape.in_width),
                  layer_params(layer)};
      out.total_madds += c.madds;
      out.total_params += c.params;
      out.layers.push_back(std::move(c));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Cost-model features: one count per bucket (atom, c_in, c_out, input
// resolution, stride). The stem has its own bucket.

struct FeatureOptions {
  /// Replace exact channel counts by their power-of-two band (next pow2 >= c).
  bool channel_bands = false;
  bool operator==(const FeatureOptions&) const = default;
};

using FeatureVector = std::map<std::string, int>;

inline int channel_band(int c) {
  int b = 1;
  while (b < c) b <<= 1;
  return b;
}

inline std::string bucket_key(const std::string& atom, int c_in, int c_out, int in_h, int in_w, int stride,
                              const FeatureOptions& opts) {
  if (opts.channel_bands) {
    c_in = channel_band(c_in);
    c_out = channel_band(c_out);
  }
  return atom + "|" + std::to_string(c_in) + "|" + std::to_string(c_out) + "|" + std::to_string(in_h) + "x" +
         std::to_string(in_w) + "|s" + std::to_string(stride);
}

/// Features of a network without reference to a space.
inline FeatureVector network_features(const NetworkSpec& net, const FeatureOptions& opts = {}) {
  const auto trace = derive_shapes(net);
  FeatureVector f;
  ++f[bucket_key("stem", kImageChannels, net.stem_channels, net.input_resolution, net.input_resolution, kStemStride,
                 opts)];
  std::size_t i = 0;
  for (const auto& block : net.blocks) {
    for (const auto& layer : block.layers) {
      const auto& s = trace.layers[i++];
      std::string atom = atom_key(layer.kind);
      if (layer.use_se) atom += "+se";
      ++f[bucket_key(atom, layer.c_in, layer.c_out, s.in_height, s.in_width, layer.stride, opts)];
    }
  }
  return f;
}

/// As network_features, but rejects layers whose atom is not offered by the
/// corresponding decision of `space`.
inline FeatureVector extract_features(const NetworkSpec& net, const SpaceSpec& space, const FeatureOptions& opts = {}) {
  if (net.blocks.size() != space.layout.blocks.size())
    throw ValidationError("network has " + std::to_string(net.blocks.size()) + " blocks, space layout has " +
                          std::to_string(space.layout.blocks.size()));
  for (std::size_t b = 0; b < net.blocks.size(); ++b) {
    if (static_cast<int>(net.blocks[b].layers.size()) != space.layout.blocks[b].num_layers)
      throw ValidationError("blocks[" + std::to_string(b) + "]: layer count does not match the space layout");
    for (std::size_t l = 0; l < net.blocks[b].layers.size(); ++l) {
      const auto& d = space.decisions[space.kind_decision(static_cast<int>(b), static_cast<int>(l))];
      const Atom atom{net.blocks[b].layers[l].kind};
      if (std::find(d.choices.begin(), d.choices.end(), atom) == d.choices.end())
        throw ValidationError("blocks[" + std::to_string(b) + "].layers[" + std::to_string(l) + "]: atom " +
                              atom_label(atom) + " is not in the space");
    }
  }
  return network_features(net, opts);
}

/// Fraction of layers using a regular KxK conv (Fused or Tucker), overall and
/// over the first half of the network (layers with 2*index < L).
struct RegularConvFractions {
  double all = 0.0;
  double early = 0.0;
};

inline RegularConvFractions regular_conv_fractions(const NetworkSpec& net) {
  std::size_t n = 0, regular = 0, early_n = 0, early_regular = 0;
  const std::size_t total = net.num_layers();
  for (const auto& block : net.blocks) {
    for (const auto& layer : block.layers) {
      const bool reg = uses_regular_conv(layer.kind);
      if (2 * n < total) {
        ++early_n;
        early_regular += reg ? 1 : 0;
      }
      regular += reg ? 1 : 0;
      ++n;
    }
  }
  RegularConvFractions f;
  if (n > 0) f.all = static_cast<double>(regular) / static_cast<double>(n);
  if (early_n > 0) f.early = static_cast<double>(early_regular) / static_cast<double>(early_n);
  return f;
}

}  // namespace mobiledet
