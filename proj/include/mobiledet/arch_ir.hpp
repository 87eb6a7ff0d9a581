#pragma once
/*
 * Architecture intermediate representation.
 *
 * A network is a fixed stem (regular 3x3 conv, stride 2, from RGB) followed by
 * blocks of searchable layers. Each layer is one of three kinds:
 *
 *   IBN     1x1 expand (s > 1) -> KxK depthwise -> 1x1 project
 *   Fused   KxK regular conv expanding by s > 1 -> 1x1 project
 *   Tucker  1x1 compress (s < 1) -> KxK regular conv to e*C2 (e < 1) -> 1x1 restore
 *
 * Internal widths are rounded to the nearest multiple of 8 (minimum 8).
 * All types are plain values; every function here is pure.
 */

#include <cmath>
#include <cstdint>
#include <optional>
#include <sstream>
#include <string>
#include <type_traits>
#include <variant>
#include <vector>

#include "mobiledet/errors.hpp"

namespace mobiledet {

inline constexpr int kStemKernel = 3;
inline constexpr int kStemStride = 2;
inline constexpr int kImageChannels = 3;
inline constexpr int kMinWidth = 8;

/// Nearest multiple of 8, never below 8. Halves round away from zero.
inline int round8(double x) {
  const auto k = static_cast<int>(std::llround(x / 8.0));
  return k < 1 ? kMinWidth : 8 * k;
}

inline int ceil_div(int a, int b) { return (a + b - 1) / b; }

struct Ibn {
  int kernel = 3;
  double expansion = 4.0;
  auto operator<=>(const Ibn&) const = default;
};

struct Fused {
  int kernel = 3;
  double expansion = 4.0;
  auto operator<=>(const Fused&) const = default;
};

struct Tucker {
  int kernel = 3;
  double input_compression = 0.25;
  double output_compression = 0.75;
  auto operator<=>(const Tucker&) const = default;
};

/// Variant order is the canonical atom order: IBN < Fused < Tucker.
using LayerKind = std::variant<Ibn, Fused, Tucker>;

inline int kernel_of(const LayerKind& kind) {
  return std::visit([](const auto& k) { return k.kernel; }, kind);
}

inline bool is_ibn(const LayerKind& kind) { return std::holds_alternative<Ibn>(kind); }

/// True for kinds whose spatial conv is a regular (full) convolution.
inline bool uses_regular_conv(const LayerKind& kind) { return !is_ibn(kind); }

inline std::string format_number(double v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

inline const char* kind_name(const LayerKind& kind) {
  switch (kind.index()) {
    case 0: return "ibn";
    case 1: return "fused";
    default: return "tucker";
  }
}

/// Stable identifier of a layer-kind atom, e.g. "ibn_k3_e4" or "tucker_k5_s0.25_e0.75".
inline std::string atom_key(const LayerKind& kind) {
  std::string out = kind_name(kind);
  out += "_k" + std::to_string(kernel_of(kind));
  if (const auto* t = std::get_if<Tucker>(&kind)) {
    out += "_s" + format_number(t->input_compression) + "_e" + format_number(t->output_compression);
  } else {
    const double s = is_ibn(kind) ? std::get<Ibn>(kind).expansion : std::get<Fused>(kind).expansion;
    out += "_e" + format_number(s);
  }
  return out;
}

/// Kind-level invariant check; returns an empty string when valid.
inline std::string check_kind(const LayerKind& kind) {
  const int k = kernel_of(kind);
  if (k < 1 || k % 2 == 0) return "kernel must be odd and >= 1 (got " + std::to_string(k) + ")";
  if (const auto* t = std::get_if<Tucker>(&kind)) {
    if (!(t->input_compression > 0.0 && t->input_compression < 1.0))
      return "tucker input compression must lie in (0, 1)";
    if (!(t->output_compression > 0.0 && t->output_compression < 1.0))
      return "tucker output compression must lie in (0, 1)";
    return {};
  }
  const double s = is_ibn(kind) ? std::get<Ibn>(kind).expansion : std::get<Fused>(kind).expansion;
  if (!(s > 1.0)) return "expansion ratio must be > 1";
  return {};
}

enum class Activation { kRelu6, kHswish };

inline const char* activation_name(Activation a) {
  return a == Activation::kRelu6 ? "relu6" : "hswish";
}

struct LayerSpec {
  LayerKind kind = Ibn{};
  int c_in = 16;
  int c_out = 16;
  int stride = 1;
  bool use_se = false;
  Activation activation = Activation::kRelu6;
  bool residual = false;
  bool operator==(const LayerSpec&) const = default;
};

/// Widths of the two internal tensors of a layer. For IBN and Fused both are
/// the expanded width round8(s*c_in); for Tucker they are round8(s*c_in) and
/// round8(e*c_out).
struct InternalWidths {
  int first = 0;
  int second = 0;
};

inline InternalWidths internal_widths(const LayerSpec& layer) {
  return std::visit(
      [&](const auto& k) -> InternalWidths {
        using K = std::decay_t<decltype(k)>;
        if constexpr (std::is_same_v<K, Tucker>) {
          return {round8(k.input_compression * layer.c_in), round8(k.output_compression * layer.c_out)};
        } else {
          const int w = round8(k.expansion * layer.c_in);
          return {w, w};
        }
      },
      layer.kind);
}

inline bool residual_eligible(const LayerSpec& layer) {
  return layer.stride == 1 && layer.c_in == layer.c_out;
}

struct BlockSpec {
  int base_channels = 16;
  double multiplier = 1.0;
  int num_layers = 1;
  int first_stride = 1;
  std::vector<LayerSpec> layers;
  bool operator==(const BlockSpec&) const = default;

  int out_channels() const { return round8(multiplier * base_channels); }
};

struct NetworkSpec {
  int input_resolution = 320;
  int stem_channels = 32;
  std::vector<BlockSpec> blocks;
  std::optional<int> endpoint_c4;
  std::optional<int> endpoint_c5;
  bool operator==(const NetworkSpec&) const = default;

  std::size_t num_layers() const {
    std::size_t n = 0;
    for (const auto& b : blocks) n += b.layers.size();
    return n;
  }
};

/// Cumulative output stride (relative to the input image) after each block,
/// counting the stem's stride 2.
inline std::vector<int> block_output_strides(const NetworkSpec& net) {
  std::vector<int> out;
  out.reserve(net.blocks.size());
  int stride = kStemStride;
  for (const auto& b : net.blocks) {
    for (const auto& l : b.layers) stride *= l.stride;
    out.push_back(stride);
  }
  return out;
}

/// Index of the last block whose cumulative output stride equals `target`.
inline std::optional<int> last_block_at_stride(const NetworkSpec& net, int target) {
  std::optional<int> found;
  const auto strides = block_output_strides(net);
  for (std::size_t i = 0; i < strides.size(); ++i)
    if (strides[i] == target) found = static_cast<int>(i);
  return found;
}

/// Fills endpoint_c4 / endpoint_c5 from the stride schedule.
inline void assign_endpoints(NetworkSpec& net) {
  net.endpoint_c4 = last_block_at_stride(net, 16);
  net.endpoint_c5 = last_block_at_stride(net, 32);
}

struct Violation {
  std::optional<int> block;
  std::optional<int> layer;
  std::string message;

  std::string to_string() const {
    std::string where;
    if (block) where += "blocks[" + std::to_string(*block) + "]";
    if (layer) where += ".layers[" + std::to_string(*layer) + "]";
    if (where.empty()) where = "network";
    return where + ": " + message;
  }
};

inline std::vector<Violation> validate(const NetworkSpec& net) {
  std::vector<Violation> out;
  auto add = [&](std::optional<int> b, std::optional<int> l, std::string msg) {
    out.push_back({b, l, std::move(msg)});
  };

  if (net.input_resolution < 1) add({}, {}, "input_resolution must be >= 1");
  if (net.stem_channels < 1) add({}, {}, "stem_channels must be >= 1");

  int prev_c = net.stem_channels;
  for (std::size_t bi = 0; bi < net.blocks.size(); ++bi) {
    const auto& block = net.blocks[bi];
    const int b = static_cast<int>(bi);
    if (block.base_channels < 1) add(b, {}, "base_channels must be >= 1");
    if (!(block.multiplier > 0.0)) add(b, {}, "multiplier must be > 0");
    if (block.first_stride != 1 && block.first_stride != 2) add(b, {}, "first_stride must be 1 or 2");
    if (block.num_layers < 1) add(b, {}, "num_layers must be >= 1");
    if (block.num_layers != static_cast<int>(block.layers.size()))
      add(b, {}, "num_layers (" + std::to_string(block.num_layers) + ") does not match layer count (" +
                     std::to_string(block.layers.size()) + ")");
    const int expected_c = block.out_channels();

    for (std::size_t li = 0; li < block.layers.size(); ++li) {
      const auto& layer = block.layers[li];
      const int l = static_cast<int>(li);
      if (auto msg = check_kind(layer.kind); !msg.empty()) add(b, l, msg);
      if (layer.c_in < 1 || layer.c_out < 1) add(b, l, "channel counts must be >= 1");
      if (layer.stride != 1 && layer.stride != 2) add(b, l, "stride must be 1 or 2");
      if (li == 0 && layer.stride != block.first_stride)
        add(b, l, "first layer stride must equal block first_stride");
      if (li > 0 && layer.stride != 1) add(b, l, "only the first layer of a block may have stride 2");
      if (layer.residual && !residual_eligible(layer))
        add(b, l, "residual requires stride 1 and c_in == c_out (c_in=" + std::to_string(layer.c_in) +
                      ", c_out=" + std::to_string(layer.c_out) + ")");
      if (layer.c_out % 8 != 0)
        add(b, l, "c_out " + std::to_string(layer.c_out) + " is not a multiple of 8");
      else if (layer.c_out != expected_c)
        add(b, l, "c_out " + std::to_string(layer.c_out) + " != round8(multiplier * base_channels) = " +
                      std::to_string(expected_c));
      if (layer.c_in != prev_c)
        add(b, l, "c_in " + std::to_string(layer.c_in) + " does not match previous output " +
                      std::to_string(prev_c));
      prev_c = layer.c_out;
    }
  }

  const auto c4 = last_block_at_stride(net, 16);
  const auto c5 = last_block_at_stride(net, 32);
  if (net.endpoint_c4 != c4)
    add({}, {}, "endpoint_c4 must be the last block at output stride 16 (expected " +
                    (c4 ? std::to_string(*c4) : std::string("none")) + ")");
  if (net.endpoint_c5 != c5)
    add({}, {}, "endpoint_c5 must be the last block at output stride 32 (expected " +
                    (c5 ? std::to_string(*c5) : std::string("none")) + ")");
  return out;
}

inline void require_valid(const NetworkSpec& net) {
  const auto violations = validate(net);
  if (violations.empty()) return;
  std::string msg = violations.front().to_string();
  if (violations.size() > 1) msg += " (+" + std::to_string(violations.size() - 1) + " more)";
  throw ValidationError(msg);
}

struct LayerShape {
  int in_height = 0;
  int in_width = 0;
  int height = 0;  // output
  int width = 0;   // output
  int c_in = 0;
  int c_out = 0;
  bool operator==(const LayerShape&) const = default;
};

struct ShapeTrace {
  LayerShape stem;
  std::vector<LayerShape> layers;  // execution order, one entry per searchable layer
};

inline ShapeTrace derive_shapes(const NetworkSpec& net) {
  require_valid(net);
  ShapeTrace trace;
  int h = net.input_resolution;
  int w = net.input_resolution;
  const int sh = ceil_div(h, kStemStride);
  const int sw = ceil_div(w, kStemStride);
  trace.stem = {h, w, sh, sw, kImageChannels, net.stem_channels};
  h = sh;
  w = sw;
  trace.layers.reserve(net.num_layers());
  for (const auto& block : net.blocks) {
    for (const auto& layer : block.layers) {
      const int oh = ceil_div(h, layer.stride);
      const int ow = ceil_div(w, layer.stride);
      trace.layers.push_back({h, w, oh, ow, layer.c_in, layer.c_out});
      h = oh;
      w = ow;
    }
  }
  return trace;
}

/// Flat (block, layer) coordinates in execution order.
struct LayerRef {
  int block = 0;
  int layer = 0;
};

inline std::vector<LayerRef> layer_refs(const NetworkSpec& net) {
  std::vector<LayerRef> refs;
  for (std::size_t b = 0; b < net.blocks.size(); ++b)
    for (std::size_t l = 0; l < net.blocks[b].layers.size(); ++l)
      refs.push_back({static_cast<int>(b), static_cast<int>(l)});
  return refs;
}

}  // namespace mobiledet
