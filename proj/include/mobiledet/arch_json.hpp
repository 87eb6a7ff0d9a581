#pragma once
// Canonical architecture document (JSON) <-> NetworkSpec.

#include <string>

#include "mobiledet/arch_ir.hpp"
#include "mobiledet/json_util.hpp"

namespace mobiledet {

inline json_util::Json layer_to_json(const LayerSpec& layer) {
  json_util::Json j;
  j["kind"] = kind_name(layer.kind);
  j["kernel"] = kernel_of(layer.kind);
  if (const auto* t = std::get_if<Tucker>(&layer.kind)) {
    j["compressions"] = {t->input_compression, t->output_compression};
  } else {
    j["expansion"] = is_ibn(layer.kind) ? std::get<Ibn>(layer.kind).expansion : std::get<Fused>(layer.kind).expansion;
  }
  j["c_in"] = layer.c_in;
  j["c_out"] = layer.c_out;
  j["stride"] = layer.stride;
  j["se"] = layer.use_se;
  j["activation"] = activation_name(layer.activation);
  j["residual"] = layer.residual;
  return j;
}

inline json_util::Json to_json(const NetworkSpec& net) {
  json_util::Json j;
  j["input_resolution"] = net.input_resolution;
  j["stem_channels"] = net.stem_channels;
  auto blocks = json_util::Json::array();
  for (const auto& b : net.blocks) {
    json_util::Json jb;
    jb["base_channels"] = b.base_channels;
    jb["multiplier"] = b.multiplier;
    jb["num_layers"] = b.num_layers;
    jb["first_stride"] = b.first_stride;
    auto layers = json_util::Json::array();
    for (const auto& l : b.layers) layers.push_back(layer_to_json(l));
    jb["layers"] = std::move(layers);
    blocks.push_back(std::move(jb));
  }
  j["blocks"] = std::move(blocks);
  json_util::Json ep;
  ep["c4"] = net.endpoint_c4 ? json_util::Json(*net.endpoint_c4) : json_util::Json(nullptr);
  ep["c5"] = net.endpoint_c5 ? json_util::Json(*net.endpoint_c5) : json_util::Json(nullptr);
  j["endpoints"] = std::move(ep);
  return j;
}

inline std::string serialize(const NetworkSpec& net) { return to_json(net).dump(2) + "\n"; }

inline LayerSpec layer_from_json(const json_util::Json& j, const std::string& path) {
  using namespace json_util;
  check_keys(j, path,
             {"kind", "kernel", "expansion", "compressions", "c_in", "c_out", "stride", "se", "activation", "residual"});
  LayerSpec layer;
  const auto kind = get_string(j, path, "kind");
  const int kernel = get_int(j, path, "kernel");
  if (kind == "ibn" || kind == "fused") {
    if (j.contains("compressions")) throw ParseError(path + ".compressions: not allowed for kind '" + kind + "'");
    const double s = get_double(j, path, "expansion");
    if (kind == "ibn")
      layer.kind = Ibn{kernel, s};
    else
      layer.kind = Fused{kernel, s};
  } else if (kind == "tucker") {
    if (j.contains("expansion")) throw ParseError(path + ".expansion: not allowed for kind 'tucker'");
    const auto& c = get_array(j, path, "compressions");
    if (c.size() != 2 || !c[0].is_number() || !c[1].is_number())
      throw ParseError(path + ".compressions: expected [input, output] numbers");
    layer.kind = Tucker{kernel, c[0].get<double>(), c[1].get<double>()};
  } else {
    throw ParseError(path + ".kind: unknown layer kind '" + kind + "'");
  }
  if (auto msg = check_kind(layer.kind); !msg.empty()) throw ValidationError(path + ": " + msg);
  layer.c_in = get_int(j, path, "c_in");
  layer.c_out = get_int(j, path, "c_out");
  layer.stride = get_int(j, path, "stride");
  layer.use_se = get_bool(j, path, "se");
  const auto act = get_string(j, path, "activation");
  if (act == "relu6")
    layer.activation = Activation::kRelu6;
  else if (act == "hswish")
    layer.activation = Activation::kHswish;
  else
    throw ParseError(path + ".activation: unknown activation '" + act + "'");
  layer.residual = j.contains("residual") ? get_bool(j, path, "residual") : residual_eligible(layer);
  return layer;
}

inline std::optional<int> endpoint_from_json(const json_util::Json& ep, const char* key) {
  auto it = ep.find(key);
  if (it == ep.end() || it->is_null()) return std::nullopt;
  if (!it->is_number_integer()) throw ParseError(std::string("$.endpoints.") + key + ": expected an integer or null");
  return it->get<int>();
}

/// Parses and validates an architecture document. Throws ParseError (with a
/// JSON path) on structural problems and ValidationError on invariant
/// violations.
inline NetworkSpec from_json(const json_util::Json& j) {
  using namespace json_util;
  const std::string root = "$";
  check_keys(j, root, {"input_resolution", "stem_channels", "blocks", "endpoints"});
  NetworkSpec net;
  net.input_resolution = get_int(j, root, "input_resolution");
  net.stem_channels = get_int(j, root, "stem_channels");
  const auto& blocks = get_array(j, root, "blocks");
  for (std::size_t bi = 0; bi < blocks.size(); ++bi) {
    const auto bpath = index_path(root, "blocks", bi);
    const auto& jb = blocks[bi];
    check_keys(jb, bpath, {"base_channels", "multiplier", "num_layers", "first_stride", "layers"});
    BlockSpec b;
    b.base_channels = get_int(jb, bpath, "base_channels");
    b.multiplier = get_double(jb, bpath, "multiplier");
    b.num_layers = get_int(jb, bpath, "num_layers");
    b.first_stride = get_int(jb, bpath, "first_stride");
    const auto& layers = get_array(jb, bpath, "layers");
    for (std::size_t li = 0; li < layers.size(); ++li)
      b.layers.push_back(layer_from_json(layers[li], index_path(bpath, "layers", li)));
    net.blocks.push_back(std::move(b));
  }
  const auto& ep = field(j, root, "endpoints");
  check_keys(ep, root + ".endpoints", {"c4", "c5"});
  net.endpoint_c4 = endpoint_from_json(ep, "c4");
  net.endpoint_c5 = endpoint_from_json(ep, "c5");
  require_valid(net);
  return net;
}

inline NetworkSpec deserialize(std::string_view text, const std::string& source = "<document>") {
  return from_json(json_util::parse(text, source));
}

inline NetworkSpec load_network(const std::string& path) {
  return deserialize(json_util::read_file(path), path);
}

}  // namespace mobiledet
