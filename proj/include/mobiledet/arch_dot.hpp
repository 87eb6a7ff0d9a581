#pragma once
// Graphviz export: stem -> one node per layer -> head marker.

#include <sstream>
#include <string>

#include "mobiledet/arch_ir.hpp"

namespace mobiledet {

/// Human-readable layer label, e.g. "IBN 5x5, e=8" or "Tucker 3x3, 0.25-0.75".
inline std::string layer_label(const LayerSpec& layer) {
  const int k = kernel_of(layer.kind);
  const std::string kk = std::to_string(k) + "x" + std::to_string(k);
  if (const auto* t = std::get_if<Tucker>(&layer.kind))
    return "Tucker " + kk + ", " + format_number(t->input_compression) + "-" + format_number(t->output_compression);
  if (const auto* f = std::get_if<Fused>(&layer.kind)) return "Fused " + kk + ", e=" + format_number(f->expansion);
  return "IBN " + kk + ", e=" + format_number(std::get<Ibn>(layer.kind).expansion);
}

inline std::string export_dot(const NetworkSpec& net) {
  require_valid(net);
  std::ostringstream os;
  os << "digraph network {\n";
  os << "  rankdir=TB;\n";
  os << "  node [shape=box, fontname=\"Helvetica\"];\n";
  os << "  stem [label=\"Conv 3x3, s=2\\n3->" << net.stem_channels << "\"];\n";

  std::string prev = "stem";
  std::size_t index = 0;
  for (std::size_t b = 0; b < net.blocks.size(); ++b) {
    const auto& block = net.blocks[b];
    for (std::size_t l = 0; l < block.layers.size(); ++l, ++index) {
      const auto& layer = block.layers[l];
      const std::string id = "L" + std::to_string(index);
      std::string label = layer_label(layer) + ", s=" + std::to_string(layer.stride) + "\\n" +
                          std::to_string(layer.c_in) + "->" + std::to_string(layer.c_out);
      if (layer.use_se) label += " +SE";
      std::string style;
      const bool last_in_block = l + 1 == block.layers.size();
      if (last_in_block && net.endpoint_c4 && *net.endpoint_c4 == static_cast<int>(b)) {
        label += "\\n[C4]";
        style = ", peripheries=2";
      }
      if (last_in_block && net.endpoint_c5 && *net.endpoint_c5 == static_cast<int>(b)) {
        label += "\\n[C5]";
        style = ", peripheries=2";
      }
      const char* fill = is_ibn(layer.kind) ? "lightblue" : (std::holds_alternative<Fused>(layer.kind) ? "orange" : "palegreen");
      os << "  " << id << " [label=\"" << label << "\", style=filled, fillcolor=" << fill << style << "];\n";
      os << "  " << prev << " -> " << id << ";\n";
      prev = id;
    }
  }
  os << "  head [label=\"head\", shape=ellipse];\n";
  os << "  " << prev << " -> head;\n";
  os << "}\n";
  return os.str();
}

}  // namespace mobiledet
