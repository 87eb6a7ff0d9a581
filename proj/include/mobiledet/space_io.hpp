#pragma once
// Layout and space-definition documents.
//
// Layout:  {input_resolution, stem_channels, blocks: [{base_channels, num_layers, first_stride}]}
// Space:   {variant, adaptation, layout_ref, multiplier_menu, kernel_menu,
//           expansion_menu, compression_menu, enumeration_cap}
// layout_ref is either "builtin:<name>" or a path relative to the space file.

#include <filesystem>
#include <string>

#include "mobiledet/hash.hpp"
#include "mobiledet/json_util.hpp"
#include "mobiledet/search_space.hpp"

namespace mobiledet {

inline json_util::Json to_json(const Layout& layout) {
  json_util::Json j;
  j["input_resolution"] = layout.input_resolution;
  j["stem_channels"] = layout.stem_channels;
  auto blocks = json_util::Json::array();
  for (const auto& b : layout.blocks) {
    json_util::Json jb;
    jb["base_channels"] = b.base_channels;
    jb["num_layers"] = b.num_layers;
    jb["first_stride"] = b.first_stride;
    blocks.push_back(std::move(jb));
  }
  j["blocks"] = std::move(blocks);
  return j;
}

inline Layout layout_from_json(const json_util::Json& j) {
  using namespace json_util;
  const std::string root = "$";
  check_keys(j, root, {"input_resolution", "stem_channels", "blocks"});
  Layout layout;
  layout.input_resolution = get_int(j, root, "input_resolution");
  layout.stem_channels = get_int(j, root, "stem_channels");
  const auto& blocks = get_array(j, root, "blocks");
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    const auto path = index_path(root, "blocks", i);
    check_keys(blocks[i], path, {"base_channels", "num_layers", "first_stride"});
    layout.blocks.push_back({get_int(blocks[i], path, "base_channels"), get_int(blocks[i], path, "num_layers"),
                             get_int(blocks[i], path, "first_stride")});
  }
  if (auto errs = validate_layout(layout); !errs.empty()) throw ValidationError("layout: " + errs.front());
  return layout;
}

/// Accepts "builtin:<name>", a bare builtin name, or a file path.
inline Layout load_layout(const std::string& ref, const std::filesystem::path& base_dir = {}) {
  std::string name = ref;
  if (name.rfind("builtin:", 0) == 0) {
    name = name.substr(8);
    if (auto l = builtin_layout(name)) return *l;
    throw ParseError("unknown builtin layout '" + name + "'");
  }
  std::filesystem::path p(ref);
  if (!std::filesystem::exists(p) && !base_dir.empty() && p.is_relative()) p = base_dir / p;
  if (!std::filesystem::exists(p)) {
    if (auto l = builtin_layout(ref)) return *l;
    throw IoError("layout '" + ref + "' not found");
  }
  return layout_from_json(json_util::parse(json_util::read_file(p.string()), p.string()));
}

/// Space definition as written to disk; `layout_ref` is kept for provenance.
struct SpaceDefinition {
  SpaceVariant variant = SpaceVariant::kIbnFusedTucker;
  Adaptation adaptation = Adaptation::kNeutral;
  std::string layout_ref = "builtin:default";
  SpaceMenus menus;
  std::uint64_t enumeration_cap = kDefaultEnumerationCap;
};

inline json_util::Json to_json(const SpaceDefinition& def) {
  json_util::Json j;
  j["variant"] = variant_name(def.variant);
  j["adaptation"] = adaptation_name(def.adaptation);
  j["layout_ref"] = def.layout_ref;
  j["multiplier_menu"] = def.menus.multipliers;
  j["kernel_menu"] = def.menus.kernels;
  j["expansion_menu"] = def.menus.expansions;
  j["compression_menu"] = def.menus.compressions;
  j["enumeration_cap"] = def.enumeration_cap;
  return j;
}

inline SpaceDefinition space_definition_from_json(const json_util::Json& j) {
  using namespace json_util;
  const std::string root = "$";
  check_keys(j, root,
             {"variant", "adaptation", "layout_ref", "multiplier_menu", "kernel_menu", "expansion_menu",
              "compression_menu", "enumeration_cap"});
  SpaceDefinition def;
  def.variant = parse_variant(get_string(j, root, "variant"));
  def.adaptation = j.contains("adaptation") ? parse_adaptation(get_string(j, root, "adaptation")) : Adaptation::kNeutral;
  def.layout_ref = get_string(j, root, "layout_ref");
  auto numbers = [&](const char* key, auto& out) {
    if (!j.contains(key)) return;
    const auto& arr = get_array(j, root, key);
    out.clear();
    for (std::size_t i = 0; i < arr.size(); ++i) {
      if (!arr[i].is_number()) throw ParseError(index_path(root, key, i) + ": expected a number");
      out.push_back(arr[i].get<typename std::decay_t<decltype(out)>::value_type>());
    }
  };
  numbers("multiplier_menu", def.menus.multipliers);
  numbers("kernel_menu", def.menus.kernels);
  numbers("expansion_menu", def.menus.expansions);
  numbers("compression_menu", def.menus.compressions);
  if (j.contains("enumeration_cap")) {
    const auto& cap = field(j, root, "enumeration_cap");
    if (!cap.is_number_unsigned()) throw ParseError("$.enumeration_cap: expected a non-negative integer");
    def.enumeration_cap = cap.get<std::uint64_t>();
  }
  return def;
}

inline SpaceSpec build_space(const SpaceDefinition& def, const std::filesystem::path& base_dir = {}) {
  return build_space(def.variant, def.adaptation, load_layout(def.layout_ref, base_dir), def.menus,
                     def.enumeration_cap);
}

inline SpaceSpec load_space(const std::string& path) {
  const auto def = space_definition_from_json(json_util::parse(json_util::read_file(path), path));
  return build_space(def, std::filesystem::path(path).parent_path());
}

/// Content fingerprint of a space: variant, adaptation, layout and menus.
/// Used to check that models and policies match the space they are applied to.
inline std::string space_fingerprint(const SpaceSpec& space) {
  json_util::Json j;
  j["variant"] = variant_name(space.variant);
  j["adaptation"] = adaptation_name(space.adaptation);
  j["layout"] = to_json(space.layout);
  j["multipliers"] = space.menus.multipliers;
  j["kernels"] = space.menus.kernels;
  j["expansions"] = space.menus.expansions;
  j["compressions"] = space.menus.compressions;
  return std::string(variant_name(space.variant)) + "/" + adaptation_name(space.adaptation) + "/" +
         hex64(fnv1a64(j.dump()));
}

}  // namespace mobiledet
