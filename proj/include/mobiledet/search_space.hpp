#pragma once
/*
 * Search spaces as ordered categorical decisions.
 *
 * Each block contributes one multiplier decision (shared by its layers)
 * followed by one layer-kind decision per layer. Atoms are kept in canonical
 * ascending order so decision indices are stable across runs.
 */

#include <algorithm>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <variant>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>

#include "mobiledet/arch_ir.hpp"
#include "mobiledet/errors.hpp"

namespace mobiledet {

struct BlockLayout {
  int base_channels = 16;
  int num_layers = 1;
  int first_stride = 1;
  bool operator==(const BlockLayout&) const = default;
};

/// Network template: everything except the searched per-layer choices.
struct Layout {
  int input_resolution = 320;
  int stem_channels = 32;
  std::vector<BlockLayout> blocks;
  bool operator==(const Layout&) const = default;
};

inline std::vector<std::string> validate_layout(const Layout& layout) {
  std::vector<std::string> out;
  if (layout.input_resolution < 1) out.push_back("input_resolution must be >= 1");
  if (layout.stem_channels < 1) out.push_back("stem_channels must be >= 1");
  for (std::size_t i = 0; i < layout.blocks.size(); ++i) {
    const auto& b = layout.blocks[i];
    const auto where = "blocks[" + std::to_string(i) + "]: ";
    if (b.base_channels < 1) out.push_back(where + "base_channels must be >= 1");
    if (b.num_layers < 1) out.push_back(where + "num_layers must be >= 1");
    if (b.first_stride != 1 && b.first_stride != 2) out.push_back(where + "first_stride must be 1 or 2");
  }
  return out;
}

/// Stem plus eight blocks with base channels 16-32-48-96-96-160-192-192
/// (stem 32). C4 lands on block 4 (stride 16), C5 on block 7 (stride 32).
inline Layout default_layout() {
  Layout l;
  l.input_resolution = 320;
  l.stem_channels = 32;
  l.blocks = {{16, 1, 1}, {32, 2, 2}, {48, 3, 2}, {96, 3, 2}, {96, 2, 1}, {160, 3, 2}, {192, 1, 1}, {192, 1, 1}};
  return l;
}

/// One block of two layers.
inline Layout toy2_layout() {
  Layout l;
  l.input_resolution = 160;
  l.stem_channels = 32;
  l.blocks = {{32, 2, 2}};
  return l;
}

/// Three layers in two blocks: a high-resolution narrow block followed by a
/// low-resolution wide one.
inline Layout toy3_layout() {
  Layout l;
  l.input_resolution = 320;
  l.stem_channels = 32;
  l.blocks = {{24, 2, 2}, {160, 1, 2}};
  return l;
}

inline std::optional<Layout> builtin_layout(const std::string& name) {
  if (name == "default") return default_layout();
  if (name == "toy2") return toy2_layout();
  if (name == "toy3") return toy3_layout();
  return std::nullopt;
}

enum class SpaceVariant { kIbnOnly, kIbnFused, kIbnFusedTucker };
enum class Adaptation { kNeutral, kCpuLike, kDspLike };

inline const char* variant_name(SpaceVariant v) {
  switch (v) {
    case SpaceVariant::kIbnOnly: return "ibn";
    case SpaceVariant::kIbnFused: return "ibn_fused";
    default: return "ibn_fused_tucker";
  }
}

inline SpaceVariant parse_variant(const std::string& s) {
  if (s == "ibn") return SpaceVariant::kIbnOnly;
  if (s == "ibn_fused") return SpaceVariant::kIbnFused;
  if (s == "ibn_fused_tucker") return SpaceVariant::kIbnFusedTucker;
  throw ParseError("unknown space variant '" + s + "' (expected ibn, ibn_fused or ibn_fused_tucker)");
}

inline const char* adaptation_name(Adaptation a) {
  switch (a) {
    case Adaptation::kNeutral: return "neutral";
    case Adaptation::kCpuLike: return "cpu";
    default: return "dsp";
  }
}

inline Adaptation parse_adaptation(const std::string& s) {
  if (s == "neutral") return Adaptation::kNeutral;
  if (s == "cpu") return Adaptation::kCpuLike;
  if (s == "dsp") return Adaptation::kDspLike;
  throw ParseError("unknown adaptation '" + s + "' (expected neutral, cpu or dsp)");
}

struct SpaceMenus {
  std::vector<double> multipliers{0.5, 0.625, 0.75, 1.0, 1.25, 1.5, 2.0};
  std::vector<int> kernels{3, 5};
  std::vector<double> expansions{4.0, 8.0};
  std::vector<double> compressions{0.25, 0.75};
  bool operator==(const SpaceMenus&) const = default;
};

inline constexpr std::uint64_t kDefaultEnumerationCap = 1'000'000;

struct ChannelMultiplier {
  double value = 1.0;
  auto operator<=>(const ChannelMultiplier&) const = default;
};

using Atom = std::variant<LayerKind, ChannelMultiplier>;

struct Decision {
  int id = 0;
  int block = 0;
  std::optional<int> layer;  // empty for the block-level multiplier decision
  std::vector<Atom> choices;

  bool is_multiplier() const { return !layer.has_value(); }
};

struct SpaceSpec {
  Layout layout;
  SpaceVariant variant = SpaceVariant::kIbnOnly;
  Adaptation adaptation = Adaptation::kNeutral;
  SpaceMenus menus;
  std::uint64_t enumeration_cap = kDefaultEnumerationCap;
  std::vector<Decision> decisions;

  /// Index of the multiplier decision of block b, and of the kind decision of (b, l).
  int multiplier_decision(int b) const { return block_offsets.at(b); }
  int kind_decision(int b, int l) const { return block_offsets.at(b) + 1 + l; }

  std::vector<int> block_offsets;  // first decision id of each block
};

using DecisionVector = std::vector<int>;

inline std::string atom_label(const Atom& atom) {
  if (const auto* m = std::get_if<ChannelMultiplier>(&atom)) return "x" + format_number(m->value);
  return atom_key(std::get<LayerKind>(atom));
}

namespace detail {

template <class T>
std::vector<T> sorted_unique(std::vector<T> v) {
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
  return v;
}

inline std::vector<LayerKind> kind_atoms(SpaceVariant variant, Adaptation adaptation, const SpaceMenus& menus) {
  auto kernels = sorted_unique(menus.kernels);
  if (adaptation == Adaptation::kDspLike) std::erase(kernels, 5);
  const auto expansions = sorted_unique(menus.expansions);
  const auto compressions = sorted_unique(menus.compressions);

  std::vector<LayerKind> atoms;
  for (int k : kernels)
    for (double s : expansions) atoms.emplace_back(Ibn{k, s});
  if (variant != SpaceVariant::kIbnOnly)
    for (int k : kernels)
      for (double s : expansions) atoms.emplace_back(Fused{k, s});
  if (variant == SpaceVariant::kIbnFusedTucker)
    for (int k : kernels)
      for (double s : compressions)
        for (double e : compressions) atoms.emplace_back(Tucker{k, s, e});
  std::sort(atoms.begin(), atoms.end());
  return atoms;
}

}  // namespace detail

inline SpaceSpec build_space(SpaceVariant variant, Adaptation adaptation, const Layout& layout,
                             SpaceMenus menus = {}, std::uint64_t enumeration_cap = kDefaultEnumerationCap) {
  if (auto errs = validate_layout(layout); !errs.empty()) throw ValidationError("layout: " + errs.front());

  for (double s : menus.expansions)
    if (!(s > 1.0)) throw ValidationError("expansion menu entries must be > 1");
  for (double c : menus.compressions)
    if (!(c > 0.0 && c < 1.0)) throw ValidationError("compression menu entries must lie in (0, 1)");
  for (int k : menus.kernels)
    if (k < 1 || k % 2 == 0) throw ValidationError("kernel must be odd (got " + std::to_string(k) + ")");
  for (double m : menus.multipliers)
    if (!(m > 0.0)) throw ValidationError("multiplier menu entries must be > 0");

  SpaceSpec space;
  space.layout = layout;
  space.variant = variant;
  space.adaptation = adaptation;
  space.menus = menus;
  space.enumeration_cap = enumeration_cap;

  const auto kinds = detail::kind_atoms(variant, adaptation, menus);
  if (kinds.empty()) throw ValidationError("layer-kind choice list is empty after hardware adaptation");
  const auto multipliers = detail::sorted_unique(menus.multipliers);
  if (multipliers.empty()) throw ValidationError("multiplier choice list is empty");

  int id = 0;
  for (std::size_t b = 0; b < layout.blocks.size(); ++b) {
    space.block_offsets.push_back(id);
    Decision mult{id++, static_cast<int>(b), std::nullopt, {}};
    for (double m : multipliers) mult.choices.emplace_back(ChannelMultiplier{m});
    space.decisions.push_back(std::move(mult));
    for (int l = 0; l < layout.blocks[b].num_layers; ++l) {
      Decision d{id++, static_cast<int>(b), l, {}};
      for (const auto& k : kinds) d.choices.emplace_back(k);
      space.decisions.push_back(std::move(d));
    }
  }
  return space;
}

inline void check_in_range(const SpaceSpec& space, const DecisionVector& dv) {
  if (dv.size() != space.decisions.size())
    throw RangeError("decision vector has " + std::to_string(dv.size()) + " entries, space has " +
                     std::to_string(space.decisions.size()) + " decisions");
  for (std::size_t i = 0; i < dv.size(); ++i)
    if (dv[i] < 0 || dv[i] >= static_cast<int>(space.decisions[i].choices.size()))
      throw RangeError("decision " + std::to_string(i) + ": index " + std::to_string(dv[i]) + " out of range [0, " +
                       std::to_string(space.decisions[i].choices.size()) + ")");
}

inline NetworkSpec decode(const SpaceSpec& space, const DecisionVector& dv) {
  check_in_range(space, dv);
  const bool cpu = space.adaptation == Adaptation::kCpuLike;
  NetworkSpec net;
  net.input_resolution = space.layout.input_resolution;
  net.stem_channels = space.layout.stem_channels;
  int c_prev = net.stem_channels;
  for (std::size_t b = 0; b < space.layout.blocks.size(); ++b) {
    const auto& bl = space.layout.blocks[b];
    BlockSpec block;
    block.base_channels = bl.base_channels;
    const int md = space.multiplier_decision(static_cast<int>(b));
    block.multiplier = std::get<ChannelMultiplier>(space.decisions[md].choices[dv[md]]).value;
    block.num_layers = bl.num_layers;
    block.first_stride = bl.first_stride;
    const int c_out = block.out_channels();
    for (int l = 0; l < bl.num_layers; ++l) {
      const int kd = space.kind_decision(static_cast<int>(b), l);
      LayerSpec layer;
      layer.kind = std::get<LayerKind>(space.decisions[kd].choices[dv[kd]]);
      layer.c_in = c_prev;
      layer.c_out = c_out;
      layer.stride = l == 0 ? bl.first_stride : 1;
      layer.use_se = cpu;
      layer.activation = cpu ? Activation::kHswish : Activation::kRelu6;
      layer.residual = residual_eligible(layer);
      block.layers.push_back(layer);
      c_prev = c_out;
    }
    net.blocks.push_back(std::move(block));
  }
  assign_endpoints(net);
  return net;
}

/// Inverse of decode: the decision vector whose atoms produce `net`, or
/// nullopt when some layer or multiplier is not an atom of the space.
inline std::optional<DecisionVector> encode(const SpaceSpec& space, const NetworkSpec& net) {
  if (net.blocks.size() != space.layout.blocks.size()) return std::nullopt;
  if (net.input_resolution != space.layout.input_resolution || net.stem_channels != space.layout.stem_channels)
    return std::nullopt;
  DecisionVector dv(space.decisions.size(), 0);
  auto find_atom = [](const Decision& d, const Atom& a) -> int {
    auto it = std::find(d.choices.begin(), d.choices.end(), a);
    return it == d.choices.end() ? -1 : static_cast<int>(it - d.choices.begin());
  };
  for (std::size_t b = 0; b < net.blocks.size(); ++b) {
    const auto& block = net.blocks[b];
    if (static_cast<int>(block.layers.size()) != space.layout.blocks[b].num_layers) return std::nullopt;
    const int md = space.multiplier_decision(static_cast<int>(b));
    dv[md] = find_atom(space.decisions[md], Atom{ChannelMultiplier{block.multiplier}});
    if (dv[md] < 0) return std::nullopt;
    for (std::size_t l = 0; l < block.layers.size(); ++l) {
      const int kd = space.kind_decision(static_cast<int>(b), static_cast<int>(l));
      dv[kd] = find_atom(space.decisions[kd], Atom{block.layers[l].kind});
      if (dv[kd] < 0) return std::nullopt;
    }
  }
  if (decode(space, dv) != net) return std::nullopt;
  return dv;
}

using BigInt = boost::multiprecision::cpp_int;

inline BigInt space_size(const SpaceSpec& space) {
  BigInt n = 1;
  for (const auto& d : space.decisions) n *= d.choices.size();
  return n;
}

/// Lexicographic cursor over all decision vectors (last decision varies
/// fastest). Each instance is an independent cursor.
class DecisionEnumerator {
 public:
  explicit DecisionEnumerator(std::vector<int> radices) : radices_(std::move(radices)) {}

  /// Writes the next vector into `out`; false once exhausted.
  bool next(DecisionVector& out) {
    if (done_) return false;
    if (!started_) {
      started_ = true;
      current_.assign(radices_.size(), 0);
      out = current_;
      return true;
    }
    for (std::size_t i = current_.size(); i-- > 0;) {
      if (++current_[i] < radices_[i]) {
        out = current_;
        return true;
      }
      current_[i] = 0;
    }
    done_ = true;
    return false;
  }

 private:
  std::vector<int> radices_;
  DecisionVector current_;
  bool started_ = false;
  bool done_ = false;
};

inline DecisionEnumerator enumerate(const SpaceSpec& space) {
  const auto size = space_size(space);
  if (size > space.enumeration_cap)
    throw CapExceededError("space size " + size.str() + " exceeds enumeration cap " +
                           std::to_string(space.enumeration_cap));
  std::vector<int> radices;
  for (const auto& d : space.decisions) radices.push_back(static_cast<int>(d.choices.size()));
  return DecisionEnumerator(std::move(radices));
}

/// Uniform draw over the space (independent uniform index per decision).
template <class Rng>
DecisionVector random_sample(const SpaceSpec& space, Rng& rng) {
  DecisionVector dv;
  dv.reserve(space.decisions.size());
  for (const auto& d : space.decisions) {
    std::uniform_int_distribution<int> pick(0, static_cast<int>(d.choices.size()) - 1);
    dv.push_back(pick(rng));
  }
  return dv;
}

}  // namespace mobiledet
