#pragma once
// Strict JSON field access with path-qualified error messages.

#include <fstream>
#include <initializer_list>
#include <sstream>
#include <string>
#include <string_view>

#include <json.hpp>

#include "mobiledet/errors.hpp"

namespace mobiledet::json_util {

using Json = nlohmann::ordered_json;

/// Key reserved for provenance stamps (tool version, invocation). Readers ignore it.
inline constexpr const char* kMetaKey = "_meta";

inline Json parse(std::string_view text, const std::string& source) {
  try {
    return Json::parse(text.begin(), text.end());
  } catch (const nlohmann::json::parse_error& e) {
    std::size_t line = 1, col = 1;
    for (std::size_t i = 0; i + 1 < e.byte && i < text.size(); ++i) {
      if (text[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    throw ParseError(source + ":" + std::to_string(line) + ":" + std::to_string(col) + ": malformed JSON");
  }
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path + "'");
  out << text;
  if (!out) throw IoError("write failed for '" + path + "'");
}

inline const Json& require_object(const Json& j, const std::string& path) {
  if (!j.is_object()) throw ParseError(path + ": expected an object");
  return j;
}

/// Rejects keys outside `allowed` (the meta key is always permitted).
inline void check_keys(const Json& j, const std::string& path, std::initializer_list<std::string_view> allowed) {
  require_object(j, path);
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (it.key() == kMetaKey) continue;
    bool ok = false;
    for (auto a : allowed) ok = ok || (it.key() == a);
    if (!ok) throw ParseError(path + "." + it.key() + ": unknown field");
  }
}

inline const Json& field(const Json& j, const std::string& path, const char* key) {
  require_object(j, path);
  auto it = j.find(key);
  if (it == j.end()) throw ParseError(path + "." + key + ": missing field");
  return *it;
}

inline int get_int(const Json& j, const std::string& path, const char* key) {
  const auto& v = field(j, path, key);
  if (!v.is_number_integer()) throw ParseError(path + "." + key + ": expected an integer");
  return v.get<int>();
}

inline double get_double(const Json& j, const std::string& path, const char* key) {
  const auto& v = field(j, path, key);
  if (!v.is_number()) throw ParseError(path + "." + key + ": expected a number");
  return v.get<double>();
}

inline bool get_bool(const Json& j, const std::string& path, const char* key) {
  const auto& v = field(j, path, key);
  if (!v.is_boolean()) throw ParseError(path + "." + key + ": expected a boolean");
  return v.get<bool>();
}

inline std::string get_string(const Json& j, const std::string& path, const char* key) {
  const auto& v = field(j, path, key);
  if (!v.is_string()) throw ParseError(path + "." + key + ": expected a string");
  return v.get<std::string>();
}

inline const Json& get_array(const Json& j, const std::string& path, const char* key) {
  const auto& v = field(j, path, key);
  if (!v.is_array()) throw ParseError(path + "." + key + ": expected an array");
  return v;
}

inline std::string index_path(const std::string& path, const char* key, std::size_t i) {
  return path + "." + key + "[" + std::to_string(i) + "]";
}

}  // namespace mobiledet::json_util
