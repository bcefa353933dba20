#pragma once

// Helpers shared by the JSON readers and writers. Not installed.

#include <algorithm>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "connkit/error.hpp"
#include "connkit/geometry.hpp"
#include "connkit/graph.hpp"

namespace connkit::detail {

using json = nlohmann::json;

inline std::size_t line_of(std::string_view bytes, std::size_t offset) {
  offset = std::min(offset, bytes.size());
  return 1 + static_cast<std::size_t>(std::count(bytes.begin(), bytes.begin() + offset, '\n'));
}

inline json parse_json(std::string_view bytes, const std::string& locus) {
  try {
    return json::parse(bytes.begin(), bytes.end());
  } catch (const json::parse_error& e) {
    throw ParseError(e.what(), locus, line_of(bytes, e.byte == 0 ? 0 : e.byte - 1));
  }
}

inline std::string field(const std::string& locus, std::string_view key) {
  return locus.empty() ? std::string(key) : locus + "." + std::string(key);
}

inline const json& at(const json& j, std::string_view key, const std::string& locus) {
  if (!j.is_object()) throw ParseError("expected an object", locus);
  auto it = j.find(key);
  if (it == j.end()) throw ParseError("missing field", field(locus, key));
  return *it;
}

inline const json* maybe(const json& j, std::string_view key) {
  if (!j.is_object()) return nullptr;
  auto it = j.find(key);
  return it == j.end() || it->is_null() ? nullptr : &*it;
}

template <class T>
T as(const json& j, const std::string& locus) {
  try {
    return j.get<T>();
  } catch (const json::exception& e) {
    throw ParseError(std::string("wrong type: ") + e.what(), locus);
  }
}

template <class T>
T get(const json& j, std::string_view key, const std::string& locus) {
  return as<T>(at(j, key, locus), field(locus, key));
}

inline double number(const json& j, const std::string& locus) {
  if (!j.is_number()) throw ParseError("expected a number", locus);
  return j.get<double>();
}

inline Vec3 vec3(const json& j, const std::string& locus) {
  if (!j.is_array() || j.size() != 3) throw ParseError("expected a 3-element array", locus);
  return {number(j[0], locus + "[0]"), number(j[1], locus + "[1]"), number(j[2], locus + "[2]")};
}

inline json to_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

inline json to_json(const RigidTransform& t) {
  json rows = json::array();
  for (int r = 0; r < 3; ++r) rows.push_back(json::array({t.rotation(r, 0), t.rotation(r, 1), t.rotation(r, 2)}));
  return {{"rotation", rows}, {"translation", to_json(t.translation)}};
}

inline RigidTransform transform(const json& j, const std::string& locus) {
  RigidTransform t;
  const json& rows = at(j, "rotation", locus);
  if (!rows.is_array() || rows.size() != 3) throw ParseError("expected a 3x3 array", field(locus, "rotation"));
  for (int r = 0; r < 3; ++r) t.rotation.row(r) = vec3(rows[r], field(locus, "rotation")).transpose();
  t.translation = vec3(at(j, "translation", locus), field(locus, "translation"));
  return t;
}

inline void check_version(const json& j, int expected, const std::string& locus) {
  const int v = get<int>(j, "format_version", locus);
  if (v != expected)
    throw SchemaError("unsupported format_version " + std::to_string(v) + " (expected " + std::to_string(expected) + ")",
                      field(locus, "format_version"));
}

inline ConnectorType connector_type(const json& j, const std::string& locus) {
  const auto name = as<std::string>(j, locus);
  auto t = connector_type_from_string(name);
  if (!t) throw SchemaError("unknown connector type \"" + name + "\"", locus);
  return *t;
}

}  // namespace connkit::detail
