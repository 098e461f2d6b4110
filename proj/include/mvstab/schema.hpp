#pragma once

// Validation against the JSON Schema subset the shipped report schemas use:
// type, enum, const, properties, required, additionalProperties (boolean),
// items, minItems, minimum, maximum, exclusiveMinimum and local $ref into
// "#/$defs/...".

#include <string>
#include <vector>

#include <json.hpp>

#include "mvstab/errors.hpp"

namespace mvstab {

namespace detail {

inline bool schema_type_matches(const nlohmann::json& v, const std::string& type) {
  if (type == "object") return v.is_object();
  if (type == "array") return v.is_array();
  if (type == "string") return v.is_string();
  if (type == "boolean") return v.is_boolean();
  if (type == "null") return v.is_null();
  if (type == "integer") return v.is_number_integer();
  if (type == "number") return v.is_number();
  throw ArgumentError("schema: unsupported type '" + type + "'");
}

inline void validate_node(const nlohmann::json& v, const nlohmann::json& s, const nlohmann::json& root,
                          const std::string& path, std::vector<std::string>& errors) {
  if (s.is_boolean()) {
    if (!s.get<bool>()) errors.push_back(path + ": not allowed");
    return;
  }
  if (s.contains("$ref")) {
    const auto ref = s["$ref"].get<std::string>();
    const std::string prefix = "#/$defs/";
    if (ref.rfind(prefix, 0) != 0) throw ArgumentError("schema: only local $defs references are supported");
    validate_node(v, root.at("$defs").at(ref.substr(prefix.size())), root, path, errors);
    return;
  }
  if (s.contains("type")) {
    bool ok = false;
    if (s["type"].is_array()) {
      for (const auto& t : s["type"]) ok = ok || schema_type_matches(v, t.get<std::string>());
    } else {
      ok = schema_type_matches(v, s["type"].get<std::string>());
    }
    if (!ok) {
      errors.push_back(path + ": expected type " + s["type"].dump());
      return;
    }
  }
  if (s.contains("const") && v != s["const"]) errors.push_back(path + ": must equal " + s["const"].dump());
  if (s.contains("enum")) {
    bool found = false;
    for (const auto& e : s["enum"]) found = found || e == v;
    if (!found) errors.push_back(path + ": not one of " + s["enum"].dump());
  }
  if (v.is_number()) {
    const double x = v.get<double>();
    if (s.contains("minimum") && x < s["minimum"].get<double>()) errors.push_back(path + ": below minimum");
    if (s.contains("maximum") && x > s["maximum"].get<double>()) errors.push_back(path + ": above maximum");
    if (s.contains("exclusiveMinimum") && x <= s["exclusiveMinimum"].get<double>())
      errors.push_back(path + ": not above exclusiveMinimum");
  }
  if (v.is_object()) {
    if (s.contains("required"))
      for (const auto& r : s["required"])
        if (!v.contains(r.get<std::string>())) errors.push_back(path + ": missing '" + r.get<std::string>() + "'");
    const bool closed = s.contains("additionalProperties") && s["additionalProperties"] == false;
    for (const auto& [key, child] : v.items()) {
      if (s.contains("properties") && s["properties"].contains(key)) {
        validate_node(child, s["properties"][key], root, path + "." + key, errors);
      } else if (closed) {
        errors.push_back(path + ": unexpected key '" + key + "'");
      }
    }
  }
  if (v.is_array()) {
    if (s.contains("minItems") && v.size() < s["minItems"].get<std::size_t>())
      errors.push_back(path + ": fewer than " + s["minItems"].dump() + " items");
    if (s.contains("items"))
      for (std::size_t i = 0; i < v.size(); ++i)
        validate_node(v[i], s["items"], root, path + "[" + std::to_string(i) + "]", errors);
  }
}

}  // namespace detail

/// Violations of `schema` by `doc`, as "$.path: reason" strings.
inline std::vector<std::string> schema_errors(const nlohmann::json& doc, const nlohmann::json& schema) {
  std::vector<std::string> errors;
  detail::validate_node(doc, schema, schema, "$", errors);
  return errors;
}

}  // namespace mvstab
