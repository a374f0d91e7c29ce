#include "bencao/tools/schema.h"

#include <cmath>

namespace bencao::tools {
namespace {

bool type_matches(const json& v, const std::string& type) {
  if (type == "object") return v.is_object();
  if (type == "array") return v.is_array();
  if (type == "string") return v.is_string();
  if (type == "boolean") return v.is_boolean();
  if (type == "null") return v.is_null();
  if (type == "number") return v.is_number();
  if (type == "integer") {
    if (v.is_number_integer()) return true;
    return v.is_number_float() && std::floor(v.get<double>()) == v.get<double>();
  }
  return false;
}

}  // namespace

std::vector<std::string> validate_schema(const json& value, const json& schema, const std::string& path) {
  std::vector<std::string> errors;
  if (!schema.is_object()) return errors;

  if (schema.contains("type")) {
    const auto& t = schema.at("type");
    bool ok = false;
    if (t.is_string()) ok = type_matches(value, t.get<std::string>());
    else if (t.is_array()) {
      for (const auto& alt : t) ok = ok || type_matches(value, alt.get<std::string>());
    }
    if (!ok) {
      errors.push_back(path + ": expected type " + t.dump());
      return errors;
    }
  }
  if (schema.contains("enum")) {
    bool found = false;
    for (const auto& e : schema.at("enum")) found = found || e == value;
    if (!found) errors.push_back(path + ": value not in enum");
  }
  if (value.is_string() && schema.contains("minLength") &&
      value.get<std::string>().size() < schema.at("minLength").get<std::size_t>()) {
    errors.push_back(path + ": shorter than minLength");
  }
  if (value.is_number()) {
    double v = value.get<double>();
    if (schema.contains("minimum") && v < schema.at("minimum").get<double>()) errors.push_back(path + ": below minimum");
    if (schema.contains("maximum") && v > schema.at("maximum").get<double>()) errors.push_back(path + ": above maximum");
  }
  if (value.is_object()) {
    if (schema.contains("required")) {
      for (const auto& r : schema.at("required")) {
        if (!value.contains(r.get<std::string>())) errors.push_back(path + ": missing " + r.get<std::string>());
      }
    }
    const json* props = schema.contains("properties") ? &schema.at("properties") : nullptr;
    for (const auto& [k, v] : value.items()) {
      if (props && props->contains(k)) {
        auto sub = validate_schema(v, props->at(k), path + "." + k);
        errors.insert(errors.end(), sub.begin(), sub.end());
      } else if (schema.value("additionalProperties", true) == false) {
        errors.push_back(path + ": unexpected property " + k);
      }
    }
  }
  if (value.is_array() && schema.contains("items")) {
    for (std::size_t i = 0; i < value.size(); ++i) {
      auto sub = validate_schema(value[i], schema.at("items"), path + "[" + std::to_string(i) + "]");
      errors.insert(errors.end(), sub.begin(), sub.end());
    }
  }
  return errors;
}

}  // namespace bencao::tools
