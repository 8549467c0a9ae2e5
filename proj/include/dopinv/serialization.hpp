#pragma once

#include "dopinv/forward.hpp"
#include "dopinv/mesh.hpp"

#include <json.hpp>

#include <string>

namespace dopinv {

nlohmann::json to_json(const GeometryConfig& g);
/// Missing keys keep their defaults; unknown keys are rejected.
GeometryConfig geometry_from_json(const nlohmann::json& j, const std::string& where = "geometry");

nlohmann::json to_json(const InputProfile& p);
InputProfile profile_from_json(const nlohmann::json& j, const std::string& where = "profile");

/// Rejects keys of j that are not in allowed, naming the offending field.
void require_known_keys(const nlohmann::json& j, std::initializer_list<const char*> allowed, const std::string& where);

/// Typed field access with field-level error messages.
double get_number(const nlohmann::json& j, const char* key, double fallback, const std::string& where);
int get_int(const nlohmann::json& j, const char* key, int fallback, const std::string& where);
std::string get_string(const nlohmann::json& j, const char* key, const std::string& fallback, const std::string& where);

} // namespace dopinv
