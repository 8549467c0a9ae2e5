#include "dopinv/serialization.hpp"

#include <algorithm>
#include <cmath>

namespace dopinv {

using nlohmann::json;

void require_known_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where)
{
    if (!j.is_object()) {
        throw InvalidArgument(where + ": expected a JSON object");
    }
    for (const auto& [key, value] : j.items()) {
        const bool known
            = std::any_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; });
        if (!known) {
            throw InvalidArgument(where + "." + key + ": unknown field");
        }
    }
}

double get_number(const json& j, const char* key, double fallback, const std::string& where)
{
    if (!j.contains(key)) {
        return fallback;
    }
    const auto& v = j.at(key);
    if (!v.is_number()) {
        throw InvalidArgument(where + "." + key + ": expected a number");
    }
    const double d = v.get<double>();
    if (!std::isfinite(d)) {
        throw InvalidArgument(where + "." + key + ": must be finite");
    }
    return d;
}

int get_int(const json& j, const char* key, int fallback, const std::string& where)
{
    if (!j.contains(key)) {
        return fallback;
    }
    const auto& v = j.at(key);
    if (!v.is_number_integer()) {
        throw InvalidArgument(where + "." + key + ": expected an integer");
    }
    return v.get<int>();
}

std::string get_string(const json& j, const char* key, const std::string& fallback, const std::string& where)
{
    if (!j.contains(key)) {
        return fallback;
    }
    const auto& v = j.at(key);
    if (!v.is_string()) {
        throw InvalidArgument(where + "." + key + ": expected a string");
    }
    return v.get<std::string>();
}

json to_json(const GeometryConfig& g)
{
    json other = json::array();
    for (const auto& iv : g.dirichlet_other) {
        other.push_back({{"side", to_string(iv.side)}, {"lo", iv.lo}, {"hi", iv.hi}});
    }
    return {{"gamma1", {g.gamma1_lo, g.gamma1_hi}}, {"dirichlet_other", other}};
}

GeometryConfig geometry_from_json(const json& j, const std::string& where)
{
    require_known_keys(j, {"gamma1", "dirichlet_other"}, where);
    GeometryConfig g;
    if (j.contains("gamma1")) {
        const auto& a = j.at("gamma1");
        if (!a.is_array() || a.size() != 2 || !a[0].is_number() || !a[1].is_number()) {
            throw InvalidArgument(where + ".gamma1: expected [lo, hi]");
        }
        g.gamma1_lo = a[0].get<double>();
        g.gamma1_hi = a[1].get<double>();
    }
    if (j.contains("dirichlet_other")) {
        const auto& a = j.at("dirichlet_other");
        if (!a.is_array()) {
            throw InvalidArgument(where + ".dirichlet_other: expected an array");
        }
        g.dirichlet_other.clear();
        for (std::size_t k = 0; k < a.size(); ++k) {
            const std::string w = where + ".dirichlet_other[" + std::to_string(k) + "]";
            require_known_keys(a[k], {"side", "lo", "hi"}, w);
            SideInterval iv;
            iv.side = parse_side(get_string(a[k], "side", "bottom", w));
            iv.lo = get_number(a[k], "lo", 0.0, w);
            iv.hi = get_number(a[k], "hi", 1.0, w);
            g.dirichlet_other.push_back(iv);
        }
    }
    return g;
}

json to_json(const InputProfile& p)
{
    return {{"center", p.center}, {"half_width", p.half_width}, {"amplitude", p.amplitude}};
}

InputProfile profile_from_json(const json& j, const std::string& where)
{
    require_known_keys(j, {"center", "half_width", "amplitude"}, where);
    InputProfile p;
    p.center = get_number(j, "center", p.center, where);
    p.half_width = get_number(j, "half_width", p.half_width, where);
    p.amplitude = get_number(j, "amplitude", p.amplitude, where);
    try {
        p.validate();
    } catch (const InvalidArgument& e) {
        throw InvalidArgument(where + ": " + e.what());
    }
    return p;
}

} // namespace dopinv
