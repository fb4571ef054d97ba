#pragma once

// Strict accessors over nlohmann::json used by the model and rule importers.

#include <cmath>
#include <initializer_list>
#include <limits>
#include <stdexcept>
#include <string>
#include <string_view>

#include <json.hpp>

namespace gridwatch::detail {

using json = nlohmann::json;

struct SchemaViolation : std::runtime_error {
    SchemaViolation(std::string p, const std::string& reason)
        : std::runtime_error(p + ": " + reason), path(std::move(p)) {}
    std::string path;
};

inline std::string child(const std::string& path, std::string_view key) {
    return path + "." + std::string(key);
}
inline std::string child(const std::string& path, std::size_t index) {
    return path + "[" + std::to_string(index) + "]";
}

inline json parse_document(std::string_view text) {
    try {
        return json::parse(text.begin(), text.end());
    } catch (const json::parse_error& e) {
        throw SchemaViolation("$", std::string("not valid JSON: ") + e.what());
    }
}

inline const json& require_object(const json& v, const std::string& path) {
    if (!v.is_object()) throw SchemaViolation(path, "expected an object");
    return v;
}

inline const json& require_array(const json& v, const std::string& path) {
    if (!v.is_array()) throw SchemaViolation(path, "expected an array");
    return v;
}

// Rejects keys outside required+optional and missing required keys.
inline void check_keys(const json& obj, const std::string& path, std::initializer_list<std::string_view> required,
                       std::initializer_list<std::string_view> optional = {}) {
    require_object(obj, path);
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        bool known = false;
        for (auto k : required) known = known || it.key() == k;
        for (auto k : optional) known = known || it.key() == k;
        if (!known) throw SchemaViolation(child(path, it.key()), "unknown field");
    }
    for (auto k : required)
        if (!obj.contains(std::string(k))) throw SchemaViolation(child(path, k), "missing required field");
}

inline std::string get_string(const json& obj, std::string_view key, const std::string& path) {
    const json& v = obj.at(std::string(key));
    if (!v.is_string()) throw SchemaViolation(child(path, key), "expected a string");
    return v.get<std::string>();
}

inline std::uint64_t get_uint(const json& obj, std::string_view key, const std::string& path, std::uint64_t max) {
    const json& v = obj.at(std::string(key));
    if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0))
        throw SchemaViolation(child(path, key), "expected a non-negative integer");
    const auto value = v.get<std::uint64_t>();
    if (value > max) throw SchemaViolation(child(path, key), "value exceeds " + std::to_string(max));
    return value;
}

inline double get_number(const json& obj, std::string_view key, const std::string& path) {
    const json& v = obj.at(std::string(key));
    if (!v.is_number()) throw SchemaViolation(child(path, key), "expected a number");
    const double d = v.get<double>();
    if (!std::isfinite(d)) throw SchemaViolation(child(path, key), "expected a finite number");
    return d;
}

} // namespace gridwatch::detail
