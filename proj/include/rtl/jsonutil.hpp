#pragma once

#include <charconv>
#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "rtl/error.hpp"

namespace rtl {

// Key order is part of every serialized artifact, so byte-identical
// reruns require insertion-ordered objects.
using ordered_json = nlohmann::ordered_json;

// Shortest round-trip decimal text for a double; used for all
// numeric text output so files are byte-stable across runs.
inline std::string fmt_double(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

inline std::uint64_t fnv1a64(const std::string& s) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

namespace jsonutil {

inline void require_object(const ordered_json& j, const std::string& ctx) {
    require(j.is_object(), ErrorKind::config, ctx + ": expected a JSON object");
}

// Typo safety: any key outside the declared schema aborts the run.
inline void reject_unknown_keys(const ordered_json& j, const std::set<std::string>& allowed,
                                const std::string& ctx) {
    require_object(j, ctx);
    for (auto it = j.begin(); it != j.end(); ++it)
        require(allowed.count(it.key()) > 0, ErrorKind::config, ctx + ": unknown key '" + it.key() + "'");
}

inline double get_double(const ordered_json& j, const std::string& key, double fallback) {
    if (!j.contains(key)) return fallback;
    require(j[key].is_number(), ErrorKind::config, "key '" + key + "' must be a number");
    return j[key].get<double>();
}

inline std::uint64_t get_u64(const ordered_json& j, const std::string& key, std::uint64_t fallback) {
    if (!j.contains(key)) return fallback;
    require(j[key].is_number_unsigned() || (j[key].is_number_integer() && j[key].get<std::int64_t>() >= 0),
            ErrorKind::config, "key '" + key + "' must be a non-negative integer");
    return j[key].get<std::uint64_t>();
}

inline std::size_t get_size(const ordered_json& j, const std::string& key, std::size_t fallback) {
    return static_cast<std::size_t>(get_u64(j, key, fallback));
}

inline bool get_bool(const ordered_json& j, const std::string& key, bool fallback) {
    if (!j.contains(key)) return fallback;
    require(j[key].is_boolean(), ErrorKind::config, "key '" + key + "' must be a boolean");
    return j[key].get<bool>();
}

inline std::string get_string(const ordered_json& j, const std::string& key, const std::string& fallback) {
    if (!j.contains(key)) return fallback;
    require(j[key].is_string(), ErrorKind::config, "key '" + key + "' must be a string");
    return j[key].get<std::string>();
}

inline std::string get_string_required(const ordered_json& j, const std::string& key, const std::string& ctx) {
    require(j.contains(key), ErrorKind::config, ctx + ": missing required key '" + key + "'");
    require(j[key].is_string(), ErrorKind::config, ctx + ": key '" + key + "' must be a string");
    return j[key].get<std::string>();
}

inline std::vector<std::size_t> get_size_array(const ordered_json& j, const std::string& key,
                                               const std::vector<std::size_t>& fallback) {
    if (!j.contains(key)) return fallback;
    require(j[key].is_array(), ErrorKind::config, "key '" + key + "' must be an array");
    std::vector<std::size_t> out;
    for (const auto& v : j[key]) {
        require(v.is_number_unsigned() || (v.is_number_integer() && v.get<std::int64_t>() >= 0), ErrorKind::config,
                "entries of '" + key + "' must be non-negative integers");
        out.push_back(v.get<std::size_t>());
    }
    return out;
}

inline std::vector<double> get_double_array(const ordered_json& j, const std::string& key,
                                            const std::vector<double>& fallback) {
    if (!j.contains(key)) return fallback;
    require(j[key].is_array(), ErrorKind::config, "key '" + key + "' must be an array");
    std::vector<double> out;
    for (const auto& v : j[key]) {
        require(v.is_number(), ErrorKind::config, "entries of '" + key + "' must be numbers");
        out.push_back(v.get<double>());
    }
    return out;
}

}  // namespace jsonutil
}  // namespace rtl
