#pragma once

// Text I/O helpers: shortest round-trip float formatting and key=value /
// CSV parsing shared by the dataset, model, and reference-field formats.

#include "fcm/common.hpp"

#include <charconv>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

namespace fcm {

// Shortest decimal representation that parses back to the same double.
inline std::string format_double(double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view s) {
    double v = 0.0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size())
        throw IoError("malformed number: '" + std::string(s) + "'");
    return v;
}

inline std::int64_t parse_int(std::string_view s) {
    std::int64_t v = 0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size())
        throw IoError("malformed integer: '" + std::string(s) + "'");
    return v;
}

inline std::vector<std::string_view> split_view(std::string_view line, char sep) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const std::size_t pos = line.find(sep, start);
        if (pos == std::string_view::npos) {
            out.push_back(line.substr(start));
            return out;
        }
        out.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
}

// "k1=v1,k2=v2,..." header line into ordered pairs.
inline std::vector<std::pair<std::string, std::string>> parse_header(std::string_view line) {
    std::vector<std::pair<std::string, std::string>> out;
    for (const auto field : split_view(line, ',')) {
        const std::size_t eq = field.find('=');
        if (eq == std::string_view::npos) throw IoError("malformed header field: '" + std::string(field) + "'");
        out.emplace_back(std::string(field.substr(0, eq)), std::string(field.substr(eq + 1)));
    }
    return out;
}

inline std::string header_value(const std::vector<std::pair<std::string, std::string>>& header,
                                const std::string& key) {
    for (const auto& [k, v] : header)
        if (k == key) return v;
    throw IoError("missing header key '" + key + "'");
}

inline std::ofstream open_output(const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open for writing: " + path);
    return out;
}

inline std::ifstream open_input(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open: " + path);
    return in;
}

}  // namespace fcm
