#pragma once

// Minimal CSV helpers. Fields are written unquoted, so values must not
// contain commas; fine for the ids, numbers and relative paths the toolkit
// emits.

#include <charconv>
#include <optional>
#include <string>
#include <vector>

#include "segqc/errors.hpp"

namespace segqc::detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            fields.push_back(cur);
            cur.clear();
        } else if (ch != '\r') {
            cur.push_back(ch);
        }
    }
    fields.push_back(cur);
    return fields;
}

/// Shortest decimal form that parses back to the same double.
inline std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

inline std::optional<double> parse_opt_double(const std::string& s, const std::string& context) {
    if (s.empty()) return std::nullopt;
    try {
        std::size_t pos = 0;
        const double v = std::stod(s, &pos);
        if (pos != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw data_error(context + ": cannot parse number '" + s + "'");
    }
}

}  // namespace segqc::detail
