// SPDX-License-Identifier: Apache-2.0
// Shortest round-trip decimal text for doubles.
#pragma once

#include <charconv>
#include <cmath>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "coop/errors.hpp"

namespace coop {

inline void append_double(std::string& out, double v)
{
    if (std::isinf(v)) {
        out += v > 0 ? "inf" : "-inf";
        return;
    }
    if (std::isnan(v)) {
        out += "nan";
        return;
    }
    char buf[32];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    out.append(buf, res.ptr);
}

inline std::string format_double(double v)
{
    std::string s;
    append_double(s, v);
    return s;
}

inline double parse_double(std::string_view text)
{
    if (text == "inf") return HUGE_VAL;
    if (text == "-inf") return -HUGE_VAL;
    if (text == "nan") return std::nan("");
    double v = 0.0;
    auto res = std::from_chars(text.data(), text.data() + text.size(), v);
    if (res.ec != std::errc() || res.ptr != text.data() + text.size())
        throw InputError("not a number: '" + std::string(text) + "'");
    return v;
}

inline long long parse_int(std::string_view text)
{
    long long v = 0;
    auto res = std::from_chars(text.data(), text.data() + text.size(), v);
    if (res.ec != std::errc() || res.ptr != text.data() + text.size())
        throw InputError("not an integer: '" + std::string(text) + "'");
    return v;
}

/// Splits on `sep` without quoting rules.
inline std::vector<std::string_view> split_fields(std::string_view line, char sep = ',')
{
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find(sep, start);
        if (pos == std::string_view::npos) {
            out.push_back(line.substr(start));
            return out;
        }
        out.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
}

}  // namespace coop
