#pragma once

#include <charconv>
#include <cmath>
#include <string>
#include <string_view>

#include "rns/errors.hpp"

namespace rns::fmt {

/// Shortest decimal text that parses back to the same double.
inline std::string number(double x) {
    if (std::isnan(x)) return "nan";
    if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof buf, x);
    return std::string(buf, res.ptr);
}

inline double parse_number(std::string_view s) {
    if (s == "nan") return std::nan("");
    if (s == "inf") return INFINITY;
    if (s == "-inf") return -INFINITY;
    double v = 0.0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
        throw IoError("cannot parse number '" + std::string(s) + "'");
    return v;
}

}  // namespace rns::fmt
