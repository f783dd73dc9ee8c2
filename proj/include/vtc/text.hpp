#pragma once

#include <charconv>
#include <string>
#include <system_error>

namespace vtc {

/// Shortest round-trip decimal form, '.' separator regardless of locale.
inline std::string format_double(double v) {
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
    if (ec != std::errc{}) return "nan";
    return std::string(buf, end);
}

}  // namespace vtc
