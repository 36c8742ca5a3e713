#include "ndd/util.hpp"

#include <charconv>
#include <cmath>

#include "ndd/error.hpp"

namespace ndd {

std::vector<std::string> split_csv(std::string_view line) {
    if (!line.empty() && line.back() == '\r') {
        line.remove_suffix(1);
    }
    std::vector<std::string> fields;
    std::size_t start = 0;
    while (true) {
        const std::size_t comma = line.find(',', start);
        if (comma == std::string_view::npos) {
            fields.emplace_back(line.substr(start));
            break;
        }
        fields.emplace_back(line.substr(start, comma - start));
        start = comma + 1;
    }
    return fields;
}

std::string fmt_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

std::optional<double> parse_double(std::string_view token) {
    if (token.empty()) {
        return std::nullopt;
    }
    double value = 0.0;
    const char* first = token.data();
    const char* last = token.data() + token.size();
    const auto res = std::from_chars(first, last, value);
    if (res.ec != std::errc{} || res.ptr != last) {
        return std::nullopt;
    }
    return value;
}

std::optional<std::int64_t> parse_i64(std::string_view token) {
    if (token.empty()) {
        return std::nullopt;
    }
    std::int64_t value = 0;
    const auto res = std::from_chars(token.data(), token.data() + token.size(), value);
    if (res.ec != std::errc{} || res.ptr != token.data() + token.size()) {
        return std::nullopt;
    }
    return value;
}

std::optional<std::uint64_t> parse_u64(std::string_view token) {
    if (token.empty()) {
        return std::nullopt;
    }
    std::uint64_t value = 0;
    const auto res = std::from_chars(token.data(), token.data() + token.size(), value);
    if (res.ec != std::errc{} || res.ptr != token.data() + token.size()) {
        return std::nullopt;
    }
    return value;
}

double require_double(std::string_view token, const std::string& what) {
    const auto v = parse_double(token);
    if (!v) {
        throw ValidationError(what + ": not a number: '" + std::string(token) +
                              "'");
    }
    return *v;
}

std::int64_t require_i64(std::string_view token, const std::string& what) {
    const auto v = parse_i64(token);
    if (!v) {
        throw ValidationError(what + ": not an integer: '" +
                              std::string(token) + "'");
    }
    return *v;
}

std::uint64_t require_u64(std::string_view token, const std::string& what) {
    const auto v = parse_u64(token);
    if (!v) {
        throw ValidationError(what + ": not a non-negative integer: '" +
                              std::string(token) + "'");
    }
    return *v;
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) {
        s.remove_prefix(1);
    }
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
        s.remove_suffix(1);
    }
    return s;
}

}  // namespace ndd
