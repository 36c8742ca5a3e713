#pragma once

#include <stdexcept>
#include <string>

namespace ndd {

// Input content that violates a documented contract: malformed schema,
// out-of-range parameter, bad config key. CLI maps this to exit code 1.
class ValidationError : public std::runtime_error {
public:
    explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

// Environment failure: unreadable input, unwritable output. CLI exit code 2.
class IoError : public std::runtime_error {
public:
    explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace ndd
