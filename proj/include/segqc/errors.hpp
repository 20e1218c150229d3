#pragma once

#include <stdexcept>
#include <string>

namespace segqc {

// Bad run configuration: unknown keys, invalid parameter combinations.
struct config_error : std::runtime_error {
    explicit config_error(const std::string& msg) : std::runtime_error(msg) {}
};

// Unreadable, unparsable, or semantically invalid input data (bad files,
// missing fields, values outside their domain).
struct data_error : std::runtime_error {
    explicit data_error(const std::string& msg) : std::runtime_error(msg) {}
};

// Statistically degenerate input: zero variance, empty sets where a
// distribution is required.
struct degenerate_error : std::runtime_error {
    explicit degenerate_error(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace segqc
