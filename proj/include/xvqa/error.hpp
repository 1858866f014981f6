#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace xvqa {

/// Tensor shapes that violate an operation's contract.
class shape_error : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Malformed or inconsistent on-disk data. Carries the 1-based line number
/// when the failure can be attributed to one line (0 otherwise).
class data_error : public std::runtime_error {
public:
    explicit data_error(const std::string& what, std::size_t line = 0)
        : std::runtime_error(line ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

/// NaN/Inf during training or a failed numerical verification.
class numerical_error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace xvqa
