#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

#include <Eigen/Core>

namespace sail {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Failure categories. They map one-to-one onto CLI exit codes.
enum class ErrorKind { validation, solver, assertion, io };

/// Every failure raised by the library carries a stable kebab-case code
/// (e.g. "resolution-too-small") next to the human-readable message.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, std::string code, const std::string& message)
        : std::runtime_error(code + ": " + message), kind_(kind), code_(std::move(code)) {}

    ErrorKind kind() const noexcept { return kind_; }
    const std::string& code() const noexcept { return code_; }

private:
    ErrorKind kind_;
    std::string code_;
};

inline Error validation_error(std::string code, const std::string& message) {
    return {ErrorKind::validation, std::move(code), message};
}
inline Error solver_error(std::string code, const std::string& message) {
    return {ErrorKind::solver, std::move(code), message};
}

int exit_code(ErrorKind kind);

}  // namespace sail
