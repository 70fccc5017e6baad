#ifndef TVHC_ERRORS_HPP
#define TVHC_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace tvhc {

/// Argument outside the mathematical domain of an operation (negative age,
/// non-positive rate, ...).
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// A class or system whose arrival rate is not below its service capacity.
class InstabilityError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid configuration: bad cost parameters, non-monotone policy, schema
/// violations in experiment files.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Numerical procedure failed to reach its tolerance.
class NumericError : public std::runtime_error {
public:
    NumericError(const std::string& what, double residual)
        : std::runtime_error(what + " (residual estimate " + std::to_string(residual) + ")"),
          residual_(residual) {}
    double residual() const noexcept { return residual_; }

private:
    double residual_;
};

} // namespace tvhc

#endif
