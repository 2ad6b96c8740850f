#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace crowdbandit {

// Argument outside the domain of a function, e.g. a growth outside [g_bot, g_top].
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

// The caller broke an API contract (stepping a terminated state, bad weights, ...).
class UsageError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

// An agent returned an allocation that does not match the crowd.
class ContractViolation : public UsageError {
public:
    using UsageError::UsageError;
};

// Base for failures of numerical procedures; the CLI maps these to exit code 3.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// The requested solution method has no feasible answer for this instance.
class InfeasibleError : public NumericError {
public:
    using NumericError::NumericError;
};

class ConvergenceError : public NumericError {
public:
    ConvergenceError(const std::string& what, double residual, std::size_t iterations)
        : NumericError(what + " (residual " + std::to_string(residual) + " after " +
                       std::to_string(iterations) + " sweeps)"),
          residual_(residual),
          iterations_(iterations) {}

    double residual() const noexcept { return residual_; }
    std::size_t iterations() const noexcept { return iterations_; }

private:
    double residual_;
    std::size_t iterations_;
};

// Invalid configuration or input file; the CLI maps these to exit code 2.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ParseError : public ConfigError {
public:
    ParseError(const std::string& what, std::size_t line, std::size_t column)
        : ConfigError(what), line_(line), column_(column) {}

    std::size_t line() const noexcept { return line_; }
    std::size_t column() const noexcept { return column_; }

private:
    std::size_t line_;
    std::size_t column_;
};

} // namespace crowdbandit
