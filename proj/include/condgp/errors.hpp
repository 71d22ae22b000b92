// Error types shared by all condgp modules.
#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace condgp {

/// Evaluation requested outside the validity region of a function (Ω, z ∈ [0,1], ...).
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// Caller supplied inconsistent or malformed arguments.
class InputError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// A factorization or decomposition failed.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class OptimizationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid inverse-Wishart statistics (degrees of freedom too small).
class StatsError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Every particle weight vanished.
class FilterDivergence : public std::runtime_error {
public:
    FilterDivergence(std::size_t step, const std::string& what)
        : std::runtime_error("filter diverged at step " + std::to_string(step) + ": " + what), step_(step) {}
    std::size_t step() const noexcept { return step_; }

private:
    std::size_t step_;
};

/// Simulated system left its validity region.
class SimulationError : public std::runtime_error {
public:
    SimulationError(std::size_t step, const std::string& what)
        : std::runtime_error("simulation failed at step " + std::to_string(step) + ": " + what), step_(step) {}
    std::size_t step() const noexcept { return step_; }

private:
    std::size_t step_;
};

/// Configuration error; carries the offending key.
class ConfigError : public std::runtime_error {
public:
    ConfigError(std::string key, const std::string& constraint)
        : std::runtime_error("config key '" + key + "': " + constraint), key_(std::move(key)) {}
    const std::string& key() const noexcept { return key_; }

private:
    std::string key_;
};

}  // namespace condgp
