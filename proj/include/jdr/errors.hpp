#pragma once

#include <stdexcept>
#include <string>

namespace jdr {

/// Root of the library's exception hierarchy.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Bad argument to an operation (N = 0, m out of range, missing iterate, ...).
class ArgumentError : public Error {
public:
    using Error::Error;
};

/// Problem or experiment configuration that cannot be used as given.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Non-finite state or coefficient encountered while simulating.
class SimulationFault : public Error {
public:
    SimulationFault(const std::string& what, double last_valid_time)
        : Error(what), last_valid_time_(last_valid_time) {}
    [[nodiscard]] double last_valid_time() const noexcept { return last_valid_time_; }

private:
    double last_valid_time_;
};

/// Quadrature or other numerical tolerance not reached.
class ToleranceError : public Error {
public:
    ToleranceError(const std::string& what, double estimate, double achieved)
        : Error(what), estimate_(estimate), achieved_(achieved) {}
    [[nodiscard]] double estimate() const noexcept { return estimate_; }
    [[nodiscard]] double achieved() const noexcept { return achieved_; }

private:
    double estimate_;
    double achieved_;
};

/// Nested Monte Carlo would exceed the configured replication budget.
class BudgetError : public Error {
public:
    using Error::Error;
};

/// A grid function was queried where it has no data and no fallback.
class EvaluationError : public Error {
public:
    using Error::Error;
};

/// An output file could not be opened or written.
class IoError : public Error {
public:
    using Error::Error;
};

/// lambda(t, x) exceeded the declared rate bound during thinning.
class DominanceFault : public Error {
public:
    DominanceFault(const std::string& what, double t, double x0)
        : Error(what), t_(t), x0_(x0) {}
    [[nodiscard]] double time() const noexcept { return t_; }
    [[nodiscard]] double state0() const noexcept { return x0_; }

private:
    double t_;
    double x0_;
};

}  // namespace jdr
