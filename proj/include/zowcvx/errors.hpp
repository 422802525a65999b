#pragma once

#include <stdexcept>
#include <string>
#include <utility>

#include <Eigen/Core>

namespace zowcvx {

// Base class for every error thrown by this library. Precondition misuse
// (negative sizes, empty inputs) throws std::invalid_argument instead.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// A smoothing or step-size constraint was violated (e.g. u2 > u1 / 2).
class ScheduleViolation : public Error {
public:
    using Error::Error;
};

// The zeroth-order oracle produced a non-finite value; carries the point at
// which the evaluation failed.
class EstimatorFailure : public Error {
public:
    EstimatorFailure(const std::string& what, Eigen::VectorXd point)
        : Error(what), point_(std::move(point)) {}

    const Eigen::VectorXd& point() const noexcept { return point_; }

private:
    Eigen::VectorXd point_;
};

// The problem does not provide a capability (subgradients, exact objective,
// smooth surrogate, ...) required by the requested operation.
class CapabilityError : public Error {
public:
    using Error::Error;
};

// An inner iterative solve exhausted its budget before reaching tolerance;
// carries the residual at the last iterate.
class ConvergenceError : public Error {
public:
    ConvergenceError(const std::string& what, double residual)
        : Error(what), residual_(residual) {}

    double residual() const noexcept { return residual_; }

private:
    double residual_;
};

// The requested computation is not well defined for the given parameters,
// e.g. an envelope radius below the weak-convexity modulus.
class IllPosedError : public Error {
public:
    using Error::Error;
};

// A dimension outside the supported range was requested.
class DimensionError : public Error {
public:
    using Error::Error;
};

// An experiment description or CLI invocation failed validation.
class ConfigError : public Error {
public:
    using Error::Error;
};

} // namespace zowcvx
