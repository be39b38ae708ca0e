#pragma once

#include <stdexcept>
#include <string>

namespace mflq {

// Thrown when a kernel matrix that the standing assumptions guarantee to be
// positive definite turns out not to be (numerically). `which` names the
// offending kernel ("W1" or "W2"), `k` the backward-recursion step.
class NotPositiveDefinite : public std::runtime_error {
public:
    NotPositiveDefinite(std::string which_, int k_, double lambda_min_)
        : std::runtime_error("kernel " + which_ + " at step k=" + std::to_string(k_) +
                             " is not positive definite (lambda_min=" +
                             std::to_string(lambda_min_) + ")"),
          which(std::move(which_)), k(k_), lambda_min(lambda_min_) {}

    std::string which;
    int k;
    double lambda_min;
};

// A per-step joint second-moment block [[alpha, gamma], [gamma^T, beta]] that
// fails the positive-semidefiniteness required of any covariance.
class InvalidMoment : public std::runtime_error {
public:
    explicit InvalidMoment(int k_, double lambda_min_)
        : std::runtime_error("joint noise second moment at step k=" + std::to_string(k_) +
                             " is not PSD (lambda_min=" + std::to_string(lambda_min_) + ")"),
          k(k_), lambda_min(lambda_min_) {}

    int k;
    double lambda_min;
};

class DimensionMismatch : public std::invalid_argument {
public:
    explicit DimensionMismatch(const std::string& what_) : std::invalid_argument(what_) {}
};

// A simulated path left the representable range (the closed loop blew up).
class NonFinite : public std::runtime_error {
public:
    NonFinite(long path_, int k_)
        : std::runtime_error("non-finite state on path " + std::to_string(path_) +
                             " at step k=" + std::to_string(k_)),
          path(path_), k(k_) {}

    long path;
    int k;
};

// Rank-one pseudo-inverse update requires the update vector to lie in the
// range of the base matrix.
class RangeViolation : public std::runtime_error {
public:
    explicit RangeViolation(double residual_)
        : std::runtime_error("vector is not in the range of the matrix (relative residual " +
                             std::to_string(residual_) + ")"),
          residual(residual_) {}

    double residual;
};

// Scenario tree would exceed the size guard.
class TreeTooLarge : public std::runtime_error {
public:
    explicit TreeTooLarge(long long size_)
        : std::runtime_error("scenario tree too large (" + std::to_string(size_) +
                             " stacked control variables; guard is 1e6)"),
          size(size_) {}

    long long size;
};

// The stacked quadratic form is only semidefinite; the minimizer set is not a
// single point and we report rather than pick one.
class SingularQuadratic : public std::runtime_error {
public:
    explicit SingularQuadratic(double lambda_min_)
        : std::runtime_error("stacked quadratic is numerically singular (lambda_min=" +
                             std::to_string(lambda_min_) + ")"),
          lambda_min(lambda_min_) {}

    double lambda_min;
};

}  // namespace mflq
