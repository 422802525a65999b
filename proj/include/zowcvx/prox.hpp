#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <stdexcept>
#include <utility>

#include <Eigen/Core>

#include "zowcvx/errors.hpp"

namespace zowcvx {

// Closed convex regularizer r with an exact proximal map
//   prox(x, alpha) = argmin_y r(y) + ||y - x||^2 / (2 alpha).
// value() may return +infinity outside the domain of an indicator.
struct ProxRegularizer {
    Eigen::Index dimension = 0;
    std::function<double(const Eigen::VectorXd&)> value;
    std::function<Eigen::VectorXd(const Eigen::VectorXd&, double)> prox;
    // True only for the identically-zero regularizer; lets callers pick
    // unconstrained code paths without probing value().
    bool identically_zero = false;
};

inline ProxRegularizer zero_regularizer(Eigen::Index dimension) {
    if (dimension < 1) {
        throw std::invalid_argument("zero_regularizer: dimension must be >= 1");
    }
    ProxRegularizer r;
    r.dimension = dimension;
    r.value = [](const Eigen::VectorXd&) { return 0.0; };
    r.prox = [](const Eigen::VectorXd& x, double) { return x; };
    r.identically_zero = true;
    return r;
}

inline double soft_threshold(double v, double threshold) {
    if (v > threshold) return v - threshold;
    if (v < -threshold) return v + threshold;
    return 0.0;
}

// r(x) = weight * ||x||_1; prox is coordinatewise soft thresholding.
inline ProxRegularizer l1_regularizer(Eigen::Index dimension, double weight) {
    if (dimension < 1) {
        throw std::invalid_argument("l1_regularizer: dimension must be >= 1");
    }
    if (!(weight > 0.0) || !std::isfinite(weight)) {
        throw std::invalid_argument("l1_regularizer: weight must be positive");
    }
    ProxRegularizer r;
    r.dimension = dimension;
    r.value = [weight](const Eigen::VectorXd& x) {
        return weight * x.lpNorm<1>();
    };
    r.prox = [weight](const Eigen::VectorXd& x, double alpha) {
        Eigen::VectorXd y(x.size());
        const double threshold = alpha * weight;
        for (Eigen::Index i = 0; i < x.size(); ++i) {
            y[i] = soft_threshold(x[i], threshold);
        }
        return y;
    };
    return r;
}

// Indicator of the box [lower, upper]; prox is coordinatewise clamping.
// Bounds may be infinite; each coordinate needs lower[i] <= upper[i].
inline ProxRegularizer box_indicator(Eigen::VectorXd lower, Eigen::VectorXd upper) {
    if (lower.size() != upper.size() || lower.size() < 1) {
        throw std::invalid_argument("box_indicator: bound dimensions must match");
    }
    for (Eigen::Index i = 0; i < lower.size(); ++i) {
        if (!(lower[i] <= upper[i])) {
            throw std::invalid_argument("box_indicator: requires lower <= upper");
        }
    }
    ProxRegularizer r;
    r.dimension = lower.size();
    auto lo = std::make_shared<const Eigen::VectorXd>(std::move(lower));
    auto hi = std::make_shared<const Eigen::VectorXd>(std::move(upper));
    r.value = [lo, hi](const Eigen::VectorXd& x) {
        for (Eigen::Index i = 0; i < x.size(); ++i) {
            if (x[i] < (*lo)[i] || x[i] > (*hi)[i]) {
                return std::numeric_limits<double>::infinity();
            }
        }
        return 0.0;
    };
    r.prox = [lo, hi](const Eigen::VectorXd& x, double) {
        return x.cwiseMax(*lo).cwiseMin(*hi);
    };
    return r;
}

// Regular grid over a box in dimension 1 or 2, used as a brute-force
// reference for proximal objectives.
struct GridSpec {
    Eigen::VectorXd lower;
    Eigen::VectorXd upper;
    double step = 0.0;
};

// Checks prox output against exhaustive search on a grid: accepts iff the
// candidate's proximal objective is within tol of the best grid value.
// The grid minimum upper-bounds the true minimum, so a correct prox map is
// never rejected, while a candidate that is materially worse than some grid
// node always is.
inline bool prox_check(const ProxRegularizer& reg, const Eigen::VectorXd& x,
                       double alpha, const Eigen::VectorXd& candidate,
                       const GridSpec& grid, double tol = 1e-6) {
    const Eigen::Index n = x.size();
    if (n != reg.dimension || candidate.size() != n ||
        grid.lower.size() != n || grid.upper.size() != n) {
        throw std::invalid_argument("prox_check: inconsistent dimensions");
    }
    if (n > 2) {
        throw DimensionError("prox_check: grid search supports dimension <= 2");
    }
    if (!(alpha > 0.0) || !(grid.step > 0.0)) {
        throw std::invalid_argument("prox_check: alpha and step must be positive");
    }

    const auto objective = [&](const Eigen::VectorXd& y) {
        return reg.value(y) + (y - x).squaredNorm() / (2.0 * alpha);
    };

    double best = std::numeric_limits<double>::infinity();
    Eigen::VectorXd y(n);
    if (n == 1) {
        for (double v = grid.lower[0]; v <= grid.upper[0] + 0.5 * grid.step;
             v += grid.step) {
            y[0] = v;
            best = std::min(best, objective(y));
        }
    } else {
        for (double v0 = grid.lower[0]; v0 <= grid.upper[0] + 0.5 * grid.step;
             v0 += grid.step) {
            y[0] = v0;
            for (double v1 = grid.lower[1]; v1 <= grid.upper[1] + 0.5 * grid.step;
                 v1 += grid.step) {
                y[1] = v1;
                best = std::min(best, objective(y));
            }
        }
    }
    return objective(candidate) <= best + tol;
}

} // namespace zowcvx
