#pragma once

#include <functional>
#include <stdexcept>
#include <utility>

#include <Eigen/Core>

#include "zowcvx/oracle.hpp"
#include "zowcvx/prox.hpp"

namespace zowcvx {

// One evaluation of a smooth surrogate f_mu of the nonsmooth part f.
struct SmoothEval {
    double value = 0.0;
    Vector gradient;
    Matrix hessian;
};

// Composite objective phi(x) = f(x) + r(x), where f is only reachable
// through a stochastic zeroth-order oracle and r has an exact prox.
//
// Everything beyond {oracle, regularizer} is an optional capability used
// by baselines, diagnostics and tests; solvers that need one throw
// CapabilityError when it is absent. rho_estimate bounds the weak-convexity
// modulus of f (hypomonotonicity of its subgradients); lipschitz_estimate
// bounds subgradient norms on the region the iterates are expected to visit.
struct CompositeProblem {
    StochasticOracle oracle;
    ProxRegularizer regularizer;

    double rho_estimate = 0.0;
    double lipschitz_estimate = 1.0;

    // Exact phi(x) = f(x) + r(x). Reporting and diagnostics only; solver
    // update rules never read it.
    std::function<double(const Vector&)> full_objective;

    // Subgradient of F(.; token) at x.
    std::function<Vector(const Vector&, SampleToken)> sample_subgradient;

    // Subgradient of the full f at x.
    std::function<Vector(const Vector&)> full_subgradient;

    // Exact minimizer of  F(y; token) + r(y) + ||y - x||^2 / (2 alpha).
    std::function<Vector(const Vector&, SampleToken, double)> proxpoint_solve;

    // Smooth surrogate family: for mu > 0 returns f_mu(y) with gradient and
    // Hessian, where f <= f_mu <= f + mu pointwise and f_mu inherits the
    // weak-convexity bound rho_estimate for every mu.
    std::function<SmoothEval(const Vector&, double)> smooth_family;

    Eigen::Index dimension() const noexcept { return oracle.dimension(); }
};

inline CompositeProblem make_composite_problem(StochasticOracle oracle,
                                               ProxRegularizer regularizer) {
    if (oracle.dimension() != regularizer.dimension) {
        throw std::invalid_argument(
            "make_composite_problem: oracle and regularizer dimensions differ");
    }
    CompositeProblem p{std::move(oracle), std::move(regularizer)};
    return p;
}

} // namespace zowcvx
