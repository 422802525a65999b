#pragma once

// Shared test fixtures: small problems with known closed forms.

#include <cmath>
#include <memory>
#include <utility>
#include <vector>

#include "zowcvx/oracle.hpp"
#include "zowcvx/problem.hpp"
#include "zowcvx/prox.hpp"
#include "zowcvx/rng.hpp"

namespace zowcvx::testing {

// Exact (bitwise-value) equality for Eigen containers; usable inside test
// assertions, unlike Eigen's coefficient-wise operator==.
inline bool same_vec(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    return a.size() == b.size() && (a.array() == b.array()).all();
}

inline bool same_mat(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
    return a.rows() == b.rows() && a.cols() == b.cols() &&
           (a.array() == b.array()).all();
}

// 1-D f(x) = |x| with every capability filled in. The smooth surrogate is
// sqrt(x^2 + mu^2), which sits in [f, f + mu].
inline CompositeProblem abs_problem() {
    auto oracle = finite_sum_oracle(
        1, {[](const Vector& x) { return std::abs(x[0]); }});
    CompositeProblem p =
        make_composite_problem(std::move(oracle), zero_regularizer(1));
    p.rho_estimate = 0.0;
    p.lipschitz_estimate = 1.0;
    p.full_objective = [](const Vector& x) { return std::abs(x[0]); };
    const auto subgrad = [](const Vector& x) {
        Vector g(1);
        g[0] = x[0] > 0.0 ? 1.0 : (x[0] < 0.0 ? -1.0 : 0.0);
        return g;
    };
    p.full_subgradient = subgrad;
    p.sample_subgradient = [subgrad](const Vector& x, SampleToken) {
        return subgrad(x);
    };
    p.proxpoint_solve = [](const Vector& x, SampleToken, double alpha) {
        Vector y(1);
        y[0] = soft_threshold(x[0], alpha);
        return y;
    };
    p.smooth_family = [](const Vector& x, double mu) {
        SmoothEval e;
        const double r = std::hypot(x[0], mu);
        e.value = r;
        e.gradient = Vector(1);
        e.gradient[0] = x[0] / r;
        e.hessian = Matrix(1, 1);
        e.hessian(0, 0) = mu * mu / (r * r * r);
        return e;
    };
    return p;
}

// n-D f(x) = ||x||^2 / 2, exact in every capability.
inline CompositeProblem quadratic_problem(Eigen::Index n) {
    auto oracle = finite_sum_oracle(
        n, {[](const Vector& x) { return 0.5 * x.squaredNorm(); }});
    CompositeProblem p =
        make_composite_problem(std::move(oracle), zero_regularizer(n));
    p.rho_estimate = 0.0;
    p.lipschitz_estimate = 4.0;
    p.full_objective = [](const Vector& x) { return 0.5 * x.squaredNorm(); };
    p.full_subgradient = [](const Vector& x) { return Vector(x); };
    p.sample_subgradient = [](const Vector& x, SampleToken) {
        return Vector(x);
    };
    p.proxpoint_solve = [](const Vector& x, SampleToken, double alpha) {
        return Vector(x / (1.0 + alpha));
    };
    p.smooth_family = [n](const Vector& x, double) {
        SmoothEval e;
        e.value = 0.5 * x.squaredNorm();
        e.gradient = x;
        e.hessian = Matrix::Identity(n, n);
        return e;
    };
    return p;
}

// n-D f(x) = ||x||_1 (convex, nonsmooth along every axis).
inline CompositeProblem l1_norm_problem(Eigen::Index n) {
    auto oracle =
        finite_sum_oracle(n, {[](const Vector& x) { return x.lpNorm<1>(); }});
    CompositeProblem p =
        make_composite_problem(std::move(oracle), zero_regularizer(n));
    p.rho_estimate = 0.0;
    p.lipschitz_estimate = std::sqrt(static_cast<double>(n));
    p.full_objective = [](const Vector& x) { return x.lpNorm<1>(); };
    const auto subgrad = [](const Vector& x) {
        Vector g(x.size());
        for (Eigen::Index i = 0; i < x.size(); ++i) {
            g[i] = x[i] > 0.0 ? 1.0 : (x[i] < 0.0 ? -1.0 : 0.0);
        }
        return g;
    };
    p.full_subgradient = subgrad;
    p.sample_subgradient = [subgrad](const Vector& x, SampleToken) {
        return subgrad(x);
    };
    return p;
}

// Pointwise maximum of affine pieces: f(x) = max_j (A.row(j) x + b_j).
struct MaxAffine {
    Matrix A;
    Vector b;
};

inline MaxAffine random_max_affine(Eigen::Index n, int pieces, RngStream& rng) {
    MaxAffine ma;
    ma.A = Matrix(pieces, n);
    ma.b = Vector(pieces);
    for (int j = 0; j < pieces; ++j) {
        for (Eigen::Index i = 0; i < n; ++i) {
            ma.A(j, i) = rng.normal();
        }
        ma.b[j] = rng.normal();
    }
    return ma;
}

inline CompositeProblem max_affine_problem(MaxAffine ma) {
    const Eigen::Index n = ma.A.cols();
    auto shared = std::make_shared<const MaxAffine>(std::move(ma));
    auto oracle = finite_sum_oracle(
        n, {[shared](const Vector& x) {
            return (shared->A * x + shared->b).maxCoeff();
        }});
    CompositeProblem p =
        make_composite_problem(std::move(oracle), zero_regularizer(n));
    p.rho_estimate = 0.0;
    p.lipschitz_estimate = shared->A.rowwise().norm().maxCoeff();
    p.full_objective = [shared](const Vector& x) {
        return (shared->A * x + shared->b).maxCoeff();
    };
    p.full_subgradient = [shared](const Vector& x) {
        Eigen::Index arg = 0;
        (shared->A * x + shared->b).maxCoeff(&arg);
        return Vector(shared->A.row(arg).transpose());
    };
    return p;
}

// Finite-sum quadratic with mean-zero linear noise:
// F(x; i) = ||x||^2 / 2 + <n_i, x>, sum_i n_i = 0, so f(x) = ||x||^2 / 2.
inline CompositeProblem noisy_quadratic_problem(Eigen::Index n, int terms,
                                                double sigma, RngStream& rng) {
    Matrix noise(terms, n);
    for (int i = 0; i < terms; ++i) {
        for (Eigen::Index j = 0; j < n; ++j) {
            noise(i, j) = sigma * rng.normal();
        }
    }
    noise.rowwise() -= noise.colwise().mean();
    auto shared = std::make_shared<const Matrix>(std::move(noise));

    std::vector<std::function<double(const Vector&)>> term_fns;
    for (int i = 0; i < terms; ++i) {
        term_fns.push_back([shared, i](const Vector& x) {
            return 0.5 * x.squaredNorm() + shared->row(i).dot(x);
        });
    }
    CompositeProblem p = make_composite_problem(
        finite_sum_oracle(n, std::move(term_fns)), zero_regularizer(n));
    p.rho_estimate = 0.0;
    p.lipschitz_estimate = 4.0 + sigma;
    p.full_objective = [](const Vector& x) { return 0.5 * x.squaredNorm(); };
    p.full_subgradient = [](const Vector& x) { return Vector(x); };
    p.sample_subgradient = [shared](const Vector& x, SampleToken token) {
        return Vector(x + shared->row(static_cast<Eigen::Index>(token))
                              .transpose());
    };
    p.proxpoint_solve = [shared](const Vector& x, SampleToken token,
                                 double alpha) {
        return Vector(
            (x - alpha * shared->row(static_cast<Eigen::Index>(token))
                             .transpose()) /
            (1.0 + alpha));
    };
    p.smooth_family = [n](const Vector& x, double) {
        SmoothEval e;
        e.value = 0.5 * x.squaredNorm();
        e.gradient = x;
        e.hessian = Matrix::Identity(n, n);
        return e;
    };
    return p;
}

} // namespace zowcvx::testing
