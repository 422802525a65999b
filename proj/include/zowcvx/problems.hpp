#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <memory>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Eigenvalues>

#include "zowcvx/errors.hpp"
#include "zowcvx/problem.hpp"
#include "zowcvx/rng.hpp"

namespace zowcvx {

// min over x of (1/m) sum_i |<a_i, x>^2 - b_i|, targets planted from a unit
// signal so the optimum value is exactly zero (also at -x_bar).
struct PhaseRetrievalInstance {
    Matrix A;     // m x d, rows a_i
    Vector b;     // m
    Vector x_bar; // unit norm

    Eigen::Index d() const noexcept { return A.cols(); }
    Eigen::Index m() const noexcept { return A.rows(); }
};

// min over stacked z = (x, y) in R^{2d} of (1/m) sum_i |<u_i,x><v_i,y> - b_i|;
// planted from one unit vector on the 2d-sphere split into (x_bar, y_bar).
struct BlindDeconvolutionInstance {
    Matrix U; // m x d, rows u_i
    Matrix V; // m x d, rows v_i
    Vector b; // m
    Vector x_bar;
    Vector y_bar;

    Eigen::Index d() const noexcept { return U.cols(); }
    Eigen::Index m() const noexcept { return U.rows(); }
};

// Draw order is part of the format: A row-major, then the raw signal; the
// targets reuse the exact row dot products of the term evaluations, so the
// objective vanishes identically at the planted signal.
inline PhaseRetrievalInstance generate_phase_retrieval(Eigen::Index d,
                                                       Eigen::Index m,
                                                       RngStream& rng) {
    if (d < 1 || m < 1) {
        throw std::invalid_argument("generate_phase_retrieval: d, m must be >= 1");
    }
    PhaseRetrievalInstance inst;
    inst.A.resize(m, d);
    for (Eigen::Index i = 0; i < m; ++i) {
        for (Eigen::Index j = 0; j < d; ++j) {
            inst.A(i, j) = rng.normal();
        }
    }
    inst.x_bar = standard_normal_vector(rng, d);
    inst.x_bar /= inst.x_bar.norm();
    inst.b.resize(m);
    for (Eigen::Index i = 0; i < m; ++i) {
        const double s = inst.A.row(i).dot(inst.x_bar);
        inst.b[i] = s * s;
    }
    return inst;
}

inline BlindDeconvolutionInstance
generate_blind_deconvolution(Eigen::Index d, Eigen::Index m, RngStream& rng) {
    if (d < 1 || m < 1) {
        throw std::invalid_argument(
            "generate_blind_deconvolution: d, m must be >= 1");
    }
    BlindDeconvolutionInstance inst;
    inst.U.resize(m, d);
    for (Eigen::Index i = 0; i < m; ++i) {
        for (Eigen::Index j = 0; j < d; ++j) {
            inst.U(i, j) = rng.normal();
        }
    }
    inst.V.resize(m, d);
    for (Eigen::Index i = 0; i < m; ++i) {
        for (Eigen::Index j = 0; j < d; ++j) {
            inst.V(i, j) = rng.normal();
        }
    }
    // One Gaussian vector on the 2d-sphere, normalized jointly then split.
    Vector z = standard_normal_vector(rng, 2 * d);
    z /= z.norm();
    inst.x_bar = z.head(d);
    inst.y_bar = z.tail(d);
    inst.b.resize(m);
    for (Eigen::Index i = 0; i < m; ++i) {
        inst.b[i] = inst.U.row(i).dot(inst.x_bar) * inst.V.row(i).dot(inst.y_bar);
    }
    return inst;
}

namespace detail {

// Sign with the kink tie rule: at a kink the sample subdifferential interval
// contains 0, so the zero element is chosen.
inline double sign0(double v) {
    return (v > 0.0) ? 1.0 : (v < 0.0 ? -1.0 : 0.0);
}

inline void check_term_index(Eigen::Index i, Eigen::Index m, const char* who) {
    if (i < 0 || i >= m) {
        throw std::invalid_argument(std::string(who) + ": term index out of range");
    }
}

} // namespace detail

inline double pr_term(const PhaseRetrievalInstance& inst, Eigen::Index i,
                      const Vector& x) {
    detail::check_term_index(i, inst.m(), "pr_term");
    const double s = inst.A.row(i).dot(x);
    return std::abs(s * s - inst.b[i]);
}

inline double pr_full_objective(const PhaseRetrievalInstance& inst,
                                const Vector& x) {
    double total = 0.0;
    for (Eigen::Index i = 0; i < inst.m(); ++i) {
        total += pr_term(inst, i, x);
    }
    return total / static_cast<double>(inst.m());
}

inline Vector pr_term_subgradient(const PhaseRetrievalInstance& inst,
                                  Eigen::Index i, const Vector& x) {
    detail::check_term_index(i, inst.m(), "pr_term_subgradient");
    const double s = inst.A.row(i).dot(x);
    const double sign = detail::sign0(s * s - inst.b[i]);
    return (sign * 2.0 * s) * inst.A.row(i).transpose();
}

inline Vector pr_full_subgradient(const PhaseRetrievalInstance& inst,
                                  const Vector& x) {
    Vector g = Vector::Zero(inst.d());
    for (Eigen::Index i = 0; i < inst.m(); ++i) {
        g += pr_term_subgradient(inst, i, x);
    }
    return g / static_cast<double>(inst.m());
}

inline double bd_term(const BlindDeconvolutionInstance& inst, Eigen::Index i,
                      const Vector& z) {
    detail::check_term_index(i, inst.m(), "bd_term");
    const Eigen::Index d = inst.d();
    const double p = inst.U.row(i).dot(z.head(d));
    const double q = inst.V.row(i).dot(z.tail(d));
    return std::abs(p * q - inst.b[i]);
}

inline double bd_full_objective(const BlindDeconvolutionInstance& inst,
                                const Vector& z) {
    double total = 0.0;
    for (Eigen::Index i = 0; i < inst.m(); ++i) {
        total += bd_term(inst, i, z);
    }
    return total / static_cast<double>(inst.m());
}

inline Vector bd_term_subgradient(const BlindDeconvolutionInstance& inst,
                                  Eigen::Index i, const Vector& z) {
    detail::check_term_index(i, inst.m(), "bd_term_subgradient");
    const Eigen::Index d = inst.d();
    const double p = inst.U.row(i).dot(z.head(d));
    const double q = inst.V.row(i).dot(z.tail(d));
    const double sign = detail::sign0(p * q - inst.b[i]);
    Vector g(2 * d);
    g.head(d) = (sign * q) * inst.U.row(i).transpose();
    g.tail(d) = (sign * p) * inst.V.row(i).transpose();
    return g;
}

inline Vector bd_full_subgradient(const BlindDeconvolutionInstance& inst,
                                  const Vector& z) {
    Vector g = Vector::Zero(2 * inst.d());
    for (Eigen::Index i = 0; i < inst.m(); ++i) {
        g += bd_term_subgradient(inst, i, z);
    }
    return g / static_cast<double>(inst.m());
}

// Hypomonotonicity bounds for the subgradient maps: the smooth branches of
// |<a,x>^2 - b| have Hessians +-2 a a^T, and the branch switches are convex
// kinks, so 2/m * sum ||a_i||^2 dominates the modulus. The bilinear case is
// bounded by the spectral norm of its mixed second derivative, ||u|| ||v||.
inline double pr_rho_bound(const PhaseRetrievalInstance& inst) {
    double total = 0.0;
    for (Eigen::Index i = 0; i < inst.m(); ++i) {
        total += inst.A.row(i).squaredNorm();
    }
    return 2.0 * total / static_cast<double>(inst.m());
}

inline double bd_rho_bound(const BlindDeconvolutionInstance& inst) {
    double total = 0.0;
    for (Eigen::Index i = 0; i < inst.m(); ++i) {
        total += inst.U.row(i).norm() * inst.V.row(i).norm();
    }
    return total / static_cast<double>(inst.m());
}

// Subgradient-norm bounds over the ball of the given radius.
inline double pr_lipschitz_bound(const PhaseRetrievalInstance& inst,
                                 double radius = 2.0) {
    double worst = 0.0;
    for (Eigen::Index i = 0; i < inst.m(); ++i) {
        worst = std::max(worst, inst.A.row(i).squaredNorm());
    }
    return 2.0 * worst * radius;
}

inline double bd_lipschitz_bound(const BlindDeconvolutionInstance& inst,
                                 double radius = 2.0) {
    double worst = 0.0;
    for (Eigen::Index i = 0; i < inst.m(); ++i) {
        worst = std::max(worst, inst.U.row(i).norm() * inst.V.row(i).norm());
    }
    return worst * radius * M_SQRT2;
}

namespace detail {

// Exact minimizer over p of |p q - b| + c (p - p0)^2 for fixed q != 0.
// The function is convex piecewise-quadratic; the minimizer is a branch
// stationary point or the breakpoint, so evaluating the true objective at
// those three candidates is exact.
inline double abs_bilinear_1d(double q, double b, double c, double p0) {
    if (q == 0.0) {
        return p0;
    }
    const auto value = [&](double p) {
        return std::abs(p * q - b) + c * (p - p0) * (p - p0);
    };
    const double candidates[3] = {p0 - q / (2.0 * c), p0 + q / (2.0 * c), b / q};
    double best_p = candidates[0];
    double best_v = value(candidates[0]);
    for (int k = 1; k < 3; ++k) {
        const double v = value(candidates[k]);
        if (v < best_v) {
            best_v = v;
            best_p = candidates[k];
        }
    }
    return best_p;
}

// Real roots of a quartic via the companion-matrix eigenvalues.
inline std::vector<double> quartic_real_roots(double c4, double c3, double c2,
                                              double c1, double c0) {
    std::vector<double> roots;
    if (c4 == 0.0) {
        return roots; // degenerate leading coefficient: callers avoid this
    }
    Eigen::Matrix4d companion = Eigen::Matrix4d::Zero();
    companion(0, 3) = -c0 / c4;
    companion(1, 3) = -c1 / c4;
    companion(2, 3) = -c2 / c4;
    companion(3, 3) = -c3 / c4;
    companion(1, 0) = 1.0;
    companion(2, 1) = 1.0;
    companion(3, 2) = 1.0;
    const Eigen::EigenSolver<Eigen::Matrix4d> solver(companion);
    for (int k = 0; k < 4; ++k) {
        const auto root = solver.eigenvalues()[k];
        if (std::abs(root.imag()) <= 1e-8 * (1.0 + std::abs(root.real()))) {
            roots.push_back(root.real());
        }
    }
    return roots;
}

} // namespace detail

// Exact minimizer of pr_term(i, y) + ||y - x||^2 / (2 alpha). The
// displacement y - x is parallel to a_i, which reduces the subproblem to a
// scalar piecewise-quadratic in s = <a_i, y> solved in closed form.
inline Vector pr_proxpoint_subproblem(const PhaseRetrievalInstance& inst,
                                      Eigen::Index i, const Vector& x,
                                      double alpha) {
    detail::check_term_index(i, inst.m(), "pr_proxpoint_subproblem");
    if (!(alpha > 0.0)) {
        throw std::invalid_argument("pr_proxpoint_subproblem: alpha must be > 0");
    }
    const auto a = inst.A.row(i);
    const double norm_sq = a.squaredNorm();
    if (norm_sq == 0.0) {
        return x; // term constant in y
    }
    const double b = inst.b[i];
    const double s0 = a.dot(x);
    const double c = 1.0 / (2.0 * alpha * norm_sq);

    const auto value = [&](double s) {
        return std::abs(s * s - b) + c * (s - s0) * (s - s0);
    };

    // Candidates: stationary points of the outer branch (s^2 >= b) clamped
    // into each ray, the inner-branch stationary point when that branch is
    // convex, the breakpoints, and s0 itself (makes term(x)=0 exact).
    std::vector<double> candidates;
    candidates.push_back(s0);
    const double outer = c * s0 / (1.0 + c);
    if (b <= 0.0) {
        candidates.push_back(outer);
    } else {
        const double root = std::sqrt(b);
        candidates.push_back(std::max(outer, root));
        candidates.push_back(std::min(outer, -root));
        candidates.push_back(root);
        candidates.push_back(-root);
        if (c > 1.0) {
            const double inner =
                std::clamp(c * s0 / (c - 1.0), -root, root);
            candidates.push_back(inner);
        }
    }

    double best_s = candidates.front();
    double best_v = value(best_s);
    for (std::size_t k = 1; k < candidates.size(); ++k) {
        const double v = value(candidates[k]);
        if (v < best_v) {
            best_v = v;
            best_s = candidates[k];
        }
    }
    return x + ((best_s - s0) / norm_sq) * a.transpose();
}

// Exact minimizer of bd_term(i, w) + ||w - z||^2 / (2 alpha). Reduces to the
// plane (p, q) = (<u_i, w_x>, <v_i, w_y>). Global candidates (sign-branch
// stationary points and the quartic critical points along the hyperbola
// p q = b) seed alternating exact 1-D minimization, with a grid restart
// safeguard before reporting nonconvergence.
inline Vector bd_proxpoint_subproblem(const BlindDeconvolutionInstance& inst,
                                      Eigen::Index i, const Vector& z,
                                      double alpha) {
    detail::check_term_index(i, inst.m(), "bd_proxpoint_subproblem");
    if (!(alpha > 0.0)) {
        throw std::invalid_argument("bd_proxpoint_subproblem: alpha must be > 0");
    }
    const Eigen::Index d = inst.d();
    const auto u = inst.U.row(i);
    const auto v = inst.V.row(i);
    const double nu = u.squaredNorm();
    const double nv = v.squaredNorm();
    if (nu == 0.0 || nv == 0.0) {
        return z; // term constant in the active block
    }
    const double b = inst.b[i];
    const double p0 = u.dot(z.head(d));
    const double q0 = v.dot(z.tail(d));
    const double cu = 1.0 / (2.0 * alpha * nu);
    const double cv = 1.0 / (2.0 * alpha * nv);

    const auto value = [&](double p, double q) {
        return std::abs(p * q - b) + cu * (p - p0) * (p - p0) +
               cv * (q - q0) * (q - q0);
    };

    std::vector<std::pair<double, double>> candidates;
    candidates.emplace_back(p0, q0);
    // Stationary points of the two sign branches.
    const double det = 1.0 - 1.0 / (4.0 * cu * cv);
    if (det != 0.0) {
        for (const double sign : {1.0, -1.0}) {
            const double p = (p0 - sign * q0 / (2.0 * cu)) / det;
            const double q = q0 - sign * p / (2.0 * cv);
            candidates.emplace_back(p, q);
        }
    }
    // Critical points of the proximity cost along the kink set p q = b.
    if (b == 0.0) {
        candidates.emplace_back(0.0, q0);
        candidates.emplace_back(p0, 0.0);
    } else {
        for (const double p :
             detail::quartic_real_roots(cu, -cu * p0, 0.0, cv * b * q0,
                                        -cv * b * b)) {
            if (std::abs(p) > 1e-100) {
                candidates.emplace_back(p, b / p);
            }
        }
    }

    double p = candidates.front().first;
    double q = candidates.front().second;
    double best = value(p, q);
    for (std::size_t k = 1; k < candidates.size(); ++k) {
        const double val = value(candidates[k].first, candidates[k].second);
        if (val < best) {
            best = val;
            p = candidates[k].first;
            q = candidates[k].second;
        }
    }

    // Alternating exact coordinate solves; the candidate seeding puts the
    // start at or next to the global minimizer, so this is a polish loop.
    const double tol = 1e-10;
    double residual = std::numeric_limits<double>::infinity();
    for (int restart = 0; restart < 2; ++restart) {
        for (int it = 0; it < 200; ++it) {
            const double p_next = detail::abs_bilinear_1d(q, b, cu, p0);
            const double q_next = detail::abs_bilinear_1d(p_next, b, cv, q0);
            residual = std::hypot(p_next - p, q_next - q);
            p = p_next;
            q = q_next;
            if (residual <= tol * (1.0 + std::abs(p) + std::abs(q))) {
                Vector w = z;
                w.head(d) += ((p - p0) / nu) * u.transpose();
                w.tail(d) += ((q - q0) / nv) * v.transpose();
                return w;
            }
        }
        if (restart == 0) {
            // Safeguard: coarse grid over a box covering the candidates.
            double lo_p = p0, hi_p = p0, lo_q = q0, hi_q = q0;
            for (const auto& cand : candidates) {
                lo_p = std::min(lo_p, cand.first);
                hi_p = std::max(hi_p, cand.first);
                lo_q = std::min(lo_q, cand.second);
                hi_q = std::max(hi_q, cand.second);
            }
            const double pad_p = 1.0 + 0.1 * (hi_p - lo_p);
            const double pad_q = 1.0 + 0.1 * (hi_q - lo_q);
            double best_grid = std::numeric_limits<double>::infinity();
            for (int gp = 0; gp <= 40; ++gp) {
                const double pp =
                    lo_p - pad_p + (hi_p - lo_p + 2.0 * pad_p) * gp / 40.0;
                for (int gq = 0; gq <= 40; ++gq) {
                    const double qq =
                        lo_q - pad_q + (hi_q - lo_q + 2.0 * pad_q) * gq / 40.0;
                    if (value(pp, qq) < best_grid) {
                        best_grid = value(pp, qq);
                        p = pp;
                        q = qq;
                    }
                }
            }
        }
    }
    throw ConvergenceError(
        "bd_proxpoint_subproblem: alternation did not reach tolerance", residual);
}

namespace detail {

// sqrt(c^2 + mu^2) smoothing of |c|: dominates |c| pointwise, exceeds it by
// at most mu, and keeps the weak-convexity bounds of the underlying terms.
inline void pseudo_huber(double c, double mu, double& val, double& dv,
                         double& ddv) {
    const double r = std::hypot(c, mu);
    val = r;
    dv = c / r;
    ddv = mu * mu / (r * r * r);
}

} // namespace detail

inline SmoothEval pr_smooth_eval(const PhaseRetrievalInstance& inst,
                                 const Vector& x, double mu) {
    if (!(mu > 0.0)) {
        throw std::invalid_argument("pr_smooth_eval: mu must be positive");
    }
    const Eigen::Index d = inst.d();
    const Eigen::Index m = inst.m();
    SmoothEval out;
    out.value = 0.0;
    out.gradient = Vector::Zero(d);
    out.hessian = Matrix::Zero(d, d);
    for (Eigen::Index i = 0; i < m; ++i) {
        const auto a = inst.A.row(i);
        const double s = a.dot(x);
        double val, dv, ddv;
        detail::pseudo_huber(s * s - inst.b[i], mu, val, dv, ddv);
        out.value += val;
        out.gradient += (dv * 2.0 * s) * a.transpose();
        out.hessian += (ddv * 4.0 * s * s + dv * 2.0) * (a.transpose() * a);
    }
    const double scale = 1.0 / static_cast<double>(m);
    out.value *= scale;
    out.gradient *= scale;
    out.hessian *= scale;
    return out;
}

inline SmoothEval bd_smooth_eval(const BlindDeconvolutionInstance& inst,
                                 const Vector& z, double mu) {
    if (!(mu > 0.0)) {
        throw std::invalid_argument("bd_smooth_eval: mu must be positive");
    }
    const Eigen::Index d = inst.d();
    const Eigen::Index m = inst.m();
    SmoothEval out;
    out.value = 0.0;
    out.gradient = Vector::Zero(2 * d);
    out.hessian = Matrix::Zero(2 * d, 2 * d);
    for (Eigen::Index i = 0; i < m; ++i) {
        const auto u = inst.U.row(i);
        const auto v = inst.V.row(i);
        const double p = u.dot(z.head(d));
        const double q = v.dot(z.tail(d));
        double val, dv, ddv;
        detail::pseudo_huber(p * q - inst.b[i], mu, val, dv, ddv);
        out.value += val;
        Vector grad_c(2 * d);
        grad_c.head(d) = q * u.transpose();
        grad_c.tail(d) = p * v.transpose();
        out.gradient += dv * grad_c;
        out.hessian += ddv * (grad_c * grad_c.transpose());
        out.hessian.topRightCorner(d, d) += dv * (u.transpose() * v);
        out.hessian.bottomLeftCorner(d, d) += dv * (v.transpose() * u);
    }
    const double scale = 1.0 / static_cast<double>(m);
    out.value *= scale;
    out.gradient *= scale;
    out.hessian *= scale;
    return out;
}

// Assembled composite problems (r identically zero, as in the experiments).

inline CompositeProblem
make_phase_retrieval_problem(PhaseRetrievalInstance instance) {
    auto inst = std::make_shared<const PhaseRetrievalInstance>(std::move(instance));
    const Eigen::Index d = inst->d();
    std::vector<std::function<double(const Vector&)>> terms;
    terms.reserve(static_cast<std::size_t>(inst->m()));
    for (Eigen::Index i = 0; i < inst->m(); ++i) {
        terms.emplace_back(
            [inst, i](const Vector& x) { return pr_term(*inst, i, x); });
    }
    CompositeProblem p = make_composite_problem(
        finite_sum_oracle(d, std::move(terms)), zero_regularizer(d));
    p.rho_estimate = pr_rho_bound(*inst);
    p.lipschitz_estimate = pr_lipschitz_bound(*inst);
    p.full_objective = [inst](const Vector& x) {
        return pr_full_objective(*inst, x);
    };
    p.sample_subgradient = [inst](const Vector& x, SampleToken token) {
        return pr_term_subgradient(*inst, static_cast<Eigen::Index>(token), x);
    };
    p.full_subgradient = [inst](const Vector& x) {
        return pr_full_subgradient(*inst, x);
    };
    p.proxpoint_solve = [inst](const Vector& x, SampleToken token, double alpha) {
        return pr_proxpoint_subproblem(*inst, static_cast<Eigen::Index>(token), x,
                                       alpha);
    };
    p.smooth_family = [inst](const Vector& x, double mu) {
        return pr_smooth_eval(*inst, x, mu);
    };
    return p;
}

inline CompositeProblem
make_blind_deconvolution_problem(BlindDeconvolutionInstance instance) {
    auto inst =
        std::make_shared<const BlindDeconvolutionInstance>(std::move(instance));
    const Eigen::Index n = 2 * inst->d();
    std::vector<std::function<double(const Vector&)>> terms;
    terms.reserve(static_cast<std::size_t>(inst->m()));
    for (Eigen::Index i = 0; i < inst->m(); ++i) {
        terms.emplace_back(
            [inst, i](const Vector& z) { return bd_term(*inst, i, z); });
    }
    CompositeProblem p = make_composite_problem(
        finite_sum_oracle(n, std::move(terms)), zero_regularizer(n));
    p.rho_estimate = bd_rho_bound(*inst);
    p.lipschitz_estimate = bd_lipschitz_bound(*inst);
    p.full_objective = [inst](const Vector& z) {
        return bd_full_objective(*inst, z);
    };
    p.sample_subgradient = [inst](const Vector& z, SampleToken token) {
        return bd_term_subgradient(*inst, static_cast<Eigen::Index>(token), z);
    };
    p.full_subgradient = [inst](const Vector& z) {
        return bd_full_subgradient(*inst, z);
    };
    p.proxpoint_solve = [inst](const Vector& z, SampleToken token, double alpha) {
        return bd_proxpoint_subproblem(*inst, static_cast<Eigen::Index>(token), z,
                                       alpha);
    };
    p.smooth_family = [inst](const Vector& z, double mu) {
        return bd_smooth_eval(*inst, z, mu);
    };
    return p;
}

// ---------------------------------------------------------------------------
// Instance files: `# kind,d,m,seed` header, the values row, then the matrix
// rows (U then V for deconvolution), the target row, and the signal row(s).
// 17 significant digits make the round trip bit-exact.

namespace detail {

inline std::string format_g17(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline void write_row(std::ostream& out, const Vector& row) {
    for (Eigen::Index j = 0; j < row.size(); ++j) {
        if (j > 0) {
            out << ',';
        }
        out << format_g17(row[j]);
    }
    out << '\n';
}

inline void write_matrix(std::ostream& out, const Matrix& mat) {
    for (Eigen::Index i = 0; i < mat.rows(); ++i) {
        write_row(out, mat.row(i).transpose());
    }
}

inline Vector parse_row(const std::string& line, Eigen::Index expected,
                        const char* what) {
    Vector row(expected);
    std::size_t pos = 0;
    for (Eigen::Index j = 0; j < expected; ++j) {
        const std::size_t next = line.find(',', pos);
        const std::string field = (next == std::string::npos)
                                      ? line.substr(pos)
                                      : line.substr(pos, next - pos);
        try {
            row[j] = std::stod(field);
        } catch (const std::exception&) {
            throw ConfigError(std::string("instance file: bad number in ") + what);
        }
        if (next == std::string::npos && j + 1 < expected) {
            throw ConfigError(std::string("instance file: short row in ") + what);
        }
        pos = next + 1;
    }
    return row;
}

inline std::string next_line(std::istream& in, const char* what) {
    std::string line;
    if (!std::getline(in, line)) {
        throw ConfigError(std::string("instance file: truncated before ") + what);
    }
    if (!line.empty() && line.back() == '\r') {
        line.pop_back();
    }
    return line;
}

} // namespace detail

inline void save_instance_csv(const PhaseRetrievalInstance& inst,
                              std::uint64_t seed, const std::string& path) {
    std::ofstream out(path);
    if (!out) {
        throw ConfigError("save_instance_csv: cannot open " + path);
    }
    out << "# kind,d,m,seed\n";
    out << "phase," << inst.d() << ',' << inst.m() << ',' << seed << '\n';
    detail::write_matrix(out, inst.A);
    detail::write_row(out, inst.b);
    detail::write_row(out, inst.x_bar);
}

inline void save_instance_csv(const BlindDeconvolutionInstance& inst,
                              std::uint64_t seed, const std::string& path) {
    std::ofstream out(path);
    if (!out) {
        throw ConfigError("save_instance_csv: cannot open " + path);
    }
    out << "# kind,d,m,seed\n";
    out << "blind," << inst.d() << ',' << inst.m() << ',' << seed << '\n';
    detail::write_matrix(out, inst.U);
    detail::write_matrix(out, inst.V);
    detail::write_row(out, inst.b);
    detail::write_row(out, inst.x_bar);
    detail::write_row(out, inst.y_bar);
}

struct LoadedInstance {
    std::string kind; // "phase" or "blind"
    std::uint64_t seed = 0;
    std::optional<PhaseRetrievalInstance> phase;
    std::optional<BlindDeconvolutionInstance> blind;
};

inline LoadedInstance load_instance_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("load_instance_csv: cannot open " + path);
    }
    const std::string header = detail::next_line(in, "header");
    if (header.rfind("# kind", 0) != 0) {
        throw ConfigError("load_instance_csv: missing `# kind,d,m,seed` header");
    }
    const std::string meta = detail::next_line(in, "metadata row");
    std::istringstream fields(meta);
    std::string kind, d_str, m_str, seed_str;
    if (!std::getline(fields, kind, ',') || !std::getline(fields, d_str, ',') ||
        !std::getline(fields, m_str, ',') || !std::getline(fields, seed_str)) {
        throw ConfigError("load_instance_csv: malformed metadata row");
    }
    LoadedInstance loaded;
    loaded.kind = kind;
    Eigen::Index d = 0, m = 0;
    try {
        d = static_cast<Eigen::Index>(std::stoll(d_str));
        m = static_cast<Eigen::Index>(std::stoll(m_str));
        loaded.seed = std::stoull(seed_str);
    } catch (const std::exception&) {
        throw ConfigError("load_instance_csv: malformed metadata row");
    }
    if (d < 1 || m < 1) {
        throw ConfigError("load_instance_csv: dimensions must be positive");
    }

    const auto read_matrix = [&](Eigen::Index rows, Eigen::Index cols,
                                 const char* what) {
        Matrix mat(rows, cols);
        for (Eigen::Index i = 0; i < rows; ++i) {
            mat.row(i) =
                detail::parse_row(detail::next_line(in, what), cols, what)
                    .transpose();
        }
        return mat;
    };

    if (kind == "phase") {
        PhaseRetrievalInstance inst;
        inst.A = read_matrix(m, d, "A");
        inst.b = detail::parse_row(detail::next_line(in, "b"), m, "b");
        inst.x_bar =
            detail::parse_row(detail::next_line(in, "x_bar"), d, "x_bar");
        loaded.phase = std::move(inst);
    } else if (kind == "blind") {
        BlindDeconvolutionInstance inst;
        inst.U = read_matrix(m, d, "U");
        inst.V = read_matrix(m, d, "V");
        inst.b = detail::parse_row(detail::next_line(in, "b"), m, "b");
        inst.x_bar =
            detail::parse_row(detail::next_line(in, "x_bar"), d, "x_bar");
        inst.y_bar =
            detail::parse_row(detail::next_line(in, "y_bar"), d, "y_bar");
        loaded.blind = std::move(inst);
    } else {
        throw ConfigError("load_instance_csv: unknown kind `" + kind + "`");
    }
    return loaded;
}

} // namespace zowcvx
