#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <utility>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include "zowcvx/errors.hpp"
#include "zowcvx/problem.hpp"
#include "zowcvx/rng.hpp"
#include "zowcvx/smoothing.hpp"
#include "zowcvx/solvers.hpp"

namespace zowcvx {

struct EnvelopeResult {
    Vector x_hat;
    double envelope_value = 0.0;
    // Always rho_bar * ||x - x_hat||, by definition of the envelope gradient.
    double grad_norm = 0.0;
    std::int64_t inner_iterations = 0;
    // Final inner-solve residual. Homotopy paths may leave this above the
    // requested target when gradient roundoff blocks further progress.
    double inner_residual = 0.0;
    // Monte Carlo mode only: standard error of envelope_value; 0 otherwise.
    double value_std_error = 0.0;
};

struct EnvelopeOptions {
    std::int64_t max_inner_iterations = 10000;
    double target_residual = 1e-8;
    // Terminal surrogate accuracy of the smooth-family homotopy; the
    // reported value is exact up to this plus the first-order residual.
    double mu_floor = 1e-12;
    // Sample count of the frozen common-random-numbers set in MC mode.
    std::int64_t mc_samples = 4096;
};

namespace detail {

struct InnerSolve {
    Vector y;
    std::int64_t iterations = 0;
    double residual = std::numeric_limits<double>::infinity();
};

// Damped Newton on  S(y) = smooth_family(y, mu) + (rho_bar/2)||y - x||^2,
// driven through a decreasing mu homotopy. Each stage is strongly convex
// (the surrogate keeps the weak-convexity bound rho < rho_bar), so the
// stage minimizer is global and warm starts carry over. A stage that stops
// producing resolvable progress has hit the rounding floor of the smoothed
// gradient; descent then moves on instead of burning the budget, so the
// returned residual can sit above target_residual. The envelope value stays
// accurate to O(mu_floor) either way through the stage strong convexity.
inline InnerSolve newton_homotopy(const CompositeProblem& problem,
                                  const Vector& x, double rho_bar,
                                  const EnvelopeOptions& options) {
    InnerSolve solve;
    solve.y = x;
    const Eigen::Index n = x.size();

    const double scale = std::max(1.0, std::abs(problem.full_objective(x)));
    double mu = 1e-2 * scale;
    bool last_stage = false;
    while (!last_stage) {
        if (mu <= options.mu_floor) {
            mu = options.mu_floor;
            last_stage = true;
        }
        const double stage_tol =
            last_stage ? options.target_residual
                       : std::max(options.target_residual, 1e-3 * mu);
        double stage_best = std::numeric_limits<double>::infinity();
        int no_progress = 0;
        for (;;) {
            if (solve.iterations >= options.max_inner_iterations) {
                throw ConvergenceError(
                    "moreau_envelope: Newton budget exhausted", solve.residual);
            }
            SmoothEval eval = problem.smooth_family(solve.y, mu);
            Vector grad = eval.gradient + rho_bar * (solve.y - x);
            solve.residual = grad.norm();
            if (solve.residual <= stage_tol) {
                break;
            }
            const bool improved = solve.residual < 0.99 * stage_best;
            stage_best = std::min(stage_best, solve.residual);
            Matrix hessian = eval.hessian;
            hessian.diagonal().array() += rho_bar;
            Vector direction = -hessian.ldlt().solve(grad);
            if (!direction.allFinite() || grad.dot(direction) >= 0.0) {
                direction = -grad;
            }
            const double slope = grad.dot(direction);
            const double value0 =
                eval.value + 0.5 * rho_bar * (solve.y - x).squaredNorm();
            double step = 1.0;
            Vector trial(n);
            double value = value0;
            for (int halvings = 0; halvings < 60; ++halvings) {
                trial = solve.y + step * direction;
                const SmoothEval trial_eval = problem.smooth_family(trial, mu);
                value = trial_eval.value +
                        0.5 * rho_bar * (trial - x).squaredNorm();
                if (value <= value0 + 1e-4 * step * slope) {
                    break;
                }
                // Once the predicted decrease sinks below value roundoff the
                // Armijo test is noise; accept on gradient-norm descent
                // instead of rejecting workable late Newton steps.
                if (std::abs(step * slope) <= 1e-10 * std::abs(value0)) {
                    const Vector trial_grad =
                        trial_eval.gradient + rho_bar * (trial - x);
                    if (trial_grad.norm() < solve.residual) {
                        break;
                    }
                }
                step *= 0.5;
            }
            solve.y = trial;
            ++solve.iterations;
            const bool value_progress =
                (value0 - value) > 1e-13 * std::max(1.0, std::abs(value0));
            if (improved || value_progress) {
                no_progress = 0;
            } else if (++no_progress >= 30) {
                break;
            }
        }
        mu *= 0.1;
    }
    return solve;
}

// Proximal gradient with backtracking on the smooth part, staged over the
// same mu homotopy; handles nonzero regularizers. Stages exit on the same
// no-resolvable-progress rule as the Newton path, so the returned residual
// can sit above target_residual once rounding dominates.
inline InnerSolve prox_gradient_homotopy(const CompositeProblem& problem,
                                         const Vector& x, double rho_bar,
                                         const EnvelopeOptions& options) {
    InnerSolve solve;
    solve.y = x;

    const auto composite_value = [&](const Vector& y, double mu) {
        return problem.smooth_family(y, mu).value +
               problem.regularizer.value(y) +
               0.5 * rho_bar * (y - x).squaredNorm();
    };

    const double scale = std::max(1.0, std::abs(problem.full_objective(x)));
    double mu = 1e-2 * scale;
    double step = 1.0 / (rho_bar + problem.lipschitz_estimate);
    bool last_stage = false;
    while (!last_stage) {
        if (mu <= std::max(options.mu_floor, 1e-10)) {
            last_stage = true;
        }
        const double stage_tol =
            last_stage ? options.target_residual
                       : std::max(options.target_residual, 1e-3 * mu);
        double stage_best = std::numeric_limits<double>::infinity();
        int no_progress = 0;
        for (;;) {
            if (solve.iterations >= options.max_inner_iterations) {
                throw ConvergenceError(
                    "moreau_envelope: proximal-gradient budget exhausted",
                    solve.residual);
            }
            SmoothEval eval = problem.smooth_family(solve.y, mu);
            Vector grad = eval.gradient + rho_bar * (solve.y - x);
            const double smooth0 =
                eval.value + 0.5 * rho_bar * (solve.y - x).squaredNorm();
            const double value0 = smooth0 + problem.regularizer.value(solve.y);
            step = std::min(step * 1.3, 1.0 / rho_bar);
            Vector next;
            for (int halvings = 0; halvings < 60; ++halvings) {
                next = problem.regularizer.prox(solve.y - step * grad, step);
                const Vector delta = next - solve.y;
                const double bound = smooth0 + grad.dot(delta) +
                                     delta.squaredNorm() / (2.0 * step);
                const double smooth_next =
                    problem.smooth_family(next, mu).value +
                    0.5 * rho_bar * (next - x).squaredNorm();
                if (smooth_next <= bound + 1e-14 * scale) {
                    break;
                }
                step *= 0.5;
            }
            solve.residual = (next - solve.y).norm() / step;
            const double value = composite_value(next, mu);
            solve.y = next;
            ++solve.iterations;
            if (solve.residual <= stage_tol) {
                break;
            }
            const bool improved = solve.residual < 0.99 * stage_best;
            stage_best = std::min(stage_best, solve.residual);
            const bool value_progress =
                (value0 - value) > 1e-13 * std::max(1.0, std::abs(value0));
            if (improved || value_progress) {
                no_progress = 0;
            } else if (++no_progress >= 30) {
                break;
            }
        }
        mu *= 0.1;
    }
    return solve;
}

// Projected subgradient with the strongly-convex step law; last resort when
// no smooth surrogate exists. Converges like 1/k, so callers must accept
// correspondingly loose residual targets.
inline InnerSolve prox_subgradient(const CompositeProblem& problem,
                                   const Vector& x, double rho_bar,
                                   const EnvelopeOptions& options,
                                   Vector& best, double& best_value) {
    InnerSolve solve;
    solve.y = x;
    const double strong = rho_bar - problem.rho_estimate;
    for (std::int64_t k = 0; k < options.max_inner_iterations; ++k) {
        const double step = 2.0 / (strong * static_cast<double>(k + 2));
        Vector grad = problem.full_subgradient(solve.y) +
                      rho_bar * (solve.y - x);
        Vector next = problem.regularizer.prox(solve.y - step * grad, step);
        solve.residual = (next - solve.y).norm() / step;
        solve.y = next;
        ++solve.iterations;
        const double value = problem.full_objective(solve.y) +
                             0.5 * rho_bar * (solve.y - x).squaredNorm();
        if (value < best_value) {
            best_value = value;
            best = solve.y;
        }
        if (solve.residual <= options.target_residual) {
            return solve;
        }
    }
    throw ConvergenceError("moreau_envelope: subgradient budget exhausted",
                           solve.residual);
}

} // namespace detail

// Evaluates the envelope  min_y phi(y) + (rho_bar/2)||y - x||^2  and its
// proximal point. With `smoothing` set, phi's nonsmooth part is replaced by
// its outer Gaussian smoothing at radius u1 and the inner problem is solved
// on a frozen common-random-numbers sample average (rng required); the
// reported value then carries a Monte Carlo standard error. Without
// smoothing the solve is exact, preferring a Newton homotopy on the
// problem's smooth surrogate family.
inline EnvelopeResult
moreau_envelope(const CompositeProblem& problem, const Vector& x,
                double rho_bar,
                const std::optional<SmoothingParams>& smoothing = std::nullopt,
                const EnvelopeOptions& options = {}, RngStream* rng = nullptr) {
    if (x.size() != problem.dimension()) {
        throw std::invalid_argument("moreau_envelope: dimension mismatch");
    }
    if (!(rho_bar > 0.0) || !std::isfinite(rho_bar)) {
        throw std::invalid_argument("moreau_envelope: rho_bar must be positive");
    }
    if (rho_bar <= problem.rho_estimate) {
        std::ostringstream msg;
        msg << "moreau_envelope: rho_bar=" << rho_bar
            << " does not exceed the weak-convexity estimate "
            << problem.rho_estimate << "; inner problem may not be convex";
        throw IllPosedError(msg.str());
    }

    EnvelopeResult result;

    if (smoothing) {
        if (rng == nullptr) {
            throw std::invalid_argument(
                "moreau_envelope: smoothed mode needs an rng");
        }
        // Frozen sample set: the inner objective becomes a deterministic
        // sample average, so the fixed-point iteration can be driven to a
        // genuine residual; the O(1/sqrt(N)) sampling bias is surfaced
        // through value_std_error instead of being hidden in the residual.
        const Eigen::Index n = problem.dimension();
        const std::int64_t count = options.mc_samples;
        std::vector<SampleToken> tokens(static_cast<std::size_t>(count));
        Matrix directions(n, count);
        for (std::int64_t k = 0; k < count; ++k) {
            tokens[static_cast<std::size_t>(k)] = problem.oracle.sample(*rng);
            directions.col(k) = standard_normal_vector(*rng, n);
        }
        const double u = smoothing->u1;
        const auto frozen_gradient = [&](const Vector& y) {
            Vector g = Vector::Zero(n);
            for (std::int64_t k = 0; k < count; ++k) {
                const SampleToken token = tokens[static_cast<std::size_t>(k)];
                const double base = problem.oracle.eval(y, token);
                const double shifted =
                    problem.oracle.eval(y + u * directions.col(k), token);
                g += ((shifted - base) / u) * directions.col(k);
            }
            return Vector(g / static_cast<double>(count));
        };

        const double step =
            1.0 / (rho_bar + problem.lipschitz_estimate *
                                 std::sqrt(static_cast<double>(n)) / u);
        Vector y = x;
        double residual = std::numeric_limits<double>::infinity();
        std::int64_t iterations = 0;
        while (true) {
            if (iterations >= options.max_inner_iterations) {
                throw ConvergenceError(
                    "moreau_envelope: smoothed-mode budget exhausted", residual);
            }
            const Vector grad = frozen_gradient(y) + rho_bar * (y - x);
            const Vector next =
                problem.regularizer.prox(y - step * grad, step);
            residual = (next - y).norm() / step;
            y = next;
            ++iterations;
            if (residual <= options.target_residual) {
                break;
            }
        }

        // Value of the frozen sample average at the fixed point.
        double mean = 0.0;
        double m2 = 0.0;
        for (std::int64_t k = 0; k < count; ++k) {
            const double v = problem.oracle.eval(
                y + u * directions.col(k), tokens[static_cast<std::size_t>(k)]);
            const double delta = v - mean;
            mean += delta / static_cast<double>(k + 1);
            m2 += delta * (v - mean);
        }
        result.x_hat = y;
        result.envelope_value = mean + problem.regularizer.value(y) +
                                0.5 * rho_bar * (y - x).squaredNorm();
        result.value_std_error =
            std::sqrt(m2 / static_cast<double>(count - 1) /
                      static_cast<double>(count));
        result.inner_iterations = iterations;
        result.inner_residual = residual;
        result.grad_norm = rho_bar * (x - y).norm();
        return result;
    }

    if (!problem.full_objective) {
        throw CapabilityError(
            "moreau_envelope: exact mode needs the full objective");
    }

    const auto true_value = [&](const Vector& y) {
        return problem.full_objective(y) +
               0.5 * rho_bar * (y - x).squaredNorm();
    };

    // y = x is always a candidate, which makes minorization of phi(x)
    // automatic no matter how the inner solve fares.
    Vector best = x;
    double best_value = true_value(x);

    detail::InnerSolve solve;
    if (problem.smooth_family && problem.regularizer.identically_zero) {
        solve = detail::newton_homotopy(problem, x, rho_bar, options);
    } else if (problem.smooth_family) {
        solve = detail::prox_gradient_homotopy(problem, x, rho_bar, options);
    } else if (problem.full_subgradient) {
        solve = detail::prox_subgradient(problem, x, rho_bar, options, best,
                                         best_value);
    } else {
        throw CapabilityError(
            "moreau_envelope: exact mode needs a smooth surrogate family or a "
            "full subgradient");
    }

    if (true_value(solve.y) < best_value) {
        best_value = true_value(solve.y);
        best = solve.y;
    }
    result.x_hat = best;
    result.envelope_value = best_value;
    result.grad_norm = rho_bar * (x - best).norm();
    result.inner_iterations = solve.iterations;
    result.inner_residual = solve.residual;
    return result;
}

struct WeakConvexityEstimate {
    double rho_hat = 0.0;
    Vector x_at; // maximizing probe pair
    Vector y_at;
};

// Empirical hypomonotonicity modulus: the largest violation of subgradient
// monotonicity over random probe pairs in the ball of the given radius,
// clipped at zero.
inline WeakConvexityEstimate
estimate_weak_convexity(const CompositeProblem& problem, std::int64_t probes,
                        RngStream& rng, double radius = 1.0) {
    if (probes < 2) {
        throw std::invalid_argument("estimate_weak_convexity: probes >= 2");
    }
    if (!problem.full_subgradient) {
        throw CapabilityError(
            "estimate_weak_convexity: problem has no full subgradient");
    }
    const Eigen::Index n = problem.dimension();
    WeakConvexityEstimate out;
    out.x_at = Vector::Zero(n);
    out.y_at = Vector::Zero(n);
    double worst = 0.0;
    for (std::int64_t k = 0; k < probes; ++k) {
        const Vector x = uniform_ball_vector(rng, n, radius);
        const Vector y = uniform_ball_vector(rng, n, radius);
        const double dist_sq = (x - y).squaredNorm();
        if (dist_sq < 1e-24) {
            continue; // degenerate pair, skip
        }
        const Vector v = problem.full_subgradient(x);
        const Vector w = problem.full_subgradient(y);
        const double ratio = -(v - w).dot(x - y) / dist_sq;
        if (ratio > worst) {
            worst = ratio;
            out.x_at = x;
            out.y_at = y;
        }
    }
    out.rho_hat = std::max(0.0, worst);
    return out;
}

// Largest full-subgradient norm over random probes in the given ball; an
// empirical stand-in for the Lipschitz constant of f.
inline double estimate_lipschitz(const CompositeProblem& problem,
                                 std::int64_t probes, RngStream& rng,
                                 double radius = 1.0) {
    if (probes < 1) {
        throw std::invalid_argument("estimate_lipschitz: probes >= 1");
    }
    if (!problem.full_subgradient) {
        throw CapabilityError(
            "estimate_lipschitz: problem has no full subgradient");
    }
    double worst = 0.0;
    for (std::int64_t k = 0; k < probes; ++k) {
        const Vector x = uniform_ball_vector(rng, problem.dimension(), radius);
        worst = std::max(worst, problem.full_subgradient(x).norm());
    }
    return worst;
}

struct TracePoint {
    std::int64_t t = 0;
    double grad_norm = std::numeric_limits<double>::quiet_NaN();
    double envelope_value = std::numeric_limits<double>::quiet_NaN();
    double inner_residual = std::numeric_limits<double>::quiet_NaN();
    bool ok = false;
};

// Envelope gradient norms along a run's snapshotted iterates (every
// `stride`-th logged t). Failed envelope solves mark their point and the
// trace continues. Evaluates the exact envelope: at the step sizes where
// the smoothed and exact envelopes differ measurably, the gap is bounded
// by u1 times the smoothing-accuracy constant and is far below the traced
// quantities themselves.
inline std::vector<TracePoint>
stationarity_trace(const RunRecord& record, const CompositeProblem& problem,
                   double rho_bar, std::int64_t stride,
                   const EnvelopeOptions& options = {}) {
    if (stride < 1) {
        throw std::invalid_argument("stationarity_trace: stride must be >= 1");
    }
    std::vector<TracePoint> trace;
    bool any_snapshot = false;
    for (const LogPoint& point : record.trajectory) {
        if (!point.snapshot) {
            continue;
        }
        any_snapshot = true;
        if (point.t % stride != 0) {
            continue;
        }
        TracePoint entry;
        entry.t = point.t;
        try {
            const EnvelopeResult env = moreau_envelope(
                problem, *point.snapshot, rho_bar, std::nullopt, options);
            entry.grad_norm = env.grad_norm;
            entry.envelope_value = env.envelope_value;
            entry.inner_residual = env.inner_residual;
            entry.ok = true;
        } catch (const ConvergenceError& err) {
            entry.inner_residual = err.residual();
        } catch (const Error&) {
            // leave the point marked as failed
        }
        trace.push_back(std::move(entry));
    }
    if (!any_snapshot) {
        throw ConfigError(
            "stationarity_trace: record has no iterate snapshots; re-run with "
            "snapshot logging enabled");
    }
    return trace;
}

// Step-weighted mean of squared envelope gradient norms over the successful
// trace points: the scalar convergence measure of the analysis.
inline double alpha_weighted_mean_square(const std::vector<TracePoint>& trace,
                                         const StepSchedule& schedule) {
    double weight_sum = 0.0;
    double total = 0.0;
    for (const TracePoint& point : trace) {
        if (!point.ok) {
            continue;
        }
        const double alpha = schedule.alpha(point.t);
        weight_sum += alpha;
        total += alpha * point.grad_norm * point.grad_norm;
    }
    if (weight_sum == 0.0) {
        throw std::invalid_argument(
            "alpha_weighted_mean_square: no successful trace points");
    }
    return total / weight_sum;
}

// Reports (without enforcing) the analysis' step-size condition for a
// schedule: the explicit bound and the derived contraction margin
// delta0 = 1 - alpha_0 * rho_bar.
struct StepConditionReport {
    double max_step = 0.0;
    double limit = 0.0;
    double delta0 = 0.0;
    bool satisfied = false;
};

inline StepConditionReport step_condition_report(const StepSchedule& schedule,
                                                 double rho_bar, double rho) {
    StepConditionReport report;
    report.max_step = schedule.alpha(0);
    report.limit = std::min(1.0 / rho_bar, 0.5 * (rho_bar - rho));
    report.delta0 = 1.0 - report.max_step * rho_bar;
    report.satisfied = report.max_step < report.limit && report.max_step <= 0.5;
    return report;
}

} // namespace zowcvx
