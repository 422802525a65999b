#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "zowcvx/errors.hpp"
#include "zowcvx/problem.hpp"
#include "zowcvx/rng.hpp"
#include "zowcvx/smoothing.hpp"

namespace zowcvx {

enum class ScheduleLaw {
    Constant,            // alpha_t = alpha0
    ConstantOverHorizon, // alpha_t = alpha0 / sqrt(T + 1)
    InverseSqrt,         // alpha_t = alpha0 / sqrt(t + 1)
};

inline const char* to_string(ScheduleLaw law) {
    switch (law) {
    case ScheduleLaw::Constant: return "constant";
    case ScheduleLaw::ConstantOverHorizon: return "constant-over-horizon";
    case ScheduleLaw::InverseSqrt: return "inverse-sqrt";
    }
    return "unknown";
}

inline ScheduleLaw schedule_law_from_string(const std::string& name) {
    if (name == "constant") return ScheduleLaw::Constant;
    if (name == "constant-over-horizon") return ScheduleLaw::ConstantOverHorizon;
    if (name == "inverse-sqrt") return ScheduleLaw::InverseSqrt;
    throw ConfigError("unknown schedule law: " + name);
}

// Nonincreasing step-size sequence alpha_0..alpha_T. Every step must stay
// within (0, 1/2] so the smoothing radii derived from it are admissible;
// the largest step is alpha(0) under all three laws.
class StepSchedule {
public:
    StepSchedule(double alpha0, ScheduleLaw law, std::int64_t horizon)
        : alpha0_(alpha0), law_(law), horizon_(horizon) {
        if (!(alpha0 > 0.0) || !std::isfinite(alpha0)) {
            throw std::invalid_argument("StepSchedule: alpha0 must be positive");
        }
        if (horizon < 0) {
            throw std::invalid_argument("StepSchedule: horizon must be >= 0");
        }
        if (alpha(0) > 0.5) {
            std::ostringstream msg;
            msg << "StepSchedule: largest step " << alpha(0)
                << " exceeds 1/2; smoothing needs u2 <= u1 / 2";
            throw ScheduleViolation(msg.str());
        }
    }

    double alpha0() const noexcept { return alpha0_; }
    ScheduleLaw law() const noexcept { return law_; }
    std::int64_t horizon() const noexcept { return horizon_; }

    double alpha(std::int64_t t) const {
        if (t < 0 || t > horizon_) {
            throw std::invalid_argument("StepSchedule::alpha: t out of range");
        }
        switch (law_) {
        case ScheduleLaw::Constant:
            return alpha0_;
        case ScheduleLaw::ConstantOverHorizon:
            return alpha0_ / std::sqrt(static_cast<double>(horizon_) + 1.0);
        case ScheduleLaw::InverseSqrt:
            return alpha0_ / std::sqrt(static_cast<double>(t) + 1.0);
        }
        return alpha0_;
    }

    // alpha_0..alpha_T; these are both the step sizes and the sampling
    // weights of the returned iterate index.
    std::vector<double> weights() const {
        std::vector<double> w(static_cast<std::size_t>(horizon_) + 1);
        for (std::int64_t t = 0; t <= horizon_; ++t) {
            w[static_cast<std::size_t>(t)] = alpha(t);
        }
        return w;
    }

    // Every step must satisfy alpha_t < min{1/rho_bar, (rho_bar - rho)/2}.
    void check_admissible(double rho_bar, double rho) const {
        const double limit = std::min(1.0 / rho_bar, 0.5 * (rho_bar - rho));
        if (!(alpha(0) < limit)) {
            std::ostringstream msg;
            msg << "StepSchedule: step " << alpha(0)
                << " not below min{1/rho_bar, (rho_bar - rho)/2} = " << limit;
            throw ScheduleViolation(msg.str());
        }
    }

private:
    double alpha0_;
    ScheduleLaw law_;
    std::int64_t horizon_;
};

struct SolverConfig {
    StepSchedule schedule;
    double rho_bar = 1.0;
    std::uint64_t seed = 0;
    std::int64_t log_stride = 1;
    std::int64_t snapshot_stride = 0; // 0 disables iterate snapshots
    std::optional<Vector> start_point;

    void validate(const CompositeProblem& problem) const {
        if (!(rho_bar > 0.0) || !std::isfinite(rho_bar)) {
            throw std::invalid_argument("SolverConfig: rho_bar must be positive");
        }
        if (!(rho_bar > problem.rho_estimate)) {
            throw std::invalid_argument(
                "SolverConfig: rho_bar must exceed the weak-convexity estimate");
        }
        if (log_stride < 1) {
            throw std::invalid_argument("SolverConfig: log_stride must be >= 1");
        }
        if (snapshot_stride < 0) {
            throw std::invalid_argument(
                "SolverConfig: snapshot_stride must be >= 0");
        }
        if (start_point && start_point->size() != problem.dimension()) {
            throw std::invalid_argument("SolverConfig: start_point dimension");
        }
        schedule.check_admissible(rho_bar, problem.rho_estimate);
    }
};

// Default over-relaxed envelope modulus when nothing better is known.
inline double default_rho_bar(const CompositeProblem& problem) {
    return 2.0 * problem.rho_estimate + 1.0;
}

struct LogPoint {
    std::int64_t t = 0;
    double alpha = 0.0;
    // Full objective phi(x_t) when the problem exposes it, NaN otherwise.
    double objective = std::numeric_limits<double>::quiet_NaN();
    // Oracle work spent to reach x_t (0 for the start point).
    std::int64_t oracle_calls = 0;
    double wall_ms = 0.0;
    std::optional<Vector> snapshot;
};

struct RunRecord {
    std::vector<LogPoint> trajectory; // iterates x_0..x_T at the log stride
    std::int64_t oracle_calls = 0;
    std::int64_t t_star = 0;
    Vector x_star;
    double wall_ms = 0.0;
    bool completed = false;
    std::string failure; // nonempty iff !completed

    // Objective at the last logged iterate (x_T on a completed run).
    double final_objective() const {
        if (trajectory.empty()) {
            return std::numeric_limits<double>::quiet_NaN();
        }
        return trajectory.back().objective;
    }
};

// Index draw with P(i) proportional to weights[i]; consumes exactly one
// uniform variate.
inline std::int64_t sample_weighted_index(const std::vector<double>& weights,
                                          RngStream& rng) {
    if (weights.empty()) {
        throw std::invalid_argument("sample_weighted_index: empty weights");
    }
    double total = 0.0;
    for (double w : weights) {
        if (!(w > 0.0) || !std::isfinite(w)) {
            throw std::invalid_argument(
                "sample_weighted_index: weights must be positive and finite");
        }
        total += w;
    }
    const double target = rng.uniform() * total;
    double acc = 0.0;
    for (std::size_t i = 0; i + 1 < weights.size(); ++i) {
        acc += weights[i];
        if (target < acc) {
            return static_cast<std::int64_t>(i);
        }
    }
    return static_cast<std::int64_t>(weights.size()) - 1;
}

// Step 4 of the main loop: forward step along the gradient estimate, then
// the exact prox of the regularizer.
inline Vector psdfa_update(const CompositeProblem& problem, const Vector& x,
                           double alpha, const Vector& g) {
    if (!(alpha > 0.0)) {
        throw std::invalid_argument("psdfa_update: alpha must be positive");
    }
    return problem.regularizer.prox(x - alpha * g, alpha);
}

struct PsdfaStep {
    Vector next;
    TwoPointSample sample;
    SmoothingParams params;
};

// Steps 1-4 for one iteration: radii from the step size, one two-point
// gradient estimate (2 oracle calls), prox update.
inline PsdfaStep psdfa_step(const CompositeProblem& problem, const Vector& x,
                            double alpha, RngStream& rng) {
    const SmoothingParams params = schedule_params(alpha);
    TwoPointSample sample = two_point_estimate(problem.oracle, x, params, rng);
    Vector next = psdfa_update(problem, x, alpha, sample.gradient);
    return PsdfaStep{std::move(next), std::move(sample), params};
}

namespace detail {

// Shared driver for all three solvers. step(x, t, alpha, rng) -> x_{t+1}
// performs calls_per_iter oracle/subgradient/subproblem calls. The return
// index t* is drawn before the loop (it is independent of the trajectory),
// so x_{t*} can be captured in flight instead of storing every iterate.
// Fixed draw order per run: t*, then the start point, then per-iteration
// randomness; identical seeds therefore replay bit-identically.
template <typename StepFn>
RunRecord run_loop(const CompositeProblem& problem, const SolverConfig& config,
                   std::int64_t calls_per_iter, StepFn&& step) {
    config.validate(problem);
    const std::int64_t horizon = config.schedule.horizon();

    RngStream rng(config.seed);
    RunRecord record;
    record.t_star = sample_weighted_index(config.schedule.weights(), rng);

    Vector x;
    if (config.start_point) {
        x = *config.start_point;
    } else {
        x = standard_normal_vector(rng, problem.dimension());
        x /= x.norm();
    }

    const auto started = std::chrono::steady_clock::now();
    const auto elapsed_ms = [&started]() {
        return std::chrono::duration<double, std::milli>(
                   std::chrono::steady_clock::now() - started)
            .count();
    };

    for (std::int64_t t = 0; t <= horizon; ++t) {
        const double alpha = config.schedule.alpha(t);
        if (t % config.log_stride == 0 || t == horizon) {
            LogPoint point;
            point.t = t;
            point.alpha = alpha;
            if (problem.full_objective) {
                point.objective = problem.full_objective(x);
            }
            point.oracle_calls = record.oracle_calls;
            point.wall_ms = elapsed_ms();
            if (config.snapshot_stride > 0 && t % config.snapshot_stride == 0) {
                point.snapshot = x;
            }
            record.trajectory.push_back(std::move(point));
        }
        if (t == record.t_star) {
            record.x_star = x;
        }
        try {
            x = step(x, t, alpha, rng);
        } catch (const Error& err) {
            record.failure = err.what();
            record.wall_ms = elapsed_ms();
            return record;
        }
        record.oracle_calls += calls_per_iter;
    }

    record.wall_ms = elapsed_ms();
    record.completed = true;
    return record;
}

} // namespace detail

// Main loop of the derivative-free solver; 2(T+1) oracle evaluations.
inline RunRecord run_psdfa(const CompositeProblem& problem,
                           const SolverConfig& config) {
    return detail::run_loop(
        problem, config, 2,
        [&problem](const Vector& x, std::int64_t, double alpha, RngStream& rng) {
            return psdfa_step(problem, x, alpha, rng).next;
        });
}

// Baseline: x_{t+1} = prox_{alpha r}(x_t - alpha v_t) with v_t a sampled
// subgradient of F(.; xi_t); (T+1) subgradient calls.
inline RunRecord run_stochastic_subgradient(const CompositeProblem& problem,
                                            const SolverConfig& config) {
    if (!problem.sample_subgradient) {
        throw CapabilityError(
            "run_stochastic_subgradient: problem has no per-sample subgradient");
    }
    return detail::run_loop(
        problem, config, 1,
        [&problem](const Vector& x, std::int64_t, double alpha, RngStream& rng) {
            const SampleToken token = problem.oracle.sample(rng);
            Vector v = problem.sample_subgradient(x, token);
            if (!v.allFinite()) {
                throw EstimatorFailure(
                    "run_stochastic_subgradient: non-finite subgradient", x);
            }
            return problem.regularizer.prox(x - alpha * v, alpha);
        });
}

// Baseline: x_{t+1} = argmin_y F(y; xi_t) + r(y) + ||y - x_t||^2/(2 alpha);
// (T+1) subproblem solves.
inline RunRecord run_stochastic_proxpoint(const CompositeProblem& problem,
                                          const SolverConfig& config) {
    if (!problem.proxpoint_solve) {
        throw CapabilityError(
            "run_stochastic_proxpoint: problem has no subproblem solver");
    }
    return detail::run_loop(
        problem, config, 1,
        [&problem](const Vector& x, std::int64_t, double alpha, RngStream& rng) {
            const SampleToken token = problem.oracle.sample(rng);
            return problem.proxpoint_solve(x, token, alpha);
        });
}

} // namespace zowcvx
