#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdint>
#include <optional>
#include <vector>

#include "support.hpp"
#include "zowcvx/diagnostics.hpp"
#include "zowcvx/errors.hpp"
#include "zowcvx/problems.hpp"
#include "zowcvx/prox.hpp"
#include "zowcvx/rng.hpp"
#include "zowcvx/solvers.hpp"

using namespace zowcvx;
using zowcvx::testing::same_vec;

namespace {

double huber(double x) {
    const double a = std::abs(x);
    return a <= 1.0 ? 0.5 * x * x : a - 0.5;
}

} // namespace

TEST_CASE("envelope of the absolute value matches the Huber form",
          "[diagnostics]") {
    const CompositeProblem p = zowcvx::testing::abs_problem();
    const double points[] = {-3.0, -2.2, -1.0, -0.7, -0.25, 0.0,
                             0.3,  0.5,  1.0,  1.9,  3.0};
    for (const double x0 : points) {
        Vector x(1);
        x << x0;
        const EnvelopeResult env = moreau_envelope(p, x, 1.0);
        CHECK(std::abs(env.envelope_value - huber(x0)) < 1e-9);
        CHECK(std::abs(env.grad_norm - std::min(std::abs(x0), 1.0)) < 1e-7);
        CHECK(env.envelope_value <= std::abs(x0) + 1e-12);
        CHECK(env.value_std_error == 0.0);
    }
}

TEST_CASE("envelope of a quadratic is exact on the smooth path",
          "[diagnostics]") {
    const CompositeProblem p = zowcvx::testing::quadratic_problem(3);
    Vector x(3);
    x << 0.9, -1.4, 0.2;
    const double rho_bar = 2.0;
    const EnvelopeResult env = moreau_envelope(p, x, rho_bar);

    const Vector y_star = rho_bar / (1.0 + rho_bar) * x;
    const double value_star =
        0.5 * y_star.squaredNorm() +
        0.5 * rho_bar * (y_star - x).squaredNorm();
    CHECK(std::abs(env.envelope_value - value_star) < 1e-10);
    CHECK((env.x_hat - y_star).norm() < 1e-10);
    CHECK(std::abs(env.grad_norm - rho_bar * (x - y_star).norm()) < 1e-10);
    CHECK(env.inner_residual <= 1e-8);
    CHECK(env.inner_iterations >= 1);
}

TEST_CASE("composite quadratic plus l1 envelope matches soft thresholding",
          "[diagnostics]") {
    CompositeProblem p = zowcvx::testing::quadratic_problem(2);
    const double weight = 0.5;
    p.regularizer = l1_regularizer(2, weight);
    p.full_objective = [weight](const Vector& y) {
        return 0.5 * y.squaredNorm() + weight * y.lpNorm<1>();
    };

    Vector x(2);
    x << 1.0, -0.1;
    const double rho_bar = 2.0;
    const EnvelopeResult env = moreau_envelope(p, x, rho_bar);

    Vector y_star(2);
    for (Eigen::Index i = 0; i < 2; ++i) {
        y_star[i] = soft_threshold(rho_bar * x[i], weight) / (1.0 + rho_bar);
    }
    const double value_star = 0.5 * y_star.squaredNorm() +
                              weight * y_star.lpNorm<1>() +
                              0.5 * rho_bar * (y_star - x).squaredNorm();
    CHECK(std::abs(env.envelope_value - value_star) < 1e-8);
    CHECK((env.x_hat - y_star).norm() < 1e-6);
}

TEST_CASE("subgradient fallback solves a smooth inner problem",
          "[diagnostics]") {
    CompositeProblem p = zowcvx::testing::quadratic_problem(2);
    p.smooth_family = nullptr;

    Vector x(2);
    x << 0.6, -0.8;
    const double rho_bar = 2.0;
    const EnvelopeResult env = moreau_envelope(p, x, rho_bar);

    const Vector y_star = rho_bar / (1.0 + rho_bar) * x;
    const double value_star =
        0.5 * y_star.squaredNorm() +
        0.5 * rho_bar * (y_star - x).squaredNorm();
    CHECK(std::abs(env.envelope_value - value_star) < 1e-8);
    CHECK((env.x_hat - y_star).norm() < 1e-6);
    CHECK(env.inner_residual <= 1e-8);
    CHECK(env.inner_iterations < 10000);
}

TEST_CASE("subgradient fallback reports failure at a kink", "[diagnostics]") {
    CompositeProblem p = zowcvx::testing::abs_problem();
    p.smooth_family = nullptr;

    Vector x(1);
    x << 0.3;
    REQUIRE_THROWS_AS(moreau_envelope(p, x, 1.0), ConvergenceError);
    try {
        moreau_envelope(p, x, 1.0);
    } catch (const ConvergenceError& err) {
        CHECK(err.residual() > 0.1);
    }
}

TEST_CASE("smoothed envelope mode tracks the exact envelope",
          "[diagnostics]") {
    RngStream gen(2024);
    const CompositeProblem p =
        zowcvx::testing::noisy_quadratic_problem(3, 16, 0.5, gen);
    Vector x(3);
    x << 0.8, -0.3, 0.5;
    const double rho_bar = 2.0;
    const SmoothingParams params(0.2, 0.05);

    RngStream mc_a(77);
    const EnvelopeResult a =
        moreau_envelope(p, x, rho_bar, params, EnvelopeOptions{}, &mc_a);

    const Vector y_star = rho_bar / (1.0 + rho_bar) * x;
    const double exact_value =
        0.5 * y_star.squaredNorm() +
        0.5 * rho_bar * (y_star - x).squaredNorm();
    const double exact_grad = rho_bar * (x - y_star).norm();
    const double smoothing_shift =
        0.5 * params.u1 * params.u1 * static_cast<double>(x.size());

    CHECK(std::abs(a.envelope_value - exact_value - smoothing_shift) < 0.05);
    CHECK(std::abs(a.grad_norm - exact_grad) < 0.08);
    CHECK(a.value_std_error > 1e-4);
    CHECK(a.value_std_error < 0.05);
    CHECK(a.inner_residual <= 1e-8);

    RngStream mc_b(77);
    const EnvelopeResult b =
        moreau_envelope(p, x, rho_bar, params, EnvelopeOptions{}, &mc_b);
    REQUIRE(a.envelope_value == b.envelope_value);
    REQUIRE(a.value_std_error == b.value_std_error);
    REQUIRE(a.inner_iterations == b.inner_iterations);
    REQUIRE(same_vec(a.x_hat, b.x_hat));

    REQUIRE_THROWS_AS(moreau_envelope(p, x, rho_bar, params),
                      std::invalid_argument);
}

TEST_CASE("envelope argument validation", "[diagnostics]") {
    CompositeProblem p = zowcvx::testing::quadratic_problem(2);
    Vector x = Vector::Zero(2);

    REQUIRE_THROWS_AS(moreau_envelope(p, Vector::Zero(3), 2.0),
                      std::invalid_argument);
    REQUIRE_THROWS_AS(moreau_envelope(p, x, 0.0), std::invalid_argument);
    REQUIRE_THROWS_AS(moreau_envelope(p, x, -1.0), std::invalid_argument);

    CompositeProblem ill = zowcvx::testing::quadratic_problem(2);
    ill.rho_estimate = 3.0;
    REQUIRE_THROWS_AS(moreau_envelope(ill, x, 2.0), IllPosedError);

    CompositeProblem no_objective = zowcvx::testing::quadratic_problem(2);
    no_objective.full_objective = nullptr;
    REQUIRE_THROWS_AS(moreau_envelope(no_objective, x, 2.0), CapabilityError);

    CompositeProblem no_path = zowcvx::testing::quadratic_problem(2);
    no_path.smooth_family = nullptr;
    no_path.full_subgradient = nullptr;
    REQUIRE_THROWS_AS(moreau_envelope(no_path, x, 2.0), CapabilityError);
}

TEST_CASE("weak convexity estimate is zero for a convex quadratic",
          "[diagnostics]") {
    const CompositeProblem p = zowcvx::testing::quadratic_problem(3);
    RngStream rng(11);
    const WeakConvexityEstimate est = estimate_weak_convexity(p, 500, rng);
    CHECK(est.rho_hat == 0.0);
    CHECK(est.x_at.size() == 3);

    RngStream rng2(12);
    REQUIRE_THROWS_AS(estimate_weak_convexity(p, 1, rng2),
                      std::invalid_argument);

    CompositeProblem bare = zowcvx::testing::quadratic_problem(3);
    bare.full_subgradient = nullptr;
    REQUIRE_THROWS_AS(estimate_weak_convexity(bare, 10, rng2),
                      CapabilityError);
}

TEST_CASE("lipschitz estimate scales with the probe radius", "[diagnostics]") {
    const CompositeProblem p = zowcvx::testing::quadratic_problem(3);

    RngStream rng(21);
    const double l1 = estimate_lipschitz(p, 4000, rng, 1.0);
    CHECK(l1 > 0.8);
    CHECK(l1 <= 1.0 + 1e-12);

    RngStream rng2(21);
    const double l2 = estimate_lipschitz(p, 4000, rng2, 2.0);
    CHECK(l2 > 1.6);
    CHECK(l2 <= 2.0 + 1e-12);

    REQUIRE_THROWS_AS(estimate_lipschitz(p, 0, rng), std::invalid_argument);

    CompositeProblem bare = zowcvx::testing::quadratic_problem(3);
    bare.full_subgradient = nullptr;
    REQUIRE_THROWS_AS(estimate_lipschitz(bare, 10, rng), CapabilityError);
}

TEST_CASE("stationarity trace over a phase retrieval run", "[diagnostics]") {
    RngStream gen(501);
    const auto instance = generate_phase_retrieval(3, 9, gen);
    const CompositeProblem problem = make_phase_retrieval_problem(instance);
    const double rho_bar = default_rho_bar(problem);

    SolverConfig config{StepSchedule(1e-3, ScheduleLaw::Constant, 200),
                        rho_bar,
                        7,
                        50,
                        50,
                        std::nullopt};
    const RunRecord record = run_psdfa(problem, config);
    REQUIRE(record.completed);

    const std::vector<TracePoint> trace =
        stationarity_trace(record, problem, rho_bar, 50);
    REQUIRE(trace.size() == 5);
    for (std::size_t i = 0; i < trace.size(); ++i) {
        const TracePoint& point = trace[i];
        CHECK(point.t == static_cast<std::int64_t>(50 * i));
        REQUIRE(point.ok);
        CHECK(std::isfinite(point.grad_norm));
        CHECK(point.grad_norm >= 0.0);
        // Kink-active prox points bottom out at the rounding floor of the
        // smoothed gradient, well above the 1e-8 target.
        CHECK(point.inner_residual <= 1e-3);
        for (const LogPoint& row : record.trajectory) {
            if (row.t == point.t) {
                CHECK(point.envelope_value <= row.objective + 1e-9);
            }
        }
    }

    const std::vector<TracePoint> coarse =
        stationarity_trace(record, problem, rho_bar, 1000);
    REQUIRE(coarse.size() == 1);
    CHECK(coarse[0].t == 0);

    REQUIRE_THROWS_AS(stationarity_trace(record, problem, rho_bar, 0),
                      std::invalid_argument);

    SolverConfig no_snapshots = config;
    no_snapshots.snapshot_stride = 0;
    const RunRecord bare = run_psdfa(problem, no_snapshots);
    REQUIRE_THROWS_AS(stationarity_trace(bare, problem, rho_bar, 50),
                      ConfigError);
}

TEST_CASE("alpha weighted mean square weights by the step schedule",
          "[diagnostics]") {
    std::vector<TracePoint> trace;
    trace.push_back(TracePoint{0, 2.0, 0.0, 0.0, true});
    trace.push_back(TracePoint{1, 1.0, 0.0, 0.0, true});
    trace.push_back(TracePoint{2, 9.0, 0.0, 0.0, false});

    const StepSchedule constant(0.3, ScheduleLaw::Constant, 10);
    CHECK(std::abs(alpha_weighted_mean_square(trace, constant) - 2.5) <
          1e-12);

    std::vector<TracePoint> pair;
    pair.push_back(TracePoint{0, 2.0, 0.0, 0.0, true});
    pair.push_back(TracePoint{4, 0.5, 0.0, 0.0, true});
    const StepSchedule decaying(0.3, ScheduleLaw::InverseSqrt, 10);
    const double w0 = 0.3;
    const double w4 = 0.3 / std::sqrt(5.0);
    const double expected = (w0 * 4.0 + w4 * 0.25) / (w0 + w4);
    CHECK(std::abs(alpha_weighted_mean_square(pair, decaying) - expected) <
          1e-12);

    std::vector<TracePoint> failed;
    failed.push_back(TracePoint{0, 1.0, 0.0, 0.0, false});
    REQUIRE_THROWS_AS(alpha_weighted_mean_square(failed, constant),
                      std::invalid_argument);
    REQUIRE_THROWS_AS(alpha_weighted_mean_square({}, constant),
                      std::invalid_argument);
}

TEST_CASE("step condition report states the bound without enforcing it",
          "[diagnostics]") {
    const StepConditionReport ok = step_condition_report(
        StepSchedule(0.1, ScheduleLaw::Constant, 10), 2.0, 0.5);
    CHECK(ok.max_step == 0.1);
    CHECK(ok.limit == 0.5);
    CHECK(std::abs(ok.delta0 - 0.8) < 1e-15);
    CHECK(ok.satisfied);

    const StepConditionReport big = step_condition_report(
        StepSchedule(0.5, ScheduleLaw::Constant, 10), 2.5, 0.5);
    CHECK(std::abs(big.limit - 0.4) < 1e-15);
    CHECK(std::abs(big.delta0 - (-0.25)) < 1e-15);
    CHECK_FALSE(big.satisfied);

    const StepConditionReport edge = step_condition_report(
        StepSchedule(0.4, ScheduleLaw::Constant, 10), 2.5, 0.5);
    CHECK_FALSE(edge.satisfied);
}
