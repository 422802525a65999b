#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <sstream>
#include <stdexcept>

#include <Eigen/Core>

#include "zowcvx/errors.hpp"
#include "zowcvx/oracle.hpp"
#include "zowcvx/rng.hpp"

namespace zowcvx {

// Pair of Gaussian smoothing radii for the double-smoothing estimator.
// The outer radius u1 controls the surrogate being differentiated; the
// inner radius u2 is the finite-difference length. Admissible pairs need
// u2 <= u1 / 2 so the inner perturbation stays subordinate to the outer.
struct SmoothingParams {
    double u1;
    double u2;

    SmoothingParams(double u1_in, double u2_in) : u1(u1_in), u2(u2_in) {
        if (!(u1 > 0.0) || !(u2 > 0.0) || !std::isfinite(u1) ||
            !std::isfinite(u2)) {
            throw std::invalid_argument(
                "SmoothingParams: radii must be positive and finite");
        }
        if (u2 > 0.5 * u1) {
            std::ostringstream msg;
            msg << "SmoothingParams: schedule requires u2 <= u1 / 2, got u1="
                << u1 << " u2=" << u2;
            throw ScheduleViolation(msg.str());
        }
    }
};

// Radii coupled to a step size: u1 = alpha^2, u2 = alpha^3. Any alpha in
// (0, 1/2] automatically satisfies u2 <= u1 / 2.
inline SmoothingParams schedule_params(double alpha) {
    if (!(alpha > 0.0) || !std::isfinite(alpha)) {
        throw std::invalid_argument("schedule_params: alpha must be positive");
    }
    if (alpha > 0.5) {
        std::ostringstream msg;
        msg << "schedule_params: alpha=" << alpha
            << " exceeds 1/2, which would break u2 <= u1 / 2";
        throw ScheduleViolation(msg.str());
    }
    return SmoothingParams(alpha * alpha, alpha * alpha * alpha);
}

// Optional a-priori constants of a problem instance. All are bounds, not
// measurements: bias_bound scales the O(u2/u1) estimator bias,
// second_moment_bound caps E||g||^2, noise_deviation_bound caps the oracle
// noise spread, smoothing_gap_coeff scales the f <= f_u <= f + u * c *
// sqrt(n + 2) sandwich, and recursion_constant aggregates the per-step
// error terms of the convergence analysis.
struct TheoryConstants {
    std::optional<double> bias_bound;
    std::optional<double> second_moment_bound;
    std::optional<double> noise_deviation_bound;
    std::optional<double> smoothing_gap_coeff;
    std::optional<double> recursion_constant;

    void validate() const {
        const auto check = [](const std::optional<double>& v, const char* name) {
            if (v && (!(*v > 0.0) || !std::isfinite(*v))) {
                throw std::invalid_argument(
                    std::string("TheoryConstants: ") + name + " must be positive");
            }
        };
        check(bias_bound, "bias_bound");
        check(second_moment_bound, "second_moment_bound");
        check(noise_deviation_bound, "noise_deviation_bound");
        check(smoothing_gap_coeff, "smoothing_gap_coeff");
        check(recursion_constant, "recursion_constant");
    }
};

// One gradient estimate together with the randomness that produced it.
struct TwoPointSample {
    Vector gradient;      // g = (F(x + u1 z1 + u2 z2) - F(x + u1 z1)) / u2 * z2
    SampleToken token;    // realization shared by both evaluations
    Vector z1;
    Vector z2;
    double value_far;     // F(x + u1 z1 + u2 z2; token)
    double value_near;    // F(x + u1 z1; token)
};

// Deterministic core of the estimator: both oracle evaluations share one
// token, so the oracle noise cancels in the difference and only the
// directional increment along z2 survives.
inline TwoPointSample two_point_estimate(const StochasticOracle& oracle,
                                         const Vector& x,
                                         const SmoothingParams& params,
                                         SampleToken token, const Vector& z1,
                                         const Vector& z2) {
    if (z1.size() != oracle.dimension() || z2.size() != oracle.dimension()) {
        throw std::invalid_argument("two_point_estimate: direction dimensions");
    }
    TwoPointSample s;
    s.token = token;
    s.z1 = z1;
    s.z2 = z2;
    const Vector near_point = x + params.u1 * z1;
    const Vector far_point = near_point + params.u2 * z2;
    s.value_far = oracle.eval(far_point, token);
    s.value_near = oracle.eval(near_point, token);
    if (!std::isfinite(s.value_far)) {
        throw EstimatorFailure("two_point_estimate: non-finite oracle value",
                               far_point);
    }
    if (!std::isfinite(s.value_near)) {
        throw EstimatorFailure("two_point_estimate: non-finite oracle value",
                               near_point);
    }
    s.gradient = ((s.value_far - s.value_near) / params.u2) * z2;
    return s;
}

// Sampling front end; draw order is fixed (token, then z1, then z2) so runs
// replay bit-identically from a seed.
inline TwoPointSample two_point_estimate(const StochasticOracle& oracle,
                                         const Vector& x,
                                         const SmoothingParams& params,
                                         RngStream& rng) {
    const SampleToken token = oracle.sample(rng);
    const Vector z1 = standard_normal_vector(rng, oracle.dimension());
    const Vector z2 = standard_normal_vector(rng, oracle.dimension());
    return two_point_estimate(oracle, x, params, token, z1, z2);
}

struct McValue {
    double value = 0.0;
    double std_error = 0.0;
    std::int64_t samples = 0;
};

// Monte Carlo estimate of the Gaussian-smoothed value
// f_u(x) = E[F(x + u Z; xi)], fresh (xi, Z) per sample.
inline McValue smoothed_value_mc(const StochasticOracle& oracle, const Vector& x,
                                 double u, std::int64_t samples,
                                 RngStream& rng) {
    if (!(u > 0.0) || samples < 2) {
        throw std::invalid_argument(
            "smoothed_value_mc: needs u > 0 and at least 2 samples");
    }
    double mean = 0.0;
    double m2 = 0.0;
    for (std::int64_t k = 0; k < samples; ++k) {
        const SampleToken token = oracle.sample(rng);
        const Vector z = standard_normal_vector(rng, oracle.dimension());
        const double v = oracle.eval(x + u * z, token);
        if (!std::isfinite(v)) {
            throw EstimatorFailure("smoothed_value_mc: non-finite oracle value",
                                   x + u * z);
        }
        const double delta = v - mean;
        mean += delta / static_cast<double>(k + 1);
        m2 += delta * (v - mean);
    }
    McValue out;
    out.value = mean;
    out.std_error = std::sqrt(m2 / static_cast<double>(samples - 1) /
                              static_cast<double>(samples));
    out.samples = samples;
    return out;
}

struct McGradient {
    Vector gradient;
    Vector std_error; // per-component standard error of the mean
    std::int64_t samples = 0;
};

// Monte Carlo estimate of grad f_u(x) via exact single-smoothing
// differences (F(x + u Z) - F(x)) / u * Z with a shared token, so its mean
// is the exact smoothed gradient and it serves as the unbiased reference
// the double-smoothing estimator is compared against.
inline McGradient smoothed_gradient_mc(const StochasticOracle& oracle,
                                       const Vector& x, double u,
                                       std::int64_t samples, RngStream& rng) {
    if (!(u > 0.0) || samples < 2) {
        throw std::invalid_argument(
            "smoothed_gradient_mc: needs u > 0 and at least 2 samples");
    }
    const Eigen::Index n = oracle.dimension();
    Vector mean = Vector::Zero(n);
    Vector m2 = Vector::Zero(n);
    for (std::int64_t k = 0; k < samples; ++k) {
        const SampleToken token = oracle.sample(rng);
        const Vector z = standard_normal_vector(rng, n);
        const double base = oracle.eval(x, token);
        const double shifted = oracle.eval(x + u * z, token);
        if (!std::isfinite(base) || !std::isfinite(shifted)) {
            throw EstimatorFailure("smoothed_gradient_mc: non-finite oracle value",
                                   x);
        }
        const Vector g = ((shifted - base) / u) * z;
        const Vector delta = g - mean;
        mean += delta / static_cast<double>(k + 1);
        m2 += delta.cwiseProduct(g - mean);
    }
    McGradient out;
    out.gradient = mean;
    out.std_error = (m2 / static_cast<double>(samples - 1) /
                     static_cast<double>(samples))
                        .cwiseSqrt();
    out.samples = samples;
    return out;
}

} // namespace zowcvx
