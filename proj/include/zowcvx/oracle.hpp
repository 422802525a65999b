#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <stdexcept>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "zowcvx/errors.hpp"
#include "zowcvx/rng.hpp"

namespace zowcvx {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

// Opaque identifier of one realization xi of the oracle's randomness.
// Finite-sum oracles use the component index; other oracles may pack
// whatever they need into the 64 bits.
using SampleToken = std::uint64_t;

// Noisy zeroth-order view of f(x) = E[F(x; xi)].
//
// eval() must be a deterministic function of (x, token): all randomness
// enters through sample(). This is what lets one realization be shared
// across the two evaluation points of a difference estimator, and what
// makes whole solver runs replayable from a seed.
//
// Oracles are immutable after construction and safe to share across
// concurrently running solves.
class StochasticOracle {
public:
    using EvalFn = std::function<double(const Vector&, SampleToken)>;
    using SampleFn = std::function<SampleToken(RngStream&)>;

    StochasticOracle(Eigen::Index dimension, EvalFn eval, SampleFn sample)
        : dimension_(dimension), eval_(std::move(eval)),
          sample_(std::move(sample)) {
        if (dimension_ < 1) {
            throw std::invalid_argument(
                "StochasticOracle: dimension must be at least 1");
        }
        if (!eval_ || !sample_) {
            throw std::invalid_argument(
                "StochasticOracle: eval and sample must be callable");
        }
    }

    Eigen::Index dimension() const noexcept { return dimension_; }

    double eval(const Vector& x, SampleToken token) const {
        if (x.size() != dimension_) {
            throw std::invalid_argument("StochasticOracle::eval: wrong dimension");
        }
        return eval_(x, token);
    }

    SampleToken sample(RngStream& rng) const { return sample_(rng); }

private:
    Eigen::Index dimension_;
    EvalFn eval_;
    SampleFn sample_;
};

// Oracle for f(x) = (1/m) * sum_i terms[i](x) under uniform component
// sampling; F(x; i) = terms[i](x).
inline StochasticOracle finite_sum_oracle(
    Eigen::Index dimension,
    std::vector<std::function<double(const Vector&)>> terms) {
    if (terms.empty()) {
        throw std::invalid_argument("finite_sum_oracle: needs at least one term");
    }
    for (const auto& term : terms) {
        if (!term) {
            throw std::invalid_argument("finite_sum_oracle: null term");
        }
    }
    auto shared = std::make_shared<
        const std::vector<std::function<double(const Vector&)>>>(std::move(terms));
    const std::uint64_t count = shared->size();
    return StochasticOracle(
        dimension,
        [shared](const Vector& x, SampleToken token) {
            if (token >= shared->size()) {
                throw std::invalid_argument("finite_sum_oracle: token out of range");
            }
            return (*shared)[static_cast<std::size_t>(token)](x);
        },
        [count](RngStream& rng) { return rng.uniform_index(count); });
}

} // namespace zowcvx
