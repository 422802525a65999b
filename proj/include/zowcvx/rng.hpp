#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>

#include <Eigen/Core>

namespace zowcvx {

namespace detail {

// Finalizer from splitmix64; bijective 64-bit mix.
inline std::uint64_t mix64(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

inline std::uint64_t rotl64(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
}

constexpr std::uint64_t golden_gamma = 0x9e3779b97f4a7c15ull;

} // namespace detail

// Deterministic random stream (xoshiro256++ seeded through splitmix64).
//
// Streams are cheap value types. Equal seeds give bit-identical draw
// sequences on every platform; split() derives a child stream whose
// sequence is decorrelated from the parent's and from siblings', so
// replicas of an experiment never share a stream.
class RngStream {
public:
    explicit RngStream(std::uint64_t seed) : seed_(seed) {
        std::uint64_t sm = seed;
        for (auto& word : state_) {
            sm += detail::golden_gamma;
            word = detail::mix64(sm);
        }
    }

    std::uint64_t seed() const noexcept { return seed_; }

    std::uint64_t next_u64() noexcept {
        const std::uint64_t result =
            detail::rotl64(state_[0] + state_[3], 23) + state_[0];
        const std::uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = detail::rotl64(state_[3], 45);
        return result;
    }

    // Uniform draw in [0, 1) with 53 random bits.
    double uniform() noexcept {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    // Uniform draw in [lo, hi).
    double uniform(double lo, double hi) noexcept {
        return lo + (hi - lo) * uniform();
    }

    // Unbiased index in {0, ..., bound - 1} via 128-bit multiply-shift.
    std::uint64_t uniform_index(std::uint64_t bound) {
        if (bound == 0) {
            throw std::invalid_argument("uniform_index: bound must be positive");
        }
        return static_cast<std::uint64_t>(
            (static_cast<unsigned __int128>(next_u64()) * bound) >> 64);
    }

    // Standard normal draw (Box-Muller; the second deviate of each pair is
    // cached, so draws come in deterministic order regardless of call sites).
    double normal() noexcept {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        // First factor maps to (0, 1] so the log is finite.
        const double u1 =
            (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
        const double u2 = uniform();
        const double radius = std::sqrt(-2.0 * std::log(u1));
        const double angle = 2.0 * M_PI * u2;
        spare_ = radius * std::sin(angle);
        have_spare_ = true;
        return radius * std::cos(angle);
    }

    // Child stream determined by (seed, key) only, not by the parent's
    // position, so replica streams can be re-derived at any time.
    RngStream split(std::uint64_t key) const noexcept {
        const std::uint64_t child =
            detail::mix64(seed_ ^ detail::mix64(key * detail::golden_gamma + 1));
        return RngStream(child);
    }

private:
    std::uint64_t seed_;
    std::array<std::uint64_t, 4> state_{};
    double spare_ = 0.0;
    bool have_spare_ = false;
};

// Vector of n independent standard normal draws.
inline Eigen::VectorXd standard_normal_vector(RngStream& rng, Eigen::Index n) {
    if (n < 1) {
        throw std::invalid_argument(
            "standard_normal_vector: dimension must be at least 1");
    }
    Eigen::VectorXd z(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        z[i] = rng.normal();
    }
    return z;
}

// Uniform draw from the closed unit ball of R^n, scaled by radius.
inline Eigen::VectorXd uniform_ball_vector(RngStream& rng, Eigen::Index n,
                                           double radius = 1.0) {
    Eigen::VectorXd z = standard_normal_vector(rng, n);
    const double norm = z.norm();
    if (norm == 0.0) {
        return Eigen::VectorXd::Zero(n);
    }
    const double r = radius * std::pow(rng.uniform(), 1.0 / static_cast<double>(n));
    return (r / norm) * z;
}

} // namespace zowcvx
