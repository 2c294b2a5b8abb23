#pragma once

#include <cstdint>
#include <random>

#include <Eigen/Dense>

namespace mdpo {

/// All stochastic code draws from a 64-bit Mersenne Twister.
using Rng = std::mt19937_64;

/// SplitMix64 finalizer; used to derive independent stream seeds.
constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Stream (global_seed, stream) -> generator. Streams with different ids
/// never share a seed for a fixed global seed, and the mapping does not
/// depend on how runs are scheduled.
inline Rng make_rng(std::uint64_t global_seed, std::uint64_t stream) {
    const std::uint64_t s = splitmix64(splitmix64(global_seed) ^ splitmix64(~stream));
    std::seed_seq seq{static_cast<std::uint32_t>(s), static_cast<std::uint32_t>(s >> 32)};
    return Rng(seq);
}

/// Child generator for a named sub-purpose of a run (env resets, init...).
inline Rng split(Rng& parent) { return make_rng(parent(), parent()); }

inline double uniform(Rng& rng, double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline Eigen::VectorXd standard_normal(Rng& rng, Eigen::Index n) {
    std::normal_distribution<double> dist(0.0, 1.0);
    Eigen::VectorXd v(n);
    for (Eigen::Index i = 0; i < n; ++i) v[i] = dist(rng);
    return v;
}

inline Eigen::MatrixXd standard_normal(Rng& rng, Eigen::Index rows, Eigen::Index cols) {
    std::normal_distribution<double> dist(0.0, 1.0);
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index j = 0; j < cols; ++j)
        for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = dist(rng);
    return m;
}

}  // namespace mdpo
