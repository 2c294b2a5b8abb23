#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <memory>
#include <numbers>
#include <random>
#include <string>
#include <string_view>
#include <variant>

#include <Eigen/Dense>

#include "mdpo/bregman.hpp"
#include "mdpo/errors.hpp"
#include "mdpo/mdp.hpp"
#include "mdpo/rng.hpp"

namespace mdpo {

struct StepResult {
    Vector next;
    double reward = 0.0;
};

/// Continuous-control task with deterministic dynamics. Stochasticity only
/// enters through reset() and the acting policy. Instances hold no episode
/// state, so one object can serve any number of rollouts.
class ContinuousEnv {
public:
    virtual ~ContinuousEnv() = default;

    virtual std::string name() const = 0;
    virtual Eigen::Index state_dim() const = 0;
    virtual Eigen::Index action_dim() const = 0;
    virtual std::size_t horizon() const = 0;
    virtual Vector action_low() const = 0;
    virtual Vector action_high() const = 0;

    virtual Vector reset(Rng& rng) const = 0;

    /// Applies `action` after clipping it to the action box.
    virtual StepResult step(const Vector& state, const Vector& action) const = 0;

    Vector clip_action(const Vector& action) const {
        if (action.size() != action_dim())
            throw ShapeMismatch("action has dimension " + std::to_string(action.size()));
        return action.cwiseMax(action_low()).cwiseMin(action_high());
    }
};

/// s' = clip(s + 0.1 a, [-2, 2]), r = -s^2 - 0.01 a^2, a in [-1, 1],
/// s0 ~ U[-1, 1], 100 steps.
class PointMass1d final : public ContinuousEnv {
public:
    static constexpr double kBound = 2.0;
    static constexpr double kDt = 0.1;
    static constexpr double kActionCost = 0.01;
    static constexpr double kStartRange = 1.0;

    std::string name() const override { return "pointmass-1d"; }
    Eigen::Index state_dim() const override { return 1; }
    Eigen::Index action_dim() const override { return 1; }
    std::size_t horizon() const override { return 100; }
    Vector action_low() const override { return Vector::Constant(1, -1.0); }
    Vector action_high() const override { return Vector::Constant(1, 1.0); }

    Vector reset(Rng& rng) const override {
        return Vector::Constant(1, uniform(rng, -kStartRange, kStartRange));
    }

    StepResult step(const Vector& state, const Vector& action) const override {
        if (state.size() != 1) throw ShapeMismatch("pointmass state is 1-dimensional");
        const double a = clip_action(action)[0];
        const double s = state[0];
        if (!std::isfinite(s) || !std::isfinite(a)) throw EnvFailure("non-finite state or action");
        const double next = std::clamp(s + kDt * a, -kBound, kBound);
        return {Vector::Constant(1, next), -s * s - kActionCost * a * a};
    }
};

/// Torque-limited pendulum (g = 10, m = l = 1, dt = 0.05, |u| <= 2,
/// |theta_dot| <= 8), state (angle in [-pi, pi), angular velocity),
/// reward -(theta^2 + 0.1 theta_dot^2 + 0.001 u^2), 200 steps.
class PendulumLite final : public ContinuousEnv {
public:
    static constexpr double kGravity = 10.0;
    static constexpr double kDt = 0.05;
    static constexpr double kMaxSpeed = 8.0;
    static constexpr double kMaxTorque = 2.0;

    std::string name() const override { return "pendulum-lite"; }
    Eigen::Index state_dim() const override { return 2; }
    Eigen::Index action_dim() const override { return 1; }
    std::size_t horizon() const override { return 200; }
    Vector action_low() const override { return Vector::Constant(1, -kMaxTorque); }
    Vector action_high() const override { return Vector::Constant(1, kMaxTorque); }

    static double wrap_angle(double x) {
        constexpr double pi = std::numbers::pi;
        return std::fmod(std::fmod(x + pi, 2.0 * pi) + 2.0 * pi, 2.0 * pi) - pi;
    }

    Vector reset(Rng& rng) const override {
        Vector s(2);
        s[0] = uniform(rng, -std::numbers::pi, std::numbers::pi);
        s[1] = uniform(rng, -1.0, 1.0);
        return s;
    }

    StepResult step(const Vector& state, const Vector& action) const override {
        if (state.size() != 2) throw ShapeMismatch("pendulum state is 2-dimensional");
        const double u = clip_action(action)[0];
        const double th = state[0];
        const double thdot = state[1];
        if (!std::isfinite(th) || !std::isfinite(thdot) || !std::isfinite(u))
            throw EnvFailure("non-finite state or action");
        const double cost = th * th + 0.1 * thdot * thdot + 0.001 * u * u;
        double new_thdot = thdot + (3.0 * kGravity / 2.0 * std::sin(th) + 3.0 * u) * kDt;
        new_thdot = std::clamp(new_thdot, -kMaxSpeed, kMaxSpeed);
        Vector next(2);
        next[0] = wrap_angle(th + new_thdot * kDt);
        next[1] = new_thdot;
        return {std::move(next), -cost};
    }
};

/// n-state deterministic chain: action 1 moves right, action 0 moves left
/// (staying at 0). The last state is an absorbing self-loop paying reward 1
/// for every action; every other reward is 0. Starts in state 0.
inline TabularMdp make_chain(Eigen::Index n, double gamma = 0.9) {
    if (n < 2) throw BadValue("chain needs at least 2 states");
    constexpr Eigen::Index A = 2;
    Matrix P = Matrix::Zero(n * A, n);
    Matrix R = Matrix::Zero(n, A);
    for (Eigen::Index s = 0; s < n; ++s) {
        if (s == n - 1) {
            P(s * A + 0, s) = 1.0;
            P(s * A + 1, s) = 1.0;
            R.row(s).setConstant(1.0);
            continue;
        }
        P(s * A + 0, std::max<Eigen::Index>(s - 1, 0)) = 1.0;
        P(s * A + 1, s + 1) = 1.0;
    }
    Vector mu = Vector::Zero(n);
    mu[0] = 1.0;
    return TabularMdp(std::move(P), std::move(R), gamma, std::move(mu));
}

/// Random MDP: Dirichlet(1) transition rows, U[0,1] rewards, uniform start.
inline TabularMdp make_random_mdp(Eigen::Index S, Eigen::Index A, double gamma, Rng& rng) {
    if (S < 1 || A < 1) throw BadValue("random MDP needs S, A >= 1");
    std::gamma_distribution<double> gamma_dist(1.0, 1.0);
    Matrix P(S * A, S);
    for (Eigen::Index row = 0; row < S * A; ++row) {
        for (Eigen::Index j = 0; j < S; ++j) P(row, j) = gamma_dist(rng) + 1e-300;
        P.row(row) /= P.row(row).sum();
    }
    Matrix R(S, A);
    for (Eigen::Index s = 0; s < S; ++s)
        for (Eigen::Index a = 0; a < A; ++a) R(s, a) = uniform(rng, 0.0, 1.0);
    return TabularMdp(std::move(P), std::move(R), gamma,
                      Vector::Constant(S, 1.0 / static_cast<double>(S)));
}

inline TabularMdp make_random_mdp(Eigen::Index S, Eigen::Index A, double gamma,
                                  std::uint64_t seed) {
    Rng rng = make_rng(seed, 0x6d6470);
    return make_random_mdp(S, A, gamma, rng);
}

/// Grid discretization of pointmass-1d: evenly spaced states on [-2, 2],
/// evenly spaced actions on [-1, 1], linear-interpolation transitions onto
/// the two neighbouring grid points, rewards evaluated at the grid point.
inline TabularMdp discretize_pointmass(Eigen::Index n_states = 21, Eigen::Index n_actions = 5,
                                       double gamma = 0.99) {
    const PointMass1d env;
    const double lo = -PointMass1d::kBound;
    const double step = 2.0 * PointMass1d::kBound / static_cast<double>(n_states - 1);
    Matrix P = Matrix::Zero(n_states * n_actions, n_states);
    Matrix R(n_states, n_actions);
    for (Eigen::Index s = 0; s < n_states; ++s) {
        const double x = lo + step * static_cast<double>(s);
        for (Eigen::Index a = 0; a < n_actions; ++a) {
            const double u = -1.0 + 2.0 * static_cast<double>(a) / static_cast<double>(n_actions - 1);
            const auto out = env.step(Vector::Constant(1, x), Vector::Constant(1, u));
            R(s, a) = out.reward;
            const double pos = (out.next[0] - lo) / step;
            const auto left = std::clamp<Eigen::Index>(static_cast<Eigen::Index>(std::floor(pos)), 0,
                                                       n_states - 1);
            const auto right = std::min<Eigen::Index>(left + 1, n_states - 1);
            const double w = std::clamp(pos - static_cast<double>(left), 0.0, 1.0);
            P(s * n_actions + a, left) += 1.0 - w;
            P(s * n_actions + a, right) += w;
        }
    }
    return TabularMdp(std::move(P), std::move(R), gamma,
                      Vector::Constant(n_states, 1.0 / static_cast<double>(n_states)));
}

using Environment = std::variant<TabularMdp, std::shared_ptr<const ContinuousEnv>>;

namespace detail {

inline bool parse_index(std::string_view text, Eigen::Index& out) {
    long value = 0;
    const auto* end = text.data() + text.size();
    auto [ptr, ec] = std::from_chars(text.data(), end, value);
    if (ec != std::errc() || ptr != end || value < 1) return false;
    out = static_cast<Eigen::Index>(value);
    return true;
}

}  // namespace detail

/// Builds an environment by name:
///   chain-<n>                 deterministic chain (gamma 0.9)
///   random-mdp, random-mdp-<S>x<A>   seeded random MDP (default 10x4, gamma 0.9)
///   pointmass-1d, pendulum-lite      continuous tasks
inline Environment make_env(std::string_view name, std::uint64_t seed, double gamma = 0.9) {
    if (name == "pointmass-1d") return std::make_shared<const PointMass1d>();
    if (name == "pendulum-lite") return std::make_shared<const PendulumLite>();
    if (name.starts_with("chain-")) {
        Eigen::Index n = 0;
        if (!detail::parse_index(name.substr(6), n) || n < 2)
            throw UnknownEnv(std::string(name));
        return make_chain(n, gamma);
    }
    if (name == "random-mdp") return make_random_mdp(10, 4, gamma, seed);
    if (name.starts_with("random-mdp-")) {
        const auto dims = name.substr(11);
        const auto x = dims.find('x');
        Eigen::Index S = 0, A = 0;
        if (x == std::string_view::npos || !detail::parse_index(dims.substr(0, x), S) ||
            !detail::parse_index(dims.substr(x + 1), A))
            throw UnknownEnv(std::string(name));
        return make_random_mdp(S, A, gamma, seed);
    }
    throw UnknownEnv(std::string(name));
}

inline bool is_tabular_env(std::string_view name) {
    return name.starts_with("chain-") || name.starts_with("random-mdp");
}

}  // namespace mdpo
