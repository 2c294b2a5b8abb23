#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <vector>

#include "mdpo/envs.hpp"
#include "mdpo/gaussian_policy.hpp"
#include "mdpo/rng.hpp"

namespace mdpo {

/// Seed of the evaluation start-state stream. Shared by every run so that
/// algorithms and seeds are scored on the same start states.
inline constexpr std::uint64_t kEvalSeed = 0xe7a1'5eedULL;

struct EvalConfig {
    std::size_t total_steps = 0;
    std::size_t eval_every = 10'000;
    std::size_t eval_episodes = 10;
    std::uint64_t eval_seed = kEvalSeed;
};

/// One evaluation of a policy during training.
struct EvalPoint {
    std::size_t env_step = 0;
    double mean = 0.0;
    double std = 0.0;  // sample standard deviation over evaluation episodes
    double wall_ms = 0.0;  // since the start of training
};

struct SampleStats {
    double mean = 0.0;
    double std = 0.0;  // n - 1 denominator; 0 for n < 2
};

/// Welford's update, so identical values give exactly zero spread.
inline SampleStats sample_stats(const std::vector<double>& xs) {
    SampleStats out;
    double m2 = 0.0;
    std::size_t k = 0;
    for (double x : xs) {
        const double delta = x - out.mean;
        out.mean += delta / static_cast<double>(++k);
        m2 += delta * (x - out.mean);
    }
    if (k > 1) out.std = std::sqrt(m2 / static_cast<double>(k - 1));
    return out;
}

/// Evaluation start states: the first `episodes` resets of the stream seeded
/// by `eval_seed`.
inline std::vector<Vector> eval_start_states(const ContinuousEnv& env, std::size_t episodes,
                                             std::uint64_t eval_seed = kEvalSeed) {
    Rng rng = make_rng(eval_seed, 0);
    std::vector<Vector> starts;
    starts.reserve(episodes);
    for (std::size_t i = 0; i < episodes; ++i) starts.push_back(env.reset(rng));
    return starts;
}

using ActionFn = std::function<Vector(const Vector&)>;

/// Undiscounted return of one full-horizon episode under a deterministic
/// controller.
inline double episode_return(const ContinuousEnv& env, const Vector& start, const ActionFn& act) {
    Vector s = start;
    double total = 0.0;
    for (std::size_t t = 0; t < env.horizon(); ++t) {
        auto out = env.step(s, act(s));
        total += out.reward;
        s = std::move(out.next);
    }
    return total;
}

inline SampleStats evaluate_controller(const ContinuousEnv& env, const ActionFn& act,
                                       std::size_t episodes, std::uint64_t eval_seed = kEvalSeed) {
    std::vector<double> returns;
    for (const auto& start : eval_start_states(env, episodes, eval_seed))
        returns.push_back(episode_return(env, start, act));
    return sample_stats(returns);
}

/// Reference return on pointmass-1d: the value-iteration policy of the grid
/// discretization, applied at the nearest grid point.
inline SampleStats pointmass_reference_return(std::size_t episodes, std::uint64_t eval_seed = kEvalSeed,
                                              Eigen::Index n_states = 21, Eigen::Index n_actions = 5,
                                              double gamma = 0.99) {
    const PointMass1d env;
    const auto opt = value_iteration(discretize_pointmass(n_states, n_actions, gamma));
    const double step = 2.0 * PointMass1d::kBound / static_cast<double>(n_states - 1);
    const ActionFn act = [&](const Vector& s) {
        const auto i = std::clamp<long>(std::lround((s[0] + PointMass1d::kBound) / step), 0, n_states - 1);
        Eigen::Index a = 0;
        opt.pi.probs().row(i).maxCoeff(&a);
        return Vector::Constant(1, -1.0 + 2.0 * static_cast<double>(a) / static_cast<double>(n_actions - 1));
    };
    return evaluate_controller(env, act, episodes, eval_seed);
}

/// Scores the deterministic (mean-action) version of a Gaussian policy.
inline SampleStats evaluate_policy(const ContinuousEnv& env, const GaussianPolicy& policy,
                                   std::size_t episodes, std::uint64_t eval_seed = kEvalSeed) {
    return evaluate_controller(
        env, [&](const Vector& s) { return policy.mean_one(s); }, episodes, eval_seed);
}

class Stopwatch {
public:
    Stopwatch() : start_(std::chrono::steady_clock::now()) {}
    double elapsed_ms() const {
        return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start_)
            .count();
    }

private:
    std::chrono::steady_clock::time_point start_;
};

/// Tracks when the next evaluation is due.
class EvalSchedule {
public:
    explicit EvalSchedule(std::size_t every) : every_(every == 0 ? 1 : every), next_(every_) {}

    bool due(std::size_t env_step) {
        if (env_step < next_) return false;
        while (next_ <= env_step) next_ += every_;
        return true;
    }

private:
    std::size_t every_;
    std::size_t next_;
};

}  // namespace mdpo
