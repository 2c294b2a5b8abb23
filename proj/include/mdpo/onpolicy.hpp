#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "mdpo/envs.hpp"
#include "mdpo/evaluation.hpp"
#include "mdpo/gaussian_policy.hpp"
#include "mdpo/mlp.hpp"
#include "mdpo/rng.hpp"

namespace mdpo {

inline constexpr double kRatioMin = 1e-4;
inline constexpr double kRatioMax = 1e4;
inline constexpr double kStepFloor = 0.05;

/// M on-policy steps. Columns of `states`/`actions` are time steps.
struct Trajectory {
    Matrix states;
    Matrix actions;
    Vector rewards;
    Vector returns;     // R_t = r_t + gamma R_{t+1}, zero past an episode end
    Vector advantages;
    std::vector<bool> episode_end;  // true on the last step of each episode chunk

    Eigen::Index size() const { return rewards.size(); }
};

struct OnPolicyConfig {
    std::size_t rollout_steps = 2048;  // M
    std::size_t m = 10;                // SGD steps per MD iteration
    double eta = 3e-4;
    double eta_critic = 3e-4;
    std::size_t minibatch = 128;
    std::size_t critic_epochs = 10;
    double gamma = 0.99;
    Eigen::Index policy_hidden = 0;
    double log_std_init = 0.0;
    Eigen::Index critic_width = 64;
    EvalConfig eval;

    void validate() const {
        if (m < 1) throw BadValue("m must be >= 1");
        if (rollout_steps < 1) throw BadValue("rollout_steps must be >= 1");
        if (minibatch < 1 || rollout_steps < minibatch)
            throw BadValue("need 1 <= minibatch <= rollout_steps");
        if (!(gamma >= 0.0 && gamma < 1.0)) throw BadValue("gamma must lie in [0, 1)");
        if (!(eta >= 0.0) || !(eta_critic >= 0.0)) throw BadValue("learning rates must be >= 0");
    }

    std::size_t iterations() const { return eval.total_steps / rollout_steps; }
};

/// R_t computed backward within each episode chunk.
inline Vector discounted_returns(const Vector& rewards, const std::vector<bool>& episode_end,
                                 double gamma) {
    Vector R(rewards.size());
    double running = 0.0;
    for (Eigen::Index t = rewards.size(); t-- > 0;) {
        if (episode_end[static_cast<std::size_t>(t)]) running = 0.0;
        running = rewards[t] + gamma * running;
        R[t] = running;
    }
    return R;
}

/// Simulates the stochastic policy for M steps, starting a fresh episode at
/// the beginning and after every horizon-length episode. Returns are
/// computed per episode; the final chunk is truncated with a zero tail.
inline Trajectory collect_rollout(const ContinuousEnv& env, const GaussianPolicy& theta,
                                  std::size_t M, double gamma, Rng& rng) {
    if (M < 1) throw BadValue("rollout length must be >= 1");
    Trajectory traj;
    traj.states.resize(env.state_dim(), static_cast<Eigen::Index>(M));
    traj.actions.resize(env.action_dim(), static_cast<Eigen::Index>(M));
    traj.rewards.resize(static_cast<Eigen::Index>(M));
    traj.episode_end.assign(M, false);

    Vector s = env.reset(rng);
    std::size_t t_in_episode = 0;
    for (std::size_t t = 0; t < M; ++t) {
        const auto col = static_cast<Eigen::Index>(t);
        const Vector a = theta.sample(s, rng);
        auto out = env.step(s, a);
        if (!std::isfinite(out.reward)) throw EnvFailure("non-finite reward");
        traj.states.col(col) = s;
        traj.actions.col(col) = a;
        traj.rewards[col] = out.reward;
        if (++t_in_episode == env.horizon()) {
            traj.episode_end[t] = true;
            s = env.reset(rng);
            t_in_episode = 0;
        } else {
            s = std::move(out.next);
        }
    }
    traj.episode_end.back() = true;
    traj.returns = discounted_returns(traj.rewards, traj.episode_end, gamma);
    traj.advantages = traj.returns;
    return traj;
}

/// A_t = R_t - V(s_t).
inline Trajectory estimate_advantages(Trajectory traj, const ValueNet& critic) {
    traj.advantages = traj.returns - critic.predict(traj.states);
    return traj;
}

namespace detail {

inline void require_finite(const ParamVector& g, const char* where) {
    if (!g.allFinite()) throw NonFiniteGradient(std::string(where) + " produced a non-finite gradient");
}

inline Vector clamped_ratios(const Vector& lp_new, const Vector& lp_old) {
    return (lp_new - lp_old).array().exp().cwiseMax(kRatioMin).cwiseMin(kRatioMax).matrix();
}

}  // namespace detail

/// Sampled MDPO objective
///   mean_t[ r_t A_t ] - (1/t_k) mean_t KL(pi_theta(.|s_t) || pi_k(.|s_t)),
/// r_t = pi_theta(a_t|s_t) / pi_k(a_t|s_t), and its gradient
///   mean_t[ r_t grad log pi_theta(a_t|s_t) A_t ] - (1/t_k) mean_t grad KL.
/// Ratios are clamped to [kRatioMin, kRatioMax]; a clamped sample is flat in
/// theta and contributes no gradient, so value and gradient stay consistent.
struct PsiValue {
    double value = 0.0;
    ParamVector grad;
    Vector ratios;
};

inline PsiValue psi_objective(const GaussianPolicy& theta_i, const GaussianPolicy& theta_k,
                              const Trajectory& traj, double t_k) {
    if (!(t_k > 0.0)) throw BadValue("t_k must be > 0");
    const double n = static_cast<double>(traj.size());
    const Vector lp_k = theta_k.log_prob_batch(traj.states, traj.actions);
    const Vector lp_i = theta_i.log_prob_batch(traj.states, traj.actions);
    PsiValue out;
    out.ratios = detail::clamped_ratios(lp_i, lp_k);
    Vector weights(traj.size());
    for (Eigen::Index t = 0; t < traj.size(); ++t) {
        const bool clamped = out.ratios[t] == kRatioMin || out.ratios[t] == kRatioMax;
        weights[t] = clamped ? 0.0 : out.ratios[t] * traj.advantages[t] / n;
    }
    auto [lp, pg] = theta_i.log_prob_weighted_grad(traj.states, traj.actions, weights);
    const KlValue kl = gaussian_kl_batch(theta_i, theta_k, traj.states);
    out.value = out.ratios.dot(traj.advantages) / n - kl.value / t_k;
    out.grad = pg - kl.grad / t_k;
    detail::require_finite(out.grad, "psi_gradient");
    return out;
}

inline ParamVector psi_gradient(const GaussianPolicy& theta_i, const GaussianPolicy& theta_k,
                                const Trajectory& traj, double t_k) {
    return psi_objective(theta_i, theta_k, traj, t_k).grad;
}

/// Vanilla policy-gradient estimate mean_t[ grad log pi_k(a_t|s_t) A_t ].
inline ParamVector policy_gradient_estimate(const GaussianPolicy& theta_k, const Trajectory& traj) {
    const double n = static_cast<double>(traj.size());
    Vector weights(traj.size());
    for (Eigen::Index t = 0; t < traj.size(); ++t) weights[t] = traj.advantages[t] / n;
    auto grad = theta_k.log_prob_weighted_grad(traj.states, traj.actions, weights).second;
    detail::require_finite(grad, "policy_gradient");
    return grad;
}

/// m whole-batch ascent steps on the sampled objective, starting at theta_k
/// and keeping theta_k frozen as the proximity anchor.
inline GaussianPolicy mdpo_policy_update(const GaussianPolicy& theta_k, const Trajectory& traj,
                                         double t_k, std::size_t m, double eta) {
    if (m < 1) throw BadValue("m must be >= 1");
    GaussianPolicy theta = theta_k;
    for (std::size_t i = 0; i < m; ++i)
        theta.apply_update(eta * psi_gradient(theta, theta_k, traj, t_k));
    return theta;
}

/// t_k = max(1 - k/K, 0.05).
inline double step_schedule_tk(std::size_t k, std::size_t K) {
    if (K == 0) return 1.0;
    return std::max(1.0 - static_cast<double>(k) / static_cast<double>(K), kStepFloor);
}

struct CriticFitReport {
    std::vector<double> epoch_losses;  // full-batch MSE after each epoch
    double final_loss = 0.0;
};

/// Minibatch SGD on the squared error between V(s_t) and `targets`.
inline CriticFitReport critic_fit(ValueNet& critic, const Matrix& states, const Vector& targets,
                                  std::size_t minibatch, std::size_t epochs, double eta, Rng& rng) {
    const auto n = static_cast<std::size_t>(targets.size());
    if (minibatch < 1 || minibatch > n) throw BadValue("need 1 <= minibatch <= batch size");
    std::vector<Eigen::Index> order(n);
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    CriticFitReport report;
    Matrix xb(states.rows(), static_cast<Eigen::Index>(minibatch));
    Vector yb(static_cast<Eigen::Index>(minibatch));
    for (std::size_t e = 0; e < epochs; ++e) {
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t start = 0; start + minibatch <= n; start += minibatch) {
            for (std::size_t j = 0; j < minibatch; ++j) {
                xb.col(static_cast<Eigen::Index>(j)) = states.col(order[start + j]);
                yb[static_cast<Eigen::Index>(j)] = targets[order[start + j]];
            }
            const auto fit = critic.forward_backward(xb, yb);
            critic.sgd_step(fit.grad, eta);
        }
        report.epoch_losses.push_back((critic.predict(states) - targets).squaredNorm() /
                                      static_cast<double>(n));
    }
    report.final_loss = report.epoch_losses.empty()
                            ? (critic.predict(states) - targets).squaredNorm() / static_cast<double>(n)
                            : report.epoch_losses.back();
    return report;
}

inline CriticFitReport critic_fit(ValueNet& critic, const Trajectory& traj, std::size_t minibatch,
                                  std::size_t epochs, double eta, Rng& rng) {
    return critic_fit(critic, traj.states, traj.returns, minibatch, epochs, eta, rng);
}

struct TrainResult {
    std::vector<EvalPoint> evals;
    GaussianPolicy policy;
};

/// Called after every policy update with (env_step, policy).
using PolicyObserver = std::function<void(std::size_t, const GaussianPolicy&)>;

/// Policy update applied once per iteration by the on-policy loop.
using OnPolicyUpdate = std::function<GaussianPolicy(const GaussianPolicy&, const Trajectory&,
                                                    std::size_t k, std::size_t K, Rng&)>;

namespace detail {

inline void require_finite_policy(const GaussianPolicy& p, std::size_t iteration) {
    if (!p.params().allFinite())
        throw NonFiniteGradient("policy parameters became non-finite at iteration " +
                                std::to_string(iteration));
}

/// Rollout -> advantages -> policy update -> critic fit, K = total/M times.
inline TrainResult onpolicy_loop(const OnPolicyConfig& cfg, const ContinuousEnv& env, Rng& rng,
                                 const OnPolicyUpdate& update, const PolicyObserver& observer) {
    cfg.validate();
    Rng init_rng = split(rng);
    Rng rollout_rng = split(rng);
    Rng critic_rng = split(rng);
    Rng update_rng = split(rng);

    GaussianPolicy theta = GaussianPolicy::make(env.state_dim(), env.action_dim(),
                                                cfg.policy_hidden, cfg.log_std_init, init_rng);
    ValueNet critic = ValueNet::make(env.state_dim(), hidden_layers(cfg.critic_width, 2), init_rng);

    TrainResult result;
    const Stopwatch clock;
    auto evaluate = [&](std::size_t step) {
        const auto stats = evaluate_policy(env, theta, cfg.eval.eval_episodes, cfg.eval.eval_seed);
        result.evals.push_back({step, stats.mean, stats.std, clock.elapsed_ms()});
    };
    evaluate(0);

    const std::size_t K = cfg.iterations();
    EvalSchedule schedule(cfg.eval.eval_every);
    std::size_t env_step = 0;
    for (std::size_t k = 0; k < K; ++k) {
        Trajectory traj = collect_rollout(env, theta, cfg.rollout_steps, cfg.gamma, rollout_rng);
        traj = estimate_advantages(std::move(traj), critic);
        theta = update(theta, traj, k, K, update_rng);
        require_finite_policy(theta, k);
        critic_fit(critic, traj, cfg.minibatch, cfg.critic_epochs, cfg.eta_critic, critic_rng);
        if (!critic.params().allFinite())
            throw NonFiniteGradient("critic diverged at iteration " + std::to_string(k));
        env_step += cfg.rollout_steps;
        if (observer) observer(env_step, theta);
        if (schedule.due(env_step) || k + 1 == K) evaluate(env_step);
    }
    result.policy = std::move(theta);
    return result;
}

}  // namespace detail

/// On-policy MDPO: per iteration, m SGD steps on the sampled objective with
/// the annealed t_k = max(1 - k/K, 0.05), then a minibatch critic fit.
inline TrainResult train_onpolicy(const OnPolicyConfig& cfg, const ContinuousEnv& env, Rng& rng,
                                  const PolicyObserver& observer = {}) {
    auto update = [&](const GaussianPolicy& theta, const Trajectory& traj, std::size_t k,
                      std::size_t K, Rng&) {
        return mdpo_policy_update(theta, traj, step_schedule_tk(k, K), cfg.m, cfg.eta);
    };
    return detail::onpolicy_loop(cfg, env, rng, update, observer);
}

}  // namespace mdpo
