#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "mdpo/offpolicy.hpp"
#include "mdpo/onpolicy.hpp"

namespace mdpo {

/// theta_k + eta * mean[grad log pi_k(a|s) A].
inline GaussianPolicy vanilla_pg_update(const GaussianPolicy& theta_k, const Trajectory& traj,
                                        double eta) {
    GaussianPolicy theta = theta_k;
    theta.apply_update(eta * policy_gradient_estimate(theta_k, traj));
    return theta;
}

struct PpoLoss {
    double objective = 0.0;  // mean of min(r A, clip(r) A), to be maximized
    ParamVector grad;
    double clip_fraction = 0.0;  // share of samples on the binding clipped branch
    std::vector<bool> clipped;
};

/// Clipped surrogate. A sample contributes r A grad log pi_theta when the
/// unclipped term is selected (including ties) and exactly nothing when the
/// clipped term binds.
inline PpoLoss ppo_clip_loss(const GaussianPolicy& theta, const GaussianPolicy& theta_k,
                             const Trajectory& traj, double eps_clip) {
    if (!(eps_clip > 0.0)) throw BadValue("eps_clip must be > 0");
    const auto N = traj.size();
    const double n = static_cast<double>(N);
    const Vector lp_k = theta_k.log_prob_batch(traj.states, traj.actions);
    const Vector lp = theta.log_prob_batch(traj.states, traj.actions);
    PpoLoss out;
    out.clipped.assign(static_cast<std::size_t>(N), false);
    Vector weights = Vector::Zero(N);
    double total = 0.0;
    std::size_t n_clipped = 0;
    for (Eigen::Index j = 0; j < N; ++j) {
        const double ratio = std::exp(lp[j] - lp_k[j]);
        const double adv = traj.advantages[j];
        const double unclipped = ratio * adv;
        const double clipped = std::clamp(ratio, 1.0 - eps_clip, 1.0 + eps_clip) * adv;
        if (unclipped <= clipped) {
            total += unclipped;
            weights[j] = ratio * adv / n;
        } else {
            total += clipped;
            out.clipped[static_cast<std::size_t>(j)] = true;
            ++n_clipped;
        }
    }
    out.objective = total / n;
    out.grad = theta.log_prob_weighted_grad(traj.states, traj.actions, weights).second;
    out.clip_fraction = static_cast<double>(n_clipped) / n;
    detail::require_finite(out.grad, "ppo_clip_loss");
    return out;
}

inline Trajectory select_steps(const Trajectory& traj, const std::vector<Eigen::Index>& idx) {
    Trajectory sub;
    const auto n = static_cast<Eigen::Index>(idx.size());
    sub.states.resize(traj.states.rows(), n);
    sub.actions.resize(traj.actions.rows(), n);
    sub.rewards.resize(n);
    sub.returns.resize(n);
    sub.advantages.resize(n);
    sub.episode_end.assign(idx.size(), false);
    for (Eigen::Index j = 0; j < n; ++j) {
        const auto t = idx[static_cast<std::size_t>(j)];
        sub.states.col(j) = traj.states.col(t);
        sub.actions.col(j) = traj.actions.col(t);
        sub.rewards[j] = traj.rewards[t];
        sub.returns[j] = traj.returns[t];
        sub.advantages[j] = traj.advantages[t];
        sub.episode_end[static_cast<std::size_t>(j)] = traj.episode_end[static_cast<std::size_t>(t)];
    }
    return sub;
}

struct PpoConfig {
    OnPolicyConfig base;
    double eps_clip = 0.2;
};

/// Records the clip fraction of every minibatch step, in order.
using ClipObserver = std::function<void(std::size_t iteration, std::size_t epoch,
                                        std::size_t minibatch, double clip_fraction)>;

/// PPO-clip: m epochs of minibatch ascent on the clipped surrogate per
/// rollout, then the same critic fit as on-policy MDPO.
inline TrainResult train_ppo(const PpoConfig& cfg, const ContinuousEnv& env, Rng& rng,
                             const PolicyObserver& observer = {},
                             const ClipObserver& clip_observer = {}) {
    const auto& base = cfg.base;
    auto update = [&](const GaussianPolicy& theta_k, const Trajectory& traj, std::size_t k,
                      std::size_t, Rng& update_rng) {
        GaussianPolicy theta = theta_k;
        const auto n = static_cast<std::size_t>(traj.size());
        std::vector<Eigen::Index> order(n);
        std::iota(order.begin(), order.end(), Eigen::Index{0});
        for (std::size_t epoch = 0; epoch < base.m; ++epoch) {
            std::shuffle(order.begin(), order.end(), update_rng);
            std::size_t mb = 0;
            for (std::size_t start = 0; start + base.minibatch <= n; start += base.minibatch, ++mb) {
                std::vector<Eigen::Index> idx(order.begin() + static_cast<std::ptrdiff_t>(start),
                                              order.begin() +
                                                  static_cast<std::ptrdiff_t>(start + base.minibatch));
                const auto loss = ppo_clip_loss(theta, theta_k, select_steps(traj, idx), cfg.eps_clip);
                if (clip_observer) clip_observer(k, epoch, mb, loss.clip_fraction);
                theta.apply_update(base.eta * loss.grad);
            }
        }
        return theta;
    };
    return detail::onpolicy_loop(base, env, rng, update, observer);
}

/// Vanilla policy gradient: one whole-batch ascent step per rollout.
inline TrainResult train_pg(const OnPolicyConfig& cfg, const ContinuousEnv& env, Rng& rng,
                            const PolicyObserver& observer = {}) {
    auto update = [&](const GaussianPolicy& theta, const Trajectory& traj, std::size_t,
                      std::size_t, Rng&) { return vanilla_pg_update(theta, traj, cfg.eta); };
    return detail::onpolicy_loop(cfg, env, rng, update, observer);
}

/// SAC: the off-policy loop with the entropy-regularized greedy actor loss.
inline TrainResult train_sac(const OffPolicyConfig& cfg, const ContinuousEnv& env, Rng& rng,
                             const PolicyObserver& observer = {}) {
    if (!(cfg.lambda > 0.0)) throw BadValue("SAC needs lambda > 0");
    OffPolicyActorLoss loss = [&](const GaussianPolicy& theta, const GaussianPolicy&,
                                  const Critics& c, const Matrix& S, const Matrix& eps) {
        return sac_actor_loss(theta, c.q, S, eps, cfg.lambda);
    };
    return detail::offpolicy_loop(cfg, env, rng, loss, observer);
}

}  // namespace mdpo
