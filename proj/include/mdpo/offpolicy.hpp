#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "mdpo/bregman.hpp"
#include "mdpo/envs.hpp"
#include "mdpo/evaluation.hpp"
#include "mdpo/gaussian_policy.hpp"
#include "mdpo/mlp.hpp"
#include "mdpo/onpolicy.hpp"
#include "mdpo/rng.hpp"

namespace mdpo {

struct Transition {
    Vector s;
    Vector a;
    double r = 0.0;
    Vector s_next;
    bool done = false;
};

struct TransitionBatch {
    Matrix states;
    Matrix actions;
    Vector rewards;
    Matrix next_states;
    Vector not_done;  // 1 - done

    Eigen::Index size() const { return rewards.size(); }
};

/// Fixed-capacity FIFO experience store with uniform sampling (with
/// replacement) over its current contents.
class ReplayBuffer {
public:
    ReplayBuffer(std::size_t capacity, Eigen::Index state_dim, Eigen::Index action_dim)
        : capacity_(capacity), states_(state_dim, 0), actions_(action_dim, 0),
          next_states_(state_dim, 0) {
        if (capacity_ < 1) throw BadValue("replay buffer capacity must be >= 1");
    }

    std::size_t capacity() const { return capacity_; }
    std::size_t size() const { return size_; }
    bool empty() const { return size_ == 0; }

    void push(const Transition& t) {
        if (t.s.size() != states_.rows() || t.a.size() != actions_.rows() ||
            t.s_next.size() != states_.rows())
            throw ShapeMismatch("transition does not match the buffer dimensions");
        if (!t.s.allFinite() || !t.a.allFinite() || !t.s_next.allFinite() || !std::isfinite(t.r))
            throw NonFiniteInput("transition entries must be finite");
        if (size_ < capacity_) grow();
        const auto slot = static_cast<Eigen::Index>(head_);
        states_.col(slot) = t.s;
        actions_.col(slot) = t.a;
        next_states_.col(slot) = t.s_next;
        rewards_[slot] = t.r;
        done_[slot] = t.done ? 1.0 : 0.0;
        head_ = (head_ + 1) % capacity_;
        size_ = std::min(size_ + 1, capacity_);
    }

    /// i-th oldest stored transition.
    Transition at(std::size_t i) const {
        if (i >= size_) throw std::out_of_range("replay buffer index");
        const std::size_t oldest = size_ < capacity_ ? 0 : head_;
        const auto slot = static_cast<Eigen::Index>((oldest + i) % capacity_);
        return {states_.col(slot), actions_.col(slot), rewards_[slot], next_states_.col(slot),
                done_[slot] != 0.0};
    }

    TransitionBatch sample(std::size_t n, Rng& rng) const {
        if (empty()) throw BadValue("cannot sample from an empty replay buffer");
        std::uniform_int_distribution<std::size_t> pick(0, size_ - 1);
        const auto N = static_cast<Eigen::Index>(n);
        TransitionBatch b{Matrix(states_.rows(), N), Matrix(actions_.rows(), N), Vector(N),
                          Matrix(states_.rows(), N), Vector(N)};
        for (Eigen::Index j = 0; j < N; ++j) {
            const auto slot = static_cast<Eigen::Index>(pick(rng));
            b.states.col(j) = states_.col(slot);
            b.actions.col(j) = actions_.col(slot);
            b.rewards[j] = rewards_[slot];
            b.next_states.col(j) = next_states_.col(slot);
            b.not_done[j] = 1.0 - done_[slot];
        }
        return b;
    }

private:
    void grow() {
        // storage grows geometrically until it reaches capacity
        const auto cols = static_cast<std::size_t>(states_.cols());
        if (size_ < cols) return;
        const auto next = static_cast<Eigen::Index>(std::min(capacity_, std::max<std::size_t>(2 * cols, 64)));
        states_.conservativeResize(Eigen::NoChange, next);
        actions_.conservativeResize(Eigen::NoChange, next);
        next_states_.conservativeResize(Eigen::NoChange, next);
        rewards_.conservativeResize(next);
        done_.conservativeResize(next);
    }

    std::size_t capacity_;
    std::size_t size_ = 0;
    std::size_t head_ = 0;
    Matrix states_;
    Matrix actions_;
    Matrix next_states_;
    Vector rewards_;
    Vector done_;
};

/// Algorithm 2 knobs. Defaults follow the minimal off-policy settings.
struct OffPolicyConfig {
    double inv_tk = 0.5;       // Bregman step 1/t_k, held constant
    double lambda = 0.2;       // entropy coefficient
    double q_bregman = 1.0;
    double q_mdp = 1.0;
    std::size_t m = 1000;      // old-policy refresh period in env steps
    std::size_t batch = 64;
    double tau = 0.005;
    double eta = 3e-4;
    double eta_critic = 3e-4;
    double gamma = 0.99;
    std::size_t buffer_capacity = 1'000'000;
    std::size_t learning_starts = 1000;
    Eigen::Index policy_hidden = 0;
    double log_std_init = 0.0;
    Eigen::Index critic_width = 64;
    bool uniform_prior = false;  // replace pi_old by a constant log-density
    EvalConfig eval;

    double t_k() const { return 1.0 / inv_tk; }

    void validate() const {
        if (!(inv_tk > 0.0)) throw BadValue("1/t_k must be > 0");
        if (!(lambda >= 0.0)) throw BadValue("lambda must be >= 0");
        TsallisParams{q_bregman};
        TsallisParams{q_mdp};
        if (m < 1) throw BadValue("m must be >= 1");
        if (batch < 1) throw BadValue("batch must be >= 1");
        if (!(tau >= 0.0 && tau <= 1.0)) throw BadValue("tau must lie in [0, 1]");
        if (!(gamma >= 0.0 && gamma < 1.0)) throw BadValue("gamma must lie in [0, 1)");
        if (buffer_capacity < 1) throw BadValue("buffer_capacity must be >= 1");
    }
};

/// Reference density in the actor loss: a Gaussian old policy, or a constant
/// log-density (a bounded-support uniform policy).
struct PriorPolicy {
    const GaussianPolicy* gaussian = nullptr;
    double constant_log_density = 0.0;

    static PriorPolicy of(const GaussianPolicy& p) { return {&p, 0.0}; }
    static PriorPolicy uniform(double log_density) { return {nullptr, log_density}; }

    /// Uniform density over the env's action box.
    static PriorPolicy uniform_over(const ContinuousEnv& env) {
        return uniform(-(env.action_high() - env.action_low()).array().log().sum());
    }
};

struct ActorLoss {
    double loss = 0.0;
    ParamVector grad;
};

/// Q(s, a) critic evaluated on the concatenated [s; a] input.
inline Matrix stack_state_action(const Matrix& S, const Matrix& A) {
    Matrix X(S.rows() + A.rows(), S.cols());
    X << S, A;
    return X;
}

namespace detail {

/// Scalar transform of a log-density and its derivative.
struct LogTerm {
    std::function<double(double)> value;
    std::function<double(double)> slope;
};

inline double log_q_of_log(double log_x, double q) {
    if (std::abs(q - 1.0) < kShannonSwitch) return log_x;
    return std::expm1((q - 1.0) * log_x) / (q - 1.0);
}

inline double log_q_of_log_slope(double log_x, double q) {
    if (std::abs(q - 1.0) < kShannonSwitch) return 1.0;
    return std::exp((q - 1.0) * log_x);
}

/// Batch mean of  f(log pi_theta(a~|s)) - g(log pi_old(a~|s)) - t Q(s, a~)
/// with a~ = mu_theta(s) + sigma_theta * eps, differentiated through a~.
/// `g` is skipped when `has_prior` is false (SAC).
inline ActorLoss reparam_actor_loss(const GaussianPolicy& theta, const PriorPolicy* prior,
                                    const ValueNet& q_net, const Matrix& S, const Matrix& eps,
                                    double t, const LogTerm& f, const LogTerm& g) {
    if (S.rows() != theta.state_dim()) throw ShapeMismatch("state batch does not match policy");
    if (q_net.input_dim() != theta.state_dim() + theta.action_dim())
        throw ShapeMismatch("Q network input must be [state; action]");
    const auto N = S.cols();
    const double n = static_cast<double>(N);
    const ReparamSample rs = reparam_sample(theta, S, eps);
    const Matrix& a = rs.actions;

    const Vector lp = theta.log_density(rs.means, a);
    const Matrix dlp_da = theta.log_density_action_grad(rs.means, a);

    Vector lp_old;
    Matrix dlp_old_da;
    const bool gaussian_prior = prior && prior->gaussian;
    if (gaussian_prior) {
        const Matrix mu_old = prior->gaussian->mean(S);
        lp_old = prior->gaussian->log_density(mu_old, a);
        dlp_old_da = prior->gaussian->log_density_action_grad(mu_old, a);
    } else if (prior) {
        lp_old = Vector::Constant(N, prior->constant_log_density);
    }

    const Matrix X = stack_state_action(S, a);
    Vector q_values;
    Matrix dq_dx;
    q_net.weighted_backward(X, Vector::Ones(N), &q_values, nullptr, &dq_dx);
    const Matrix dq_da = dq_dx.bottomRows(theta.action_dim());

    double total = 0.0;
    Vector explicit_w(N);
    Matrix dL_da(theta.action_dim(), N);
    for (Eigen::Index j = 0; j < N; ++j) {
        const double fs = f.slope(lp[j]);
        double loss_j = f.value(lp[j]) - t * q_values[j];
        Vector d = fs * dlp_da.col(j);
        if (prior) {
            loss_j -= g.value(lp_old[j]);
            if (gaussian_prior) d -= g.slope(lp_old[j]) * dlp_old_da.col(j);
        }
        d -= t * dq_da.col(j);
        total += loss_j;
        explicit_w[j] = fs / n;
        dL_da.col(j) = d / n;
    }

    ActorLoss out;
    out.loss = total / n;
    // explicit dependence of log pi_theta on theta at fixed a~, then the path through a~
    out.grad = theta.log_prob_weighted_grad(S, a, explicit_w).second;
    out.grad += rs.chain(theta, S, dL_da);
    require_finite(out.grad, "actor loss");
    return out;
}

}  // namespace detail

/// KL actor loss
///   mean[ log pi_theta(a~|s) - log pi_old(a~|s) - t_k Q(s, a~) + lambda t_k log pi_old(a~|s) ].
inline ActorLoss actor_loss_kl(const GaussianPolicy& theta, const PriorPolicy& old,
                               const ValueNet& q_net, const Matrix& S, const Matrix& eps,
                               double t_k, double lambda = 0.0) {
    if (!(t_k > 0.0)) throw BadValue("t_k must be > 0");
    const double old_coef = 1.0 - lambda * t_k;
    detail::LogTerm f{[](double x) { return x; }, [](double) { return 1.0; }};
    detail::LogTerm g{[old_coef](double x) { return old_coef * x; },
                      [old_coef](double) { return old_coef; }};
    return detail::reparam_actor_loss(theta, &old, q_net, S, eps, t_k, f, g);
}

inline ActorLoss actor_loss_kl(const GaussianPolicy& theta, const GaussianPolicy& theta_old,
                               const ValueNet& q_net, const Matrix& S, const Matrix& eps,
                               double t_k, double lambda = 0.0) {
    return actor_loss_kl(theta, PriorPolicy::of(theta_old), q_net, S, eps, t_k, lambda);
}

/// Tsallis actor loss
///   mean[ log_q pi_theta(a~|s) - q log_q pi_old(a~|s) - t_k Q(s, a~) ]
/// plus, when lambda > 0, lambda t_k q_mdp log_{q_mdp} pi_old(a~|s).
inline ActorLoss actor_loss_tsallis(const GaussianPolicy& theta, const PriorPolicy& old,
                                    const ValueNet& q_net, const Matrix& S, const Matrix& eps,
                                    double t_k, double q, double lambda = 0.0,
                                    double q_mdp = 1.0) {
    if (!(t_k > 0.0)) throw BadValue("t_k must be > 0");
    TsallisParams{q};
    TsallisParams{q_mdp};
    const double reg = lambda * t_k * q_mdp;
    detail::LogTerm f{[q](double x) { return detail::log_q_of_log(x, q); },
                      [q](double x) { return detail::log_q_of_log_slope(x, q); }};
    detail::LogTerm g{
        [q, q_mdp, reg](double x) {
            return q * detail::log_q_of_log(x, q) - reg * detail::log_q_of_log(x, q_mdp);
        },
        [q, q_mdp, reg](double x) {
            return q * detail::log_q_of_log_slope(x, q) - reg * detail::log_q_of_log_slope(x, q_mdp);
        }};
    return detail::reparam_actor_loss(theta, &old, q_net, S, eps, t_k, f, g);
}

inline ActorLoss actor_loss_tsallis(const GaussianPolicy& theta, const GaussianPolicy& theta_old,
                                    const ValueNet& q_net, const Matrix& S, const Matrix& eps,
                                    double t_k, double q, double lambda = 0.0,
                                    double q_mdp = 1.0) {
    return actor_loss_tsallis(theta, PriorPolicy::of(theta_old), q_net, S, eps, t_k, q, lambda,
                              q_mdp);
}

/// SAC actor loss mean[ lambda log pi_theta(a~|s) - Q(s, a~) ].
inline ActorLoss sac_actor_loss(const GaussianPolicy& theta, const ValueNet& q_net,
                                const Matrix& S, const Matrix& eps, double lambda) {
    if (!(lambda >= 0.0)) throw BadValue("lambda must be >= 0");
    detail::LogTerm f{[lambda](double x) { return lambda * x; },
                      [lambda](double) { return lambda; }};
    return detail::reparam_actor_loss(theta, nullptr, q_net, S, eps, 1.0, f, {});
}

struct Critics {
    ValueNet v;
    ValueNet v_target;
    ValueNet q;
};

struct CriticLosses {
    double v_loss = 0.0;
    double q_loss = 0.0;
};

/// One SGD step on each critic:
///   L_V = mean( V(s) - [Q(s, a~) - lambda log_{q_mdp} pi(a~|s)] )^2,  a~ ~ pi_next
///   L_Q = mean( r + gamma (1 - done) V_target(s') - Q(s, a) )^2
/// followed by V_target <- (1 - tau) V_target + tau V. Both targets use the
/// pre-update networks.
inline CriticLosses critic_update(Critics& c, const TransitionBatch& batch, double gamma,
                                  double tau, double lambda, const GaussianPolicy& theta_next,
                                  const Matrix& eps, double eta, double q_mdp = 1.0) {
    if (batch.size() == 0) throw BadValue("critic_update needs a non-empty batch");
    const ReparamSample rs = reparam_sample(theta_next, batch.states, eps);
    Vector v_target = c.q.predict(stack_state_action(batch.states, rs.actions));
    if (lambda > 0.0) {
        const Vector lp = theta_next.log_density(rs.means, rs.actions);
        for (Eigen::Index j = 0; j < lp.size(); ++j)
            v_target[j] -= lambda * detail::log_q_of_log(lp[j], q_mdp);
    }
    const Vector next_v = c.v_target.predict(batch.next_states);
    const Vector q_target =
        batch.rewards + gamma * batch.not_done.cwiseProduct(next_v);

    const auto v_fit = c.v.forward_backward(batch.states, v_target);
    const auto q_fit = c.q.forward_backward(stack_state_action(batch.states, batch.actions), q_target);
    c.v.sgd_step(v_fit.grad, eta);
    c.q.sgd_step(q_fit.grad, eta);
    c.v_target.polyak_from(c.v, tau);
    return {v_fit.loss, q_fit.loss};
}

/// Actor loss used by the off-policy loop: (theta, theta_old, critics, states, eps).
using OffPolicyActorLoss = std::function<ActorLoss(const GaussianPolicy&, const GaussianPolicy&,
                                                   const Critics&, const Matrix&, const Matrix&)>;

namespace detail {

/// Act, store, sample, one actor step against the frozen old policy, one
/// critic step; the old policy copy is refreshed every m env steps.
inline TrainResult offpolicy_loop(const OffPolicyConfig& cfg, const ContinuousEnv& env, Rng& rng,
                                  const OffPolicyActorLoss& actor_loss,
                                  const PolicyObserver& observer) {
    cfg.validate();
    Rng init_rng = split(rng);
    Rng act_rng = split(rng);
    Rng batch_rng = split(rng);
    Rng noise_rng = split(rng);

    GaussianPolicy theta = GaussianPolicy::make(env.state_dim(), env.action_dim(),
                                                cfg.policy_hidden, cfg.log_std_init, init_rng);
    const auto widths = hidden_layers(cfg.critic_width, 2);
    Critics critics;
    critics.v = ValueNet::make(env.state_dim(), widths, init_rng);
    critics.q = ValueNet::make(env.state_dim() + env.action_dim(), widths, init_rng);
    critics.v_target = critics.v;
    GaussianPolicy theta_old = theta;

    ReplayBuffer buffer(cfg.buffer_capacity, env.state_dim(), env.action_dim());
    TrainResult result;
    const Stopwatch clock;
    auto evaluate = [&](std::size_t step) {
        const auto stats = evaluate_policy(env, theta, cfg.eval.eval_episodes, cfg.eval.eval_seed);
        result.evals.push_back({step, stats.mean, stats.std, clock.elapsed_ms()});
    };
    evaluate(0);

    EvalSchedule schedule(cfg.eval.eval_every);
    Vector s = env.reset(act_rng);
    std::size_t t_in_episode = 0;
    const auto N = static_cast<Eigen::Index>(cfg.batch);
    for (std::size_t step = 1; step <= cfg.eval.total_steps; ++step) {
        const Vector a = theta.sample(s, act_rng);
        auto out = env.step(s, a);
        // time-limit truncation is not a terminal state
        buffer.push({s, a, out.reward, out.next, false});
        if (++t_in_episode == env.horizon()) {
            s = env.reset(act_rng);
            t_in_episode = 0;
        } else {
            s = std::move(out.next);
        }

        if (buffer.size() >= std::max<std::size_t>(cfg.learning_starts, 1)) {
            const TransitionBatch batch = buffer.sample(cfg.batch, batch_rng);
            const Matrix eps = standard_normal(noise_rng, env.action_dim(), N);
            const ActorLoss loss = actor_loss(theta, theta_old, critics, batch.states, eps);
            if (!std::isfinite(loss.loss))
                throw NonFiniteGradient("actor loss non-finite at step " + std::to_string(step));
            theta.apply_update(-cfg.eta * loss.grad);
            require_finite_policy(theta, step);
            const Matrix eps_next = standard_normal(noise_rng, env.action_dim(), N);
            const auto losses = critic_update(critics, batch, cfg.gamma, cfg.tau, cfg.lambda,
                                              theta, eps_next, cfg.eta_critic, cfg.q_mdp);
            if (!std::isfinite(losses.v_loss) || !std::isfinite(losses.q_loss))
                throw NonFiniteGradient("critic loss non-finite at step " + std::to_string(step));
        }
        if (step % cfg.m == 0) theta_old = theta;
        if (observer) observer(step, theta);
        if (schedule.due(step) || step == cfg.eval.total_steps) evaluate(step);
    }
    result.policy = std::move(theta);
    return result;
}

}  // namespace detail

enum class BregmanKind { kl, tsallis };

/// Off-policy MDPO with the KL or Tsallis actor loss. In uniform-prior mode
/// the old policy is replaced by the uniform density over the action box and
/// the actor descends L / t_k.
inline TrainResult train_offpolicy(const OffPolicyConfig& cfg, const ContinuousEnv& env, Rng& rng,
                                   BregmanKind kind = BregmanKind::kl,
                                   const PolicyObserver& observer = {}) {
    const double t_k = cfg.t_k();
    const PriorPolicy uniform = PriorPolicy::uniform_over(env);
    OffPolicyActorLoss loss = [&](const GaussianPolicy& theta, const GaussianPolicy& theta_old,
                                  const Critics& c, const Matrix& S, const Matrix& eps) {
        const PriorPolicy prior = cfg.uniform_prior ? uniform : PriorPolicy::of(theta_old);
        ActorLoss out = kind == BregmanKind::kl
                            ? actor_loss_kl(theta, prior, c.q, S, eps, t_k, cfg.lambda)
                            : actor_loss_tsallis(theta, prior, c.q, S, eps, t_k, cfg.q_bregman,
                                                 cfg.lambda, cfg.q_mdp);
        if (cfg.uniform_prior) {
            out.loss /= t_k;
            out.grad /= t_k;
        }
        return out;
    };
    return detail::offpolicy_loop(cfg, env, rng, loss, observer);
}

}  // namespace mdpo
