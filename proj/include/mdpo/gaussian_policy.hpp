#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "mdpo/errors.hpp"
#include "mdpo/mlp.hpp"
#include "mdpo/rng.hpp"

namespace mdpo {

inline constexpr double kLogStdMin = -5.0;
inline constexpr double kLogStdMax = 2.0;
inline constexpr double kHalfLog2Pi = 0.91893853320467274178;  // 0.5 ln(2 pi)

/// Diagonal Gaussian policy pi(a|s) = N(mu(s), diag(exp(log_std))^2).
///
/// mu(s) = W phi(s) + b, where phi is the identity (policy_hidden = 0) or one
/// tanh layer of the given width. The mean network's output layer holds the
/// mean weights and bias; log_std is a free, state-independent vector.
///
/// Flat parameter layout: [mean network parameters..., log_std...].
class GaussianPolicy {
public:
    GaussianPolicy() = default;

    GaussianPolicy(Eigen::Index state_dim, Eigen::Index action_dim, Eigen::Index policy_hidden = 0,
                   double log_std_init = 0.0)
        : mean_(state_dim, hidden_layers(policy_hidden, 1), action_dim),
          log_std_(Vector::Constant(action_dim, std::clamp(log_std_init, kLogStdMin, kLogStdMax))) {}

    static GaussianPolicy make(Eigen::Index state_dim, Eigen::Index action_dim,
                               Eigen::Index policy_hidden, double log_std_init, Rng& rng) {
        GaussianPolicy p(state_dim, action_dim, policy_hidden, log_std_init);
        p.mean_.init(rng, 0.01);
        return p;
    }

    Eigen::Index state_dim() const { return mean_.input_dim(); }
    Eigen::Index action_dim() const { return log_std_.size(); }
    Eigen::Index num_params() const { return mean_.num_params() + log_std_.size(); }
    Eigen::Index num_mean_params() const { return mean_.num_params(); }

    const Mlp& mean_net() const { return mean_; }
    const Vector& log_std() const { return log_std_; }
    Vector std_dev() const { return log_std_.array().exp(); }

    ParamVector params() const {
        ParamVector p(num_params());
        p << mean_.params(), log_std_;
        return p;
    }

    void set_params(const ParamVector& p) {
        if (p.size() != num_params()) throw ShapeMismatch("policy parameter size mismatch");
        if (!p.allFinite()) throw NonFiniteInput("policy parameters must be finite");
        mean_.params() = p.head(mean_.num_params());
        log_std_ = p.tail(log_std_.size());
    }

    /// Projects log_std back into [-5, 2].
    void clamp_log_std() { log_std_ = log_std_.cwiseMax(kLogStdMin).cwiseMin(kLogStdMax); }

    /// theta <- theta + step, followed by the log_std projection.
    void apply_update(const ParamVector& step) {
        const ParamVector next = params() + step;
        if (!next.allFinite()) throw NonFiniteGradient("policy update produced non-finite parameters");
        set_params(next);
        clamp_log_std();
    }

    Matrix mean(const Matrix& S) const { return mean_.forward(S); }
    Vector mean_one(const Vector& s) const { return mean(s).col(0); }

    /// Per-sample log densities for columns of S and A.
    Vector log_prob_batch(const Matrix& S, const Matrix& A) const {
        check_batch(S, A);
        const Matrix mu = mean(S);
        return log_density(mu, A);
    }

    /// Log densities of A under N(mu, sigma) given precomputed means.
    Vector log_density(const Matrix& mu, const Matrix& A) const {
        const Vector inv_var = (-2.0 * log_std_).array().exp();
        const double log_norm =
            -log_std_.sum() - kHalfLog2Pi * static_cast<double>(action_dim());
        Vector lp(A.cols());
        for (Eigen::Index n = 0; n < A.cols(); ++n) {
            const Vector diff = A.col(n) - mu.col(n);
            lp[n] = log_norm - 0.5 * diff.cwiseProduct(diff).dot(inv_var);
        }
        return lp;
    }

    /// d log pi(a|s) / d a for each column.
    Matrix log_density_action_grad(const Matrix& mu, const Matrix& A) const {
        const Vector inv_var = (-2.0 * log_std_).array().exp();
        return -((A - mu).array().colwise() * inv_var.array()).matrix();
    }

    /// Returns the log densities and sum_n w_n * grad_theta log pi(a_n|s_n)
    /// (actions held fixed).
    std::pair<Vector, ParamVector> log_prob_weighted_grad(const Matrix& S, const Matrix& A,
                                                          const Vector& weights) const {
        check_batch(S, A);
        Mlp::Tape tape;
        const Matrix mu = mean_.forward(S, tape);
        const Vector inv_var = (-2.0 * log_std_).array().exp();
        const Matrix diff = A - mu;
        // d lp / d mu = diff / var; d lp / d log_std = diff^2 / var - 1
        Matrix dmu = diff.array().colwise() * inv_var.array();
        dmu = dmu.array().rowwise() * weights.transpose().array();
        ParamVector grad = ParamVector::Zero(num_params());
        ParamVector mean_grad = ParamVector::Zero(mean_.num_params());
        mean_.backward(tape, dmu, &mean_grad, nullptr);
        grad.head(mean_.num_params()) = mean_grad;
        Vector dlog_std = Vector::Zero(action_dim());
        for (Eigen::Index n = 0; n < A.cols(); ++n)
            dlog_std += weights[n] *
                        (diff.col(n).array().square() * inv_var.array() - 1.0).matrix();
        grad.tail(action_dim()) = dlog_std;
        return {log_density(mu, A), std::move(grad)};
    }

    /// Backprops an upstream gradient dL/dmu (action_dim x N) into the mean
    /// parameters; returns a full-size gradient with zero log_std part.
    ParamVector backprop_mean(const Matrix& S, const Matrix& dmu) const {
        Mlp::Tape tape;
        mean_.forward(S, tape);
        ParamVector mean_grad = ParamVector::Zero(mean_.num_params());
        mean_.backward(tape, dmu, &mean_grad, nullptr);
        ParamVector grad = ParamVector::Zero(num_params());
        grad.head(mean_.num_params()) = mean_grad;
        return grad;
    }

    /// Draws a ~ pi(.|s) using eps ~ N(0, I).
    Vector sample(const Vector& s, Rng& rng) const {
        return mean_one(s) + std_dev().cwiseProduct(standard_normal(rng, action_dim()));
    }

private:
    void check_batch(const Matrix& S, const Matrix& A) const {
        if (S.rows() != state_dim() || A.rows() != action_dim() || S.cols() != A.cols())
            throw ShapeMismatch("states/actions do not match the policy");
        if (!S.allFinite() || !A.allFinite()) throw NonFiniteInput("states/actions must be finite");
    }

    Mlp mean_;
    Vector log_std_;
};

struct LogProb {
    double value = 0.0;
    ParamVector grad;
};

/// log pi_theta(a|s) and its gradient w.r.t. every policy parameter.
inline LogProb log_prob(const GaussianPolicy& theta, const Vector& s, const Vector& a) {
    if (!s.allFinite() || !a.allFinite()) throw NonFiniteInput("log_prob inputs must be finite");
    auto [values, grad] = theta.log_prob_weighted_grad(s, a, Vector::Ones(1));
    return {values[0], std::move(grad)};
}

/// Reparameterized action a = mu(s) + sigma * eps, plus the pieces needed to
/// chain an upstream dL/da back into the policy parameters.
struct ReparamSample {
    Matrix actions;  // action_dim x N
    Matrix means;
    Matrix eps;

    /// Gradient w.r.t. theta of sum_n <dL_da_n, a_n>.
    ParamVector chain(const GaussianPolicy& theta, const Matrix& states, const Matrix& dL_da) const {
        ParamVector grad = theta.backprop_mean(states, dL_da);
        const Vector sigma = theta.std_dev();
        // da/dlog_std = sigma * eps
        Vector dlog_std = Vector::Zero(theta.action_dim());
        for (Eigen::Index n = 0; n < dL_da.cols(); ++n)
            dlog_std += dL_da.col(n).cwiseProduct(sigma).cwiseProduct(eps.col(n));
        grad.tail(theta.action_dim()) += dlog_std;
        return grad;
    }
};

inline ReparamSample reparam_sample(const GaussianPolicy& theta, const Matrix& states,
                                    const Matrix& eps) {
    if (eps.rows() != theta.action_dim() || eps.cols() != states.cols())
        throw ShapeMismatch("eps must be action_dim x batch");
    ReparamSample out;
    out.means = theta.mean(states);
    out.eps = eps;
    out.actions = out.means + (eps.array().colwise() * theta.std_dev().array()).matrix();
    return out;
}

struct KlValue {
    double value = 0.0;
    ParamVector grad;  // w.r.t. theta only
};

/// Mean over the columns of S of the closed-form KL(pi_theta(.|s) || pi_k(.|s)),
/// with its gradient w.r.t. theta.
inline KlValue gaussian_kl_batch(const GaussianPolicy& theta, const GaussianPolicy& theta_k,
                                 const Matrix& S) {
    if (theta.action_dim() != theta_k.action_dim() || theta.state_dim() != theta_k.state_dim())
        throw ShapeMismatch("policies have different shapes");
    const double n = static_cast<double>(S.cols());
    Mlp::Tape tape;
    const Matrix mu = theta.mean_net().forward(S, tape);
    const Matrix mu_k = theta_k.mean(S);
    const Vector ls = theta.log_std();
    const Vector ls_k = theta_k.log_std();
    const Vector inv_var_k = (-2.0 * ls_k).array().exp();
    const Vector var_ratio = (2.0 * (ls - ls_k)).array().exp();  // sigma^2 / sigma_k^2

    // per dimension: log(sigma_k/sigma) + (sigma^2 + (mu - mu_k)^2) / (2 sigma_k^2) - 1/2
    const double state_free = (ls_k - ls).sum() + 0.5 * (var_ratio.array() - 1.0).sum();
    const Matrix diff = mu - mu_k;
    double quad = 0.0;
    for (Eigen::Index j = 0; j < S.cols(); ++j)
        quad += 0.5 * diff.col(j).cwiseProduct(diff.col(j)).dot(inv_var_k);

    KlValue out;
    out.value = state_free + quad / n;
    out.grad = ParamVector::Zero(theta.num_params());
    const Matrix dmu = (diff.array().colwise() * inv_var_k.array()) / n;
    ParamVector mean_grad = ParamVector::Zero(theta.num_mean_params());
    theta.mean_net().backward(tape, dmu, &mean_grad, nullptr);
    out.grad.head(theta.num_mean_params()) = mean_grad;
    out.grad.tail(theta.action_dim()) = (var_ratio.array() - 1.0).matrix();
    return out;
}

inline KlValue gaussian_kl(const GaussianPolicy& theta, const GaussianPolicy& theta_k,
                           const Vector& s) {
    return gaussian_kl_batch(theta, theta_k, s);
}

}  // namespace mdpo
