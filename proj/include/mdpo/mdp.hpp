#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <utility>

#include <Eigen/Dense>

#include "mdpo/bregman.hpp"
#include "mdpo/errors.hpp"

namespace mdpo {

/// Finite discounted MDP. Transitions are stored as an (S*A) x S matrix whose
/// row s*A + a is P(. | s, a).
class TabularMdp {
public:
    TabularMdp(Matrix transitions, Matrix rewards, double gamma, Vector initial)
        : P_(std::move(transitions)), R_(std::move(rewards)), gamma_(gamma),
          mu_(std::move(initial)) {
        const auto S = R_.rows();
        const auto A = R_.cols();
        if (S < 1 || A < 1) throw ShapeMismatch("MDP needs at least one state and action");
        if (P_.rows() != S * A || P_.cols() != S)
            throw ShapeMismatch("transition matrix must be (S*A) x S");
        if (mu_.size() != S) throw ShapeMismatch("initial distribution has wrong size");
        if (!(gamma_ >= 0.0 && gamma_ < 1.0))
            throw BadValue("discount must lie in [0, 1)");
        for (Eigen::Index row = 0; row < P_.rows(); ++row)
            if (!detail::is_distribution(P_.row(row).transpose()))
                throw InvalidDistribution("P(.|s,a) row " + std::to_string(row) +
                                          " is not a distribution");
        if (!detail::is_distribution(mu_))
            throw InvalidDistribution("initial distribution must sum to 1");
        if (!R_.allFinite()) throw NonFiniteInput("rewards must be finite");
    }

    Eigen::Index n_states() const noexcept { return R_.rows(); }
    Eigen::Index n_actions() const noexcept { return R_.cols(); }
    double gamma() const noexcept { return gamma_; }
    const Matrix& transitions() const noexcept { return P_; }
    const Matrix& rewards() const noexcept { return R_; }
    const Vector& initial() const noexcept { return mu_; }

    /// P(. | s, a) as a row vector.
    auto next_states(Eigen::Index s, Eigen::Index a) const { return P_.row(s * n_actions() + a); }

    TabularMdp with_gamma(double gamma) const { return TabularMdp(P_, R_, gamma, mu_); }

private:
    Matrix P_;
    Matrix R_;
    double gamma_;
    Vector mu_;
};

/// Stationary stochastic policy; row s is pi(. | s).
class TabularPolicy {
public:
    explicit TabularPolicy(Matrix probs) : probs_(std::move(probs)) {
        for (Eigen::Index s = 0; s < probs_.rows(); ++s)
            if (!detail::is_distribution(probs_.row(s).transpose()))
                throw InvalidDistribution("policy row " + std::to_string(s) +
                                          " is not a distribution");
    }

    static TabularPolicy uniform(Eigen::Index S, Eigen::Index A) {
        return TabularPolicy(Matrix::Constant(S, A, 1.0 / static_cast<double>(A)));
    }

    static TabularPolicy deterministic(const Eigen::VectorXi& choice, Eigen::Index A) {
        Matrix m = Matrix::Zero(choice.size(), A);
        for (Eigen::Index s = 0; s < choice.size(); ++s) m(s, choice[s]) = 1.0;
        return TabularPolicy(std::move(m));
    }

    const Matrix& probs() const noexcept { return probs_; }
    Eigen::Index n_states() const noexcept { return probs_.rows(); }
    Eigen::Index n_actions() const noexcept { return probs_.cols(); }
    double operator()(Eigen::Index s, Eigen::Index a) const { return probs_(s, a); }

private:
    Matrix probs_;
};

/// Entropy regularization strength; lambda = 0 is the unregularized MDP.
struct SoftConfig {
    double lambda = 0.0;

    SoftConfig() = default;
    explicit SoftConfig(double l) : lambda(l) {
        if (!(lambda >= 0.0)) throw BadValue("entropy coefficient must be >= 0");
    }
    bool is_soft() const noexcept { return lambda > 0.0; }
};

/// Shannon entropy in nats.
inline double shannon_entropy(const Vector& p) {
    double h = 0.0;
    for (Eigen::Index i = 0; i < p.size(); ++i)
        if (p[i] > 0.0) h -= p[i] * std::log(p[i]);
    return h;
}

namespace detail {

inline void check_policy_shape(const TabularMdp& mdp, const TabularPolicy& pi) {
    if (pi.n_states() != mdp.n_states() || pi.n_actions() != mdp.n_actions())
        throw ShapeMismatch("policy is " + std::to_string(pi.n_states()) + "x" +
                            std::to_string(pi.n_actions()) + ", MDP is " +
                            std::to_string(mdp.n_states()) + "x" +
                            std::to_string(mdp.n_actions()));
}

/// P_pi(s, s') = sum_a pi(a|s) P(s'|s,a).
inline Matrix policy_transitions(const TabularMdp& mdp, const TabularPolicy& pi) {
    const auto S = mdp.n_states();
    const auto A = mdp.n_actions();
    Matrix Ppi = Matrix::Zero(S, S);
    for (Eigen::Index s = 0; s < S; ++s)
        for (Eigen::Index a = 0; a < A; ++a)
            Ppi.row(s) += pi(s, a) * mdp.next_states(s, a);
    return Ppi;
}

/// r_pi(s) = sum_a pi(a|s) r(s,a) + lambda H(pi(.|s)).
inline Vector policy_rewards(const TabularMdp& mdp, const TabularPolicy& pi,
                             const SoftConfig& soft) {
    Vector r = (mdp.rewards().array() * pi.probs().array()).rowwise().sum();
    if (soft.is_soft())
        for (Eigen::Index s = 0; s < mdp.n_states(); ++s)
            r[s] += soft.lambda * shannon_entropy(pi.probs().row(s).transpose());
    return r;
}

/// Q(s,a) = r(s,a) + gamma sum_s' P(s'|s,a) V(s').
inline Matrix backup(const TabularMdp& mdp, const Vector& V) {
    const Vector next = mdp.transitions() * V;  // indexed s*A + a
    Matrix Q = mdp.rewards();
    for (Eigen::Index s = 0; s < mdp.n_states(); ++s)
        for (Eigen::Index a = 0; a < mdp.n_actions(); ++a)
            Q(s, a) += mdp.gamma() * next[s * mdp.n_actions() + a];
    return Q;
}

inline double log_sum_exp(const Vector& x) {
    const double m = x.maxCoeff();
    return m + std::log((x.array() - m).exp().sum());
}

}  // namespace detail

/// Exact V^pi from the linear system (I - gamma P_pi) V = r_pi.
inline Vector policy_evaluation(const TabularMdp& mdp, const TabularPolicy& pi,
                                const SoftConfig& soft = {}) {
    detail::check_policy_shape(mdp, pi);
    const auto S = mdp.n_states();
    const Matrix lhs = Matrix::Identity(S, S) - mdp.gamma() * detail::policy_transitions(mdp, pi);
    return lhs.partialPivLu().solve(detail::policy_rewards(mdp, pi, soft));
}

struct QAdvantage {
    Matrix Q;
    Matrix A;
    Vector V;
};

/// Q^pi and A^pi = Q^pi - V^pi (soft versions when lambda > 0).
inline QAdvantage q_and_advantage(const TabularMdp& mdp, const TabularPolicy& pi,
                                  const SoftConfig& soft = {}) {
    Vector V = policy_evaluation(mdp, pi, soft);
    Matrix Q = detail::backup(mdp, V);
    Matrix A = Q.colwise() - V;
    return {std::move(Q), std::move(A), std::move(V)};
}

/// Normalized discounted state occupancy rho = (1-gamma)(I - gamma P_pi^T)^{-1} mu.
inline Vector state_visitation(const TabularMdp& mdp, const TabularPolicy& pi) {
    detail::check_policy_shape(mdp, pi);
    const auto S = mdp.n_states();
    const Matrix lhs =
        Matrix::Identity(S, S) - mdp.gamma() * detail::policy_transitions(mdp, pi).transpose();
    Vector rho = lhs.partialPivLu().solve(mdp.initial()) * (1.0 - mdp.gamma());
    return rho.cwiseMax(0.0);
}

struct OptimalSolution {
    Vector V;
    TabularPolicy pi;
    std::size_t iterations = 0;
};

/// Bellman-optimal V* and pi*. The hard case returns a greedy deterministic
/// policy (ties to the lowest action index); the soft case uses the
/// log-sum-exp backup at temperature lambda and returns the Boltzmann policy.
/// Iterates until the contraction bound guarantees |V - V*| well under tol.
inline OptimalSolution value_iteration(const TabularMdp& mdp, const SoftConfig& soft = {},
                                       double tol = 1e-10) {
    if (!(tol > 0.0)) throw BadValue("value_iteration tolerance must be > 0");
    const auto S = mdp.n_states();
    const auto A = mdp.n_actions();
    const double gamma = mdp.gamma();
    const double stop = std::max(tol * (1.0 - gamma) * (1.0 - gamma) / 4.0, 1e-300);

    auto bellman = [&](const Matrix& Q) {
        Vector V(S);
        for (Eigen::Index s = 0; s < S; ++s)
            V[s] = soft.is_soft()
                       ? soft.lambda * detail::log_sum_exp(Q.row(s).transpose() / soft.lambda)
                       : Q.row(s).maxCoeff();
        return V;
    };

    Vector V = Vector::Zero(S);
    std::size_t it = 0;
    constexpr std::size_t kMaxIterations = 10'000'000;
    double last_change = std::numeric_limits<double>::infinity();
    while (it < kMaxIterations) {
        Vector next = bellman(detail::backup(mdp, V));
        const double change = (next - V).lpNorm<Eigen::Infinity>();
        V = std::move(next);
        ++it;
        if (change <= stop) break;
        // floating point floor: the sweep no longer contracts
        if (change >= last_change && change < 1e-12 * (1.0 + V.lpNorm<Eigen::Infinity>())) break;
        last_change = change;
    }

    const Matrix Q = detail::backup(mdp, V);
    Matrix probs = Matrix::Zero(S, A);
    for (Eigen::Index s = 0; s < S; ++s) {
        if (soft.is_soft()) {
            const Vector z = Q.row(s).transpose() / soft.lambda;
            const Vector e = (z.array() - z.maxCoeff()).exp();
            probs.row(s) = (e / e.sum()).transpose();
        } else {
            Eigen::Index best = 0;
            Q.row(s).maxCoeff(&best);
            probs(s, best) = 1.0;
        }
    }
    return {std::move(V), TabularPolicy(std::move(probs)), it};
}

}  // namespace mdpo
