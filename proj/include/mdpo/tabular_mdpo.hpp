#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "mdpo/bregman.hpp"
#include "mdpo/mdp.hpp"

namespace mdpo {

/// Closed-form per-state update
///   pi'(a) ∝ pi(a) exp(t (q(a) - lambda log pi(a))),
/// computed as an exponentiated-gradient simplex step with grad = -(...).
/// Single-action rows are returned unchanged.
inline Vector mdpo_state_update(const Vector& pi_row, const Vector& q_row, double t,
                                double lambda = 0.0) {
    if (pi_row.size() != q_row.size()) throw DimensionMismatch("policy row vs Q row");
    if (pi_row.size() == 1) return pi_row;
    Vector grad = -q_row;
    if (lambda > 0.0)
        for (Eigen::Index a = 0; a < grad.size(); ++a)
            grad[a] += lambda * std::log(std::max(pi_row[a], kProbFloor));
    return md_simplex_step(SimplexPoint(pi_row), grad, t).probs();
}

/// One exact mirror-descent policy update, uniformly over states.
inline TabularPolicy exact_mdpo_step(const TabularMdp& mdp, const TabularPolicy& pi_k, double t_k,
                                     const SoftConfig& soft = {}) {
    for (Eigen::Index s = 0; s < pi_k.n_states(); ++s)
        for (Eigen::Index a = 0; a < pi_k.n_actions(); ++a)
            if (!(pi_k(s, a) > 0.0))
                throw ZeroSupport("policy row " + std::to_string(s) + " has a zero entry");
    const auto qa = q_and_advantage(mdp, pi_k, soft);
    Matrix next(pi_k.n_states(), pi_k.n_actions());
    for (Eigen::Index s = 0; s < pi_k.n_states(); ++s)
        next.row(s) = mdpo_state_update(pi_k.probs().row(s).transpose(),
                                        qa.Q.row(s).transpose(), t_k, soft.lambda)
                          .transpose();
    return TabularPolicy(std::move(next));
}

struct TabularTracePoint {
    std::size_t iteration = 0;
    double gap = 0.0;   // ||V* - V^{pi_k}||_inf
    double value = 0.0; // mu^T V^{pi_k}
};

struct TabularRun {
    std::vector<TabularTracePoint> trace;
    TabularPolicy final_policy;
    OptimalSolution optimum;
};

/// Iterates exact_mdpo_step K times from the uniform policy, recording the
/// optimality gap against value iteration (the soft optimum when lambda > 0)
/// at iterations 0..K.
inline TabularRun run_tabular_mdpo(const TabularMdp& mdp, std::size_t K,
                                   const StepSchedule& schedule, const SoftConfig& soft = {}) {
    if (K < 1) throw BadValue("run_tabular_mdpo needs K >= 1");
    auto optimum = value_iteration(mdp, soft, 1e-12);
    TabularPolicy pi = TabularPolicy::uniform(mdp.n_states(), mdp.n_actions());
    std::vector<TabularTracePoint> trace;
    trace.reserve(K + 1);
    auto record = [&](std::size_t k) {
        const Vector V = policy_evaluation(mdp, pi, soft);
        trace.push_back({k, (optimum.V - V).lpNorm<Eigen::Infinity>(), mdp.initial().dot(V)});
    };
    record(0);
    for (std::size_t k = 0; k < K; ++k) {
        pi = exact_mdpo_step(mdp, pi, schedule(k), soft);
        record(k + 1);
    }
    return {std::move(trace), std::move(pi), std::move(optimum)};
}

}  // namespace mdpo
