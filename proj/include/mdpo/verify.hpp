#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "mdpo/bregman.hpp"
#include "mdpo/config.hpp"
#include "mdpo/envs.hpp"
#include "mdpo/gaussian_policy.hpp"
#include "mdpo/grad_check.hpp"
#include "mdpo/offpolicy.hpp"
#include "mdpo/onpolicy.hpp"
#include "mdpo/rng.hpp"
#include "mdpo/tabular_mdpo.hpp"

namespace mdpo {

struct CheckResult {
    std::string name;
    bool passed = false;
    std::string detail;
};

namespace detail {

inline std::string fmt(double v) { return format_double(v); }

/// 2-simplex grid minimum of t <g, y> + KL(y || x) against the closed form.
inline CheckResult check_simplex_grid() {
    Rng rng = make_rng(1, 1);
    const int n = 400;
    double worst = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
        Vector x(3), g(3);
        for (int i = 0; i < 3; ++i) {
            x[i] = uniform(rng, 0.05, 1.0);
            g[i] = uniform(rng, -2.0, 2.0);
        }
        x /= x.sum();
        const double t = uniform(rng, 0.1, 3.0);
        const Vector closed = md_simplex_step(SimplexPoint(x), g, t).probs();
        auto obj = [&](const Vector& y) { return t * g.dot(y) + kl_divergence(y, x); };
        double best = std::numeric_limits<double>::infinity();
        Vector best_y = Vector::Zero(3);
        for (int i = 0; i <= n; ++i)
            for (int j = 0; i + j <= n; ++j) {
                Vector y(3);
                y << double(i) / n, double(j) / n, double(n - i - j) / n;
                const double v = obj(y);
                if (v < best) {
                    best = v;
                    best_y = y;
                }
            }
        worst = std::max(worst, (best_y - closed).cwiseAbs().maxCoeff());
    }
    return {"simplex-grid-equivalence", worst <= 2.0 / n, "max |grid - closed| = " + fmt(worst)};
}

inline CheckResult check_tsallis_limit() {
    Rng rng = make_rng(1, 2);
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        Vector p(4), r(4);
        for (int i = 0; i < 4; ++i) {
            p[i] = uniform(rng, 0.01, 1.0);
            r[i] = uniform(rng, 0.01, 1.0);
        }
        p /= p.sum();
        r /= r.sum();
        const double kl = kl_divergence(p, r);
        for (double q : {1.0 - 1e-7, 1.0 + 1e-7}) {
            const double b = tsallis_bregman(p, r, TsallisParams{q});
            worst = std::max(worst, std::abs(b - kl) / std::max(kl, 1e-12));
        }
    }
    return {"tsallis-q-to-1", worst <= 1e-5, "max relative gap = " + fmt(worst)};
}

inline CheckResult check_gradients() {
    Rng rng = make_rng(1, 3);
    const Eigen::Index sd = 3, ad = 2, n = 16;
    GaussianPolicy theta = GaussianPolicy::make(sd, ad, 8, -0.3, rng);
    GaussianPolicy theta_k = GaussianPolicy::make(sd, ad, 8, -0.1, rng);
    {
        ParamVector p = theta.params();
        p.head(theta.num_mean_params()) += 0.3 * standard_normal(rng, theta.num_mean_params(), 1);
        theta.set_params(p);
    }
    const Matrix S = standard_normal(rng, sd, n);
    const Matrix eps = standard_normal(rng, ad, n);
    Trajectory traj;
    traj.states = S;
    traj.actions = theta_k.mean(S) + 0.5 * standard_normal(rng, ad, n);
    traj.advantages = standard_normal(rng, n, 1);
    traj.rewards = Vector::Zero(n);
    traj.returns = Vector::Zero(n);
    traj.episode_end.assign(static_cast<std::size_t>(n), false);
    ValueNet q_net = ValueNet::make(sd + ad, {16, 16}, rng);

    auto with = [&](const ParamVector& p) {
        GaussianPolicy copy = theta;
        copy.set_params(p);
        return copy;
    };
    std::vector<std::pair<std::string, DifferentiableFn>> fns{
        {"gaussian-kl",
         [&](const ParamVector& p) {
             auto kl = gaussian_kl_batch(with(p), theta_k, S);
             return std::pair{kl.value, kl.grad};
         }},
        {"psi",
         [&](const ParamVector& p) {
             auto v = psi_objective(with(p), theta_k, traj, 0.7);
             return std::pair{v.value, v.grad};
         }},
        {"actor-kl",
         [&](const ParamVector& p) {
             auto l = actor_loss_kl(with(p), theta_k, q_net, S, eps, 2.0, 0.2);
             return std::pair{l.loss, l.grad};
         }},
        {"actor-tsallis",
         [&](const ParamVector& p) {
             auto l = actor_loss_tsallis(with(p), theta_k, q_net, S, eps, 2.0, 0.7, 0.2, 1.3);
             return std::pair{l.loss, l.grad};
         }},
        {"sac-actor",
         [&](const ParamVector& p) {
             auto l = sac_actor_loss(with(p), q_net, S, eps, 0.2);
             return std::pair{l.loss, l.grad};
         }},
    };
    double worst = 0.0;
    std::string worst_name;
    for (const auto& [name, f] : fns) {
        const double err = grad_check(f, theta.params());
        if (err > worst) {
            worst = err;
            worst_name = name;
        }
    }
    return {"gradient-checks", worst <= 1e-4,
            "worst relative error " + fmt(worst) + (worst_name.empty() ? "" : " (" + worst_name + ")")};
}

// t0 = 1 needs far more than 500 iterations on these MDPs
inline constexpr double kConvergenceT0 = 3.0;

inline CheckResult check_tabular_convergence() {
    const TabularMdp mdp = make_random_mdp(10, 4, 0.9, std::uint64_t{3});
    const auto run = run_tabular_mdpo(mdp, 500, StepSchedule::inverse_sqrt(kConvergenceT0));
    const double gap = run.trace.back().gap;
    return {"tabular-convergence", gap <= 1e-2, "gap after 500 iterations = " + fmt(gap)};
}

}  // namespace detail

/// Oracle and property checks run by `mdpo_lab verify`.
inline std::vector<CheckResult> run_verify_suite() {
    using Check = std::function<CheckResult()>;
    const std::vector<std::pair<std::string, Check>> checks{
        {"simplex-grid-equivalence", detail::check_simplex_grid},
        {"tsallis-q-to-1", detail::check_tsallis_limit},
        {"gradient-checks", detail::check_gradients},
        {"tabular-convergence", detail::check_tabular_convergence},
    };
    std::vector<CheckResult> out;
    for (const auto& [name, check] : checks) {
        try {
            out.push_back(check());
        } catch (const std::exception& e) {
            out.push_back({name, false, std::string("threw: ") + e.what()});
        }
    }
    return out;
}

}  // namespace mdpo
