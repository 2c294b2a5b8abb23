#include <gtest/gtest.h>

#include <cmath>

#include "mdpo/envs.hpp"
#include "mdpo/grad_check.hpp"
#include "mdpo/onpolicy.hpp"

using namespace mdpo;

namespace {

// Reward 1 every step, fixed horizon, state counts up.
class ConstantRewardEnv final : public ContinuousEnv {
public:
    explicit ConstantRewardEnv(std::size_t horizon, double reward = 1.0)
        : horizon_(horizon), reward_(reward) {}
    std::string name() const override { return "constant"; }
    Eigen::Index state_dim() const override { return 1; }
    Eigen::Index action_dim() const override { return 1; }
    std::size_t horizon() const override { return horizon_; }
    Vector action_low() const override { return Vector::Constant(1, -1.0); }
    Vector action_high() const override { return Vector::Constant(1, 1.0); }
    Vector reset(Rng&) const override { return Vector::Zero(1); }
    StepResult step(const Vector& s, const Vector&) const override {
        return {Vector::Constant(1, s[0] + 1.0), reward_};
    }

private:
    std::size_t horizon_;
    double reward_;
};

GaussianPolicy random_policy(Rng& rng, Eigen::Index sd, Eigen::Index ad, Eigen::Index hidden = 0) {
    GaussianPolicy p(sd, ad, hidden);
    ParamVector v = 0.4 * standard_normal(rng, p.num_params());
    v.tail(ad) = (0.2 * standard_normal(rng, ad)).array() - 0.3;
    p.set_params(v);
    return p;
}

Trajectory random_trajectory(Rng& rng, Eigen::Index sd, Eigen::Index ad, Eigen::Index n) {
    Trajectory t;
    t.states = standard_normal(rng, sd, n);
    t.actions = standard_normal(rng, ad, n);
    t.rewards = standard_normal(rng, n);
    t.returns = t.rewards;
    t.advantages = standard_normal(rng, n);
    t.episode_end.assign(static_cast<std::size_t>(n), false);
    t.episode_end.back() = true;
    return t;
}

OnPolicyConfig small_config(std::size_t total) {
    OnPolicyConfig cfg;
    cfg.rollout_steps = 200;
    cfg.minibatch = 50;
    cfg.critic_epochs = 2;
    cfg.eta = 1e-2;
    cfg.eta_critic = 1e-3;
    cfg.critic_width = 8;
    cfg.eval.total_steps = total;
    cfg.eval.eval_every = 400;
    cfg.eval.eval_episodes = 3;
    return cfg;
}

}  // namespace

TEST(Rollout, HandBackwardRecursion) {
    const ConstantRewardEnv env(3);
    Rng rng = make_rng(7, 0);
    GaussianPolicy theta(1, 1, 0);
    const auto traj = collect_rollout(env, theta, 3, 0.5, rng);
    ASSERT_EQ(traj.size(), 3);
    EXPECT_DOUBLE_EQ(traj.returns[0], 1.75);
    EXPECT_DOUBLE_EQ(traj.returns[1], 1.5);
    EXPECT_DOUBLE_EQ(traj.returns[2], 1.0);
}

TEST(Rollout, ResetsAtEpisodeEnd) {
    const ConstantRewardEnv env(3);
    Rng rng = make_rng(7, 1);
    const auto traj = collect_rollout(env, GaussianPolicy(1, 1, 0), 7, 0.5, rng);
    const double expect[] = {1.75, 1.5, 1.0, 1.75, 1.5, 1.0, 1.0};
    for (int t = 0; t < 7; ++t) EXPECT_DOUBLE_EQ(traj.returns[t], expect[t]) << t;
    EXPECT_EQ(traj.states(0, 3), 0.0);
    EXPECT_TRUE(traj.episode_end[2]);
    EXPECT_TRUE(traj.episode_end[6]);
}

TEST(Rollout, ZeroRewardsGiveZeroReturns) {
    const ConstantRewardEnv env(5, 0.0);
    Rng rng = make_rng(7, 2);
    const auto traj = collect_rollout(env, GaussianPolicy(1, 1, 0), 12, 0.99, rng);
    EXPECT_EQ(traj.returns.cwiseAbs().maxCoeff(), 0.0);
}

TEST(Rollout, ReturnsSatisfyRecursion) {
    const PointMass1d env;
    Rng rng = make_rng(7, 3);
    const auto traj = collect_rollout(env, random_policy(rng, 1, 1), 250, 0.9, rng);
    for (Eigen::Index t = 0; t < traj.size(); ++t) {
        const double tail = traj.episode_end[static_cast<std::size_t>(t)] ? 0.0 : traj.returns[t + 1];
        EXPECT_NEAR(traj.returns[t], traj.rewards[t] + 0.9 * tail, 1e-12);
    }
}

TEST(Rollout, DeterministicGivenStream) {
    const PointMass1d env;
    Rng a = make_rng(7, 4), b = make_rng(7, 4), c = make_rng(7, 5);
    Rng prng = make_rng(7, 6);
    const auto theta = random_policy(prng, 1, 1);
    const auto x = collect_rollout(env, theta, 300, 0.99, a);
    const auto y = collect_rollout(env, theta, 300, 0.99, b);
    const auto z = collect_rollout(env, theta, 300, 0.99, c);
    EXPECT_EQ(x.states, y.states);
    EXPECT_EQ(x.actions, y.actions);
    EXPECT_EQ(x.returns, y.returns);
    EXPECT_NE(x.actions, z.actions);
    EXPECT_THROW(collect_rollout(env, theta, 0, 0.99, a), BadValue);
}

TEST(Advantages, SubtractCritic) {
    Rng rng = make_rng(7, 7);
    auto traj = random_trajectory(rng, 2, 1, 20);
    ValueNet zero(2, {4});
    EXPECT_EQ(estimate_advantages(traj, zero).advantages, traj.returns);

    const auto critic = ValueNet::make(2, {8, 8}, rng);
    const auto out = estimate_advantages(traj, critic);
    for (Eigen::Index t = 0; t < 20; ++t)
        EXPECT_DOUBLE_EQ(out.advantages[t], traj.returns[t] - critic.predict_one(traj.states.col(t)));

    traj.returns = critic.predict(traj.states);
    EXPECT_EQ(estimate_advantages(traj, critic).advantages.cwiseAbs().maxCoeff(), 0.0);
}

TEST(Psi, EqualsPolicyGradientAtSameParams) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        Rng rng = make_rng(7, 100 + seed);
        const auto theta = random_policy(rng, 3, 2, seed % 2 ? 16 : 0);
        const auto traj = random_trajectory(rng, 3, 2, 64);
        const auto psi = psi_objective(theta, theta, traj, 0.3);
        EXPECT_EQ(psi.ratios, Vector::Ones(64));
        EXPECT_LE((psi.grad - policy_gradient_estimate(theta, traj)).cwiseAbs().maxCoeff(), 1e-10);
    }
}

TEST(Psi, ZeroAdvantageZeroGradient) {
    Rng rng = make_rng(7, 8);
    const auto theta = random_policy(rng, 2, 1);
    auto traj = random_trajectory(rng, 2, 1, 30);
    traj.advantages.setZero();
    EXPECT_EQ(psi_gradient(theta, theta, traj, 1.0).cwiseAbs().maxCoeff(), 0.0);
}

TEST(Psi, GradientMatchesFiniteDifferences) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        Rng rng = make_rng(7, 200 + seed);
        const auto theta_k = random_policy(rng, 3, 2, seed % 2 ? 16 : 0);
        GaussianPolicy theta_i = theta_k;
        theta_i.set_params(theta_k.params() + 0.1 * standard_normal(rng, theta_k.num_params()));
        const auto traj = random_trajectory(rng, 3, 2, 32);
        const double t_k = 0.5;
        const DifferentiableFn f = [&](const ParamVector& x) {
            GaussianPolicy p = theta_i;
            p.set_params(x);
            const auto psi = psi_objective(p, theta_k, traj, t_k);
            return std::pair{psi.value, psi.grad};
        };
        EXPECT_LE(grad_check(f, theta_i.params()), 1e-4) << seed;
    }
}

TEST(Psi, RatiosAreClamped) {
    GaussianPolicy a(1, 1, 0), b(1, 1, 0);
    ParamVector p = a.params();
    p[1] = 30.0;  // mean far from the logged actions
    a.set_params(p);
    Trajectory traj;
    traj.states = Matrix::Zero(1, 2);
    traj.actions = Matrix::Zero(1, 2);
    traj.actions(0, 1) = 30.0;
    traj.rewards = traj.returns = traj.advantages = Vector::Ones(2);
    traj.episode_end = {false, true};
    const auto psi = psi_objective(a, b, traj, 1.0);
    EXPECT_EQ(psi.ratios[0], kRatioMin);
    EXPECT_EQ(psi.ratios[1], kRatioMax);
    EXPECT_THROW(psi_objective(a, b, traj, 0.0), BadValue);
}

TEST(MdpoUpdate, SingleStepIsVanillaPg) {
    Rng rng = make_rng(7, 9);
    const auto theta = random_policy(rng, 2, 1, 8);
    const auto traj = random_trajectory(rng, 2, 1, 40);
    const auto next = mdpo_policy_update(theta, traj, 0.4, 1, 0.05);
    GaussianPolicy ref = theta;
    ref.apply_update(0.05 * policy_gradient_estimate(theta, traj));
    EXPECT_LE((next.params() - ref.params()).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(MdpoUpdate, ZeroLearningRateKeepsParams) {
    Rng rng = make_rng(7, 10);
    const auto theta = random_policy(rng, 2, 1);
    const auto traj = random_trajectory(rng, 2, 1, 40);
    EXPECT_EQ(mdpo_policy_update(theta, traj, 0.4, 10, 0.0).params(), theta.params());
    EXPECT_THROW(mdpo_policy_update(theta, traj, 0.4, 0, 0.1), BadValue);
}

TEST(MdpoUpdate, MultiStepIteratesPsiAscent) {
    Rng rng = make_rng(7, 11);
    const auto theta = random_policy(rng, 2, 1, 4);
    const auto traj = random_trajectory(rng, 2, 1, 40);
    GaussianPolicy ref = theta;
    for (int i = 0; i < 5; ++i) ref.apply_update(0.02 * psi_gradient(ref, theta, traj, 0.3));
    EXPECT_LE((mdpo_policy_update(theta, traj, 0.3, 5, 0.02).params() - ref.params()).cwiseAbs().maxCoeff(),
              1e-12);
}

TEST(StepSchedule, AnnealedWithFloor) {
    EXPECT_EQ(step_schedule_tk(0, 10), 1.0);
    EXPECT_EQ(step_schedule_tk(5, 10), 0.5);
    EXPECT_NEAR(step_schedule_tk(9, 10), 0.1, 1e-15);
    EXPECT_EQ(step_schedule_tk(99, 100), kStepFloor);
    double prev = 2.0;
    for (std::size_t k = 0; k < 1000; ++k) {
        const double t = step_schedule_tk(k, 1000);
        EXPECT_GT(t, 0.0);
        EXPECT_LE(t, prev);
        prev = t;
    }
}

TEST(CriticFit, MatchedTargetsLeaveParamsAlone) {
    Rng rng = make_rng(7, 12);
    auto critic = ValueNet::make(2, {8, 8}, rng);
    const Matrix X = standard_normal(rng, 2, 64);
    const Vector y = critic.predict(X);
    const ParamVector before = critic.params();
    const auto report = critic_fit(critic, X, y, 16, 3, 0.1, rng);
    EXPECT_EQ(report.final_loss, 0.0);
    EXPECT_LE((critic.params() - before).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_THROW(critic_fit(critic, X, y, 65, 1, 0.1, rng), BadValue);
}

TEST(CriticFit, LinearCriticFitsLine) {
    Rng rng = make_rng(7, 13);
    ValueNet critic(1, {});
    const Matrix X = standard_normal(rng, 1, 100);
    const Vector y = 2.0 * X.row(0).transpose();
    const auto report = critic_fit(critic, X, y, 10, 200, 0.05, rng);
    EXPECT_LE(report.final_loss, 1e-3);
    EXPECT_NEAR(critic.params()[0], 2.0, 1e-2);
}

TEST(CriticFit, LossMostlyDecreases) {
    Rng rng = make_rng(7, 14);
    auto critic = ValueNet::make(2, {16, 16}, rng);
    const Matrix X = standard_normal(rng, 2, 256);
    Vector y(256);
    for (Eigen::Index i = 0; i < 256; ++i) y[i] = std::sin(X(0, i)) + 0.5 * X(1, i);
    const auto report = critic_fit(critic, X, y, 32, 100, 0.01, rng);
    int down = 0;
    for (std::size_t e = 1; e < report.epoch_losses.size(); ++e)
        down += report.epoch_losses[e] <= report.epoch_losses[e - 1];
    EXPECT_GE(down, 90);
}

TEST(TrainOnPolicy, ZeroIterationsEvaluatesInitialPolicy) {
    const PointMass1d env;
    Rng rng = make_rng(7, 15);
    const auto res = train_onpolicy(small_config(0), env, rng);
    ASSERT_EQ(res.evals.size(), 1u);
    EXPECT_EQ(res.evals[0].env_step, 0u);
}

TEST(TrainOnPolicy, DeterministicAndFinite) {
    const PendulumLite env;
    auto cfg = small_config(1200);
    cfg.policy_hidden = 8;
    Rng a = make_rng(7, 16), b = make_rng(7, 16);
    std::size_t observed = 0;
    const auto x = train_onpolicy(cfg, env, a, [&](std::size_t, const GaussianPolicy& p) {
        ++observed;
        EXPECT_TRUE(p.params().allFinite());
    });
    const auto y = train_onpolicy(cfg, env, b);
    EXPECT_EQ(observed, 6u);
    ASSERT_EQ(x.evals.size(), y.evals.size());
    for (std::size_t i = 0; i < x.evals.size(); ++i) {
        EXPECT_EQ(x.evals[i].env_step, y.evals[i].env_step);
        EXPECT_EQ(x.evals[i].mean, y.evals[i].mean);
    }
    EXPECT_EQ(x.evals.back().env_step, 1200u);
    EXPECT_EQ(x.policy.params(), y.policy.params());
}

TEST(TrainOnPolicy, DivergenceIsReported) {
    const PointMass1d env;
    auto cfg = small_config(2000);
    cfg.eta = 1e305;
    Rng rng = make_rng(7, 17);
    EXPECT_THROW(train_onpolicy(cfg, env, rng), NonFiniteGradient);
}

TEST(Psi, ClampedSamplesContributeNoGradient) {
    GaussianPolicy a(1, 1, 0), b(1, 1, 0);
    ParamVector p = a.params();
    p[1] = 30.0;
    a.set_params(p);
    Trajectory traj;
    traj.states = Matrix::Zero(1, 1);
    traj.actions = Matrix::Zero(1, 1);
    traj.rewards = traj.returns = traj.advantages = Vector::Ones(1);
    traj.episode_end = {true};
    // with a huge step the KL term vanishes and only the ratio term is left
    const auto psi = psi_objective(a, b, traj, 1e300);
    ASSERT_EQ(psi.ratios[0], kRatioMin);
    EXPECT_LE(psi.grad.cwiseAbs().maxCoeff(), 1e-290);
}
