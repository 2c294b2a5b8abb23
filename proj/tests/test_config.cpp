#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "mdpo/config.hpp"

using namespace mdpo;

TEST(Config, MinimalFileResolvesDefaults) {
    const auto c = parse_config_text("algo = mdpo-off-kl\nenv = pointmass-1d\n");
    EXPECT_EQ(c, defaults_for(Algo::mdpo_off_kl, "pointmass-1d"));
    EXPECT_EQ(c.seeds, (std::vector<std::uint64_t>{0, 1, 2, 3, 4}));
    EXPECT_EQ(c.gamma, 0.99);
    EXPECT_EQ(c.lambda, 0.2);
    EXPECT_EQ(c.inv_tk, 0.5);
    EXPECT_EQ(c.m, 1000u);
    EXPECT_EQ(c.tau, 0.005);
    EXPECT_EQ(c.buffer_capacity, 1'000'000u);
    EXPECT_EQ(c.q_bregman, c.q_mdp);
}

TEST(Config, PerAlgorithmDefaults) {
    EXPECT_EQ(parse_config_text("algo = mdpo-on\nenv = pointmass-1d").m, 10u);
    EXPECT_EQ(parse_config_text("algo = pg\nenv = pointmass-1d").m, 1u);
    EXPECT_EQ(parse_config_text("algo = ppo\nenv = pointmass-1d").minibatch, 64u);
    EXPECT_EQ(parse_config_text("algo = ppo\nenv = pointmass-1d").eps_clip, 0.2);
    EXPECT_EQ(parse_config_text("algo = sac\nenv = pointmass-1d").lambda, 0.2);
    const auto tab = parse_config_text("algo = tabular-mdpo\nenv = chain-5");
    EXPECT_EQ(tab.gamma, 0.9);
    EXPECT_EQ(tab.K, 500u);
    EXPECT_EQ(tab.t_schedule, StepSchedule::Kind::inverse_sqrt);
    EXPECT_EQ(tab.t0, 1.0);
}

TEST(Config, PerDomainBregmanSteps) {
    const std::pair<const char*, double> table[] = {{"Hopper", 0.8}, {"Walker2d", 0.4},
                                                    {"HalfCheetah", 0.3}, {"Ant", 0.5},
                                                    {"Humanoid", 0.5}, {"HumanoidStandup", 0.3}};
    for (const auto& [env, v] : table) {
        EXPECT_EQ(defaults_for(Algo::mdpo_off_kl, env).inv_tk, v) << env;
        EXPECT_EQ(defaults_for(Algo::mdpo_off_tsallis, std::string(env) + "-v2").inv_tk, v) << env;
    }
    EXPECT_EQ(defaults_for(Algo::mdpo_off_kl, "Hopper-vx").inv_tk, 0.5);
}

TEST(Config, CommentsAndWhitespace) {
    const auto c = parse_config_text(
        "# run file\n"
        "  algo=ppo   # trailing\n"
        "\n"
        "env = pendulum-lite\n"
        "seeds = 3, 5 ,8\n"
        "eta = 1e-3\n");
    EXPECT_EQ(c.algo, Algo::ppo);
    EXPECT_EQ(c.seeds, (std::vector<std::uint64_t>{3, 5, 8}));
    EXPECT_EQ(c.eta, 1e-3);
    EXPECT_EQ(c.policy_hidden, 32);
}

TEST(Config, Errors) {
    EXPECT_THROW(parse_config_text("algo = sac\nenv = pointmass-1d\nlambda = -1"), BadValue);
    EXPECT_THROW(parse_config_text("algo = sac\nenv = pointmass-1d\nlamda = 0.1"), UnknownKey);
    EXPECT_THROW(parse_config_text("env = pointmass-1d"), MissingRequired);
    EXPECT_THROW(parse_config_text("algo = sac"), MissingRequired);
    EXPECT_THROW(parse_config_text("algo = trpo\nenv = x"), BadValue);
    EXPECT_THROW(parse_config_text("algo = sac\nenv = x\neta = fast"), BadValue);
    EXPECT_THROW(parse_config_text("algo = sac\nenv = x\nm = -3"), BadValue);
    EXPECT_THROW(parse_config_text("algo = sac\nenv = x\nm = 0"), BadValue);
    EXPECT_THROW(parse_config_text("algo = sac\nenv = x\nq_mdp = 2.5"), BadValue);
    EXPECT_THROW(parse_config_text("algo = sac\nenv = x\ngamma = 1"), BadValue);
    EXPECT_THROW(parse_config_text("algo = sac\nenv = x\ntau = 2"), BadValue);
    EXPECT_THROW(parse_config_text("algo = sac\nenv = x\neta = 1\neta = 2"), BadValue);
    EXPECT_THROW(parse_config_text("algo = sac\nenv = x\njust words"), BadValue);
    EXPECT_THROW(parse_config_text("algo = ppo\nenv = x\nminibatch = 4096"), BadValue);
    EXPECT_THROW(parse_config_text("algo = ppo\nenv = x\nuniform_prior = maybe"), BadValue);
    EXPECT_THROW(parse_config_text("algo = tabular-mdpo\nenv = chain-4\nt_schedule = cosine"), BadValue);
    EXPECT_THROW(parse_config("/nonexistent/run.cfg"), MissingRequired);
    // every config error shares one base class
    EXPECT_THROW(parse_config_text("algo = sac\nenv = x\nbogus = 1"), ConfigError);
}

TEST(Config, RoundTrip) {
    TrainConfig c = defaults_for(Algo::mdpo_off_tsallis, "pendulum-lite");
    c.seeds = {11, 2};
    c.eta = 0.1 + 0.2;  // not exactly representable in short decimal
    c.q_bregman = 1.5;
    c.q_mdp = 1.25;
    c.lambda = 1.0 / 3.0;
    c.t_schedule = StepSchedule::Kind::annealed;
    c.uniform_prior = true;
    c.log_std_init = -0.5;
    const auto back = parse_config_text(serialize(c));
    EXPECT_EQ(back, c);
    EXPECT_EQ(serialize(back), serialize(c));
}

TEST(Config, RoundTripEveryAlgorithm) {
    for (auto a : {Algo::tabular_mdpo, Algo::mdpo_on, Algo::mdpo_off_kl, Algo::mdpo_off_tsallis, Algo::sac,
                   Algo::ppo, Algo::pg}) {
        const auto c = defaults_for(a, a == Algo::tabular_mdpo ? "chain-5" : "pointmass-1d");
        EXPECT_EQ(parse_config_text(serialize(c)), c) << to_string(a);
        EXPECT_EQ(parse_algo(to_string(a)), a);
    }
}

TEST(Config, ReadsFile) {
    const auto path = std::filesystem::temp_directory_path() / "mdpo_config_test.cfg";
    {
        std::ofstream out(path);
        out << "algo = pg\nenv = pointmass-1d\ntotal_steps = 4096\n";
    }
    const auto c = parse_config(path.string());
    EXPECT_EQ(c.total_steps, 4096u);
    std::filesystem::remove(path);
}
