#pragma once

#include <atomic>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "mdpo/baselines.hpp"
#include "mdpo/config.hpp"
#include "mdpo/envs.hpp"
#include "mdpo/metrics.hpp"
#include "mdpo/offpolicy.hpp"
#include "mdpo/onpolicy.hpp"
#include "mdpo/rng.hpp"
#include "mdpo/tabular_mdpo.hpp"

namespace mdpo {

inline constexpr const char* kDefaultOutDir = "mdpo_out";

/// --out wins, then $MDPO_LAB_OUT, then ./mdpo_out.
inline std::string resolve_out_dir(const std::optional<std::string>& cli_out) {
    if (cli_out && !cli_out->empty()) return *cli_out;
    if (const char* env = std::getenv("MDPO_LAB_OUT"); env && *env) return env;
    return kDefaultOutDir;
}

inline StepSchedule schedule_of(const TrainConfig& c) {
    switch (c.t_schedule) {
    case StepSchedule::Kind::annealed: return StepSchedule::annealed(c.K);
    case StepSchedule::Kind::constant: return StepSchedule::constant(c.t0);
    case StepSchedule::Kind::inverse_sqrt: return StepSchedule::inverse_sqrt(c.t0);
    }
    return StepSchedule::inverse_sqrt(c.t0);
}

inline EvalConfig eval_config_of(const TrainConfig& c) {
    EvalConfig e;
    e.total_steps = c.total_steps;
    e.eval_every = c.eval_every;
    e.eval_episodes = c.eval_episodes;
    return e;
}

inline OnPolicyConfig onpolicy_config_of(const TrainConfig& c) {
    OnPolicyConfig o;
    o.rollout_steps = c.rollout_steps;
    o.m = c.m;
    o.eta = c.eta;
    o.eta_critic = c.eta_critic;
    o.minibatch = c.minibatch;
    o.critic_epochs = c.critic_epochs;
    o.gamma = c.gamma;
    o.policy_hidden = c.policy_hidden;
    o.log_std_init = c.log_std_init;
    o.critic_width = c.critic_width;
    o.eval = eval_config_of(c);
    return o;
}

inline OffPolicyConfig offpolicy_config_of(const TrainConfig& c) {
    OffPolicyConfig o;
    o.inv_tk = c.inv_tk;
    o.lambda = c.lambda;
    o.q_bregman = c.q_bregman;
    o.q_mdp = c.q_mdp;
    o.m = c.m;
    o.batch = c.batch;
    o.tau = c.tau;
    o.eta = c.eta;
    o.eta_critic = c.eta_critic;
    o.gamma = c.gamma;
    o.buffer_capacity = c.buffer_capacity;
    o.learning_starts = c.learning_starts;
    o.policy_hidden = c.policy_hidden;
    o.log_std_init = c.log_std_init;
    o.critic_width = c.critic_width;
    o.uniform_prior = c.uniform_prior;
    o.eval = eval_config_of(c);
    return o;
}

/// Evaluation trace of one seed. Tabular runs report mu^T V^{pi_k} at
/// iteration k in the env_step column.
inline std::vector<MetricsRow> run_seed(const TrainConfig& c, std::uint64_t seed) {
    const std::string algo = to_string(c.algo);
    std::vector<MetricsRow> rows;
    Environment env = make_env(c.env, seed, c.gamma);

    if (c.algo == Algo::tabular_mdpo) {
        const auto* mdp = std::get_if<TabularMdp>(&env);
        if (!mdp) throw BadValue("tabular-mdpo needs a tabular env, got '" + c.env + "'");
        const TabularMdp m = mdp->with_gamma(c.gamma);
        const Stopwatch clock;
        const auto run = run_tabular_mdpo(m, c.K, schedule_of(c), SoftConfig{c.lambda});
        const double ms = clock.elapsed_ms();
        for (const auto& p : run.trace)
            if (p.iteration % c.eval_every == 0 || p.iteration == c.K)
                rows.push_back({algo, c.env, seed, p.iteration, p.value, 0.0, ms});
        return rows;
    }

    const auto* cont = std::get_if<std::shared_ptr<const ContinuousEnv>>(&env);
    if (!cont) throw BadValue(algo + " needs a continuous env, got '" + c.env + "'");
    const ContinuousEnv& e = **cont;
    Rng rng = make_rng(c.global_seed, seed);

    TrainResult result;
    switch (c.algo) {
    case Algo::mdpo_on: result = train_onpolicy(onpolicy_config_of(c), e, rng); break;
    case Algo::pg: result = train_pg(onpolicy_config_of(c), e, rng); break;
    case Algo::ppo: result = train_ppo({onpolicy_config_of(c), c.eps_clip}, e, rng); break;
    case Algo::mdpo_off_kl:
        result = train_offpolicy(offpolicy_config_of(c), e, rng, BregmanKind::kl);
        break;
    case Algo::mdpo_off_tsallis:
        result = train_offpolicy(offpolicy_config_of(c), e, rng, BregmanKind::tsallis);
        break;
    case Algo::sac: result = train_sac(offpolicy_config_of(c), e, rng); break;
    case Algo::tabular_mdpo: break;
    }
    for (const auto& p : result.evals)
        rows.push_back({algo, c.env, seed, p.env_step, p.mean, p.std, p.wall_ms});
    return rows;
}

struct ExperimentResult {
    std::vector<MetricsRow> metrics;  // seeds in config order
    std::vector<AggregateRow> aggregate;
    std::string out_dir;
};

/// Runs every seed on up to `threads` workers, writes per-seed CSVs, then
/// merges them into metrics.csv and aggregate.csv beside the resolved
/// config. If a seed fails, the other seeds' results are still written and
/// the first failure is rethrown.
inline ExperimentResult run_experiment(TrainConfig c, const std::string& out_dir,
                                       std::optional<std::size_t> threads = std::nullopt) {
    validate(c);
    if (threads) c.threads = *threads;
    namespace fs = std::filesystem;
    fs::create_directories(fs::path(out_dir) / "seeds");
    write_file((fs::path(out_dir) / "config.txt").string(), serialize(c));

    const std::size_t n = c.seeds.size();
    std::vector<std::vector<MetricsRow>> per_seed(n);
    std::vector<std::exception_ptr> failures(n);
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i; (i = next.fetch_add(1)) < n;) {
            try {
                auto rows = run_seed(c, c.seeds[i]);
                // wall time would break byte-identical reruns
                if (!c.record_wall_time)
                    for (auto& r : rows) r.wall_ms = 0.0;
                write_file((fs::path(out_dir) / "seeds" / ("seed-" + std::to_string(c.seeds[i]) + ".csv"))
                               .string(),
                           metrics_csv(rows));
                per_seed[i] = std::move(rows);
            } catch (...) {
                failures[i] = std::current_exception();
            }
        }
    };
    const std::size_t workers = std::min(std::max<std::size_t>(c.threads, 1), n);
    if (workers <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }

    ExperimentResult out;
    out.out_dir = out_dir;
    for (auto& rows : per_seed) out.metrics.insert(out.metrics.end(), rows.begin(), rows.end());
    out.aggregate = aggregate(out.metrics);
    write_file((fs::path(out_dir) / "metrics.csv").string(), metrics_csv(out.metrics));
    write_file((fs::path(out_dir) / "aggregate.csv").string(), aggregate_csv(out.aggregate));
    for (const auto& f : failures)
        if (f) std::rethrow_exception(f);
    return out;
}

/// Recomputes aggregate.csv from DIR/metrics.csv.
inline std::vector<AggregateRow> aggregate_dir(const std::string& dir) {
    namespace fs = std::filesystem;
    const auto rows = parse_metrics_csv(read_file((fs::path(dir) / "metrics.csv").string()));
    auto agg = aggregate(rows);
    write_file((fs::path(dir) / "aggregate.csv").string(), aggregate_csv(agg));
    return agg;
}

}  // namespace mdpo
