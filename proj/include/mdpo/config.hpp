#pragma once

#include <charconv>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "mdpo/bregman.hpp"
#include "mdpo/errors.hpp"

namespace mdpo {

enum class Algo { tabular_mdpo, mdpo_on, mdpo_off_kl, mdpo_off_tsallis, sac, ppo, pg };

inline const char* to_string(Algo a) {
    switch (a) {
    case Algo::tabular_mdpo: return "tabular-mdpo";
    case Algo::mdpo_on: return "mdpo-on";
    case Algo::mdpo_off_kl: return "mdpo-off-kl";
    case Algo::mdpo_off_tsallis: return "mdpo-off-tsallis";
    case Algo::sac: return "sac";
    case Algo::ppo: return "ppo";
    case Algo::pg: return "pg";
    }
    return "?";
}

inline Algo parse_algo(std::string_view s) {
    for (Algo a : {Algo::tabular_mdpo, Algo::mdpo_on, Algo::mdpo_off_kl, Algo::mdpo_off_tsallis,
                   Algo::sac, Algo::ppo, Algo::pg})
        if (s == to_string(a)) return a;
    throw BadValue("unknown algo '" + std::string(s) + "'");
}

inline bool is_offpolicy(Algo a) {
    return a == Algo::mdpo_off_kl || a == Algo::mdpo_off_tsallis || a == Algo::sac;
}
inline bool is_onpolicy(Algo a) { return a == Algo::mdpo_on || a == Algo::ppo || a == Algo::pg; }

/// Inverse Bregman step sizes 1/t_k per MuJoCo domain (off-policy MDPO).
/// Those tasks are not provided here; the constants are kept so configs
/// naming them resolve to the documented values. A "-vN" suffix is ignored.
inline double mujoco_inv_tk(std::string_view env, double fallback) {
    static const std::map<std::string, double, std::less<>> table{
        {"Hopper", 0.8}, {"Walker2d", 0.4}, {"HalfCheetah", 0.3},
        {"Ant", 0.5},    {"Humanoid", 0.5}, {"HumanoidStandup", 0.3}};
    if (const auto dash = env.rfind("-v"); dash != std::string_view::npos && dash + 2 < env.size() &&
        env.find_first_not_of("0123456789", dash + 2) == std::string_view::npos)
        env = env.substr(0, dash);
    const auto it = table.find(env);
    return it == table.end() ? fallback : it->second;
}

/// Every run knob. Defaults depend on the algorithm; see defaults_for().
struct TrainConfig {
    Algo algo = Algo::mdpo_on;
    std::string env;
    std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
    std::uint64_t global_seed = 0;
    std::size_t total_steps = 100'000;
    std::size_t eval_every = 10'000;
    std::size_t eval_episodes = 10;
    std::size_t threads = 1;
    bool record_wall_time = false;

    double gamma = 0.99;
    std::size_t m = 10;
    double eta = 3e-4;
    double eta_critic = 3e-4;

    // tabular
    std::size_t K = 500;
    StepSchedule::Kind t_schedule = StepSchedule::Kind::inverse_sqrt;
    double t0 = 1.0;

    // on-policy
    std::size_t rollout_steps = 2048;
    std::size_t minibatch = 128;
    std::size_t critic_epochs = 10;
    double eps_clip = 0.2;

    // off-policy
    double inv_tk = 0.5;
    double lambda = 0.0;
    double q_bregman = 1.0;
    double q_mdp = 1.0;
    double tau = 0.005;
    std::size_t buffer_capacity = 1'000'000;
    std::size_t batch = 64;
    std::size_t learning_starts = 1000;
    bool uniform_prior = false;

    // approximators
    long policy_hidden = 0;
    double log_std_init = 0.0;
    long critic_width = 64;

    bool operator==(const TrainConfig&) const = default;
};

/// Documented defaults for an algorithm (and env, for the per-domain 1/t_k).
inline TrainConfig defaults_for(Algo algo, const std::string& env) {
    TrainConfig c;
    c.algo = algo;
    c.env = env;
    c.policy_hidden = env == "pendulum-lite" ? 32 : 0;
    switch (algo) {
    case Algo::tabular_mdpo:
        c.gamma = 0.9;
        c.total_steps = 0;
        c.eval_every = 1;
        c.K = 500;
        break;
    case Algo::mdpo_on:
        c.m = 10;
        c.minibatch = 128;
        break;
    case Algo::pg:
        c.m = 1;
        c.minibatch = 128;
        break;
    case Algo::ppo:
        c.m = 10;
        c.minibatch = 64;
        break;
    case Algo::mdpo_off_kl:
    case Algo::mdpo_off_tsallis:
        c.m = 1000;
        c.lambda = 0.2;
        c.inv_tk = mujoco_inv_tk(env, 0.5);
        break;
    case Algo::sac:
        c.m = 1;
        c.lambda = 0.2;
        break;
    }
    return c;
}

namespace detail {

inline std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

inline std::string format_double(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    if (ec != std::errc()) throw BadValue("cannot format number");
    return std::string(buf, ptr);
}

inline double parse_double(const std::string& key, const std::string& v) {
    double out = 0.0;
    auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || ptr != v.data() + v.size() || !std::isfinite(out))
        throw BadValue(key + " = '" + v + "' is not a number");
    return out;
}

inline std::uint64_t parse_uint(const std::string& key, const std::string& v) {
    std::uint64_t out = 0;
    auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || ptr != v.data() + v.size())
        throw BadValue(key + " = '" + v + "' is not a non-negative integer");
    return out;
}

inline long parse_int(const std::string& key, const std::string& v) {
    long out = 0;
    auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || ptr != v.data() + v.size())
        throw BadValue(key + " = '" + v + "' is not an integer");
    return out;
}

inline bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw BadValue(key + " = '" + v + "' is not a boolean");
}

inline StepSchedule::Kind parse_schedule(const std::string& v) {
    if (v == "annealed") return StepSchedule::Kind::annealed;
    if (v == "constant") return StepSchedule::Kind::constant;
    if (v == "inverse-sqrt") return StepSchedule::Kind::inverse_sqrt;
    throw BadValue("t_schedule = '" + v + "' (expected annealed, constant or inverse-sqrt)");
}

/// Field table: one entry per key, in serialization order.
struct Field {
    const char* key;
    std::function<void(TrainConfig&, const std::string&)> set;
    std::function<std::string(const TrainConfig&)> get;
};

#define MDPO_UINT_FIELD(name)                                                             \
    Field{#name, [](TrainConfig& c, const std::string& v) { c.name = parse_uint(#name, v); }, \
          [](const TrainConfig& c) { return std::to_string(c.name); }}
#define MDPO_INT_FIELD(name)                                                              \
    Field{#name, [](TrainConfig& c, const std::string& v) { c.name = parse_int(#name, v); }, \
          [](const TrainConfig& c) { return std::to_string(c.name); }}
#define MDPO_DOUBLE_FIELD(name)                                                             \
    Field{#name, [](TrainConfig& c, const std::string& v) { c.name = parse_double(#name, v); }, \
          [](const TrainConfig& c) { return format_double(c.name); }}
#define MDPO_BOOL_FIELD(name)                                                             \
    Field{#name, [](TrainConfig& c, const std::string& v) { c.name = parse_bool(#name, v); }, \
          [](const TrainConfig& c) { return std::string(c.name ? "true" : "false"); }}

inline const std::vector<Field>& fields() {
    static const std::vector<Field> table{
        Field{"algo", [](TrainConfig& c, const std::string& v) { c.algo = parse_algo(v); },
              [](const TrainConfig& c) { return std::string(to_string(c.algo)); }},
        Field{"env", [](TrainConfig& c, const std::string& v) { c.env = v; },
              [](const TrainConfig& c) { return c.env; }},
        Field{"seeds",
              [](TrainConfig& c, const std::string& v) {
                  c.seeds.clear();
                  std::stringstream ss(v);
                  std::string item;
                  while (std::getline(ss, item, ',')) c.seeds.push_back(parse_uint("seeds", trim(item)));
              },
              [](const TrainConfig& c) {
                  std::string out;
                  for (std::size_t i = 0; i < c.seeds.size(); ++i)
                      out += (i ? "," : "") + std::to_string(c.seeds[i]);
                  return out;
              }},
        MDPO_UINT_FIELD(global_seed),
        MDPO_UINT_FIELD(total_steps),
        MDPO_UINT_FIELD(eval_every),
        MDPO_UINT_FIELD(eval_episodes),
        MDPO_UINT_FIELD(threads),
        MDPO_BOOL_FIELD(record_wall_time),
        MDPO_DOUBLE_FIELD(gamma),
        MDPO_UINT_FIELD(m),
        MDPO_DOUBLE_FIELD(eta),
        MDPO_DOUBLE_FIELD(eta_critic),
        MDPO_UINT_FIELD(K),
        Field{"t_schedule",
              [](TrainConfig& c, const std::string& v) { c.t_schedule = parse_schedule(v); },
              [](const TrainConfig& c) { return std::string(to_string(c.t_schedule)); }},
        MDPO_DOUBLE_FIELD(t0),
        MDPO_UINT_FIELD(rollout_steps),
        MDPO_UINT_FIELD(minibatch),
        MDPO_UINT_FIELD(critic_epochs),
        MDPO_DOUBLE_FIELD(eps_clip),
        MDPO_DOUBLE_FIELD(inv_tk),
        MDPO_DOUBLE_FIELD(lambda),
        MDPO_DOUBLE_FIELD(q_bregman),
        MDPO_DOUBLE_FIELD(q_mdp),
        MDPO_DOUBLE_FIELD(tau),
        MDPO_UINT_FIELD(buffer_capacity),
        MDPO_UINT_FIELD(batch),
        MDPO_UINT_FIELD(learning_starts),
        MDPO_BOOL_FIELD(uniform_prior),
        MDPO_INT_FIELD(policy_hidden),
        MDPO_DOUBLE_FIELD(log_std_init),
        MDPO_INT_FIELD(critic_width),
    };
    return table;
}

#undef MDPO_UINT_FIELD
#undef MDPO_INT_FIELD
#undef MDPO_DOUBLE_FIELD
#undef MDPO_BOOL_FIELD

}  // namespace detail

/// Range checks for every knob.
inline void validate(const TrainConfig& c) {
    auto require = [](bool ok, const std::string& msg) {
        if (!ok) throw BadValue(msg);
    };
    require(!c.env.empty(), "env must be set");
    require(!c.seeds.empty(), "seeds must list at least one seed");
    require(c.eval_every >= 1, "eval_every must be >= 1");
    require(c.eval_episodes >= 1, "eval_episodes must be >= 1");
    require(c.threads >= 1, "threads must be >= 1");
    require(c.gamma >= 0.0 && c.gamma < 1.0, "gamma must lie in [0, 1)");
    require(c.m >= 1, "m must be >= 1");
    require(c.eta >= 0.0, "eta must be >= 0");
    require(c.eta_critic >= 0.0, "eta_critic must be >= 0");
    require(c.t0 > 0.0, "t0 must be > 0");
    require(c.rollout_steps >= 1, "rollout_steps must be >= 1");
    require(c.minibatch >= 1 && c.minibatch <= c.rollout_steps,
            "minibatch must lie in [1, rollout_steps]");
    require(c.eps_clip > 0.0, "eps_clip must be > 0");
    require(c.inv_tk > 0.0, "inv_tk must be > 0");
    require(c.lambda >= 0.0, "lambda must be >= 0");
    require(c.q_bregman > 0.0 && c.q_bregman <= 2.0, "q_bregman must lie in (0, 2]");
    require(c.q_mdp > 0.0 && c.q_mdp <= 2.0, "q_mdp must lie in (0, 2]");
    require(c.tau >= 0.0 && c.tau <= 1.0, "tau must lie in [0, 1]");
    require(c.buffer_capacity >= 1, "buffer_capacity must be >= 1");
    require(c.batch >= 1, "batch must be >= 1");
    require(c.policy_hidden >= 0, "policy_hidden must be >= 0");
    require(c.critic_width >= 0, "critic_width must be >= 0");
    require(c.log_std_init >= -5.0 && c.log_std_init <= 2.0, "log_std_init must lie in [-5, 2]");
    if (c.algo == Algo::sac) require(c.lambda > 0.0, "sac needs lambda > 0");
    if (c.algo == Algo::tabular_mdpo) require(c.K >= 1, "K must be >= 1");
}

/// Parses the flat `key = value` format (one pair per line, '#' comments).
/// `algo` and `env` are required; all other keys take defaults_for(algo, env).
inline TrainConfig parse_config_text(std::string_view text) {
    std::map<std::string, std::string> pairs;
    std::vector<std::string> order;
    std::istringstream in{std::string(text)};
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        const std::string body = detail::trim(line);
        if (body.empty()) continue;
        const auto eq = body.find('=');
        if (eq == std::string::npos)
            throw BadValue("line " + std::to_string(lineno) + ": expected key = value");
        const std::string key = detail::trim(std::string_view(body).substr(0, eq));
        const std::string value = detail::trim(std::string_view(body).substr(eq + 1));
        bool known = false;
        for (const auto& f : detail::fields()) known = known || key == f.key;
        if (!known) throw UnknownKey("'" + key + "' (line " + std::to_string(lineno) + ")");
        if (pairs.count(key)) throw BadValue("duplicate key '" + key + "'");
        pairs[key] = value;
        order.push_back(key);
    }
    if (!pairs.count("algo")) throw MissingRequired("algo");
    if (!pairs.count("env")) throw MissingRequired("env");

    TrainConfig c = defaults_for(parse_algo(pairs["algo"]), pairs["env"]);
    for (const auto& f : detail::fields())
        if (auto it = pairs.find(f.key); it != pairs.end()) f.set(c, it->second);
    validate(c);
    return c;
}

inline TrainConfig parse_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw MissingRequired("config file '" + path + "' cannot be opened");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str());
}

/// Every key in a fixed order; parse_config_text(serialize(c)) == c.
inline std::string serialize(const TrainConfig& c) {
    std::string out;
    for (const auto& f : detail::fields()) out += std::string(f.key) + " = " + f.get(c) + "\n";
    return out;
}

}  // namespace mdpo
