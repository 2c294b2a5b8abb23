#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "mdpo/config.hpp"
#include "mdpo/errors.hpp"
#include "mdpo/experiment.hpp"
#include "mdpo/verify.hpp"

namespace {

constexpr int kOk = 0;
constexpr int kConfigError = 1;
constexpr int kRuntimeError = 2;

int cmd_train(const std::string& config_path, const std::string& out) {
    const mdpo::TrainConfig cfg = mdpo::parse_config(config_path);
    const std::string dir = mdpo::resolve_out_dir(out.empty() ? std::nullopt : std::optional(out));
    const auto result = mdpo::run_experiment(cfg, dir);
    std::cout << "wrote " << result.metrics.size() << " metric rows and " << result.aggregate.size()
              << " aggregate rows to " << dir << "\n";
    if (!result.aggregate.empty()) {
        const auto& last = result.aggregate.back();
        std::cout << "final " << last.algo << " on " << last.env << " at step " << last.env_step
                  << ": " << last.mean << " +/- " << last.ci_half_width << " (" << last.n_seeds
                  << " seeds)\n";
    }
    return kOk;
}

int cmd_verify() {
    const auto results = mdpo::run_verify_suite();
    std::size_t passed = 0;
    for (const auto& r : results) {
        std::cout << (r.passed ? "[PASS] " : "[FAIL] ") << r.name << ": " << r.detail << "\n";
        passed += r.passed ? 1 : 0;
    }
    std::cout << passed << "/" << results.size() << " checks passed\n";
    return passed == results.size() ? kOk : kRuntimeError;
}

int cmd_aggregate(const std::string& dir) {
    const auto rows = mdpo::aggregate_dir(dir);
    std::cout << "wrote " << rows.size() << " aggregate rows to " << dir << "/aggregate.csv\n";
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Mirror descent policy optimization lab"};
    app.require_subcommand(1);

    std::string config_path, out_dir, in_dir;
    auto* train = app.add_subcommand("train", "run every seed of a config and write CSVs");
    train->add_option("--config", config_path, "config file (key = value lines)")->required();
    train->add_option("--out", out_dir, "output directory (default $MDPO_LAB_OUT or ./mdpo_out)");
    auto* verify = app.add_subcommand("verify", "run the built-in oracle checks");
    auto* agg = app.add_subcommand("aggregate", "recompute aggregate.csv from metrics.csv");
    agg->add_option("--in", in_dir, "run directory holding metrics.csv")->required();

    if (argc <= 1) {
        std::cerr << app.help();
        return kConfigError;
    }
    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kConfigError;
    }

    try {
        if (*train) return cmd_train(config_path, out_dir);
        if (*verify) return cmd_verify();
        if (*agg) return cmd_aggregate(in_dir);
    } catch (const mdpo::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kConfigError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kRuntimeError;
    }
    return kConfigError;
}
