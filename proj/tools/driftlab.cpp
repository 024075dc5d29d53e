// driftlab: run registered experiments from config files.
//
//   driftlab run <config> [--set section.key=value ...] [--output-dir DIR]
//   driftlab list
//   driftlab describe <experiment>
//
// Exit codes: 0 all criteria pass, 1 a criterion failed or the run broke down,
// 2 the config is invalid (nothing written), 3 a step budget ran out.

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "driftlab/config.hpp"
#include "driftlab/error.hpp"
#include "driftlab/experiments.hpp"
#include "driftlab/ledger.hpp"
#include "driftlab/parallel.hpp"

using namespace driftlab;

namespace {

constexpr int kExitPass = 0;
constexpr int kExitFailed = 1;
constexpr int kExitConfig = 2;
constexpr int kExitBudget = 3;

// Domain errors that mean the input itself is unusable.
bool is_input_error(ErrorCode c)
{
    switch (c) {
    case ErrorCode::ConfigError:
    case ErrorCode::EllipticityViolation:
    case ErrorCode::BadCoefficients:
    case ErrorCode::UnboundedF:
    case ErrorCode::NotCentered:
    case ErrorCode::HorizonTooShort:
    case ErrorCode::OffGrid:
        return true;
    default:
        return false;
    }
}

int run_command(const std::string& path, const std::vector<std::string>& overrides, const std::string& out_dir)
{
    ExperimentConfig cfg = ExperimentConfig::load(path);
    for (const auto& o : overrides) {
        auto eq = o.find('=');
        auto dot = o.find('.');
        if (eq == std::string::npos || dot == std::string::npos || dot > eq)
            fail(ErrorCode::ConfigError, "--set expects section.key=value, got '" + o + "'");
        cfg.set_text(o.substr(0, dot), o.substr(dot + 1, eq - dot - 1), o.substr(eq + 1));
    }
    if (!out_dir.empty())
        cfg.set_text("experiment", "output_dir", out_dir);
    ExperimentConfig full = effective_config(cfg);
    ExperimentResult r = run_experiment(full);
    write_run(full, r);

    std::printf("%s  config %s  %.1f s\n", r.experiment.c_str(), full.hash().c_str(), r.runtime_s);
    for (const auto& m : r.metrics) {
        std::printf("  %-4s %-32s %-14s", m.criterion == "reported" ? "" : (m.pass ? "pass" : "FAIL"), m.name.c_str(),
                    format_real(m.value).c_str());
        if (m.se > 0)
            std::printf(" se %-12s", format_real(m.se).c_str());
        if (std::isfinite(m.reference) && m.criterion != "reported")
            std::printf(" ref %s", format_real(m.reference).c_str());
        std::printf("\n");
    }
    std::printf("%s -> %s\n", r.passed() ? "PASS" : "FAIL", full.output_dir().c_str());
    return r.passed() ? kExitPass : kExitFailed;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Drift and variance experiments for diffusions in periodic and random environments"};
    app.require_subcommand(1);
    int workers = 0;
    app.add_option("--workers", workers, "worker threads (default: DRIFTLAB_WORKERS or all cores)")
        ->check(CLI::PositiveNumber);

    std::string config_path, out_dir;
    std::vector<std::string> overrides;
    auto* run = app.add_subcommand("run", "run the experiment named in a config file");
    run->add_option("config", config_path, "config file (text or JSON)")->required();
    run->add_option("--set", overrides, "override a key, e.g. run.n_paths=100");
    run->add_option("--output-dir", out_dir, "override experiment.output_dir");

    auto* list = app.add_subcommand("list", "list registered experiments");

    std::string name;
    auto* describe = app.add_subcommand("describe", "show an experiment's criterion and default config");
    describe->add_option("experiment", name)->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : kExitConfig;
    }

    if (workers == 0)
        if (const char* env = std::getenv("DRIFTLAB_WORKERS"))
            workers = std::atoi(env);
    if (workers > 0)
        set_default_workers(workers);

    try {
        if (*list) {
            for (const auto& e : experiment_registry())
                std::printf("%-24s %s\n", e.name.c_str(), e.summary.c_str());
            return kExitPass;
        }
        if (*describe) {
            const ExperimentInfo& e = find_experiment(name);
            std::printf("%s\n  %s\n  criterion: %s\n  runtime limit: %g s\n\n%s", e.name.c_str(), e.summary.c_str(),
                        e.criterion.c_str(), e.runtime_limit_s, e.default_config.c_str());
            return kExitPass;
        }
        return run_command(config_path, overrides, out_dir);
    } catch (const Error& e) {
        std::fprintf(stderr, "driftlab: %s\n", e.what());
        if (e.code() == ErrorCode::BudgetExhausted)
            return kExitBudget;
        return is_input_error(e.code()) ? kExitConfig : kExitFailed;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "driftlab: %s\n", e.what());
        return kExitFailed;
    }
}
