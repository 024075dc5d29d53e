#pragma once

#include <functional>
#include <string>
#include <vector>

#include "driftlab/config.hpp"

namespace driftlab {

// One checked quantity. `reference` is what the value is compared against (NaN if none).
struct Metric {
    std::string name;
    double value = 0.0;
    double se = 0.0;
    std::size_t n = 0;
    double reference = 0.0;
    bool pass = true;
    std::string criterion;
};

struct Artifact {
    std::string filename; // relative to the output directory
    std::string content;
};

struct ExperimentResult {
    std::string experiment;
    std::vector<Metric> metrics;
    std::vector<Artifact> files;
    // gnuplot commands reading the CSV artifacts.
    std::string plot_script;
    double runtime_s = 0.0;

    bool passed() const;
    const Metric* metric(const std::string& name) const;
};

struct ExperimentInfo {
    std::string name;
    std::string summary;
    std::string criterion;
    double runtime_limit_s = 0.0;
    // Canonical config text with every default spelled out.
    std::string default_config;
    std::function<ExperimentResult(const ExperimentConfig&)> run;
};

const std::vector<ExperimentInfo>& experiment_registry();
// ConfigError for unknown names.
const ExperimentInfo& find_experiment(const std::string& name);

// Defaults of the named experiment overlaid with `cfg`.
ExperimentConfig effective_config(const ExperimentConfig& cfg);
// Validates, runs and times the experiment; nothing is written.
ExperimentResult run_experiment(const ExperimentConfig& cfg);

} // namespace driftlab
