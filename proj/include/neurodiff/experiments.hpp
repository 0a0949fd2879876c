#pragma once

// The experiment runners behind the `neurodiff` command. Each writes its
// artifacts under <out_dir>/<id>/ and reports named pass/fail checks.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "neurodiff/sensitivity.hpp"

namespace neurodiff {

class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

struct ExperimentConfig {
    std::string id;
    /// Overrides for the experiment's own default tolerances.
    std::optional<double> reltol;
    std::optional<double> abstol;
    std::uint64_t seed = 1;
    std::size_t iters = 100;
    std::filesystem::path out_dir = "neurodiff_out";
    Backend backend = Backend::Forward;
    /// Explicit-solver step budget for the stiffness experiment.
    std::size_t budget = 100000;
    /// Delay of the delay Lotka-Volterra model.
    double lag = 0.1;
    /// Output spacing for lotka-solve.
    double saveat = 0.1;
    /// Run the experiments of `all` concurrently.
    bool parallel = false;
};

/// Registered experiment ids, excluding the `all` alias.
const std::vector<std::string>& experiment_ids();

/// Throws ConfigError when the configuration cannot be run.
void validate(const ExperimentConfig& cfg);

struct Check {
    std::string name;
    bool passed = false;
    std::string detail;
};

struct ExperimentResult {
    std::string id;
    std::vector<Check> checks;
    nlohmann::json metrics = nlohmann::json::object();
    /// Non-empty when a solver failure aborted the run.
    std::string error;
    double seconds = 0.0;

    bool passed() const;
    /// 0 pass, 1 failed check, 2 solver error.
    int exit_code() const;
    nlohmann::json to_json() const;
};

ExperimentResult run_lotka_solve(const ExperimentConfig& cfg);
ExperimentResult run_lotka_fit(const ExperimentConfig& cfg);
ExperimentResult run_rober(const ExperimentConfig& cfg);
ExperimentResult run_dde_fit(const ExperimentConfig& cfg);
ExperimentResult run_sde_demo(const ExperimentConfig& cfg);
ExperimentResult run_neural_ode_fit(const ExperimentConfig& cfg);
ExperimentResult run_reversal(const ExperimentConfig& cfg);
ExperimentResult run_gradient_bench(const ExperimentConfig& cfg);

/// Validates, runs, and writes summary.json for one experiment id.
ExperimentResult run_experiment(const ExperimentConfig& cfg);

/// Runs one id, or every registered experiment for `all`.
std::vector<ExperimentResult> run_experiments(const ExperimentConfig& cfg);

}  // namespace neurodiff
