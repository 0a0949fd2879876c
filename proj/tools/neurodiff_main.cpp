// neurodiff <experiment-id> [options]
//
// Exit codes: 0 all checks pass, 1 a check failed, 2 solver error, 3 configuration error.

#include <algorithm>
#include <iostream>
#include <map>
#include <string>

#include "CLI11.hpp"
#include "neurodiff/experiments.hpp"

int main(int argc, char** argv) {
    using namespace neurodiff;

    CLI::App app{"Differentiable differential-equation experiments"};
    ExperimentConfig cfg;
    std::string backend = "forward";
    std::string out_dir = cfg.out_dir.string();
    double reltol = 0.0, abstol = 0.0;

    std::vector<std::string> choices = experiment_ids();
    choices.push_back("all");
    app.add_option("experiment", cfg.id, "Experiment to run")->required()->check(CLI::IsMember(choices));
    auto* rt = app.add_option("--reltol", reltol, "Relative tolerance (overrides the experiment default)");
    auto* at = app.add_option("--abstol", abstol, "Absolute tolerance (overrides the experiment default)");
    app.add_option("--seed", cfg.seed, "Random seed")->capture_default_str();
    app.add_option("--iters", cfg.iters, "Training iterations")->capture_default_str();
    app.add_option("--backend", backend, "Gradient backend")
        ->check(CLI::IsMember({"forward", "adjoint", "fd"}))
        ->capture_default_str();
    app.add_option("--out", out_dir, "Output directory")->capture_default_str();
    app.add_option("--budget", cfg.budget, "Explicit-solver step budget (rober)")->capture_default_str();
    app.add_option("--lag", cfg.lag, "Delay (dde-fit)")->capture_default_str();
    app.add_option("--saveat", cfg.saveat, "Output spacing (lotka-solve)")->capture_default_str();
    app.add_flag("--parallel", cfg.parallel, "Run the experiments of 'all' concurrently");
    app.set_config("--config", "", "TOML/INI file with option defaults; flags take precedence");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 3;
    }
    if (rt->count() > 0) cfg.reltol = reltol;
    if (at->count() > 0) cfg.abstol = abstol;
    cfg.backend = *parse_backend(backend);
    cfg.out_dir = out_dir;

    std::vector<ExperimentResult> results;
    try {
        results = run_experiments(cfg);
    } catch (const ConfigError& e) {
        std::cerr << "configuration error: " << e.what() << "\n";
        return 3;
    }

    int code = 0;
    for (const auto& r : results) {
        for (const auto& c : r.checks)
            std::cout << (c.passed ? "[PASS] " : "[FAIL] ") << r.id << ": " << c.name << " (" << c.detail << ")\n";
        if (!r.error.empty()) std::cout << "[ERROR] " << r.id << ": " << r.error << "\n";
        std::cout << r.id << ": " << (r.passed() ? "passed" : "FAILED") << " in " << r.seconds << " s\n";
        code = std::max(code, r.exit_code());
    }
    return code;
}
