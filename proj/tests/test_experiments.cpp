#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "neurodiff/experiments.hpp"

using namespace neurodiff;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / ("neurodiff_test_" + name);
    fs::remove_all(dir);
    return dir;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

ExperimentConfig config(std::string id, const fs::path& out) {
    ExperimentConfig c;
    c.id = std::move(id);
    c.out_dir = out;
    return c;
}

}  // namespace

TEST_CASE("registered ids") {
    const auto& ids = experiment_ids();
    CHECK(ids.size() == 8);
    for (const char* id : {"lotka-solve", "lotka-fit", "rober", "dde-fit", "sde-demo", "neural-ode-fit", "reversal",
                           "gradient-bench"})
        CHECK(std::find(ids.begin(), ids.end(), id) != ids.end());
}

TEST_CASE("invalid configurations are rejected before running") {
    const auto out = scratch("invalid");
    auto c = config("lotka-fit", out);
    c.iters = 0;
    CHECK_THROWS_AS(validate(c), ConfigError);
    CHECK_THROWS_AS(run_experiment(c), ConfigError);
    CHECK_FALSE(fs::exists(out));

    c = config("dde-fit", out);
    c.lag = 0.0;
    CHECK_THROWS_AS(validate(c), ConfigError);
    c.lag = -0.1;
    CHECK_THROWS_AS(validate(c), ConfigError);

    c = config("dde-fit", out);
    c.backend = Backend::Adjoint;
    CHECK_THROWS_AS(validate(c), ConfigError);

    c = config("lotka-solve", out);
    c.saveat = 0.0;
    CHECK_THROWS_AS(validate(c), ConfigError);

    c = config("lotka-solve", out);
    c.reltol = -1.0;
    CHECK_THROWS_AS(validate(c), ConfigError);

    CHECK_THROWS_AS(validate(config("no-such-experiment", out)), ConfigError);

    // iteration counts do not matter to experiments that do not train
    c = config("lotka-solve", out);
    c.iters = 0;
    CHECK_NOTHROW(validate(c));

    c = config("all", out);
    c.backend = Backend::Adjoint;
    CHECK_NOTHROW(validate(c));
}

TEST_CASE("lotka-solve writes its artifacts and reruns byte for byte") {
    const auto out = scratch("solve");
    const auto r = run_experiment(config("lotka-solve", out));
    CHECK(r.passed());
    CHECK(r.exit_code() == 0);
    CHECK(r.metrics.at("n_nodes") == 101);
    const fs::path traj = out / "lotka-solve" / "trajectory.csv";
    REQUIRE(fs::exists(traj));
    REQUIRE(fs::exists(out / "lotka-solve" / "summary.json"));

    const auto summary = nlohmann::json::parse(slurp(out / "lotka-solve" / "summary.json"));
    CHECK(summary.at("id") == "lotka-solve");
    CHECK(summary.at("checks").size() == r.checks.size());

    const std::string first = slurp(traj);
    CHECK(first.rfind("t,u1,u2\n", 0) == 0);
    run_experiment(config("lotka-solve", out));
    CHECK(slurp(traj) == first);
}

TEST_CASE("a coarser output grid") {
    const auto out = scratch("coarse");
    auto c = config("lotka-solve", out);
    c.saveat = 0.5;
    const auto r = run_experiment(c);
    CHECK(r.passed());
    CHECK(r.metrics.at("n_nodes") == 21);
}

TEST_CASE("rober with no explicit step budget") {
    const auto out = scratch("rober");
    auto c = config("rober", out);
    c.budget = 0;
    const auto r = run_experiment(c);
    const auto fail = nlohmann::json::parse(slurp(out / "rober" / "explicit_failure.json"));
    CHECK(fail.at("retcode") == "MaxStepsExceeded");
    CHECK(fail.at("steps") == 0);
    CHECK(fail.at("t_reached") == 0.0);
    CHECK(r.passed());
}

TEST_CASE("a short training run reports failed checks, not errors") {
    const auto out = scratch("short");
    auto c = config("lotka-fit", out);
    c.iters = 1;
    const auto r = run_experiment(c);
    CHECK(r.error.empty());
    CHECK_FALSE(r.passed());
    CHECK(r.exit_code() == 1);
    CHECK(r.metrics.at("iterations") == 1);
    CHECK(slurp(out / "lotka-fit" / "trace.csv").rfind("iter,loss,seconds\n1,", 0) == 0);
}

TEST_CASE("exit codes") {
    ExperimentResult r;
    CHECK(r.exit_code() == 0);
    r.checks.push_back({"a", true, ""});
    CHECK(r.exit_code() == 0);
    r.checks.push_back({"b", false, ""});
    CHECK(r.exit_code() == 1);
    r.error = "solver failed";
    CHECK(r.exit_code() == 2);
    CHECK_FALSE(r.passed());
}
