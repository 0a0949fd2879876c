#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <vector>

#include "json.hpp"
#include "neurodiff/erk45.hpp"
#include "neurodiff/models.hpp"
#include "neurodiff/rosenbrock.hpp"

using namespace neurodiff;

namespace {

auto rober(double t1 = 1e11) { return make_ode(models::Rober{}, {1.0, 0.0, 0.0}, {0.0, t1}, {0.04, 3e7, 1e4}); }

std::vector<double> log_grid() {
    std::vector<double> ts{0.0};
    for (int k = 0; k <= 110; ++k) ts.push_back(std::pow(10.0, k / 10.0));
    return ts;
}

SolverOptions rober_opts(double reltol) {
    SolverOptions o;
    o.reltol = reltol;
    o.abstol = reltol * 1e-4;
    o.saveat = SaveAt::at(log_grid());
    return o;
}

double fixed_rosenbrock_error(double lambda, double dt) {
    SolverOptions o;
    o.adaptive = false;
    o.dt_init = dt;
    const auto path = solve_rosenbrock(make_ode(models::StiffCosine{}, {0.0}, {0.0, 3.0}, {lambda}), o);
    REQUIRE(path.ok());
    return std::abs(path.step_u.back()[0] - models::StiffCosine::exact(lambda, 3.0));
}

}  // namespace

TEST_CASE("ROBER to 1e11 with a stiff method") {
    const double reltol = 1e-6;
    const auto path = solve_rosenbrock(rober(), rober_opts(reltol), RosenbrockOptions{JacobianMode::ForwardAD, false});
    REQUIRE(path.ok());
    CHECK(path.stats.n_accepted < 100000);
    const auto& end = path.u.back();
    CHECK(end[0] < 1e-4);
    CHECK(end[2] > 0.9999);
    for (const auto& u : path.u) CHECK(std::abs(u[0] + u[1] + u[2] - 1.0) <= 100 * reltol);

    // self-convergence against a 10x tighter solve
    const auto ref = solve_rosenbrock(rober(), rober_opts(reltol / 10), RosenbrockOptions{JacobianMode::ForwardAD, false});
    REQUIRE(ref.ok());
    for (std::size_t k = 0; k < path.u.size(); ++k)
        for (std::size_t i = 0; i < 3; ++i) CHECK(std::abs(path.u[k][i] - ref.u[k][i]) <= 1e-4);
}

TEST_CASE("finite-difference Jacobians also solve ROBER") {
    const auto path =
        solve_rosenbrock(rober(), rober_opts(1e-6), RosenbrockOptions{JacobianMode::FiniteDifference, false});
    REQUIRE(path.ok());
    CHECK(path.u.back()[2] > 0.9999);
}

TEST_CASE("linear stiff equation against its closed form") {
    SolverOptions o;
    o.reltol = 1e-6;
    o.abstol = 1e-9;
    o.saveat = SaveAt::every(0.1);
    const auto path = solve_rosenbrock(make_ode(models::StiffCosine{}, {0.0}, {0.0, 3.0}, {50.0}), o);
    REQUIRE(path.ok());
    for (std::size_t k = 0; k < path.t.size(); ++k)
        CHECK(std::abs(path.u[k][0] - models::StiffCosine::exact(50.0, path.t[k])) <= 1e-4);
}

TEST_CASE("zero derivative needs only a few steps") {
    const auto path = solve_rosenbrock(make_ode(models::Zero{}, {1.0, 2.0}, {0.0, 100.0}));
    REQUIRE(path.ok());
    // only the 10x growth clamp limits the step
    CHECK(path.stats.n_rejected == 0);
    CHECK(path.stats.n_accepted <= 12);
    CHECK(path.step_u.back()[0] == 1.0);
    CHECK(path.step_u.back()[1] == 2.0);
}

TEST_CASE("fixed-step order of the Rosenbrock method") {
    for (double lambda : {1.0, 50.0}) {
        const double e1 = fixed_rosenbrock_error(lambda, 0.0125);
        const double e2 = fixed_rosenbrock_error(lambda, 0.00625);
        const double order = std::log2(e1 / e2);
        CAPTURE(lambda);
        CAPTURE(order);
        // second order, approached from below as dt -> 0
        CHECK(std::round(order * 10.0) / 10.0 >= 2.0);
    }
}

TEST_CASE("L-stability: a very stiff decay is damped in one large step") {
    SolverOptions o;
    o.adaptive = false;
    o.dt_init = 1.0;
    const auto path = solve_rosenbrock(make_ode(models::Exponential{}, {1.0}, {0.0, 1.0}, {-1e8}), o);
    REQUIRE(path.ok());
    REQUIRE(path.stats.n_accepted == 1);
    CHECK(std::abs(path.step_u.back()[0]) < 1e-6);

    // the slow forced component survives a transient of amplitude 4
    const auto forced = solve_rosenbrock(make_ode(models::StiffCosine{}, {5.0}, {0.0, 1.0}, {1e8}), o);
    REQUIRE(forced.ok());
    CHECK(std::abs(forced.step_u.back()[0] - std::cos(1.0)) < 0.1);
}

TEST_CASE("AD and finite-difference Jacobians agree on ROBER") {
    const std::vector<double> u{1.0, 0.0, 0.0}, p{0.04, 3e7, 1e4};
    const auto Jad = state_jacobian(models::Rober{}, u, p, 0.0, JacobianMode::ForwardAD);
    const auto Jfd = state_jacobian(models::Rober{}, u, p, 0.0, JacobianMode::FiniteDifference);
    for (Eigen::Index i = 0; i < 3; ++i)
        for (Eigen::Index j = 0; j < 3; ++j)
            CHECK(std::abs(Jad(i, j) - Jfd(i, j)) <= 1e-5 * std::max(1.0, std::abs(Jad(i, j))));
    // by hand at u0: only the y1 column and the y3-coupling terms survive
    CHECK(Jad(0, 0) == -0.04);
    CHECK(Jad(1, 0) == 0.04);
    CHECK(Jad(0, 2) == 0.0);
    CHECK(Jad(0, 1) == 0.0);
}

TEST_CASE("explicit pair runs out of steps on ROBER") {
    const auto report = detect_explicit_failure(rober(), {}, 100000);
    CHECK(report.retcode == RetCode::MaxStepsExceeded);
    CHECK(report.steps == 100000);
    CHECK(report.t_reached < 1e4);

    const auto j = nlohmann::json::parse(report.to_json());
    CHECK(j.at("retcode") == "MaxStepsExceeded");
    CHECK(j.at("steps") == 100000);
    CHECK(j.at("t_reached").get<double>() == report.t_reached);
}

TEST_CASE("explicit pair succeeds on a non-stiff problem") {
    const auto lv = make_ode(models::LotkaVolterra{}, {1.0, 1.0}, {0.0, 10.0}, {1.5, 1.0, 3.0, 1.0});
    const auto report = detect_explicit_failure(lv);
    CHECK(report.retcode == RetCode::Success);
    CHECK(report.steps < 1000);
    CHECK(report.t_reached == 10.0);
}

TEST_CASE("degenerate budgets and spans") {
    const auto empty = detect_explicit_failure(rober(0.0), {}, 100000);
    CHECK(empty.retcode == RetCode::Success);
    CHECK(empty.steps == 0);

    const auto none = detect_explicit_failure(rober(), {}, 0);
    CHECK(none.retcode == RetCode::MaxStepsExceeded);
    CHECK(none.steps == 0);
    CHECK(none.t_reached == 0.0);
}

TEST_CASE("Rosenbrock step budget") {
    SolverOptions o;
    o.max_steps = 10;
    const auto path = solve_rosenbrock(rober(), o, RosenbrockOptions{JacobianMode::ForwardAD, false});
    CHECK(path.retcode == RetCode::MaxStepsExceeded);
    CHECK(path.stats.n_accepted == 10);
}
