#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <limits>
#include <sstream>
#include <vector>

#include "neurodiff/dual.hpp"
#include "neurodiff/erk45.hpp"
#include "neurodiff/models.hpp"
#include "neurodiff/ode.hpp"

using namespace neurodiff;

namespace {

/// u' = 1
struct Ones {
    template <class T, class P>
    void operator()(std::span<T> du, std::span<const T>, std::span<const P>, double) const {
        du[0] = T(1.0);
    }
};

/// NaN derivative after t = 0.5
struct Poison {
    template <class T, class P>
    void operator()(std::span<T> du, std::span<const T> u, std::span<const P>, double t) const {
        du[0] = t > 0.5 ? T(std::numeric_limits<double>::quiet_NaN()) : u[0];
    }
};

auto lotka() { return make_ode(models::LotkaVolterra{}, {1.0, 1.0}, {0.0, 10.0}, {1.5, 1.0, 3.0, 1.0}); }
auto growth(double t1 = 1.0) { return make_ode(models::Exponential{}, {1.0}, {0.0, t1}, {1.5}); }

SolverOptions tight(double reltol) {
    SolverOptions o;
    o.reltol = reltol;
    o.abstol = reltol * 1e-2;
    return o;
}

double fixed_step_error(double dt) {
    SolverOptions o;
    o.adaptive = false;
    o.dt_init = dt;
    const auto path = solve_erk45(growth(), o);
    REQUIRE(path.ok());
    return std::abs(path.step_u.back()[0] - std::exp(1.5));
}

}  // namespace

TEST_CASE("Lotka-Volterra listing values") {
    SolverOptions o;
    o.saveat = SaveAt::every(0.1);
    const auto path = solve_erk45(lotka(), o);
    REQUIRE(path.ok());
    REQUIRE(path.t.size() == 101);
    CHECK(std::abs(path.u[1][0] - 1.06108) <= 1e-3);
    CHECK(std::abs(path.u[1][1] - 0.821084) <= 1e-3);
    CHECK(std::abs(path.u[100][0] - 1.03376) <= 1e-2);
    CHECK(std::abs(path.u[100][1] - 0.906371) <= 1e-2);
}

TEST_CASE("saveat 0.1 on [0, 10] gives exactly the decimal grid") {
    SolverOptions o;
    o.saveat = SaveAt::every(0.1);
    const auto path = solve_erk45(lotka(), o);
    REQUIRE(path.t.size() == 101);
    for (std::size_t k = 0; k < path.t.size(); ++k) CHECK(path.t[k] == static_cast<double>(k) / 10.0);
    // saved nodes come from interpolation, so steps are not forced onto the grid
    CHECK(path.step_t.size() < path.t.size());
}

TEST_CASE("zero derivative keeps the state exactly") {
    SolverOptions o;
    o.saveat = SaveAt::every(0.25);
    const auto path = solve_erk45(make_ode(models::Zero{}, {3.0, 7.0}, {0.0, 5.0}), o);
    REQUIRE(path.ok());
    for (const auto& u : path.u) {
        CHECK(u[0] == 3.0);
        CHECK(u[1] == 7.0);
    }
}

TEST_CASE("exponential growth against the closed form") {
    const auto path = solve_erk45(growth(), tight(1e-8));
    REQUIRE(path.ok());
    CHECK(std::abs(path.step_u.back()[0] - std::exp(1.5)) <= 1e-6);
}

TEST_CASE("accepted steps satisfy the error norm and counters add up") {
    const auto path = solve_erk45(lotka(), tight(1e-6));
    REQUIRE(path.ok());
    CHECK(path.stats.n_accepted == path.step_t.size() - 1);
    CHECK(path.dense.size() == path.stats.n_accepted);
    // FSAL: six new stages per attempt plus the first evaluation
    CHECK(path.stats.n_rhs_evals <= 6 * (path.stats.n_accepted + path.stats.n_rejected) + 2);
    for (std::size_t k = 1; k < path.step_t.size(); ++k) CHECK(path.step_t[k] > path.step_t[k - 1]);
}

TEST_CASE("fixed-step order of the explicit pair is five") {
    const double e1 = fixed_step_error(0.1);
    const double e2 = fixed_step_error(0.05);
    const double ratio = e1 / e2;
    CHECK(ratio >= 20.0);
    CHECK(ratio <= 45.0);
}

TEST_CASE("tightening reltol does not make the Lotka endpoint worse") {
    auto ref_opts = tight(1e-13);
    const auto ref = solve_erk45(lotka(), ref_opts).step_u.back();
    auto endpoint_error = [&](double rt) {
        const auto u = solve_erk45(lotka(), tight(rt)).step_u.back();
        return std::hypot(u[0] - ref[0], u[1] - ref[1]);
    };
    for (double rt : {1e-3, 1e-4, 1e-5, 1e-6, 1e-7, 1e-8}) {
        CAPTURE(rt);
        CHECK(endpoint_error(rt / 10.0) <= 2.0 * endpoint_error(rt));
    }
}

TEST_CASE("dual scalars with zero partials reproduce the real solve bitwise") {
    const auto pr = lotka();
    SolverOptions o;
    o.saveat = SaveAt::every(0.1);
    const auto plain = solve_erk45(pr, o);
    using D = Dual<3>;
    const std::vector<D> pd(pr.params.begin(), pr.params.end());
    const auto dual = solve_erk45_as<D>(pr, std::span<const D>(pd), o);
    REQUIRE(dual.step_t == plain.step_t);
    REQUIRE(dual.u.size() == plain.u.size());
    for (std::size_t k = 0; k < plain.u.size(); ++k)
        for (std::size_t i = 0; i < 2; ++i) {
            CHECK(dual.u[k][i].value() == plain.u[k][i]);
            for (std::size_t j = 0; j < 3; ++j) CHECK(dual.u[k][i].partial(j) == 0.0);
        }
}

TEST_CASE("backward solve recovers the initial value of the exponential") {
    const double uT = std::exp(1.5 * 2.0);
    const auto back = solve_erk45(make_ode(models::Exponential{}, {uT}, {2.0, 0.0}, {1.5}), tight(1e-8));
    REQUIRE(back.ok());
    CHECK(back.step_t.back() == 0.0);
    for (std::size_t k = 1; k < back.step_t.size(); ++k) CHECK(back.step_t[k] < back.step_t[k - 1]);
    CHECK(std::abs(back.step_u.back()[0] - 1.0) <= 1e-6);
}

TEST_CASE("Euler recursion by hand") {
    const auto pr = make_ode(models::Exponential{}, {1.0}, {0.0, 1.0}, {1.0});
    const auto path = solve_euler_fixed(pr, 0.5);
    REQUIRE(path.t.size() == 3);
    CHECK(path.u[0][0] == 1.0);
    CHECK(path.u[1][0] == 1.5);
    CHECK(path.u[2][0] == 2.25);

    const auto flat = solve_euler_fixed(make_ode(models::Zero{}, {2.0}, {0.0, 1.0}), 0.1);
    for (const auto& u : flat.u) CHECK(u[0] == 2.0);
}

TEST_CASE("Euler converges at first order") {
    auto err = [](double dt) {
        return std::abs(solve_euler_fixed(growth(), dt).u.back()[0] - std::exp(1.5));
    };
    for (double dt : {1e-2, 5e-3, 2.5e-3}) {
        const double r = err(dt) / err(dt / 2);
        CAPTURE(dt);
        CHECK(r == doctest::Approx(2.0).epsilon(0.2));
    }
}

TEST_CASE("error norm") {
    const std::vector<double> zero{0.0, 0.0}, u{1.0, -2.0};
    CHECK(error_norm(zero, u, u, 1e-6, 1e-3) == 0.0);

    const std::vector<double> e{2e-6}, z{0.0};
    CHECK(error_norm(e, z, z, 1e-6, 0.37) == doctest::Approx(2.0));

    // homogeneity: scaling err, abstol and reltol together leaves the norm unchanged
    const std::vector<double> err{3e-4, -1e-5}, a{0.5, 4.0}, b{0.7, 3.5};
    const double base = error_norm(err, a, b, 1e-6, 1e-3);
    const std::vector<double> err10{3e-3, -1e-4};
    CHECK(error_norm(err10, a, b, 1e-5, 1e-2) == doctest::Approx(base).epsilon(1e-12));

    // max of |u_prev|, |u_new| in the scale
    const std::vector<double> one{1e-3}, small{0.0}, big{-1.0};
    CHECK(error_norm(one, small, big, 0.0, 1e-3) == doctest::Approx(1.0));

    const std::vector<double> bad{std::numeric_limits<double>::quiet_NaN()};
    CHECK(error_norm(bad, z, z, 1e-6, 1e-3) == std::numeric_limits<double>::infinity());
}

TEST_CASE("interpolation") {
    const auto path = solve_erk45(growth(), tight(1e-8));
    for (std::size_t k = 0; k < path.step_t.size(); ++k) {
        const auto y = path.interpolate(path.step_t[k]);
        CHECK(y[0] == path.step_u[k][0]);
    }
    for (std::size_t k = 0; k + 1 < path.step_t.size(); ++k) {
        const double tm = 0.5 * (path.step_t[k] + path.step_t[k + 1]);
        CHECK(std::abs(path.interpolate(tm)[0] - std::exp(1.5 * tm)) <= 1e-6);
    }
    CHECK_THROWS_AS(path.interpolate(1.5), std::out_of_range);
    CHECK_THROWS_AS(path.interpolate(-0.1), std::out_of_range);

    // u' = 1: the interpolant is exact for a linear solution
    SolverOptions o;
    o.dt_init = 0.3;
    const auto lin = solve_erk45(make_ode(Ones{}, {0.0}, {0.0, 2.0}), o);
    for (std::size_t k = 0; k + 1 < lin.step_t.size(); ++k) {
        const double tm = 0.5 * (lin.step_t[k] + lin.step_t[k + 1]);
        CHECK(std::abs(lin.interpolate(tm)[0] - tm) <= 1e-12);
    }
}

TEST_CASE("dense segments reproduce the states at both ends") {
    const auto path = solve_erk45(lotka(), tight(1e-6));
    for (std::size_t k = 0; k < path.dense.size(); ++k) {
        const auto a = path.dense[k].eval(path.step_t[k]);
        const auto b = path.dense[k].eval(path.step_t[k + 1]);
        for (std::size_t i = 0; i < 2; ++i) {
            CHECK(a[i] == doctest::Approx(path.step_u[k][i]).epsilon(1e-13));
            CHECK(b[i] == doctest::Approx(path.step_u[k + 1][i]).epsilon(1e-13));
        }
    }
}

TEST_CASE("failure return codes") {
    SolverOptions few;
    few.max_steps = 3;
    CHECK(solve_erk45(lotka(), few).retcode == RetCode::MaxStepsExceeded);

    SolverOptions floor;
    floor.reltol = 1e-14;
    floor.abstol = 1e-16;
    floor.dt_min = 0.5;
    CHECK(solve_erk45(lotka(), floor).retcode == RetCode::DtUnderflow);

    const auto nan_path = solve_erk45(make_ode(Poison{}, {1.0}, {0.0, 1.0}));
    CHECK(nan_path.retcode == RetCode::NanDetected);
    CHECK(nan_path.t_reached() <= 0.5 + 1e-12);
}

TEST_CASE("option validation") {
    SolverOptions o;
    o.reltol = 0.0;
    CHECK_THROWS_AS(o.validate(0.0, 1.0), std::invalid_argument);
    o = {};
    o.abstol = -1.0;
    CHECK_THROWS_AS(o.validate(0.0, 1.0), std::invalid_argument);
    o = {};
    o.max_steps = 0;
    CHECK_THROWS_AS(o.validate(0.0, 1.0), std::invalid_argument);
    o = {};
    o.saveat = SaveAt::at({0.5, 2.0});
    CHECK_THROWS_AS(o.validate(0.0, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(solve_erk45(growth(), o), std::invalid_argument);
    o.saveat = SaveAt::at({0.5, 1.0});
    CHECK_NOTHROW(o.validate(0.0, 1.0));
}

TEST_CASE("trajectory CSV") {
    SolverOptions o;
    o.saveat = SaveAt::every(0.5);
    const auto path = solve_erk45(growth(), o);
    std::ostringstream os;
    write_csv(os, path);
    std::istringstream is(os.str());
    std::string line;
    std::getline(is, line);
    CHECK(line == "t,u1");
    std::getline(is, line);
    CHECK(line == "0,1");
    std::getline(is, line);
    const auto comma = line.find(',');
    CHECK(line.substr(0, comma) == "0.5");
    CHECK(std::stod(line.substr(comma + 1)) == path.u[1][0]);
    std::getline(is, line);
    CHECK(line.rfind("1,", 0) == 0);
}

TEST_CASE("zero-length span") {
    const auto path = solve_erk45(make_ode(models::Exponential{}, {2.0}, {1.0, 1.0}, {1.5}));
    CHECK(path.ok());
    CHECK(path.stats.n_accepted == 0);
    CHECK(path.step_u.back()[0] == 2.0);
}
