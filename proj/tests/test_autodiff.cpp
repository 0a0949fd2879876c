#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <random>
#include <vector>

#include "neurodiff/dual.hpp"
#include "neurodiff/jacobian.hpp"
#include "neurodiff/models.hpp"
#include "neurodiff/nn.hpp"
#include "neurodiff/rosenbrock.hpp"
#include "neurodiff/sensitivity.hpp"

using namespace neurodiff;

namespace {

template <class Rhs>
double max_rel_jacobian_gap(const Rhs& rhs, std::vector<double> u, std::vector<double> p, double t = 0.3) {
    const auto Jad = state_jacobian(rhs, u, p, t, JacobianMode::ForwardAD);
    const auto Jfd = state_jacobian(rhs, u, p, t, JacobianMode::FiniteDifference);
    const double scale = std::max(1.0, Jad.cwiseAbs().maxCoeff());
    return (Jad - Jfd).cwiseAbs().maxCoeff() / scale;
}

}  // namespace

TEST_CASE("product, quotient and power rules") {
    using D1 = Dual<1>;
    const D1 x = D1::variable(2.0, 0);
    const D1 c = x * x * x;
    CHECK(c.value() == 8.0);
    CHECK(c.partial(0) == 12.0);

    const D1 z = x + 0.0;
    CHECK(z.value() == x.value());
    CHECK(z.partial(0) == x.partial(0));

    using D2 = Dual<2>;
    const D2 a = D2::variable(3.0, 0);
    const D2 b = D2::variable(4.0, 1);
    const D2 ab = a * b;
    CHECK(ab.value() == 12.0);
    CHECK(ab.partial(0) == 4.0);
    CHECK(ab.partial(1) == 3.0);

    const D2 q = a / b;
    CHECK(q.partial(0) == doctest::Approx(0.25));
    CHECK(q.partial(1) == doctest::Approx(-3.0 / 16.0));

    const D1 pw = pow(x, 2.5);
    CHECK(pw.value() == doctest::Approx(std::pow(2.0, 2.5)));
    CHECK(pw.partial(0) == doctest::Approx(2.5 * std::pow(2.0, 1.5)));
}

TEST_CASE("elementary functions") {
    using D1 = Dual<1>;
    const D1 t = tanh(D1::variable(0.0, 0));
    CHECK(t.value() == 0.0);
    CHECK(t.partial(0) == 1.0);

    const D1 e = exp(D1::variable(0.0, 0));
    CHECK(e.value() == 1.0);
    CHECK(e.partial(0) == 1.0);

    const D1 s = abs2(D1::variable(3.0, 0));
    CHECK(s.value() == 9.0);
    CHECK(s.partial(0) == 6.0);

    const D1 sn = sin(D1::variable(0.7, 0));
    CHECK(sn.partial(0) == doctest::Approx(std::cos(0.7)));
    const D1 cs = cos(D1::variable(0.7, 0));
    CHECK(cs.partial(0) == doctest::Approx(-std::sin(0.7)));
}

TEST_CASE("division by a zero-valued dual propagates non-finite values") {
    using D1 = Dual<1>;
    const D1 r = D1(1.0) / D1::variable(0.0, 0);
    CHECK_FALSE(isfinite(r));
    const D1 nan_in(std::nan(""), {1.0});
    CHECK_FALSE(isfinite(nan_in * 0.0));
}

TEST_CASE("zero seeds give zero partials and plain values") {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> dist(-2.0, 2.0);
    for (int trial = 0; trial < 20; ++trial) {
        const std::vector<double> u{dist(rng), dist(rng)};
        const std::vector<double> p{1.5, 1.0, 3.0, 1.0};
        std::vector<double> du(2);
        models::LotkaVolterra{}(std::span<double>(du), std::span<const double>(u), std::span<const double>(p), 0.0);

        using D = Dual<4>;
        std::vector<D> ud(u.begin(), u.end()), pd(p.begin(), p.end()), dud(2);
        models::LotkaVolterra{}(std::span<D>(dud), std::span<const D>(ud), std::span<const D>(pd), 0.0);
        for (int i = 0; i < 2; ++i) {
            CHECK(dud[i].value() == du[i]);
            for (std::size_t k = 0; k < 4; ++k) CHECK(dud[i].partial(k) == 0.0);
        }
    }
}

TEST_CASE("Lotka-Volterra state Jacobian by hand") {
    const std::vector<double> u{1.0, 1.0}, p{1.5, 1.0, 3.0, 1.0};
    const auto J = state_jacobian(models::LotkaVolterra{}, u, p, 0.0, JacobianMode::ForwardAD);
    // d/du of (a x - b x y, -d y + g x y)
    CHECK(J(0, 0) == doctest::Approx(p[0] - p[1] * u[1]));
    CHECK(J(0, 1) == doctest::Approx(-p[1] * u[0]));
    CHECK(J(1, 0) == doctest::Approx(p[3] * u[1]));
    CHECK(J(1, 1) == doctest::Approx(-p[2] + p[3] * u[0]));
    CHECK(J(0, 0) == 0.5);
    CHECK(J(0, 1) == -1.0);
    CHECK(J(1, 0) == 1.0);
    CHECK(J(1, 1) == -2.0);
}

TEST_CASE("identity and linear maps") {
    const std::vector<double> x{0.3, -1.2, 4.0};
    const auto I = jacobian([](auto v) {
        using D = typename decltype(v)::value_type;
        return std::vector<D>(v.begin(), v.end());
    }, std::span<const double>(x));
    CHECK(I.isApprox(Eigen::MatrixXd::Identity(3, 3)));

    const double A[2][3] = {{1.0, -2.0, 0.5}, {3.0, 0.0, -7.0}};
    const auto J = jacobian([&](auto v) {
        using D = typename decltype(v)::value_type;
        std::vector<D> y(2, D(0.0));
        for (int i = 0; i < 2; ++i)
            for (int j = 0; j < 3; ++j) y[i] += A[i][j] * v[j];
        return y;
    }, std::span<const double>(x));
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 3; ++j) CHECK(J(i, j) == A[i][j]);
}

TEST_CASE("chunked sweeps cover more inputs than the chunk width") {
    std::vector<double> x(19);
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = 0.1 * static_cast<double>(i) - 0.7;
    auto f = [](auto v) {
        using D = typename decltype(v)::value_type;
        std::vector<D> y(3, D(0.0));
        for (std::size_t i = 0; i < v.size(); ++i) {
            y[0] += v[i] * v[i];
            y[1] += sin(v[i]) * static_cast<double>(i);
        }
        y[2] = v[0] * v[v.size() - 1];
        return y;
    };
    const auto J3 = jacobian<3>(f, std::span<const double>(x));
    const auto J8 = jacobian<8>(f, std::span<const double>(x));
    CHECK(J3.isApprox(J8, 1e-15));
    for (std::size_t i = 0; i < x.size(); ++i) {
        CHECK(J8(0, static_cast<Eigen::Index>(i)) == doctest::Approx(2.0 * x[i]));
        CHECK(J8(1, static_cast<Eigen::Index>(i)) == doctest::Approx(std::cos(x[i]) * static_cast<double>(i)));
    }
}

TEST_CASE("AD Jacobians agree with central differences on every model") {
    CHECK(max_rel_jacobian_gap(models::LotkaVolterra{}, {0.8, 1.3}, {1.5, 1.0, 3.0, 1.0}) <= 1e-5);
    CHECK(max_rel_jacobian_gap(models::Rober{}, {1.0, 0.0, 0.0}, {0.04, 3e7, 1e4}) <= 1e-5);
    CHECK(max_rel_jacobian_gap(models::Rober{}, {0.7, 3e-5, 0.3}, {0.04, 3e7, 1e4}) <= 1e-5);
    CHECK(max_rel_jacobian_gap(models::Lorenz{}, {1.0, 2.0, 20.0}, {}) <= 1e-5);
    CHECK(max_rel_jacobian_gap(models::Exponential{}, {1.2, -0.4}, {1.5}) <= 1e-5);
    CHECK(max_rel_jacobian_gap(models::StiffCosine{}, {0.4}, {50.0}) <= 1e-5);
    CHECK(max_rel_jacobian_gap(models::CubicSpiral{}, {2.0, -0.5}, {}) <= 1e-5);
    CHECK(max_rel_jacobian_gap(models::LinearFamily{3}, {1.0, -2.0, 0.5},
                               {0.1, 0.2, -0.3, 0.4, 0.0, 0.6, -0.7, 0.8, 0.9}) <= 1e-5);

    const MlpChain chain({{2, 50, Activation::Tanh}, {50, 2, Activation::Identity}}, PreTransform::Cube);
    const auto p = init_params(chain, 3);
    CHECK(max_rel_jacobian_gap(neural_rhs(chain), {1.1, -0.6}, p.values) <= 1e-5);
}

TEST_CASE("directional derivative matches two-sided differences") {
    const std::vector<double> u{1.0, 2.0, 20.0}, v{0.3, -0.8, 0.5};
    const double eps = 1e-6;
    using D = Dual<1>;
    std::vector<D> ud(3), dud(3);
    for (int i = 0; i < 3; ++i) ud[i] = D(u[i], {v[i]});
    const std::vector<D> none;
    models::Lorenz{}(std::span<D>(dud), std::span<const D>(ud), std::span<const D>(none), 0.0);

    std::vector<double> up(3), um(3), fp(3), fm(3);
    for (int i = 0; i < 3; ++i) {
        up[i] = u[i] + eps * v[i];
        um[i] = u[i] - eps * v[i];
    }
    const std::vector<double> nop;
    models::Lorenz{}(std::span<double>(fp), std::span<const double>(up), std::span<const double>(nop), 0.0);
    models::Lorenz{}(std::span<double>(fm), std::span<const double>(um), std::span<const double>(nop), 0.0);
    for (int i = 0; i < 3; ++i) CHECK(dud[i].partial(0) == doctest::Approx((fp[i] - fm[i]) / (2 * eps)).epsilon(1e-6));
}
