#pragma once

// Dormand-Prince 5(4) explicit Runge-Kutta pair with FSAL and a free
// fourth-order continuous extension, plus the fixed-step Euler reference
// integrator.
//
// Coefficients: J. R. Dormand and P. J. Prince, "A family of embedded
// Runge-Kutta formulae", J. Comp. Appl. Math. 6 (1980). Dense output
// coefficients: L. F. Shampine, "Some practical Runge-Kutta formulas",
// Math. Comp. 46 (1986), in the monomial form used by SciPy's RK45.

#include <array>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "neurodiff/integrator.hpp"
#include "neurodiff/ode.hpp"

namespace neurodiff {

namespace dopri5 {
inline constexpr std::array<double, 7> c{0.0, 1.0 / 5, 3.0 / 10, 4.0 / 5, 8.0 / 9, 1.0, 1.0};
inline constexpr std::array<std::array<double, 6>, 7> a{{
    {},
    {1.0 / 5},
    {3.0 / 40, 9.0 / 40},
    {44.0 / 45, -56.0 / 15, 32.0 / 9},
    {19372.0 / 6561, -25360.0 / 2187, 64448.0 / 6561, -212.0 / 729},
    {9017.0 / 3168, -355.0 / 33, 46732.0 / 5247, 49.0 / 176, -5103.0 / 18656},
    {35.0 / 384, 0.0, 500.0 / 1113, 125.0 / 192, -2187.0 / 6784, 11.0 / 84},
}};
// fifth-order weights minus fourth-order weights
inline constexpr std::array<double, 7> e{71.0 / 57600,      0.0, -71.0 / 16695, 71.0 / 1920,
                                         -17253.0 / 339200, 22.0 / 525, -1.0 / 40};
// y(t + s*h) = y + h * sum_i k_i * (P[i][0] s + P[i][1] s^2 + P[i][2] s^3 + P[i][3] s^4)
inline constexpr std::array<std::array<double, 4>, 7> P{{
    {1.0, -8048581381.0 / 2820520608, 8663915743.0 / 2820520608, -12715105075.0 / 11282082432},
    {0.0, 0.0, 0.0, 0.0},
    {0.0, 131558114200.0 / 32700410799, -68118460800.0 / 10900136933, 87487479700.0 / 32700410799},
    {0.0, -1754552775.0 / 470086768, 14199869525.0 / 1410260304, -10690763975.0 / 1880347072},
    {0.0, 127303824393.0 / 49829197408, -318862633887.0 / 49829197408, 701980252875.0 / 199316789632},
    {0.0, -282668133.0 / 205662961, 2019193451.0 / 616988883, -1453857185.0 / 822651844},
    {0.0, 40617522.0 / 29380423, -110615467.0 / 29380423, 69997945.0 / 29380423},
}};
}  // namespace dopri5

/// One Dormand-Prince stepper; holds stage buffers between attempts.
template <class T>
class Dopri5 {
public:
    double controller_order() const { return 5.0; }

    template <class F>
    bool init(F& f, double t, std::span<const T> u) {
        const std::size_t n = u.size();
        for (auto& k : k_) k.assign(n, T(0.0));
        tmp_.assign(n, T(0.0));
        err_.assign(n, T(0.0));
        f(std::span<T>(k_[0]), u, t);
        ++evals_;
        return all_finite(std::span<const T>(k_[0]));
    }

    std::span<const T> derivative() const { return k_[0]; }

    template <class F>
    double attempt(F& f, double t, std::span<const T> u, double h, std::vector<T>& u_new, const SolverOptions& o) {
        using namespace dopri5;
        const std::size_t n = u.size();
        for (std::size_t s = 1; s < 7; ++s) {
            for (std::size_t i = 0; i < n; ++i) {
                T acc = k_[0][i] * a[s][0];
                for (std::size_t j = 1; j < s; ++j)
                    if (a[s][j] != 0.0) acc += k_[j][i] * a[s][j];
                tmp_[i] = u[i] + acc * h;
            }
            if (s == 6) u_new = tmp_;
            f(std::span<T>(k_[s]), std::span<const T>(tmp_), t + c[s] * h);
            ++evals_;
        }
        for (std::size_t i = 0; i < n; ++i) {
            T acc = k_[0][i] * e[0];
            for (std::size_t j = 2; j < 7; ++j) acc += k_[j][i] * e[j];
            err_[i] = acc * h;
        }
        if (!all_finite(std::span<const T>(k_[6]))) return std::numeric_limits<double>::infinity();
        return error_norm<T>(err_, u, u_new, o.abstol, o.reltol);
    }

    DenseSegment<T> dense(double t, double t_new, std::span<const T> u, std::span<const T>) const {
        using namespace dopri5;
        const std::size_t n = u.size();
        const double h = t_new - t;
        DenseSegment<T> seg{t, t_new, {}};
        seg.coeffs.assign(5, std::vector<T>(n, T(0.0)));
        seg.coeffs[0].assign(u.begin(), u.end());
        for (std::size_t j = 0; j < 4; ++j)
            for (std::size_t i = 0; i < n; ++i) {
                T acc(0.0);
                for (std::size_t s = 0; s < 7; ++s)
                    if (P[s][j] != 0.0) acc += k_[s][i] * P[s][j];
                seg.coeffs[j + 1][i] = acc * h;
            }
        return seg;
    }

    void accept() { std::swap(k_[0], k_[6]); }
    std::size_t rhs_evals() const { return evals_; }
    std::optional<RetCode> fatal() const { return std::nullopt; }

private:
    std::array<std::vector<T>, 7> k_;
    std::vector<T> tmp_, err_;
    std::size_t evals_ = 0;
};

/// Integrates du/dt = f(u, t) from t0 to t1. `f` is called as
/// `f(std::span<T> du, std::span<const T> u, double t)`.
template <class T, class F>
SolutionPath<T> integrate_erk45(F&& f, std::vector<T> u0, double t0, double t1, const SolverOptions& opts) {
    Dopri5<T> method;
    SolutionPath<T> path;
    detail::integrate(method, f, std::move(u0), t0, t1, opts, path);
    return path;
}

/// Binds the parameters of an OdeProblem, producing the (du, u, t) form
/// used by the integrators.
template <class Rhs, class T>
auto bind_params(const Rhs& rhs, std::span<const T> p) {
    return [&rhs, p](std::span<T> du, std::span<const T> u, double t) { rhs(du, u, p, t); };
}

/// Solves with the problem's own parameters promoted to scalar type T.
template <class T, class Problem>
SolutionPath<T> solve_erk45_as(const Problem& problem, std::span<const T> p, const SolverOptions& opts) {
    std::vector<double> pv(p.size());
    for (std::size_t i = 0; i < p.size(); ++i) pv[i] = value(p[i]);
    const auto [t0, t1] = problem.resolve_tspan(pv);
    auto f = bind_params(problem.rhs, p);
    return integrate_erk45<T>(f, problem.template resolve_u0<T>(p, t0), t0, t1, opts);
}

template <class Problem>
SolutionPath<double> solve_erk45(const Problem& problem, const SolverOptions& opts = {}) {
    return solve_erk45_as<double>(problem, std::span<const double>(problem.params), opts);
}

/// Forward Euler at uniform nodes: u_{k+1} = u_k + dt * f(u_k, t_k).
/// The last step is shortened to land on t_end.
template <class T, class F>
SolutionPath<T> integrate_euler(F&& f, std::vector<T> u0, double t0, double t1, double dt) {
    const std::vector<double> grid = uniform_grid(t0, t1, dt);
    SolutionPath<T> path;
    const std::size_t n = u0.size();
    std::vector<T> du(n), u = std::move(u0);
    path.t.push_back(t0);
    path.u.push_back(u);
    for (std::size_t k = 0; k + 1 < grid.size(); ++k) {
        const double h = grid[k + 1] - grid[k];
        f(std::span<T>(du), std::span<const T>(u), grid[k]);
        ++path.stats.n_rhs_evals;
        if (!all_finite(std::span<const T>(du))) {
            path.retcode = RetCode::NanDetected;
            break;
        }
        std::vector<T> next(n);
        for (std::size_t i = 0; i < n; ++i) next[i] = u[i] + du[i] * h;
        path.dense.push_back(DenseSegment<T>{grid[k], grid[k + 1], {u, du}});
        for (std::size_t i = 0; i < n; ++i) path.dense.back().coeffs[1][i] = du[i] * h;
        u = std::move(next);
        path.t.push_back(grid[k + 1]);
        path.u.push_back(u);
        ++path.stats.n_accepted;
    }
    path.step_t = path.t;
    path.step_u = path.u;
    return path;
}

template <class Problem>
SolutionPath<double> solve_euler_fixed(const Problem& problem, double dt) {
    std::span<const double> p(problem.params);
    const auto [t0, t1] = problem.resolve_tspan(p);
    auto f = bind_params(problem.rhs, p);
    return integrate_euler<double>(f, problem.template resolve_u0<double>(p, t0), t0, t1, dt);
}

}  // namespace neurodiff
