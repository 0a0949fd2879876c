#pragma once

// Constant-lag delay differential equations by the method of steps: the
// explicit pair advances with dt <= min(lag), so every delayed query lands
// in history that is already final, and the dense output of completed steps
// serves as the history interpolant.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "neurodiff/erk45.hpp"
#include "neurodiff/ode.hpp"

namespace neurodiff {

/// The rhs asked for a delayed state beyond the completed history.
class HistoryQueryAhead : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

/// Read access to the solution so far, handed to the DDE right-hand side.
template <class T, class HistoryFn>
class History {
public:
    History(const SolutionPath<T>& path, const HistoryFn& initial, std::span<const T> p, double t_start)
        : path_(path), initial_(initial), p_(p), t_start_(t_start) {}

    /// State at time s. Before t_start this is the initial history function.
    std::vector<T> operator()(double s) const {
        const bool forward = path_.step_t.empty() || path_.step_t.back() >= t_start_;
        if (forward ? s <= t_start_ : s >= t_start_) return initial_(p_, s);
        const double last = path_.step_t.back();
        const double slack = 1e-10 * std::max(1.0, std::abs(last));
        if (forward ? s > last + slack : s < last - slack)
            throw HistoryQueryAhead("history queried at t=" + std::to_string(s) + " beyond completed time " +
                                    std::to_string(last));
        if (forward ? s > last : s < last) s = last;
        return path_.interpolate(s);
    }

private:
    const SolutionPath<T>& path_;
    const HistoryFn& initial_;
    std::span<const T> p_;
    double t_start_;
};

/// u'(t) = rhs(u(t), h, p, t) with h(s) the state at delayed times s.
///
/// `rhs` is invoked as `rhs(std::span<T> du, std::span<const T> u, const H& h, std::span<const T> p, double t)`
/// and `history` as `history(std::span<const T> p, double t) -> std::vector<T>` for t <= t_start.
template <class Rhs, class HistoryFn>
struct DdeProblem {
    Rhs rhs;
    HistoryFn history;
    std::vector<double> constant_lags;
    std::vector<double> u0;
    std::pair<double, double> tspan{0.0, 1.0};
    std::vector<double> params;

    void validate() const {
        if (constant_lags.empty()) throw std::invalid_argument("DDE needs at least one constant lag");
        for (double lag : constant_lags)
            if (!(lag > 0.0) || !std::isfinite(lag)) throw std::invalid_argument("DDE lags must be positive and finite");
    }

    std::pair<double, double> resolve_tspan(std::span<const double>) const { return tspan; }
    template <class T>
    std::vector<T> resolve_u0(std::span<const T>, double) const {
        return std::vector<T>(u0.begin(), u0.end());
    }
};

template <class T>
struct is_dde_problem : std::false_type {};
template <class R, class H>
struct is_dde_problem<DdeProblem<R, H>> : std::true_type {};

/// History that returns the same constant state for every t.
struct ConstantHistory {
    std::vector<double> state;
    template <class T>
    std::vector<T> operator()(std::span<const T>, double) const {
        return std::vector<T>(state.begin(), state.end());
    }
};

/// Derivative discontinuities propagated from t_start: sums of up to
/// `levels` lags, restricted to the open interval (t0, t1).
std::vector<double> dde_discontinuities(std::span<const double> lags, double t0, double t1, int levels = 4);

template <class T, class Rhs, class HistoryFn>
SolutionPath<T> solve_dde_mos_as(const DdeProblem<Rhs, HistoryFn>& problem, std::span<const T> p,
                                 const SolverOptions& opts) {
    problem.validate();
    const auto [t0, t1] = problem.tspan;
    SolverOptions o = opts;
    const double min_lag = *std::min_element(problem.constant_lags.begin(), problem.constant_lags.end());
    o.dt_max = std::min(o.dt_max, min_lag);
    const auto disc = dde_discontinuities(problem.constant_lags, t0, t1);
    o.tstops.insert(o.tstops.end(), disc.begin(), disc.end());

    SolutionPath<T> path;
    History<T, HistoryFn> hist(path, problem.history, p, t0);
    auto f = [&](std::span<T> du, std::span<const T> u, double t) { problem.rhs(du, u, hist, p, t); };
    Dopri5<T> method;
    detail::integrate(method, f, problem.template resolve_u0<T>(p, t0), t0, t1, o, path);
    return path;
}

template <class Rhs, class HistoryFn>
SolutionPath<double> solve_dde_mos(const DdeProblem<Rhs, HistoryFn>& problem, const SolverOptions& opts = {}) {
    return solve_dde_mos_as<double>(problem, std::span<const double>(problem.params), opts);
}

namespace models {

/// Lotka-Volterra with delayed prey growth:
/// x' = (alpha - beta y) x(t - lag), y' = (delta x - gamma) y.
struct DelayLotkaVolterra {
    double lag = 0.1;
    template <class T, class H, class P>
    void operator()(std::span<T> du, std::span<const T> u, const H& h, std::span<const P> p, double t) const {
        const T& x = u[0];
        const T& y = u[1];
        du[0] = (p[0] - p[1] * y) * h(t - lag)[0];
        du[1] = (p[2] * x - p[3]) * y;
    }
};

/// u'(t) = u(t - lag).
struct PureDelay {
    double lag = 1.0;
    template <class T, class H, class P>
    void operator()(std::span<T> du, std::span<const T>, const H& h, std::span<const P>, double t) const {
        const auto past = h(t - lag);
        for (std::size_t i = 0; i < du.size(); ++i) du[i] = past[i];
    }
};

}  // namespace models

}  // namespace neurodiff
