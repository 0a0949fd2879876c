#pragma once

// Problem, option and solution types shared by every integrator.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <type_traits>
#include <utility>
#include <vector>

#include "neurodiff/dual.hpp"

namespace neurodiff {

enum class RetCode { Success, MaxStepsExceeded, DtUnderflow, NanDetected, SingularLinearSolve };

std::string_view to_string(RetCode code);

/// Thrown by operations that need a successful solve (gradients, losses)
/// when the underlying integrator stops early.
class SolverError : public std::runtime_error {
public:
    SolverError(RetCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
    RetCode code() const { return code_; }

private:
    RetCode code_;
};

struct SolverStats {
    std::size_t n_accepted = 0;
    std::size_t n_rejected = 0;
    std::size_t n_rhs_evals = 0;
};

/// Gains for the PI step-size controller. Exponents are scaled by the
/// controller order k of the method: fac = safety * err^(-beta1) * err_prev^(-beta2)
/// with beta1 = 0.7/k, beta2 = -0.4/k by default.
struct PIController {
    double beta1 = 0.7 / 5.0;
    double beta2 = -0.4 / 5.0;
    double safety = 0.9;
    double fac_min = 0.2;
    double fac_max = 10.0;
};

/// Output grid: either a uniform spacing from t_start, or an explicit list.
struct SaveAt {
    std::optional<double> step;
    std::vector<double> times;

    static SaveAt every(double h) { return SaveAt{h, {}}; }
    static SaveAt at(std::vector<double> ts) { return SaveAt{std::nullopt, std::move(ts)}; }

    /// Concrete output times for a solve over (t0, t1). A uniform grid is
    /// t0 + k*h up to t1, with t1 appended if the grid does not land on it.
    std::vector<double> resolve(double t0, double t1) const;
};

struct SolverOptions {
    double reltol = 1e-3;
    double abstol = 1e-6;
    std::optional<SaveAt> saveat;
    std::optional<double> dt_init;
    double dt_min = 0.0;
    double dt_max = std::numeric_limits<double>::infinity();
    std::size_t max_steps = 1'000'000;
    PIController controller;
    /// When false, every step uses dt_init and is accepted unconditionally.
    bool adaptive = true;
    /// Times that must appear as step endpoints.
    std::vector<double> tstops;

    /// Throws std::invalid_argument on inconsistent settings.
    void validate(double t0, double t1) const;
};

/// Uniform nodes t0, t0+dt, ... ending exactly at t1 (last step may be short).
std::vector<double> uniform_grid(double t0, double t1, double dt);

/// Weighted RMS norm of an embedded error estimate.
/// Returns +inf when any input is non-finite so the step is rejected.
template <class T>
double error_norm(std::span<const T> err, std::span<const T> u_prev, std::span<const T> u_new,
                  double abstol, double reltol) {
    const std::size_t n = err.size();
    if (n == 0) return 0.0;
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double sc = abstol + reltol * std::max(std::abs(value(u_prev[i])), std::abs(value(u_new[i])));
        const double r = value(err[i]) / sc;
        acc += r * r;
    }
    const double out = std::sqrt(acc / static_cast<double>(n));
    return std::isfinite(out) ? out : std::numeric_limits<double>::infinity();
}

inline double error_norm(std::span<const double> err, std::span<const double> u_prev,
                         std::span<const double> u_new, double abstol, double reltol) {
    return error_norm<double>(err, u_prev, u_new, abstol, reltol);
}

template <class T>
bool all_finite(std::span<const T> v) {
    using std::isfinite;
    for (const auto& x : v)
        if (!isfinite(x)) return false;
    return true;
}

/// Polynomial on one accepted step: y(t0 + s*(t1-t0)) = sum_j coeffs[j] * s^j.
template <class T>
struct DenseSegment {
    double t0 = 0.0;
    double t1 = 0.0;
    std::vector<std::vector<T>> coeffs;

    std::vector<T> eval(double t) const {
        const double s = (t - t0) / (t1 - t0);
        std::vector<T> y = coeffs.back();
        for (std::size_t j = coeffs.size() - 1; j-- > 0;)
            for (std::size_t i = 0; i < y.size(); ++i) y[i] = y[i] * s + coeffs[j][i];
        return y;
    }
};

template <class T>
struct SolutionPath {
    /// Saved output nodes (saveat times, or every accepted step).
    std::vector<double> t;
    std::vector<std::vector<T>> u;
    /// Accepted step endpoints, including the initial time.
    std::vector<double> step_t;
    std::vector<std::vector<T>> step_u;
    /// One segment per accepted step.
    std::vector<DenseSegment<T>> dense;
    RetCode retcode = RetCode::Success;
    SolverStats stats;

    bool ok() const { return retcode == RetCode::Success; }
    std::size_t dim() const { return step_u.empty() ? 0 : step_u.front().size(); }
    double t_reached() const { return step_t.empty() ? 0.0 : step_t.back(); }

    /// State at time t from the dense output. Exact at step and saved nodes.
    std::vector<T> interpolate(double t) const;
};

template <class T>
std::vector<T> SolutionPath<T>::interpolate(double tq) const {
    if (step_t.empty()) throw std::out_of_range("interpolate: empty solution");
    const double lo = std::min(step_t.front(), step_t.back());
    const double hi = std::max(step_t.front(), step_t.back());
    if (!(tq >= lo && tq <= hi)) throw std::out_of_range("interpolate: t=" + std::to_string(tq) + " outside solution range");
    const bool forward = step_t.back() >= step_t.front();
    auto before = [forward](double a, double b) { return forward ? a < b : a > b; };
    // first step node not before tq
    auto it = std::lower_bound(step_t.begin(), step_t.end(), tq, before);
    if (it != step_t.end() && *it == tq) return step_u[static_cast<std::size_t>(it - step_t.begin())];
    auto sit = std::lower_bound(t.begin(), t.end(), tq, before);
    if (sit != t.end() && *sit == tq) return u[static_cast<std::size_t>(sit - t.begin())];
    const std::size_t seg = static_cast<std::size_t>(it - step_t.begin()) - 1;
    return dense.at(seg).eval(tq);
}

/// Writes `t,u1,...,un` with 17 significant digits, one row per saved node.
template <class T>
void write_csv(std::ostream& os, const SolutionPath<T>& path) {
    const auto old_prec = os.precision(17);
    const std::size_t n = path.u.empty() ? path.dim() : path.u.front().size();
    os << "t";
    for (std::size_t i = 1; i <= n; ++i) os << ",u" << i;
    os << "\n";
    for (std::size_t k = 0; k < path.t.size(); ++k) {
        os << path.t[k];
        for (const auto& x : path.u[k]) os << "," << value(x);
        os << "\n";
    }
    os.precision(old_prec);
}

/// Drops derivative information from a dual-valued path.
template <class T>
SolutionPath<double> values_of(const SolutionPath<T>& p) {
    SolutionPath<double> out;
    auto strip = [](const std::vector<T>& v) {
        std::vector<double> r(v.size());
        for (std::size_t i = 0; i < v.size(); ++i) r[i] = value(v[i]);
        return r;
    };
    out.t = p.t;
    out.step_t = p.step_t;
    for (const auto& v : p.u) out.u.push_back(strip(v));
    for (const auto& v : p.step_u) out.step_u.push_back(strip(v));
    for (const auto& s : p.dense) {
        DenseSegment<double> d{s.t0, s.t1, {}};
        for (const auto& c : s.coeffs) d.coeffs.push_back(strip(c));
        out.dense.push_back(std::move(d));
    }
    out.retcode = p.retcode;
    out.stats = p.stats;
    return out;
}

// ---- problem definition -----------------------------------------------------

/// Marker for "not provided" in the optional problem slots.
struct Unset {};

/// An initial-value problem u' = rhs(u, p, t).
///
/// The right-hand side is any callable invocable as
/// `rhs(std::span<T> du, std::span<const T> u, std::span<const T> p, double t)`
/// for every scalar type it is solved with (double and Dual<N>), so in
/// practice a generic lambda or a struct with a templated call operator.
/// The initial state and time span are either fixed values or functions of
/// the parameters: `u0_of(std::span<const T> p, double t0) -> std::vector<T>`
/// and `tspan_of(std::span<const T> p) -> std::pair<T, T>`.
template <class Rhs, class U0Fn = Unset, class TspanFn = Unset>
struct OdeProblem {
    Rhs rhs;
    std::vector<double> u0;
    std::pair<double, double> tspan{0.0, 1.0};
    std::vector<double> params;
    U0Fn u0_of{};
    TspanFn tspan_of{};

    static constexpr bool has_u0_of = !std::is_same_v<U0Fn, Unset>;
    static constexpr bool has_tspan_of = !std::is_same_v<TspanFn, Unset>;

    template <class F>
    OdeProblem<Rhs, F, TspanFn> with_u0_of(F f) const {
        return {rhs, {}, tspan, params, std::move(f), tspan_of};
    }
    template <class F>
    OdeProblem<Rhs, U0Fn, F> with_tspan_of(F f) const {
        return {rhs, u0, tspan, params, u0_of, std::move(f)};
    }

    std::pair<double, double> resolve_tspan(std::span<const double> p) const {
        if constexpr (has_tspan_of) {
            auto [a, b] = tspan_of(p);
            return {value(a), value(b)};
        } else {
            return tspan;
        }
    }
    template <class T>
    std::vector<T> resolve_u0(std::span<const T> p, double t0) const {
        if constexpr (has_u0_of) {
            return u0_of(p, t0);
        } else {
            return std::vector<T>(u0.begin(), u0.end());
        }
    }
};

template <class Rhs>
OdeProblem<Rhs> make_ode(Rhs rhs, std::vector<double> u0, std::pair<double, double> tspan,
                         std::vector<double> params = {}) {
    return OdeProblem<Rhs>{std::move(rhs), std::move(u0), tspan, std::move(params)};
}

template <class T>
struct is_ode_problem : std::false_type {};
template <class R, class A, class B>
struct is_ode_problem<OdeProblem<R, A, B>> : std::true_type {};

}  // namespace neurodiff
