#pragma once

// Adaptive stepping driver shared by the explicit and Rosenbrock methods.
//
// A Method exposes:
//   double controller_order() const;
//   template <class F> bool init(F& f, double t, std::span<const T> u);   // false if f(u0) is non-finite
//   std::span<const T> derivative() const;                                 // f at the current point
//   template <class F> double attempt(F& f, double t, std::span<const T> u, double dt,
//                                     std::vector<T>& u_new, const SolverOptions& o);
//   DenseSegment<T> dense(double t, double t_new, std::span<const T> u, std::span<const T> u_new) const;
//   void accept();
//   std::size_t rhs_evals() const;
//   std::optional<RetCode> fatal() const;                                   // unrecoverable attempt failure

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include "neurodiff/ode.hpp"

namespace neurodiff::detail {

/// Starting step from the local Lipschitz estimate (Hairer, Norsett & Wanner, II.4).
template <class T, class F>
double initial_step(F& f, double t0, std::span<const T> u0, std::span<const T> f0, double dir, int order,
                    const SolverOptions& o, std::size_t& evals) {
    const std::size_t n = u0.size();
    if (n == 0) return dir * 1e-6;
    double d0 = 0.0, d1 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double sc = o.abstol + std::abs(value(u0[i])) * o.reltol;
        d0 += std::pow(value(u0[i]) / sc, 2);
        d1 += std::pow(value(f0[i]) / sc, 2);
    }
    d0 = std::sqrt(d0 / n);
    d1 = std::sqrt(d1 / n);
    double h0 = (d0 < 1e-5 || d1 < 1e-5) ? 1e-6 : 0.01 * d0 / d1;
    h0 = std::min(h0, o.dt_max);
    std::vector<T> u1(n), f1(n);
    for (std::size_t i = 0; i < n; ++i) u1[i] = u0[i] + f0[i] * (dir * h0);
    f(std::span<T>(f1), std::span<const T>(u1), t0 + dir * h0);
    ++evals;
    double d2 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double sc = o.abstol + std::abs(value(u0[i])) * o.reltol;
        d2 += std::pow((value(f1[i]) - value(f0[i])) / sc, 2);
    }
    d2 = std::sqrt(d2 / n) / h0;
    const double dmax = std::max(d1, d2);
    double h1 = dmax <= 1e-15 ? std::max(1e-6, h0 * 1e-3) : std::pow(0.01 / dmax, 1.0 / (order + 1));
    if (!std::isfinite(h1)) h1 = h0;
    return dir * std::min({100.0 * h0, h1, o.dt_max});
}

template <class T, class Method, class F>
void integrate(Method& method, F& f, std::vector<T> u, double t0, double t1, const SolverOptions& o,
               SolutionPath<T>& path) {
    o.validate(t0, t1);
    path = SolutionPath<T>{};
    path.step_t.push_back(t0);
    path.step_u.push_back(u);

    const bool has_saveat = o.saveat.has_value();
    const std::vector<double> saves = has_saveat ? o.saveat->resolve(t0, t1) : std::vector<double>{};
    std::size_t save_idx = 0;
    if (!has_saveat) {
        path.t.push_back(t0);
        path.u.push_back(u);
    } else {
        while (save_idx < saves.size() && saves[save_idx] == t0) {
            path.t.push_back(t0);
            path.u.push_back(u);
            ++save_idx;
        }
    }
    auto finish = [&](RetCode rc) {
        path.retcode = rc;
        path.stats.n_rhs_evals = method.rhs_evals();
    };
    if (t0 == t1) return finish(RetCode::Success);

    const double dir = t1 > t0 ? 1.0 : -1.0;
    if (!method.init(f, t0, std::span<const T>(u))) return finish(RetCode::NanDetected);

    std::vector<double> stops;
    for (double s : o.tstops)
        if (dir * (s - t0) > 0 && dir * (t1 - s) > 0) stops.push_back(s);
    std::sort(stops.begin(), stops.end(), [dir](double a, double b) { return dir * a < dir * b; });
    stops.erase(std::unique(stops.begin(), stops.end()), stops.end());
    stops.push_back(t1);
    std::size_t stop_idx = 0;

    std::size_t extra_evals = 0;
    double dt = o.dt_init ? dir * std::abs(*o.dt_init)
                          : initial_step<T>(f, t0, std::span<const T>(u), method.derivative(), dir,
                                            static_cast<int>(method.controller_order()), o, extra_evals);
    const double k = method.controller_order();
    const PIController& c = o.controller;
    const double beta1 = c.beta1 * 5.0 / k;
    const double beta2 = c.beta2 * 5.0 / k;
    double err_prev = 1e-4;
    bool last_nonfinite = false;
    double t = t0;
    std::vector<T> u_new(u.size());

    auto done = [&](RetCode rc) {
        path.retcode = rc;
        path.stats.n_rhs_evals = method.rhs_evals() + extra_evals;
    };

    while (true) {
        if (path.stats.n_accepted >= o.max_steps) return done(RetCode::MaxStepsExceeded);
        const double next_stop = stops[stop_idx];
        if (std::abs(dt) > o.dt_max) dt = dir * o.dt_max;
        double step = dt;
        bool hit = false;
        const double remaining = next_stop - t;
        if (dir * (t + step - next_stop) >= 0) {
            step = remaining;
            hit = true;
        } else if (std::abs(remaining - step) < 0.01 * std::abs(step)) {
            if (o.adaptive) {
                step = 0.5 * remaining;
            } else {
                // absorb the rounding sliver instead of taking a tiny extra step
                step = remaining;
                hit = true;
            }
        }
        const double dt_floor = std::max(o.dt_min, 4.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(t)));
        if (std::abs(step) < dt_floor) return done(last_nonfinite ? RetCode::NanDetected : RetCode::DtUnderflow);

        double err = method.attempt(f, t, std::span<const T>(u), step, u_new, o);
        if (auto fatal = method.fatal()) return done(*fatal);
        if (!o.adaptive) {
            if (!std::isfinite(err) || !all_finite(std::span<const T>(u_new))) return done(RetCode::NanDetected);
            err = 0.0;
        }
        if (err <= 1.0) {
            const double t_new = hit ? next_stop : t + step;
            DenseSegment<T> seg = method.dense(t, t_new, std::span<const T>(u), std::span<const T>(u_new));
            method.accept();
            while (has_saveat && save_idx < saves.size() && dir * (saves[save_idx] - t_new) <= 0) {
                const double s = saves[save_idx++];
                path.t.push_back(s);
                path.u.push_back(s == t_new ? u_new : seg.eval(s));
            }
            if (!has_saveat) {
                path.t.push_back(t_new);
                path.u.push_back(u_new);
            }
            path.step_t.push_back(t_new);
            path.step_u.push_back(u_new);
            path.dense.push_back(std::move(seg));
            ++path.stats.n_accepted;
            last_nonfinite = false;

            if (o.adaptive) {
                const double e = std::max(err, 1e-10);
                double fac = c.safety * std::pow(e, -beta1) * std::pow(err_prev, -beta2);
                fac = std::clamp(fac, c.fac_min, c.fac_max);
                dt = (hit ? dt : step) * fac;
                err_prev = std::max(err, 1e-4);
            }
            t = t_new;
            std::swap(u, u_new);
            if (hit && ++stop_idx == stops.size()) return done(RetCode::Success);
        } else {
            ++path.stats.n_rejected;
            last_nonfinite = !std::isfinite(err);
            const double fac = last_nonfinite ? c.fac_min : std::max(c.fac_min, c.safety * std::pow(err, -1.0 / k));
            dt = step * fac;
        }
    }
}

}  // namespace neurodiff::detail
