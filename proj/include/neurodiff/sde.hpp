#pragma once

// Euler-Maruyama for diagonal-noise SDEs,
//   u_{k+1} = u_k + f(u_k) dt + g(u_k) sqrt(dt) xi_k,
// with xi drawn from a counter-based generator keyed by (seed, step,
// component) so a path never depends on how work is scheduled.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <ostream>
#include <string>
#include <utility>
#include <span>
#include <stdexcept>
#include <vector>

#include "neurodiff/erk45.hpp"
#include "neurodiff/ode.hpp"

namespace neurodiff {

struct NoiseConfig {
    std::uint64_t seed = 0;
    double dt = 1e-3;
};

/// Standard normal variate determined entirely by its three keys.
double standard_normal(std::uint64_t seed, std::uint64_t step, std::uint64_t component);

/// du = drift(u, p, t) dt + diffusion(u, p, t) dW, diagonal noise.
/// Both functions use the OdeProblem rhs signature.
template <class Drift, class Diffusion>
struct SdeProblem {
    Drift drift;
    Diffusion diffusion;
    std::vector<double> u0;
    std::pair<double, double> tspan{0.0, 1.0};
    std::vector<double> params;

    std::pair<double, double> resolve_tspan(std::span<const double>) const { return tspan; }
    template <class T>
    std::vector<T> resolve_u0(std::span<const T>, double) const {
        return std::vector<T>(u0.begin(), u0.end());
    }
};

template <class T>
struct is_sde_problem : std::false_type {};
template <class A, class B>
struct is_sde_problem<SdeProblem<A, B>> : std::true_type {};

void check_noise_grid(double t0, double t1, double dt);

namespace detail {

/// Walks the Euler-Maruyama recursion from u0, calling
/// `on_step(k, t_k, t_k+1, u_k, u_k+1)` after each step. `on_step` returns
/// false to stop early.
template <class T, class Drift, class Diffusion, class OnStep>
RetCode euler_maruyama_walk(const SdeProblem<Drift, Diffusion>& problem, std::span<const T> p, const NoiseConfig& noise,
                            std::size_t& rhs_evals, OnStep&& on_step) {
    const auto [t0, t1] = problem.tspan;
    check_noise_grid(t0, t1, noise.dt);
    const std::vector<double> grid = uniform_grid(t0, t1, noise.dt);
    const std::size_t n = problem.u0.size();
    std::vector<T> u(problem.u0.begin(), problem.u0.end()), next(n), du(n), g(n);
    for (std::size_t k = 0; k + 1 < grid.size(); ++k) {
        const double h = grid[k + 1] - grid[k];
        const double sqh = std::sqrt(h);
        problem.drift(std::span<T>(du), std::span<const T>(u), p, grid[k]);
        problem.diffusion(std::span<T>(g), std::span<const T>(u), p, grid[k]);
        rhs_evals += 2;
        if (!all_finite(std::span<const T>(du)) || !all_finite(std::span<const T>(g))) return RetCode::NanDetected;
        for (std::size_t i = 0; i < n; ++i)
            next[i] = u[i] + du[i] * h + g[i] * (sqh * standard_normal(noise.seed, k, i));
        if (!on_step(k, grid[k], grid[k + 1], std::as_const(u), std::as_const(next))) break;
        std::swap(u, next);
    }
    return RetCode::Success;
}

}  // namespace detail

template <class T, class Drift, class Diffusion>
SolutionPath<T> solve_euler_maruyama_as(const SdeProblem<Drift, Diffusion>& problem, std::span<const T> p,
                                        const NoiseConfig& noise) {
    SolutionPath<T> path;
    path.t.push_back(problem.tspan.first);
    path.u.emplace_back(problem.u0.begin(), problem.u0.end());
    path.retcode = detail::euler_maruyama_walk<T>(
        problem, p, noise, path.stats.n_rhs_evals,
        [&](std::size_t, double ta, double tb, const std::vector<T>& u, const std::vector<T>& next) {
            DenseSegment<T> seg{ta, tb, {u, next}};
            for (std::size_t i = 0; i < next.size(); ++i) seg.coeffs[1][i] = next[i] - u[i];
            path.dense.push_back(std::move(seg));
            path.t.push_back(tb);
            path.u.push_back(next);
            ++path.stats.n_accepted;
            return true;
        });
    path.step_t = path.t;
    path.step_u = path.u;
    return path;
}

template <class Drift, class Diffusion>
SolutionPath<double> solve_euler_maruyama(const SdeProblem<Drift, Diffusion>& problem, const NoiseConfig& noise) {
    return solve_euler_maruyama_as<double>(problem, std::span<const double>(problem.params), noise);
}

struct MonteCarloSummary {
    std::vector<double> mean;
    std::vector<double> std_error;
    std::size_t n_paths = 0;
    double dt = 0.0;
    std::uint64_t seed = 0;
};

/// Writes `component,mean,stderr,n_paths,dt,seed`.
void write_csv(std::ostream& os, const MonteCarloSummary& s);

/// Runs `body(i)` for i in [0, n) over a small thread pool; `threads == 0`
/// picks the hardware concurrency.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body, unsigned threads = 0);

/// Sample mean and standard error of u(t_query) over paths seeded
/// base_seed + i. Per-path results are reduced in path-index order.
template <class Drift, class Diffusion>
MonteCarloSummary monte_carlo_mean(const SdeProblem<Drift, Diffusion>& problem, double noise_dt, std::size_t n_paths,
                                   std::uint64_t base_seed, double t_query, unsigned threads = 0) {
    if (n_paths < 2) throw std::invalid_argument("monte_carlo_mean needs at least two paths");
    const std::size_t n = problem.u0.size();
    std::vector<std::vector<double>> finals(n_paths);
    std::vector<RetCode> codes(n_paths, RetCode::Success);
    const auto [t0, t1] = problem.tspan;
    if (t_query < std::min(t0, t1) || t_query > std::max(t0, t1))
        throw std::out_of_range("monte_carlo_mean: query time outside the time span");
    const std::span<const double> p(problem.params);
    parallel_for(n_paths, [&](std::size_t i) {
        // only the state at t_query is kept; it matches interpolating the full path
        std::vector<double>& out = finals[i];
        if (t_query == t0) out = problem.u0;
        std::size_t evals = 0;
        codes[i] = detail::euler_maruyama_walk<double>(
            problem, p, NoiseConfig{base_seed + i, noise_dt}, evals,
            [&](std::size_t, double ta, double tb, const std::vector<double>& u, const std::vector<double>& next) {
                if (!out.empty()) return false;
                if (tb == t_query) {
                    out = next;
                } else if ((t_query - ta) * (t_query - tb) < 0.0) {
                    const double s = (t_query - ta) / (tb - ta);
                    out.resize(n);
                    for (std::size_t c = 0; c < n; ++c) out[c] = (next[c] - u[c]) * s + u[c];
                }
                return out.empty();
            });
    }, threads);
    for (std::size_t i = 0; i < n_paths; ++i)
        if (codes[i] != RetCode::Success)
            throw SolverError(codes[i], "Euler-Maruyama path with seed " + std::to_string(base_seed + i) + " failed: " +
                                            std::string(to_string(codes[i])));

    MonteCarloSummary s;
    s.n_paths = n_paths;
    s.dt = noise_dt;
    s.seed = base_seed;
    s.mean.assign(n, 0.0);
    s.std_error.assign(n, 0.0);
    for (std::size_t i = 0; i < n_paths; ++i)
        for (std::size_t c = 0; c < n; ++c) s.mean[c] += finals[i][c];
    for (auto& m : s.mean) m /= static_cast<double>(n_paths);
    for (std::size_t i = 0; i < n_paths; ++i)
        for (std::size_t c = 0; c < n; ++c) s.std_error[c] += abs2(finals[i][c] - s.mean[c]);
    for (auto& v : s.std_error) v = std::sqrt(v / static_cast<double>(n_paths - 1) / static_cast<double>(n_paths));
    return s;
}

namespace models {

/// Geometric Brownian motion, p = (mu, sigma).
struct GbmDrift {
    template <class T, class P>
    void operator()(std::span<T> du, std::span<const T> u, std::span<const P> p, double) const {
        for (std::size_t i = 0; i < u.size(); ++i) du[i] = p[0] * u[i];
    }
};
struct GbmDiffusion {
    template <class T, class P>
    void operator()(std::span<T> g, std::span<const T> u, std::span<const P> p, double) const {
        for (std::size_t i = 0; i < u.size(); ++i) g[i] = p[1] * u[i];
    }
};

/// Multiplicative noise of amplitude `scale` on every component.
struct ProportionalNoise {
    double scale = 0.1;
    template <class T, class P>
    void operator()(std::span<T> g, std::span<const T> u, std::span<const P>, double) const {
        for (std::size_t i = 0; i < u.size(); ++i) g[i] = scale * u[i];
    }
};

struct ZeroNoise {
    template <class T, class P>
    void operator()(std::span<T> g, std::span<const T>, std::span<const P>, double) const {
        for (auto& x : g) x = T(0.0);
    }
};

}  // namespace models

}  // namespace neurodiff
