#pragma once

// Loss gradients through the solvers. Three interchangeable backends sit
// behind GradientRequest::backend:
//   Forward     chunked dual-number sweeps over p through the scalar-generic solver
//   Adjoint     backward costate integration against the stored forward interpolant
//   FiniteDiff  central differences, two solves per parameter

#include <algorithm>
#include <chrono>
#include <cmath>
#include <concepts>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "neurodiff/dde.hpp"
#include "neurodiff/dual.hpp"
#include "neurodiff/erk45.hpp"
#include "neurodiff/jacobian.hpp"
#include "neurodiff/ode.hpp"
#include "neurodiff/sde.hpp"

namespace neurodiff {

enum class Backend { Forward, Adjoint, FiniteDiff };

std::string_view to_string(Backend b);
/// Accepts "forward", "adjoint", "fd".
std::optional<Backend> parse_backend(std::string_view s);

class AdjointUnsupported : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

/// Sum of per-node residuals r_k(u(t_k)).
struct LossSpec {
    enum class Kind { SumSqToOne, SumSqToData, Linear };

    Kind kind = Kind::SumSqToOne;
    /// Fixed evaluation times.
    std::vector<double> nodes;
    /// Also evaluate at the end of the (possibly parameter-dependent) time span.
    bool at_end = false;
    /// SumSqToOne: the component compared with 1.
    std::size_t component = 0;
    /// SumSqToData: one row per node (the end node last, if present).
    std::vector<std::vector<double>> data;
    /// Linear: r_k = sum_i weights[i] * u_i.
    std::vector<double> weights;

    /// sum_k (u_c(t_k) - 1)^2
    static LossSpec sum_sq_to_one(std::vector<double> nodes, std::size_t component = 0) {
        LossSpec s;
        s.kind = Kind::SumSqToOne;
        s.nodes = std::move(nodes);
        s.component = component;
        return s;
    }
    /// sum_k sum_i (u_i(t_k) - data_k,i)^2
    static LossSpec sum_sq_to_data(std::vector<double> nodes, std::vector<std::vector<double>> data) {
        LossSpec s;
        s.kind = Kind::SumSqToData;
        s.nodes = std::move(nodes);
        s.data = std::move(data);
        return s;
    }
    /// sum_i weights[i] * u_i(t_end)
    static LossSpec linear_at_end(std::vector<double> weights) {
        LossSpec s;
        s.kind = Kind::Linear;
        s.at_end = true;
        s.weights = std::move(weights);
        return s;
    }

    std::size_t n_nodes() const { return nodes.size() + (at_end ? 1 : 0); }

    std::vector<double> node_times(double t_end) const {
        std::vector<double> out = nodes;
        if (at_end) out.push_back(t_end);
        return out;
    }

    void validate(double t0, double t1, std::size_t dim) const;

    template <class T>
    T residual(std::size_t k, std::span<const T> u) const {
        T r(0.0);
        switch (kind) {
            case Kind::SumSqToOne: r = abs2(u[component] - 1.0); break;
            case Kind::SumSqToData:
                for (std::size_t i = 0; i < u.size(); ++i) r += abs2(u[i] - data[k][i]);
                break;
            case Kind::Linear:
                for (std::size_t i = 0; i < u.size(); ++i) r += u[i] * weights[i];
                break;
        }
        return r;
    }

    /// d r_k / d u, added into `out`.
    void add_residual_gradient(std::size_t k, std::span<const double> u, std::span<double> out) const {
        switch (kind) {
            case Kind::SumSqToOne: out[component] += 2.0 * (u[component] - 1.0); break;
            case Kind::SumSqToData:
                for (std::size_t i = 0; i < u.size(); ++i) out[i] += 2.0 * (u[i] - data[k][i]);
                break;
            case Kind::Linear:
                for (std::size_t i = 0; i < u.size(); ++i) out[i] += weights[i];
                break;
        }
    }
};

template <class Problem>
struct GradientRequest {
    Backend backend = Backend::Forward;
    Problem problem;
    SolverOptions opts;
    LossSpec loss;
    /// Used only for SDE problems.
    NoiseConfig noise;
};

struct GradientResult {
    double loss = 0.0;
    std::vector<double> grad;
};

/// Writes `p_index,grad`.
void write_csv(std::ostream& os, const GradientResult& g);

/// The right-hand side supplies its own vector-Jacobian products.
template <class Rhs>
concept HasVjp = requires(const Rhs& r, std::span<const double> u, std::span<const double> p,
                          std::span<const double> lambda, std::span<double> out) {
    r.vjp(u, p, 0.0, lambda, out, out);
};

namespace detail {

template <class Problem>
constexpr bool has_param_tspan() {
    if constexpr (is_ode_problem<Problem>::value) {
        return Problem::has_tspan_of;
    } else {
        return false;
    }
}

template <class T, class Problem>
SolutionPath<T> solve_any(const Problem& pr, std::span<const T> p, const SolverOptions& o, const NoiseConfig& noise) {
    if constexpr (is_dde_problem<Problem>::value) {
        return solve_dde_mos_as<T>(pr, p, o);
    } else if constexpr (is_sde_problem<Problem>::value) {
        return solve_euler_maruyama_as<T>(pr, p, noise);
    } else {
        return solve_erk45_as<T>(pr, p, o);
    }
}

template <class Problem>
SolverOptions loss_options(const Problem& pr, std::span<const double> p, const SolverOptions& opts,
                           const LossSpec& loss) {
    const auto [t0, t1] = pr.resolve_tspan(p);
    loss.validate(t0, t1, pr.template resolve_u0<double>(p, t0).size());
    SolverOptions o = opts;
    o.saveat = SaveAt::at(loss.node_times(t1));
    return o;
}

template <class T>
T sum_residuals(const LossSpec& loss, const SolutionPath<T>& path, double t_end) {
    T total(0.0);
    const auto times = loss.node_times(t_end);
    for (std::size_t k = 0; k < times.size(); ++k) {
        const std::vector<T> u = path.interpolate(times[k]);
        total += loss.residual<T>(k, u);
    }
    return total;
}

template <class T>
void require_success(const SolutionPath<T>& path, const char* what) {
    if (!path.ok())
        throw SolverError(path.retcode, std::string(what) + ": solve stopped at t=" + std::to_string(path.t_reached()) +
                                            " with " + std::string(to_string(path.retcode)));
}

}  // namespace detail

/// Loss at parameters p from one real-valued solve. Every backend reports
/// this value.
template <class Problem>
double evaluate_loss(const Problem& pr, std::span<const double> p, const SolverOptions& opts, const LossSpec& loss,
                     const NoiseConfig& noise = {}) {
    if (loss.n_nodes() == 0) return 0.0;
    const SolverOptions o = detail::loss_options(pr, p, opts, loss);
    const auto path = detail::solve_any<double>(pr, p, o, noise);
    detail::require_success(path, "loss evaluation");
    return detail::sum_residuals<double>(loss, path, pr.resolve_tspan(p).second);
}

template <class Problem>
GradientResult grad_fd(const GradientRequest<Problem>& req) {
    const std::vector<double>& p = req.problem.params;
    GradientResult res{evaluate_loss(req.problem, p, req.opts, req.loss, req.noise), std::vector<double>(p.size(), 0.0)};
    if (req.loss.n_nodes() == 0) return res;
    std::vector<double> q = p;
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double h = 1e-6 * std::max(1.0, std::abs(p[i]));
        q[i] = p[i] + h;
        const double lp = evaluate_loss(req.problem, q, req.opts, req.loss, req.noise);
        q[i] = p[i] - h;
        const double lm = evaluate_loss(req.problem, q, req.opts, req.loss, req.noise);
        q[i] = p[i];
        res.grad[i] = (lp - lm) / (2.0 * h);
    }
    return res;
}

template <class Problem>
GradientResult grad_forward(const GradientRequest<Problem>& req) {
    using D = Dual<kDefaultChunk>;
    const auto& pr = req.problem;
    const std::vector<double>& p = pr.params;
    GradientResult res{evaluate_loss(pr, p, req.opts, req.loss, req.noise), std::vector<double>(p.size(), 0.0)};
    if (req.loss.n_nodes() == 0) return res;
    const SolverOptions o = detail::loss_options(pr, p, req.opts, req.loss);

    std::vector<D> pd(p.begin(), p.end());
    for (std::size_t start = 0; start < p.size(); start += kDefaultChunk) {
        const std::size_t stop = std::min(p.size(), start + kDefaultChunk);
        for (std::size_t j = 0; j < p.size(); ++j) pd[j] = D(p[j]);
        for (std::size_t j = start; j < stop; ++j) pd[j] = D::variable(p[j], j - start);
        const std::span<const D> ps(pd);

        D total(0.0);
        if constexpr (detail::has_param_tspan<Problem>()) {
            const auto [t0d, t1d] = pr.tspan_of(ps);
            const double t0 = value(t0d), t1 = value(t1d);
            const D dt0 = D(t0d) - t0;
            const D dt1 = D(t1d) - t1;
            auto f = bind_params(pr.rhs, ps);
            std::vector<D> u0 = pr.template resolve_u0<D>(ps, t0);
            std::vector<D> f0(u0.size());
            // moving t0 shifts the trajectory by -f(u0) dt0
            f(std::span<D>(f0), std::span<const D>(u0), t0);
            for (std::size_t i = 0; i < u0.size(); ++i) u0[i] -= f0[i] * dt0;
            const auto path = integrate_erk45<D>(f, std::move(u0), t0, t1, o);
            detail::require_success(path, "forward sensitivity");
            const auto times = req.loss.node_times(t1);
            for (std::size_t k = 0; k < times.size(); ++k) {
                std::vector<D> u = path.interpolate(times[k]);
                if (req.loss.at_end && k + 1 == times.size()) {
                    std::vector<D> fe(u.size());
                    f(std::span<D>(fe), std::span<const D>(u), t1);
                    for (std::size_t i = 0; i < u.size(); ++i) u[i] += fe[i] * dt1;
                }
                total += req.loss.template residual<D>(k, u);
            }
        } else {
            const auto path = detail::solve_any<D>(pr, ps, o, req.noise);
            detail::require_success(path, "forward sensitivity");
            total = detail::sum_residuals<D>(req.loss, path, pr.resolve_tspan(p).second);
        }
        for (std::size_t j = start; j < stop; ++j) res.grad[j] = total.d[j - start];
    }
    return res;
}

/// lambda^T df/du and lambda^T df/dp for an ODE rhs, from the rhs's own
/// vjp member when it has one and from dual-number Jacobians otherwise.
template <class Rhs>
void rhs_vjp(const Rhs& rhs, std::span<const double> u, std::span<const double> p, double t,
             std::span<const double> lambda, std::span<double> out_u, std::span<double> out_p) {
    if constexpr (HasVjp<Rhs>) {
        rhs.vjp(u, p, t, lambda, out_u, out_p);
    } else {
        const std::size_t n = u.size();
        Eigen::Map<const Eigen::VectorXd> lam(lambda.data(), static_cast<Eigen::Index>(n));
        const Eigen::MatrixXd Ju = jacobian([&](auto x) {
            using DD = typename decltype(x)::value_type;
            std::vector<DD> pd(p.begin(), p.end()), du(n);
            rhs(std::span<DD>(du), x, std::span<const DD>(pd), t);
            return du;
        }, u);
        Eigen::Map<Eigen::VectorXd>(out_u.data(), static_cast<Eigen::Index>(n)) = Ju.transpose() * lam;
        if (p.empty()) return;
        const Eigen::MatrixXd Jp = jacobian([&](auto q) {
            using DD = typename decltype(q)::value_type;
            std::vector<DD> ud(u.begin(), u.end()), du(n);
            rhs(std::span<DD>(du), std::span<const DD>(ud), q, t);
            return du;
        }, p);
        Eigen::Map<Eigen::VectorXd>(out_p.data(), static_cast<Eigen::Index>(p.size())) = Jp.transpose() * lam;
    }
}

template <class Problem>
GradientResult grad_adjoint(const GradientRequest<Problem>& req) {
    if constexpr (!is_ode_problem<Problem>::value) {
        throw AdjointUnsupported("adjoint gradients are available for ODE problems only");
    } else {
        if constexpr (Problem::has_tspan_of)
            throw AdjointUnsupported("adjoint gradients do not cover a parameter-dependent time span");
        const auto& pr = req.problem;
        const std::vector<double>& p = pr.params;
        const std::size_t np = p.size();
        if (req.loss.n_nodes() == 0) return {0.0, std::vector<double>(np, 0.0)};

        const SolverOptions o = detail::loss_options(pr, p, req.opts, req.loss);
        const auto [t0, t1] = pr.resolve_tspan(p);
        const auto fwd = solve_erk45(pr, o);
        detail::require_success(fwd, "adjoint forward pass");
        GradientResult res{detail::sum_residuals<double>(req.loss, fwd, t1), std::vector<double>(np, 0.0)};

        const std::size_t n = fwd.dim();
        const double dir = t1 >= t0 ? 1.0 : -1.0;
        const double lo = std::min(t0, t1), hi = std::max(t0, t1);
        const auto times = req.loss.node_times(t1);
        std::vector<std::size_t> order(times.size());
        for (std::size_t k = 0; k < order.size(); ++k) order[k] = k;
        std::stable_sort(order.begin(), order.end(),
                         [&](std::size_t a, std::size_t b) { return dir * times[a] > dir * times[b]; });

        // z = [lambda, mu]
        std::vector<double> z(n + np, 0.0);
        std::vector<double> au(n), ap(np);
        auto costate_rhs = [&](std::span<double> dz, std::span<const double> zz, double t) {
            const std::vector<double> u = fwd.interpolate(std::clamp(t, lo, hi));
            rhs_vjp(pr.rhs, u, std::span<const double>(p), t, zz.first(n), std::span<double>(au),
                    std::span<double>(ap));
            for (std::size_t i = 0; i < n; ++i) dz[i] = -au[i];
            for (std::size_t j = 0; j < np; ++j) dz[n + j] = -ap[j];
        };
        SolverOptions bo = req.opts;
        bo.saveat = SaveAt::at({});
        bo.tstops = fwd.step_t;
        bo.dt_init.reset();
        auto lambda_zero = [&] { return std::all_of(z.begin(), z.begin() + n, [](double v) { return v == 0.0; }); };
        auto backward_to = [&](double from, double to) {
            if (from == to || lambda_zero()) return;
            const auto seg = integrate_erk45<double>(costate_rhs, z, from, to, bo);
            detail::require_success(seg, "adjoint backward pass");
            z = seg.step_u.back();
        };

        double t_cur = t1;
        for (std::size_t k : order) {
            backward_to(t_cur, times[k]);
            t_cur = times[k];
            req.loss.add_residual_gradient(k, fwd.interpolate(times[k]), std::span<double>(z.data(), n));
        }
        backward_to(t_cur, t0);

        for (std::size_t j = 0; j < np; ++j) res.grad[j] = z[n + j];
        if constexpr (Problem::has_u0_of) {
            const Eigen::MatrixXd J = jacobian([&](auto q) { return pr.u0_of(q, t0); }, std::span<const double>(p));
            Eigen::Map<const Eigen::VectorXd> lam(z.data(), static_cast<Eigen::Index>(n));
            const Eigen::VectorXd extra = J.transpose() * lam;
            for (std::size_t j = 0; j < np; ++j) res.grad[j] += extra[static_cast<Eigen::Index>(j)];
        }
        return res;
    }
}

template <class Problem>
GradientResult gradient(const GradientRequest<Problem>& req) {
    switch (req.backend) {
        case Backend::Forward: return grad_forward(req);
        case Backend::Adjoint: return grad_adjoint(req);
        case Backend::FiniteDiff: return grad_fd(req);
    }
    throw std::invalid_argument("unknown gradient backend");
}

/// Loss and gradient as a function of p, every other field of `req` fixed.
template <class Problem>
auto gradient_evaluator(GradientRequest<Problem> req) {
    return [req = std::move(req)](std::span<const double> p) mutable {
        req.problem.params.assign(p.begin(), p.end());
        return gradient(req);
    };
}

struct BacksolveReport {
    std::vector<double> u0;
    std::vector<double> u_end;
    /// State where the reverse pass stopped; the recovered u0 when it succeeded.
    std::vector<double> u0_recovered;
    RetCode reverse_retcode = RetCode::Success;
    double reverse_t_reached = 0.0;
    /// Infinite when the reverse pass cannot get back to the start time.
    double abs_error = 0.0;
    double rel_error_pct = 0.0;
};

/// Solves forward over the time span, then from the end state back to the
/// start, and compares the recovered initial state with the true one. A
/// reverse pass that fails to reach the start is reported, not thrown.
template <class Problem>
BacksolveReport backsolve_roundtrip(const Problem& problem, SolverOptions opts) {
    opts.saveat = SaveAt::at({});
    const auto [t0, t1] = problem.resolve_tspan(problem.params);
    const auto fwd = solve_erk45(problem, opts);
    detail::require_success(fwd, "backsolve forward pass");
    auto reversed = make_ode(problem.rhs, fwd.step_u.back(), {t1, t0}, problem.params);
    const auto back = solve_erk45(reversed, opts);

    BacksolveReport r;
    r.u0 = problem.template resolve_u0<double>(problem.params, t0);
    r.u_end = fwd.step_u.back();
    r.u0_recovered = back.step_u.back();
    r.reverse_retcode = back.retcode;
    r.reverse_t_reached = back.t_reached();
    if (!back.ok()) {
        r.abs_error = r.rel_error_pct = std::numeric_limits<double>::infinity();
        return r;
    }
    double err2 = 0.0, ref2 = 0.0;
    for (std::size_t i = 0; i < r.u0.size(); ++i) {
        err2 += abs2(r.u0_recovered[i] - r.u0[i]);
        ref2 += abs2(r.u0[i]);
    }
    r.abs_error = std::sqrt(err2);
    r.rel_error_pct = ref2 > 0.0 ? 100.0 * r.abs_error / std::sqrt(ref2)
                                 : (r.abs_error > 0.0 ? std::numeric_limits<double>::infinity() : 0.0);
    return r;
}

namespace models {

/// u' = A(p) u on R^d with A = -I + P, P filled row-major from p
/// (d = ceil(sqrt(len p)), trailing entries zero).
struct LinearFamily {
    std::size_t d = 1;

    static std::size_t dim_for(std::size_t n_params) {
        std::size_t d = 1;
        while (d * d < n_params) ++d;
        return d;
    }

    template <class T, class P>
    void operator()(std::span<T> du, std::span<const T> u, std::span<const P> p, double) const {
        for (std::size_t i = 0; i < d; ++i) {
            T acc = -u[i];
            for (std::size_t j = 0; j < d; ++j) {
                const std::size_t k = i * d + j;
                if (k < p.size()) acc += p[k] * u[j];
            }
            du[i] = acc;
        }
    }

    void vjp(std::span<const double> u, std::span<const double> p, double, std::span<const double> lambda,
             std::span<double> out_u, std::span<double> out_p) const {
        for (std::size_t j = 0; j < d; ++j) out_u[j] = -lambda[j];
        for (std::size_t i = 0; i < d; ++i)
            for (std::size_t j = 0; j < d; ++j) {
                const std::size_t k = i * d + j;
                if (k >= p.size()) continue;
                out_u[j] += lambda[i] * p[k];
                out_p[k] = lambda[i] * u[j];
            }
    }
};

}  // namespace models

struct BenchRow {
    std::size_t n_params = 0;
    Backend backend = Backend::Forward;
    double median_seconds = 0.0;
};

/// Writes `n_params,backend,median_seconds`.
void write_csv(std::ostream& os, const std::vector<BenchRow>& rows);

/// The linear-family gradient problem used by the crossover benchmark.
GradientRequest<OdeProblem<models::LinearFamily>> linear_family_request(std::size_t n_params, Backend backend);

/// Median wall time of forward and adjoint gradients on the linear family
/// for each parameter count.
std::vector<BenchRow> gradient_crossover_bench(const std::vector<std::size_t>& n_params_list, int repeats);

/// Adjoint-over-forward median time ratio for each parameter count.
std::vector<std::pair<std::size_t, double>> crossover_ratios(const std::vector<BenchRow>& rows);

}  // namespace neurodiff
