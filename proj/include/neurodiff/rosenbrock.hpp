#pragma once

// L-stable Rosenbrock 2(3) pair of Shampine & Reichelt (the ode23s /
// Rosenbrock23 scheme) with a Jacobian supplied by forward-mode AD or
// central differences.
//
//   W  = I - h d J,  d = 1 / (2 + sqrt 2)
//   k1 = W^-1 (f(t, y) + h d f_t)
//   k2 = W^-1 (f(t + h/2, y + h/2 k1) - k1) + k1
//   y1 = y + h k2
//   k3 = W^-1 (f(t + h, y1) - e32 (k2 - F1) - 2 (k1 - F0) + h d f_t),  e32 = 6 + sqrt 2
//   err = h/6 (k1 - 2 k2 + k3)

#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "neurodiff/dual.hpp"
#include "neurodiff/erk45.hpp"
#include "neurodiff/integrator.hpp"
#include "neurodiff/jacobian.hpp"
#include "neurodiff/ode.hpp"

namespace neurodiff {

enum class JacobianMode { ForwardAD, FiniteDifference };

/// Last Jacobian df/du and its evaluation point.
struct JacobianCache {
    Eigen::MatrixXd J;
    std::vector<double> u;
    double t = 0.0;
    JacobianMode mode = JacobianMode::ForwardAD;
};

/// Jacobian of rhs(du, u, p, t) with respect to u.
template <class Rhs>
Eigen::MatrixXd state_jacobian(const Rhs& rhs, std::span<const double> u, std::span<const double> p, double t,
                               JacobianMode mode) {
    const std::size_t n = u.size();
    if (mode == JacobianMode::ForwardAD) {
        return jacobian([&](auto x) {
            using D = typename decltype(x)::value_type;
            std::vector<D> pd(p.begin(), p.end()), du(n);
            rhs(std::span<D>(du), x, std::span<const D>(pd), t);
            return du;
        }, u);
    }
    return jacobian_fd([&](std::span<const double> x) {
        std::vector<double> du(n);
        rhs(std::span<double>(du), x, p, t);
        return du;
    }, u);
}

/// Partial derivative of rhs with respect to t, by central differences.
template <class Rhs>
std::vector<double> time_derivative(const Rhs& rhs, std::span<const double> u, std::span<const double> p, double t) {
    const std::size_t n = u.size();
    const double h = std::cbrt(std::numeric_limits<double>::epsilon()) * std::max(1.0, std::abs(t));
    std::vector<double> fp(n), fm(n), out(n);
    rhs(std::span<double>(fp), u, p, t + h);
    rhs(std::span<double>(fm), u, p, t - h);
    for (std::size_t i = 0; i < n; ++i) out[i] = (fp[i] - fm[i]) / (2.0 * h);
    return out;
}

template <class Rhs>
class Rosenbrock23 {
public:
    static constexpr double d = 1.0 / (2.0 + 1.4142135623730951);
    static constexpr double e32 = 6.0 + 1.4142135623730951;

    Rosenbrock23(const Rhs& rhs, std::span<const double> p, JacobianMode mode, bool non_autonomous)
        : rhs_(rhs), p_(p), non_autonomous_(non_autonomous) {
        cache_.mode = mode;
    }

    double controller_order() const { return 3.0; }

    template <class F>
    bool init(F& f, double t, std::span<const double> u) {
        f0_.assign(u.size(), 0.0);
        f(std::span<double>(f0_), u, t);
        ++evals_;
        return all_finite(std::span<const double>(f0_));
    }

    std::span<const double> derivative() const { return f0_; }

    template <class F>
    double attempt(F& f, double t, std::span<const double> u, double h, std::vector<double>& u_new,
                   const SolverOptions& o) {
        const auto n = static_cast<Eigen::Index>(u.size());
        if (cache_.u.size() != u.size() || cache_.t != t || !std::equal(u.begin(), u.end(), cache_.u.begin())) {
            cache_.J = state_jacobian(rhs_, u, p_, t, cache_.mode);
            cache_.u.assign(u.begin(), u.end());
            cache_.t = t;
            ft_ = non_autonomous_ ? time_derivative(rhs_, u, p_, t) : std::vector<double>(u.size(), 0.0);
            evals_ += non_autonomous_ ? 2 : 0;
            ++jac_evals_;
        }
        const double hd = h * d;
        Eigen::MatrixXd W = Eigen::MatrixXd::Identity(n, n) - hd * cache_.J;
        Eigen::PartialPivLU<Eigen::MatrixXd> lu(W);
        if (!invertible(W, lu)) {
            // one regularization retry
            W += 1e-10 * std::max(1.0, W.cwiseAbs().maxCoeff()) * Eigen::MatrixXd::Identity(n, n);
            lu.compute(W);
            if (!invertible(W, lu)) {
                fatal_ = RetCode::SingularLinearSolve;
                return std::numeric_limits<double>::infinity();
            }
        }
        Eigen::Map<const Eigen::VectorXd> y(u.data(), n);
        Eigen::Map<const Eigen::VectorXd> F0(f0_.data(), n);
        Eigen::Map<const Eigen::VectorXd> T(ft_.data(), n);

        k1_ = lu.solve(F0 + hd * T);
        Eigen::VectorXd ymid = y + 0.5 * h * k1_;
        f1_.resize(n);
        f(std::span<double>(f1_.data(), u.size()), std::span<const double>(ymid.data(), u.size()), t + 0.5 * h);
        k2_ = lu.solve(f1_ - k1_) + k1_;
        Eigen::VectorXd y1 = y + h * k2_;
        f2_.resize(n);
        f(std::span<double>(f2_.data(), u.size()), std::span<const double>(y1.data(), u.size()), t + h);
        evals_ += 2;
        const Eigen::VectorXd k3 = lu.solve(f2_ - e32 * (k2_ - f1_) - 2.0 * (k1_ - F0) + hd * T);
        const Eigen::VectorXd err = (h / 6.0) * (k1_ - 2.0 * k2_ + k3);

        u_new.assign(y1.data(), y1.data() + n);
        if (!all_finite(std::span<const double>(f2_.data(), u.size()))) return std::numeric_limits<double>::infinity();
        return error_norm<double>(std::span<const double>(err.data(), u.size()), u, u_new, o.abstol, o.reltol);
    }

    /// y(t + s h) = y + h [ s(1-s)/(1-2d) k1 + s(s-2d)/(1-2d) k2 ].
    DenseSegment<double> dense(double t, double t_new, std::span<const double> u, std::span<const double>) const {
        const std::size_t n = u.size();
        const double h = t_new - t;
        const double inv = 1.0 / (1.0 - 2.0 * d);
        DenseSegment<double> seg{t, t_new, {}};
        seg.coeffs.assign(3, std::vector<double>(n));
        for (std::size_t i = 0; i < n; ++i) {
            const auto ii = static_cast<Eigen::Index>(i);
            seg.coeffs[0][i] = u[i];
            seg.coeffs[1][i] = h * inv * (k1_[ii] - 2.0 * d * k2_[ii]);
            seg.coeffs[2][i] = h * inv * (k2_[ii] - k1_[ii]);
        }
        return seg;
    }

    void accept() { f0_.assign(f2_.data(), f2_.data() + f2_.size()); }
    std::size_t rhs_evals() const { return evals_; }
    std::size_t jacobian_evals() const { return jac_evals_; }
    std::optional<RetCode> fatal() const { return fatal_; }

private:
    static bool invertible(const Eigen::MatrixXd& W, const Eigen::PartialPivLU<Eigen::MatrixXd>& lu) {
        const Eigen::VectorXd diag = lu.matrixLU().diagonal();
        const double scale = std::max(1.0, W.cwiseAbs().maxCoeff());
        for (Eigen::Index i = 0; i < diag.size(); ++i)
            if (!std::isfinite(diag[i]) || std::abs(diag[i]) <= 1e-14 * scale) return false;
        return true;
    }

    const Rhs& rhs_;
    std::span<const double> p_;
    bool non_autonomous_;
    JacobianCache cache_;
    std::vector<double> f0_, ft_;
    Eigen::VectorXd k1_, k2_, f1_, f2_;
    std::size_t evals_ = 0;
    std::size_t jac_evals_ = 0;
    std::optional<RetCode> fatal_;
};

struct RosenbrockOptions {
    JacobianMode jacobian = JacobianMode::ForwardAD;
    /// Include df/dt in the stage equations. Off for autonomous systems.
    bool non_autonomous = true;
};

template <class Problem>
SolutionPath<double> solve_rosenbrock(const Problem& problem, SolverOptions opts = {}, RosenbrockOptions ro = {}) {
    std::span<const double> p(problem.params);
    const auto [t0, t1] = problem.resolve_tspan(p);
    auto f = bind_params(problem.rhs, p);
    Rosenbrock23<decltype(problem.rhs)> method(problem.rhs, p, ro.jacobian, ro.non_autonomous);
    SolutionPath<double> path;
    detail::integrate(method, f, problem.template resolve_u0<double>(p, t0), t0, t1, opts, path);
    return path;
}

/// Outcome of running the explicit pair on a (possibly stiff) problem
/// under a step budget.
struct FailureReport {
    RetCode retcode = RetCode::Success;
    std::size_t steps = 0;
    double t_reached = 0.0;

    std::string to_json() const;
};

template <class Problem>
FailureReport detect_explicit_failure(const Problem& problem, SolverOptions opts = {}, std::size_t budget = 100000) {
    opts.saveat = SaveAt::at({});
    if (budget == 0) {
        // the integrator requires at least one step of budget
        const auto [t0, t1] = problem.resolve_tspan(problem.params);
        if (t0 == t1) return {RetCode::Success, 0, t1};
        return {RetCode::MaxStepsExceeded, 0, t0};
    }
    opts.max_steps = budget;
    const auto path = solve_erk45(problem, opts);
    return {path.retcode, path.stats.n_accepted, path.t_reached()};
}

}  // namespace neurodiff
