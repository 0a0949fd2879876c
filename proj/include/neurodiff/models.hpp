#pragma once

// Right-hand sides of the systems used by the experiments and tests.

#include <cmath>
#include <span>

namespace neurodiff::models {

/// Predator-prey, p = (alpha, beta, delta, gamma).
struct LotkaVolterra {
    template <class T, class P>
    void operator()(std::span<T> du, std::span<const T> u, std::span<const P> p, double) const {
        const T& x = u[0];
        const T& y = u[1];
        du[0] = p[0] * x - p[1] * x * y;
        du[1] = -p[2] * y + p[3] * x * y;
    }
};

/// Robertson chemical kinetics, p = (k1, k2, k3).
struct Rober {
    template <class T, class P>
    void operator()(std::span<T> du, std::span<const T> u, std::span<const P> p, double) const {
        du[0] = -p[0] * u[0] + p[2] * u[1] * u[2];
        du[1] = p[0] * u[0] - p[1] * u[1] * u[1] - p[2] * u[1] * u[2];
        du[2] = p[1] * u[1] * u[1];
    }
};

/// Lorenz system with sigma = 10, rho = 28, beta = 8/3.
struct Lorenz {
    template <class T, class P>
    void operator()(std::span<T> du, std::span<const T> u, std::span<const P>, double) const {
        du[0] = 10.0 * (u[1] - u[0]);
        du[1] = u[0] * (28.0 - u[2]) - u[1];
        du[2] = u[0] * u[1] - (8.0 / 3.0) * u[2];
    }
};

/// u' = p[0] * u, componentwise.
struct Exponential {
    template <class T, class P>
    void operator()(std::span<T> du, std::span<const T> u, std::span<const P> p, double) const {
        for (std::size_t i = 0; i < u.size(); ++i) du[i] = p[0] * u[i];
    }
};

/// u' = 0.
struct Zero {
    template <class T, class P>
    void operator()(std::span<T> du, std::span<const T>, std::span<const P>, double) const {
        for (auto& x : du) x = T(0.0);
    }
};

/// u' = -lambda * (u - cos t), p = (lambda). A linear stiff test equation.
struct StiffCosine {
    template <class T, class P>
    void operator()(std::span<T> du, std::span<const T> u, std::span<const P> p, double t) const {
        using std::cos;
        du[0] = -p[0] * (u[0] - cos(t));
    }
    static double exact(double lambda, double t) {
        const double l2 = lambda * lambda;
        return lambda * (lambda * std::cos(t) + std::sin(t)) / (l2 + 1.0) - l2 / (l2 + 1.0) * std::exp(-lambda * t);
    }
};

/// Cubic spiral u' = A^T (u .^ 3) with A = [-0.1 2; -2 -0.1].
struct CubicSpiral {
    template <class T, class P>
    void operator()(std::span<T> du, std::span<const T> u, std::span<const P>, double) const {
        const T x3 = u[0] * u[0] * u[0];
        const T y3 = u[1] * u[1] * u[1];
        // row vector (u^3)' * A, transposed
        du[0] = -0.1 * x3 - 2.0 * y3;
        du[1] = 2.0 * x3 - 0.1 * y3;
    }
};

}  // namespace neurodiff::models
