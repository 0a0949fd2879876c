#pragma once

#include <algorithm>
#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "neurodiff/dual.hpp"

namespace neurodiff {

inline constexpr std::size_t kDefaultChunk = 8;

/// Jacobian of a vector function by forward-mode sweeps.
///
/// `f` is called as `f(std::span<const Dual<Chunk>> x)` and must return a
/// `std::vector<Dual<Chunk>>`. Columns are filled `Chunk` at a time, so a
/// function with more inputs than `Chunk` is evaluated ceil(n / Chunk) times.
template <std::size_t Chunk = kDefaultChunk, class F>
Eigen::MatrixXd jacobian(F&& f, std::span<const double> x) {
    using D = Dual<Chunk>;
    const std::size_t n = x.size();
    std::vector<D> xd(x.begin(), x.end());
    Eigen::MatrixXd J;
    for (std::size_t start = 0; start < std::max<std::size_t>(n, 1); start += Chunk) {
        const std::size_t stop = std::min(n, start + Chunk);
        for (std::size_t j = 0; j < n; ++j) xd[j] = D(x[j]);
        for (std::size_t j = start; j < stop; ++j) xd[j] = D::variable(x[j], j - start);
        const std::vector<D> y = f(std::span<const D>(xd));
        if (J.size() == 0) J.setZero(static_cast<Eigen::Index>(y.size()), static_cast<Eigen::Index>(n));
        for (std::size_t i = 0; i < y.size(); ++i)
            for (std::size_t j = start; j < stop; ++j) J(i, j) = y[i].d[j - start];
        if (n == 0) break;
    }
    return J;
}

/// Central finite-difference Jacobian, h_j = rel_step * max(1, |x_j|).
template <class F>
Eigen::MatrixXd jacobian_fd(F&& f, std::span<const double> x, double rel_step = 1e-6) {
    const std::size_t n = x.size();
    std::vector<double> xp(x.begin(), x.end());
    Eigen::MatrixXd J;
    for (std::size_t j = 0; j < n; ++j) {
        const double h = rel_step * std::max(1.0, std::abs(x[j]));
        xp[j] = x[j] + h;
        const std::vector<double> fp = f(std::span<const double>(xp));
        xp[j] = x[j] - h;
        const std::vector<double> fm = f(std::span<const double>(xp));
        xp[j] = x[j];
        if (J.size() == 0) J.setZero(static_cast<Eigen::Index>(fp.size()), static_cast<Eigen::Index>(n));
        for (std::size_t i = 0; i < fp.size(); ++i) J(i, j) = (fp[i] - fm[i]) / (2.0 * h);
    }
    return J;
}

}  // namespace neurodiff
