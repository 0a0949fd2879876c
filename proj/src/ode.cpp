#include "neurodiff/ode.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

#include "json.hpp"
#include "neurodiff/dde.hpp"
#include "neurodiff/rosenbrock.hpp"

namespace neurodiff {

std::string_view to_string(RetCode code) {
    switch (code) {
        case RetCode::Success: return "Success";
        case RetCode::MaxStepsExceeded: return "MaxStepsExceeded";
        case RetCode::DtUnderflow: return "DtUnderflow";
        case RetCode::NanDetected: return "NanDetected";
        case RetCode::SingularLinearSolve: return "SingularLinearSolve";
    }
    return "Unknown";
}

std::vector<double> SaveAt::resolve(double t0, double t1) const {
    if (!step) return times;
    const double h = std::abs(*step);
    const double span = t1 - t0;
    if (span == 0.0) return {t0};
    const double dir = span > 0 ? 1.0 : -1.0;
    const double ratio = std::abs(span) / h;
    const double n_round = std::round(ratio);
    std::vector<double> out;
    if (std::abs(ratio - n_round) <= 1e-9 * std::max(1.0, ratio)) {
        // grid lands on t1: k*span/n keeps decimal grids like 0.1*k exact
        const auto n = static_cast<long long>(n_round);
        out.reserve(static_cast<std::size_t>(n) + 1);
        for (long long k = 0; k < n; ++k) out.push_back(t0 + (static_cast<double>(k) * span) / static_cast<double>(n));
        out.push_back(t1);
    } else {
        const auto n = static_cast<long long>(std::floor(ratio));
        for (long long k = 0; k <= n; ++k) out.push_back(t0 + dir * static_cast<double>(k) * h);
        out.push_back(t1);
    }
    return out;
}

void SolverOptions::validate(double t0, double t1) const {
    if (!(reltol > 0.0)) throw std::invalid_argument("reltol must be > 0");
    if (!(abstol > 0.0)) throw std::invalid_argument("abstol must be > 0");
    if (max_steps < 1) throw std::invalid_argument("max_steps must be >= 1");
    if (dt_init && !(std::abs(*dt_init) > 0.0)) throw std::invalid_argument("dt_init must be nonzero");
    if (!adaptive && !dt_init) throw std::invalid_argument("fixed-step mode requires dt_init");
    if (!(dt_max > 0.0)) throw std::invalid_argument("dt_max must be > 0");
    if (saveat) {
        if (saveat->step && !(*saveat->step > 0.0)) throw std::invalid_argument("saveat spacing must be > 0");
        const double lo = std::min(t0, t1);
        const double hi = std::max(t0, t1);
        const double slack = 1e-12 * std::max(1.0, std::abs(hi - lo));
        for (double t : saveat->times)
            if (t < lo - slack || t > hi + slack) throw std::invalid_argument("saveat time outside tspan");
    }
}

std::vector<double> uniform_grid(double t0, double t1, double dt) {
    if (!(dt > 0.0) || !std::isfinite((t1 - t0) / dt)) throw std::invalid_argument("uniform_grid: dt must be > 0 and finite");
    const double span = t1 - t0;
    const double dir = span >= 0 ? 1.0 : -1.0;
    std::vector<double> out{t0};
    if (span == 0.0) return out;
    const double ratio = std::abs(span) / dt;
    const double n_round = std::round(ratio);
    if (std::abs(ratio - n_round) <= 1e-9 * std::max(1.0, ratio)) {
        const auto n = static_cast<long long>(n_round);
        for (long long k = 1; k < n; ++k) out.push_back(t0 + (static_cast<double>(k) * span) / static_cast<double>(n));
    } else {
        const auto n = static_cast<long long>(std::floor(ratio));
        for (long long k = 1; k <= n; ++k) out.push_back(t0 + dir * static_cast<double>(k) * dt);
    }
    out.push_back(t1);
    return out;
}

std::string FailureReport::to_json() const {
    nlohmann::json j{{"retcode", std::string(to_string(retcode))}, {"steps", steps}, {"t_reached", t_reached}};
    return j.dump();
}

std::vector<double> dde_discontinuities(std::span<const double> lags, double t0, double t1, int levels) {
    std::set<double> level{t0};
    std::set<double> all;
    const double dir = t1 >= t0 ? 1.0 : -1.0;
    for (int k = 0; k < levels; ++k) {
        std::set<double> next;
        for (double s : level)
            for (double lag : lags) {
                const double v = s + dir * lag;
                if (dir * (t1 - v) > 0.0) next.insert(v);
            }
        all.insert(next.begin(), next.end());
        level = std::move(next);
    }
    // sums reached in different orders can differ by rounding; keep one of each
    std::vector<double> out;
    const double tol = 1e-12 * std::max({1.0, std::abs(t0), std::abs(t1)});
    for (double v : all)
        if (out.empty() || std::abs(v - out.back()) > tol) out.push_back(v);
    if (dir < 0) std::reverse(out.begin(), out.end());
    return out;
}

}  // namespace neurodiff
