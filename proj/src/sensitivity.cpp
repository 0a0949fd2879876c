#include "neurodiff/sensitivity.hpp"

#include <chrono>
#include <map>

namespace neurodiff {

std::string_view to_string(Backend b) {
    switch (b) {
        case Backend::Forward: return "forward";
        case Backend::Adjoint: return "adjoint";
        case Backend::FiniteDiff: return "fd";
    }
    return "unknown";
}

std::optional<Backend> parse_backend(std::string_view s) {
    if (s == "forward") return Backend::Forward;
    if (s == "adjoint") return Backend::Adjoint;
    if (s == "fd") return Backend::FiniteDiff;
    return std::nullopt;
}

void LossSpec::validate(double t0, double t1, std::size_t dim) const {
    const double lo = std::min(t0, t1), hi = std::max(t0, t1);
    const double slack = 1e-12 * std::max(1.0, hi - lo);
    for (double t : nodes)
        if (t < lo - slack || t > hi + slack)
            throw std::invalid_argument("loss node t=" + std::to_string(t) + " lies outside the time span");
    switch (kind) {
        case Kind::SumSqToOne:
            if (component >= dim) throw std::invalid_argument("loss component out of range");
            break;
        case Kind::SumSqToData:
            if (data.size() != n_nodes()) throw std::invalid_argument("loss data has the wrong number of rows");
            for (const auto& row : data)
                if (row.size() != dim) throw std::invalid_argument("loss data row has the wrong dimension");
            break;
        case Kind::Linear:
            if (weights.size() != dim) throw std::invalid_argument("loss weights have the wrong dimension");
            break;
    }
}

void write_csv(std::ostream& os, const GradientResult& g) {
    const auto old = os.precision(17);
    os << "p_index,grad\n";
    for (std::size_t i = 0; i < g.grad.size(); ++i) os << i << "," << g.grad[i] << "\n";
    os.precision(old);
}

void write_csv(std::ostream& os, const std::vector<BenchRow>& rows) {
    const auto old = os.precision(9);
    os << "n_params,backend,median_seconds\n";
    for (const auto& r : rows) os << r.n_params << "," << to_string(r.backend) << "," << r.median_seconds << "\n";
    os.precision(old);
}

GradientRequest<OdeProblem<models::LinearFamily>> linear_family_request(std::size_t n_params, Backend backend) {
    const std::size_t d = models::LinearFamily::dim_for(n_params);
    std::vector<double> p(n_params);
    for (std::size_t k = 0; k < n_params; ++k) p[k] = 0.5 / static_cast<double>(d) * std::sin(static_cast<double>(k + 1));
    std::vector<double> nodes;
    for (int k = 1; k <= 10; ++k) nodes.push_back(0.1 * k);
    GradientRequest<OdeProblem<models::LinearFamily>> req{
        backend, make_ode(models::LinearFamily{d}, std::vector<double>(d, 1.0), {0.0, 1.0}, std::move(p)), {},
        LossSpec::sum_sq_to_one(std::move(nodes), 0), {}};
    req.opts.reltol = 1e-6;
    req.opts.abstol = 1e-8;
    return req;
}

std::vector<BenchRow> gradient_crossover_bench(const std::vector<std::size_t>& n_params_list, int repeats) {
    if (n_params_list.empty()) throw std::invalid_argument("gradient_crossover_bench needs at least one size");
    if (repeats < 1) throw std::invalid_argument("gradient_crossover_bench needs repeats >= 1");
    std::vector<BenchRow> rows;
    for (std::size_t n : n_params_list) {
        for (Backend b : {Backend::Forward, Backend::Adjoint}) {
            const auto req = linear_family_request(n, b);
            std::vector<double> times;
            for (int r = 0; r < repeats; ++r) {
                const auto start = std::chrono::steady_clock::now();
                const auto g = gradient(req);
                const auto stop = std::chrono::steady_clock::now();
                if (g.grad.size() != n) throw std::logic_error("gradient has the wrong length");
                times.push_back(std::chrono::duration<double>(stop - start).count());
            }
            std::sort(times.begin(), times.end());
            const std::size_t m = times.size();
            const double median = m % 2 ? times[m / 2] : 0.5 * (times[m / 2 - 1] + times[m / 2]);
            rows.push_back({n, b, median});
        }
    }
    return rows;
}

std::vector<std::pair<std::size_t, double>> crossover_ratios(const std::vector<BenchRow>& rows) {
    std::map<std::size_t, std::pair<double, double>> by_n;
    for (const auto& r : rows) {
        auto& slot = by_n[r.n_params];
        (r.backend == Backend::Adjoint ? slot.first : slot.second) = r.median_seconds;
    }
    std::vector<std::pair<std::size_t, double>> out;
    for (const auto& [n, t] : by_n) out.emplace_back(n, t.second > 0.0 ? t.first / t.second : HUGE_VAL);
    return out;
}

}  // namespace neurodiff
