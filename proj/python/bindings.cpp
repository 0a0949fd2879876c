#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <optional>
#include <string>
#include <vector>

#include "neurodiff/erk45.hpp"
#include "neurodiff/experiments.hpp"
#include "neurodiff/models.hpp"
#include "neurodiff/rosenbrock.hpp"
#include "neurodiff/sde.hpp"
#include "neurodiff/sensitivity.hpp"

namespace py = pybind11;
using namespace neurodiff;

namespace {

template <class F>
py::object with_model(const std::string& name, F&& f) {
    if (name == "lotka_volterra") return f(models::LotkaVolterra{});
    if (name == "rober") return f(models::Rober{});
    if (name == "lorenz") return f(models::Lorenz{});
    if (name == "exponential") return f(models::Exponential{});
    if (name == "stiff_cosine") return f(models::StiffCosine{});
    if (name == "cubic_spiral") return f(models::CubicSpiral{});
    if (name == "zero") return f(models::Zero{});
    throw py::value_error("unknown model '" + name + "'");
}

Backend backend_of(const std::string& s) {
    const auto b = parse_backend(s);
    if (!b) throw py::value_error("backend must be 'forward', 'adjoint' or 'fd', got '" + s + "'");
    return *b;
}

SolverOptions options(double reltol, double abstol, std::optional<double> saveat) {
    SolverOptions o;
    o.reltol = reltol;
    o.abstol = abstol;
    if (saveat) o.saveat = SaveAt::every(*saveat);
    return o;
}

py::dict path_dict(const SolutionPath<double>& path) {
    const std::size_t n = path.t.size(), d = path.u.empty() ? 0 : path.u.front().size();
    py::array_t<double> t(static_cast<py::ssize_t>(n));
    py::array_t<double> u({static_cast<py::ssize_t>(n), static_cast<py::ssize_t>(d)});
    auto tv = t.mutable_unchecked<1>();
    auto uv = u.mutable_unchecked<2>();
    for (std::size_t k = 0; k < n; ++k) {
        tv(k) = path.t[k];
        for (std::size_t i = 0; i < d; ++i) uv(k, i) = path.u[k][i];
    }
    py::dict out;
    out["t"] = t;
    out["u"] = u;
    out["retcode"] = std::string(to_string(path.retcode));
    out["n_accepted"] = path.stats.n_accepted;
    out["n_rejected"] = path.stats.n_rejected;
    out["n_rhs_evals"] = path.stats.n_rhs_evals;
    return out;
}

py::object json_to_py(const nlohmann::json& j) { return py::module_::import("json").attr("loads")(j.dump()); }

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Differentiable differential-equation solvers";
    py::register_exception<SolverError>(m, "SolverError", PyExc_RuntimeError);
    py::register_exception<AdjointUnsupported>(m, "AdjointUnsupported", PyExc_ValueError);

    m.def("experiment_ids", &experiment_ids, "Registered experiment ids");

    m.def(
        "run_experiment",
        [](const std::string& id, const std::string& out_dir, std::size_t iters, std::uint64_t seed,
           const std::string& backend, std::optional<double> reltol, std::optional<double> abstol,
           std::size_t budget, double lag, double saveat) {
            ExperimentConfig c;
            c.id = id;
            c.out_dir = out_dir;
            c.iters = iters;
            c.seed = seed;
            c.backend = backend_of(backend);
            c.reltol = reltol;
            c.abstol = abstol;
            c.budget = budget;
            c.lag = lag;
            c.saveat = saveat;
            ExperimentResult r;
            {
                py::gil_scoped_release release;
                r = run_experiment(c);
            }
            return json_to_py(r.to_json());
        },
        py::arg("id"), py::arg("out_dir") = "neurodiff_out", py::arg("iters") = 100, py::arg("seed") = 1,
        py::arg("backend") = "forward", py::arg("reltol") = py::none(), py::arg("abstol") = py::none(),
        py::arg("budget") = 100000, py::arg("lag") = 0.1, py::arg("saveat") = 0.1,
        "Run one experiment, write its artifacts and return the summary as a dict");

    m.def(
        "solve",
        [](const std::string& model, std::vector<double> u0, std::pair<double, double> tspan, std::vector<double> p,
           const std::string& method, double reltol, double abstol, std::optional<double> saveat) {
            const auto o = options(reltol, abstol, saveat);
            return with_model(model, [&](auto rhs) -> py::object {
                const auto pr = make_ode(rhs, u0, tspan, p);
                if (method == "erk45") return path_dict(solve_erk45(pr, o));
                if (method == "rosenbrock") return path_dict(solve_rosenbrock(pr, o));
                throw py::value_error("method must be 'erk45' or 'rosenbrock'");
            });
        },
        py::arg("model"), py::arg("u0"), py::arg("tspan"), py::arg("params") = std::vector<double>{},
        py::arg("method") = "erk45", py::arg("reltol") = 1e-3, py::arg("abstol") = 1e-6,
        py::arg("saveat") = py::none(), "Solve a built-in model; returns t, u and solver statistics");

    m.def(
        "gradient",
        [](const std::string& model, std::vector<double> u0, std::pair<double, double> tspan, std::vector<double> p,
           std::vector<double> nodes, std::size_t component, const std::string& backend, double reltol,
           double abstol) {
            return with_model(model, [&](auto rhs) -> py::object {
                using Problem = decltype(make_ode(rhs, u0, tspan, p));
                GradientRequest<Problem> req{backend_of(backend), make_ode(rhs, u0, tspan, p),
                                             options(reltol, abstol, std::nullopt),
                                             LossSpec::sum_sq_to_one(nodes, component), {}};
                const auto g = gradient(req);
                return py::make_tuple(g.loss, py::array_t<double>(static_cast<py::ssize_t>(g.grad.size()),
                                                                  g.grad.data()));
            });
        },
        py::arg("model"), py::arg("u0"), py::arg("tspan"), py::arg("params"), py::arg("nodes"),
        py::arg("component") = 0, py::arg("backend") = "forward", py::arg("reltol") = 1e-8, py::arg("abstol") = 1e-10,
        "Loss sum_k (1 - u_component(t_k))^2 and its gradient with respect to the parameters");

    m.def(
        "gbm_mean",
        [](double mu, double sigma, double dt, std::size_t n_paths, std::uint64_t seed, double t) {
            SdeProblem<models::GbmDrift, models::GbmDiffusion> pr{{}, {}, {1.0}, {0.0, t}, {mu, sigma}};
            MonteCarloSummary s;
            {
                py::gil_scoped_release release;
                s = monte_carlo_mean(pr, dt, n_paths, seed, t);
            }
            return py::make_tuple(s.mean[0], s.std_error[0]);
        },
        py::arg("mu"), py::arg("sigma"), py::arg("dt"), py::arg("n_paths"), py::arg("seed") = 1, py::arg("t") = 1.0,
        "Euler-Maruyama Monte-Carlo mean and standard error of geometric Brownian motion from 1 at time t");

    m.def(
        "backsolve_error",
        [](const std::string& model, std::vector<double> u0, std::pair<double, double> tspan, std::vector<double> p,
           double reltol, double abstol) {
            return with_model(model, [&](auto rhs) -> py::object {
                const auto rep = backsolve_roundtrip(make_ode(rhs, u0, tspan, p), options(reltol, abstol, std::nullopt));
                return py::float_(rep.rel_error_pct);
            });
        },
        py::arg("model"), py::arg("u0"), py::arg("tspan"), py::arg("params") = std::vector<double>{},
        py::arg("reltol") = 1e-12, py::arg("abstol") = 1e-12,
        "Relative error (percent) of u0 recovered by solving forward then backward");
}
