#include "neurodiff/experiments.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <sstream>

#include "neurodiff/dde.hpp"
#include "neurodiff/models.hpp"
#include "neurodiff/nn.hpp"
#include "neurodiff/rosenbrock.hpp"
#include "neurodiff/sde.hpp"
#include "neurodiff/train.hpp"

namespace neurodiff {

namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;

const std::vector<double> kLotkaP{1.5, 1.0, 3.0, 1.0};
const std::vector<double> kFitP0{2.2, 1.0, 2.0, 0.4};

std::string num(double x) {
    std::ostringstream os;
    os.precision(10);
    os << x;
    return os.str();
}

std::string vec(std::span<const double> v) {
    std::string s = "[";
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + num(v[i]);
    return s + "]";
}

ExperimentResult result_for(std::string id) {
    ExperimentResult r;
    r.id = std::move(id);
    return r;
}

void check(ExperimentResult& r, std::string name, bool ok, std::string detail) {
    r.checks.push_back({std::move(name), ok, std::move(detail)});
}

fs::path prepare_dir(const ExperimentConfig& cfg, const std::string& id) {
    const fs::path dir = cfg.out_dir / id;
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw ConfigError("cannot create output directory " + dir.string() + ": " + ec.message());
    return dir;
}

void write_file(const fs::path& path, const std::function<void(std::ostream&)>& body) {
    std::ofstream os(path);
    if (!os) throw ConfigError("cannot write " + path.string());
    body(os);
    if (!os) throw ConfigError("write failed for " + path.string());
}

double relative_to(double value, double ref) { return std::abs(value - ref) / std::abs(ref); }

auto lotka_problem(std::vector<double> p) {
    return make_ode(models::LotkaVolterra{}, {1.0, 1.0}, {0.0, 10.0}, std::move(p));
}

std::vector<double> grid(double t0, double t1, double h) { return SaveAt::every(h).resolve(t0, t1); }

/// Shared checks for the three training experiments.
void training_checks(ExperimentResult& r, const TrainResult& tr, double max_fraction) {
    const auto& L = tr.record.loss;
    const double initial = L.empty() ? tr.record.final_loss : L.front();
    const double final_loss = tr.record.final_loss;
    check(r, "training completed", tr.record.status == TrainStatus::Completed,
          "status " + std::string(to_string(tr.record.status)) + " after " + std::to_string(tr.record.completed()) +
              " iterations");
    check(r, "final loss <= " + num(max_fraction) + " x initial", final_loss <= max_fraction * initial,
          "initial " + num(initial) + ", final " + num(final_loss) + ", ratio " + num(final_loss / initial));
    if (L.size() >= 2) {
        const std::size_t w = std::min<std::size_t>(10, L.size() / 2);
        const double first = std::accumulate(L.begin(), L.begin() + static_cast<long>(w), 0.0) / static_cast<double>(w);
        const double last = std::accumulate(L.end() - static_cast<long>(w), L.end(), 0.0) / static_cast<double>(w);
        check(r, "late losses below early losses", last < first,
              "mean of first " + std::to_string(w) + " = " + num(first) + ", last " + std::to_string(w) + " = " +
                  num(last));
    }
    r.metrics["initial_loss"] = initial;
    r.metrics["final_loss"] = final_loss;
    r.metrics["min_loss"] = L.empty() ? final_loss : *std::min_element(L.begin(), L.end());
    r.metrics["iterations"] = tr.record.completed();
    r.metrics["trained_params"] = tr.params;
}

}  // namespace

const std::vector<std::string>& experiment_ids() {
    static const std::vector<std::string> ids{"lotka-solve", "lotka-fit",      "rober",    "dde-fit",
                                              "sde-demo",    "neural-ode-fit", "reversal", "gradient-bench"};
    return ids;
}

void validate(const ExperimentConfig& cfg) {
    const auto& ids = experiment_ids();
    if (cfg.id != "all" && std::find(ids.begin(), ids.end(), cfg.id) == ids.end())
        throw ConfigError("unknown experiment id '" + cfg.id + "'");
    auto is = [&](const char* id) { return cfg.id == id || cfg.id == "all"; };
    if (cfg.reltol && !(*cfg.reltol > 0.0)) throw ConfigError("reltol must be > 0");
    if (cfg.abstol && !(*cfg.abstol > 0.0)) throw ConfigError("abstol must be > 0");
    if ((is("lotka-fit") || is("dde-fit") || is("neural-ode-fit")) && cfg.iters < 1)
        throw ConfigError("iters must be >= 1 for training experiments");
    if (is("lotka-solve") && !(cfg.saveat > 0.0 && cfg.saveat <= 10.0))
        throw ConfigError("saveat spacing must lie in (0, 10]");
    if (is("dde-fit") && !(cfg.lag > 0.0 && std::isfinite(cfg.lag))) throw ConfigError("lag must be > 0");
    if (is("dde-fit") && cfg.backend == Backend::Adjoint && cfg.id == "dde-fit")
        throw ConfigError("the adjoint backend does not support delay equations");
}

bool ExperimentResult::passed() const {
    return error.empty() && std::all_of(checks.begin(), checks.end(), [](const Check& c) { return c.passed; });
}

int ExperimentResult::exit_code() const {
    if (!error.empty()) return 2;
    return passed() ? 0 : 1;
}

json ExperimentResult::to_json() const {
    json j;
    j["id"] = id;
    j["passed"] = passed();
    j["exit_code"] = exit_code();
    j["seconds"] = seconds;
    if (!error.empty()) j["error"] = error;
    j["checks"] = json::array();
    for (const auto& c : checks) j["checks"].push_back({{"name", c.name}, {"passed", c.passed}, {"detail", c.detail}});
    j["metrics"] = metrics;
    return j;
}

ExperimentResult run_lotka_solve(const ExperimentConfig& cfg) {
    auto r = result_for("lotka-solve");
    const auto dir = prepare_dir(cfg, r.id);
    SolverOptions o;
    o.reltol = cfg.reltol.value_or(1e-3);
    o.abstol = cfg.abstol.value_or(1e-6);
    o.saveat = SaveAt::every(cfg.saveat);
    const auto path = solve_erk45(lotka_problem(kLotkaP), o);
    if (!path.ok()) throw SolverError(path.retcode, "Lotka-Volterra solve failed");
    write_file(dir / "trajectory.csv", [&](std::ostream& os) { write_csv(os, path); });

    const std::size_t expected = grid(0.0, 10.0, cfg.saveat).size();
    check(r, "node count", path.t.size() == expected,
          std::to_string(path.t.size()) + " nodes, expected " + std::to_string(expected));
    const auto u01 = path.interpolate(0.1);
    const auto u10 = path.interpolate(10.0);
    const double e01 = std::max(std::abs(u01[0] - 1.06108), std::abs(u01[1] - 0.821084));
    const double e10 = std::max(std::abs(u10[0] - 1.03376), std::abs(u10[1] - 0.906371));
    check(r, "u(0.1) within 1e-3 of [1.06108, 0.821084]", e01 <= 1e-3, vec(u01) + ", max deviation " + num(e01));
    check(r, "u(10) within 1e-2 of [1.03376, 0.906371]", e10 <= 1e-2, vec(u10) + ", max deviation " + num(e10));
    r.metrics["n_nodes"] = path.t.size();
    r.metrics["accepted_steps"] = path.stats.n_accepted;
    r.metrics["u_0.1"] = u01;
    r.metrics["u_10"] = u10;
    return r;
}

ExperimentResult run_lotka_fit(const ExperimentConfig& cfg) {
    auto r = result_for("lotka-fit");
    const auto dir = prepare_dir(cfg, r.id);
    GradientRequest<decltype(lotka_problem({}))> req{cfg.backend, lotka_problem(kFitP0), {},
                                                     LossSpec::sum_sq_to_one(grid(0.0, 10.0, 0.1), 0), {}};
    req.opts.reltol = cfg.reltol.value_or(1e-8);
    req.opts.abstol = cfg.abstol.value_or(1e-10);
    const auto tr = train_loop(gradient_evaluator(req), kFitP0, cfg.iters, 0.1);
    write_file(dir / "trace.csv", [&](std::ostream& os) { write_csv(os, tr.record); });

    SolverOptions o = req.opts;
    o.saveat = SaveAt::every(0.1);
    const auto path = solve_erk45(lotka_problem(tr.params), o);
    if (!path.ok()) throw SolverError(path.retcode, "solve at trained parameters failed");
    write_file(dir / "trajectory.csv", [&](std::ostream& os) { write_csv(os, path); });

    training_checks(r, tr, 0.1);
    if (!tr.record.loss.empty()) {
        const double lo = *std::min_element(tr.record.loss.begin(), tr.record.loss.end());
        check(r, "minimum loss < initial / 10", lo < tr.record.loss.front() / 10.0,
              "min " + num(lo) + ", initial " + num(tr.record.loss.front()));
    }
    r.metrics["backend"] = std::string(to_string(cfg.backend));
    return r;
}

ExperimentResult run_rober(const ExperimentConfig& cfg) {
    auto r = result_for("rober");
    const auto dir = prepare_dir(cfg, r.id);
    const auto problem = make_ode(models::Rober{}, {1.0, 0.0, 0.0}, {0.0, 1e11}, {0.04, 3e7, 1e4});

    SolverOptions eo;
    eo.reltol = cfg.reltol.value_or(1e-3);
    eo.abstol = cfg.abstol.value_or(1e-6);
    const FailureReport fail = detect_explicit_failure(problem, eo, cfg.budget);
    write_file(dir / "explicit_failure.json", [&](std::ostream& os) { os << fail.to_json() << "\n"; });
    check(r, "explicit pair exhausts its step budget", fail.retcode == RetCode::MaxStepsExceeded,
          std::string(to_string(fail.retcode)) + " after " + std::to_string(fail.steps) + " steps");
    check(r, "explicit pair stalls before t = 1e4", fail.t_reached < 1e4, "t_reached " + num(fail.t_reached));

    SolverOptions ro;
    ro.reltol = cfg.reltol.value_or(1e-6);
    ro.abstol = cfg.abstol.value_or(1e-10);
    std::vector<double> saves{0.0};
    for (int k = 0; k <= 110; ++k) saves.push_back(std::pow(10.0, k / 10.0));
    saves.back() = 1e11;
    ro.saveat = SaveAt::at(saves);
    const auto path = solve_rosenbrock(problem, ro, {JacobianMode::ForwardAD, false});
    write_file(dir / "trajectory.csv", [&](std::ostream& os) { write_csv(os, path); });
    check(r, "Rosenbrock solve succeeds", path.ok(), std::string(to_string(path.retcode)));
    check(r, "Rosenbrock accepted steps < 1e5", path.stats.n_accepted < 100000,
          std::to_string(path.stats.n_accepted) + " steps");
    double worst = 0.0;
    for (const auto& u : path.u) worst = std::max(worst, std::abs(u[0] + u[1] + u[2] - 1.0));
    check(r, "mass conserved within 100 reltol", worst <= 100.0 * ro.reltol, "max |sum y - 1| = " + num(worst));
    if (path.ok()) {
        const auto& end = path.u.back();
        check(r, "y1(1e11) < 1e-4", end[0] < 1e-4, num(end[0]));
        check(r, "y3(1e11) > 0.9999", end[2] > 0.9999, num(end[2]));
        r.metrics["u_end"] = end;
    }
    r.metrics["explicit"] = json::parse(fail.to_json());
    r.metrics["rosenbrock_steps"] = path.stats.n_accepted;
    r.metrics["rosenbrock_rejected"] = path.stats.n_rejected;
    return r;
}

namespace {

using DelayLotka = DdeProblem<models::DelayLotkaVolterra, ConstantHistory>;

DelayLotka delay_lotka(double lag, std::vector<double> p) {
    return DelayLotka{models::DelayLotkaVolterra{lag}, ConstantHistory{{1.0, 1.0}}, {lag}, {1.0, 1.0}, {0.0, 10.0},
                      std::move(p)};
}

}  // namespace

ExperimentResult run_dde_fit(const ExperimentConfig& cfg) {
    auto r = result_for("dde-fit");
    const auto dir = prepare_dir(cfg, r.id);
    GradientRequest<DelayLotka> req{cfg.backend == Backend::Adjoint ? Backend::Forward : cfg.backend,
                                    delay_lotka(cfg.lag, kFitP0), {}, LossSpec::sum_sq_to_one(grid(0.0, 10.0, 0.1), 0),
                                    {}};
    req.opts.reltol = cfg.reltol.value_or(1e-6);
    req.opts.abstol = cfg.abstol.value_or(1e-8);
    const double l0 = evaluate_loss(req.problem, kFitP0, req.opts, req.loss);
    check(r, "initial loss within 5% of 72.94", relative_to(l0, 72.94371657453573) <= 0.05,
          num(l0) + " (" + num(100.0 * relative_to(l0, 72.94371657453573)) + "% off)");

    const auto tr = train_loop(gradient_evaluator(req), kFitP0, cfg.iters, 0.1);
    write_file(dir / "trace.csv", [&](std::ostream& os) { write_csv(os, tr.record); });
    SolverOptions o = req.opts;
    o.saveat = SaveAt::every(0.1);
    const auto path = solve_dde_mos(delay_lotka(cfg.lag, tr.params), o);
    if (!path.ok()) throw SolverError(path.retcode, "delay solve at trained parameters failed");
    write_file(dir / "trajectory.csv", [&](std::ostream& os) { write_csv(os, path); });

    training_checks(r, tr, 0.2);
    r.metrics["initial_loss_evaluated"] = l0;
    r.metrics["lag"] = cfg.lag;
    r.metrics["backend"] = std::string(to_string(req.backend));
    return r;
}

ExperimentResult run_sde_demo(const ExperimentConfig& cfg) {
    auto r = result_for("sde-demo");
    const auto dir = prepare_dir(cfg, r.id);
    const double dt = 1e-3;

    SdeProblem<models::LotkaVolterra, models::ProportionalNoise> noisy{{}, {0.1}, {1.0, 1.0}, {0.0, 10.0}, kLotkaP};
    const auto a = solve_euler_maruyama(noisy, {cfg.seed, dt});
    const auto b = solve_euler_maruyama(noisy, {cfg.seed, dt});
    const auto c = solve_euler_maruyama(noisy, {cfg.seed + 1, dt});
    if (!a.ok()) throw SolverError(a.retcode, "noisy Lotka-Volterra path failed");
    SolutionPath<double> coarse;
    for (std::size_t k = 0; k < a.t.size(); k += 100) {
        coarse.t.push_back(a.t[k]);
        coarse.u.push_back(a.u[k]);
    }
    write_file(dir / "trajectory.csv", [&](std::ostream& os) { write_csv(os, coarse); });
    check(r, "same seed gives an identical path", a.u == b.u, std::to_string(a.u.size()) + " nodes compared");
    check(r, "different seed differs at the first step", a.u.size() > 1 && c.u.size() > 1 && a.u[1] != c.u[1],
          "seeds " + std::to_string(cfg.seed) + " and " + std::to_string(cfg.seed + 1));

    SdeProblem<models::LotkaVolterra, models::ZeroNoise> quiet{{}, {}, {1.0, 1.0}, {0.0, 10.0}, kLotkaP};
    const auto zq = solve_euler_maruyama(quiet, {cfg.seed, dt});
    const auto eu = solve_euler_fixed(lotka_problem(kLotkaP), dt);
    check(r, "zero diffusion equals fixed-step Euler bitwise", zq.t == eu.t && zq.u == eu.u,
          std::to_string(zq.u.size()) + " nodes compared");

    SdeProblem<models::GbmDrift, models::GbmDiffusion> gbm{{}, {}, {1.0}, {0.0, 1.0}, {0.05, 0.2}};
    const auto mc = monte_carlo_mean(gbm, dt, 10000, cfg.seed, 1.0);
    write_file(dir / "monte_carlo.csv", [&](std::ostream& os) { write_csv(os, mc); });
    const double target = std::exp(0.05);
    const double z = std::abs(mc.mean[0] - target) / mc.std_error[0];
    check(r, "GBM mean within 3 standard errors of e^0.05", z <= 3.0,
          "mean " + num(mc.mean[0]) + ", stderr " + num(mc.std_error[0]) + ", |z| = " + num(z));
    r.metrics["gbm_mean"] = mc.mean[0];
    r.metrics["gbm_stderr"] = mc.std_error[0];
    r.metrics["seed"] = cfg.seed;
    return r;
}

ExperimentResult run_neural_ode_fit(const ExperimentConfig& cfg) {
    auto r = result_for("neural-ode-fit");
    const auto dir = prepare_dir(cfg, r.id);
    const std::vector<double> u0{2.0, 0.0};
    const std::pair<double, double> tspan{0.0, 1.5};
    std::vector<double> nodes(30);
    for (std::size_t k = 0; k < nodes.size(); ++k) nodes[k] = tspan.second * static_cast<double>(k) / 29.0;
    nodes.back() = tspan.second;

    SolverOptions o;
    o.reltol = cfg.reltol.value_or(1e-7);
    o.abstol = cfg.abstol.value_or(1e-9);
    o.saveat = SaveAt::at(nodes);
    const auto truth_problem = make_ode(models::CubicSpiral{}, u0, tspan);
    const auto truth = solve_erk45(truth_problem, o);
    if (!truth.ok()) throw SolverError(truth.retcode, "ground-truth solve failed");
    SolverOptions tight = o;
    tight.reltol /= 10.0;
    tight.abstol /= 10.0;
    const auto truth_tight = solve_erk45(truth_problem, tight);
    double dev = 0.0;
    for (std::size_t i = 0; i < 2; ++i) dev = std::max(dev, std::abs(truth.u.back()[i] - truth_tight.u.back()[i]));
    check(r, "data endpoint matches a 10x tighter solve within 1e-6", dev <= 1e-6, "max deviation " + num(dev));

    const MlpChain chain({{2, 50, Activation::Tanh}, {50, 2, Activation::Identity}}, PreTransform::Cube);
    check(r, "network has 252 parameters", chain.num_params() == 252, std::to_string(chain.num_params()));
    const ParamVector p0 = init_params(chain, cfg.seed);
    GradientRequest<OdeProblem<NeuralRhs>> req{cfg.backend, neural_ode(chain, p0.values, u0, tspan), o,
                                               LossSpec::sum_sq_to_data(nodes, truth.u), {}};
    req.opts.saveat.reset();
    const auto tr = train_loop(gradient_evaluator(req), p0.values, cfg.iters, 0.1);
    write_file(dir / "trace.csv", [&](std::ostream& os) { write_csv(os, tr.record); });
    write_file(dir / "params.csv", [&](std::ostream& os) { write_csv(os, ParamVector{tr.params, chain.layout()}); });
    write_file(dir / "params_layout.json", [&](std::ostream& os) { os << chain.layout().to_json() << "\n"; });

    const auto pred = solve_erk45(neural_ode(chain, tr.params, u0, tspan), o);
    if (!pred.ok()) throw SolverError(pred.retcode, "solve at trained network parameters failed");
    write_file(dir / "trajectory.csv", [&](std::ostream& os) {
        os.precision(17);
        os << "t,data_u1,data_u2,pred_u1,pred_u2\n";
        for (std::size_t k = 0; k < nodes.size(); ++k)
            os << nodes[k] << "," << truth.u[k][0] << "," << truth.u[k][1] << "," << pred.u[k][0] << ","
               << pred.u[k][1] << "\n";
    });

    training_checks(r, tr, 0.1);
    r.metrics.erase("trained_params");
    r.metrics["n_params"] = chain.num_params();
    r.metrics["seed"] = cfg.seed;
    r.metrics["backend"] = std::string(to_string(cfg.backend));
    return r;
}

ExperimentResult run_reversal(const ExperimentConfig& cfg) {
    auto r = result_for("reversal");
    prepare_dir(cfg, r.id);
    SolverOptions lo;
    lo.reltol = cfg.reltol.value_or(1e-12);
    lo.abstol = cfg.abstol.value_or(1e-12);
    const auto lorenz = backsolve_roundtrip(make_ode(models::Lorenz{}, {1.0, 0.0, 0.0}, {0.0, 100.0}), lo);
    check(r, "Lorenz roundtrip error > 100%", lorenz.rel_error_pct > 100.0,
          "reverse pass " + std::string(to_string(lorenz.reverse_retcode)) + " at t=" + num(lorenz.reverse_t_reached) +
              ", state there " + vec(lorenz.u0_recovered) + ", error " + num(lorenz.rel_error_pct) + "%");

    SolverOptions eo;
    eo.reltol = 1e-10;
    eo.abstol = 1e-10;
    const auto expo = backsolve_roundtrip(make_ode(models::Exponential{}, {1.0}, {0.0, 1.0}, {1.5}), eo);
    check(r, "exponential roundtrip error < 1e-4%", expo.rel_error_pct < 1e-4,
          "error " + num(expo.rel_error_pct) + "%");

    std::vector<double> diff(3);
    for (std::size_t i = 0; i < 3; ++i) diff[i] = lorenz.u0_recovered[i] - lorenz.u0[i];
    r.metrics["lorenz_u_end"] = lorenz.u_end;
    r.metrics["lorenz_reverse_state"] = lorenz.u0_recovered;
    r.metrics["lorenz_discrepancy"] = diff;
    r.metrics["lorenz_reverse_retcode"] = std::string(to_string(lorenz.reverse_retcode));
    r.metrics["lorenz_reverse_t_reached"] = lorenz.reverse_t_reached;
    r.metrics["lorenz_rel_error_pct"] = num(lorenz.rel_error_pct);
    r.metrics["exponential_rel_error_pct"] = expo.rel_error_pct;
    return r;
}

ExperimentResult run_gradient_bench(const ExperimentConfig& cfg) {
    auto r = result_for("gradient-bench");
    const auto dir = prepare_dir(cfg, r.id);
    const auto rows = gradient_crossover_bench({4, 16, 64, 256, 512}, 5);
    write_file(dir / "bench.csv", [&](std::ostream& os) { write_csv(os, rows); });
    const auto ratios = crossover_ratios(rows);
    std::map<std::size_t, double> by_n(ratios.begin(), ratios.end());
    check(r, "adjoint/forward ratio at 512 < ratio at 16", by_n.at(512) < by_n.at(16),
          "ratio(16) = " + num(by_n.at(16)) + ", ratio(512) = " + num(by_n.at(512)));
    for (const auto& [n, ratio] : ratios) r.metrics["ratio_" + std::to_string(n)] = ratio;
    return r;
}

ExperimentResult run_experiment(const ExperimentConfig& cfg) {
    static const std::map<std::string, std::function<ExperimentResult(const ExperimentConfig&)>> table{
        {"lotka-solve", run_lotka_solve}, {"lotka-fit", run_lotka_fit},
        {"rober", run_rober},             {"dde-fit", run_dde_fit},
        {"sde-demo", run_sde_demo},       {"neural-ode-fit", run_neural_ode_fit},
        {"reversal", run_reversal},       {"gradient-bench", run_gradient_bench}};
    validate(cfg);
    const auto it = table.find(cfg.id);
    if (it == table.end()) throw ConfigError("run_experiment needs a single experiment id, got '" + cfg.id + "'");
    const auto start = std::chrono::steady_clock::now();
    ExperimentResult r;
    try {
        r = it->second(cfg);
    } catch (const SolverError& e) {
        r = result_for(cfg.id);
        r.error = e.what();
    }
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const auto dir = prepare_dir(cfg, cfg.id);
    write_file(dir / "summary.json", [&](std::ostream& os) { os << r.to_json().dump(2) << "\n"; });
    return r;
}

std::vector<ExperimentResult> run_experiments(const ExperimentConfig& cfg) {
    validate(cfg);
    if (cfg.id != "all") return {run_experiment(cfg)};
    const auto& ids = experiment_ids();
    std::vector<ExperimentResult> out(ids.size());
    auto one = [&](std::size_t i) {
        ExperimentConfig c = cfg;
        c.id = ids[i];
        if (c.id == "dde-fit" && c.backend == Backend::Adjoint) c.backend = Backend::Forward;
        out[i] = run_experiment(c);
    };
    if (cfg.parallel) {
        parallel_for(ids.size(), one);
    } else {
        for (std::size_t i = 0; i < ids.size(); ++i) one(i);
    }
    return out;
}

}  // namespace neurodiff
