import math

import numpy as np
import pytest

import neurodiff


def test_lotka_solve_nodes_and_values():
    out = neurodiff.solve("lotka_volterra", [1.0, 1.0], (0.0, 10.0), [1.5, 1.0, 3.0, 1.0], saveat=0.1)
    assert out["retcode"] == "Success"
    assert out["t"].shape == (101,)
    assert out["u"].shape == (101, 2)
    assert np.allclose(out["t"], np.arange(101) / 10.0, rtol=0, atol=1e-12)
    assert abs(out["u"][1, 0] - 1.06108) < 1e-3
    assert abs(out["u"][1, 1] - 0.821084) < 1e-3


def test_rober_needs_the_stiff_method():
    p = [0.04, 3e7, 1e4]
    out = neurodiff.solve("rober", [1.0, 0.0, 0.0], (0.0, 1e5), p, method="rosenbrock", reltol=1e-6, abstol=1e-10)
    assert out["retcode"] == "Success"
    assert abs(out["u"][-1].sum() - 1.0) < 1e-4


def test_gradient_backends_agree():
    nodes = [k / 10.0 for k in range(101)]
    args = ("lotka_volterra", [1.0, 1.0], (0.0, 10.0), [2.2, 1.0, 2.0, 0.4], nodes)
    loss_f, g_f = neurodiff.gradient(*args, backend="forward")
    loss_a, g_a = neurodiff.gradient(*args, backend="adjoint")
    _, g_d = neurodiff.gradient(*args, backend="fd")
    assert loss_f == pytest.approx(loss_a, rel=1e-10)
    scale = np.abs(g_f).max()
    assert np.abs(g_f - g_a).max() <= 1e-3 * scale
    assert np.abs(g_f - g_d).max() <= 1e-3 * scale


def test_gbm_mean():
    mean, se = neurodiff.gbm_mean(0.05, 0.2, 1e-2, 10000, seed=1)
    assert abs(mean - math.exp(0.05)) <= 3 * se


def test_backsolve():
    assert neurodiff.backsolve_error("exponential", [1.0], (0.0, 1.0), [1.5], 1e-10, 1e-10) < 1e-4
    assert neurodiff.backsolve_error("lorenz", [1.0, 0.0, 0.0], (0.0, 100.0)) > 100.0


def test_run_experiment(tmp_path):
    assert "lotka-solve" in neurodiff.experiment_ids()
    summary = neurodiff.run_experiment("lotka-solve", out_dir=str(tmp_path))
    assert summary["passed"]
    assert summary["exit_code"] == 0
    assert (tmp_path / "lotka-solve" / "trajectory.csv").exists()


def test_errors(tmp_path):
    with pytest.raises(ValueError):
        neurodiff.run_experiment("lotka-fit", out_dir=str(tmp_path), iters=0)
    with pytest.raises(ValueError):
        neurodiff.solve("no_such_model", [1.0], (0.0, 1.0))
    with pytest.raises(ValueError):
        neurodiff.gradient("exponential", [1.0], (0.0, 1.0), [1.0], [1.0], backend="magic")
