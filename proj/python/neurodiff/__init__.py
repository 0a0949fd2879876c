"""Differentiable differential-equation solvers with neural right-hand sides."""

from ._core import (
    AdjointUnsupported,
    SolverError,
    backsolve_error,
    experiment_ids,
    gbm_mean,
    gradient,
    run_experiment,
    solve,
)

__all__ = [
    "AdjointUnsupported",
    "SolverError",
    "backsolve_error",
    "experiment_ids",
    "gbm_mean",
    "gradient",
    "run_experiment",
    "solve",
]
