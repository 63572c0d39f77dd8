"""Synthetic problems, experiments and the ``nullspace-reg`` command line."""

from .problems import Deconvolution, ProblemSpec, RandomRankDeficient, add_noise, make_problem
from .experiments import (
    RateExperimentConfig,
    RateReport,
    fit_loglog_slope,
    run_consistency_check,
    run_convergence_experiment,
    run_rate_experiment,
)

__all__ = [
    "Deconvolution",
    "ProblemSpec",
    "RandomRankDeficient",
    "RateExperimentConfig",
    "RateReport",
    "add_noise",
    "fit_loglog_slope",
    "make_problem",
    "run_consistency_check",
    "run_convergence_experiment",
    "run_rate_experiment",
]
