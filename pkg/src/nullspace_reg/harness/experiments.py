"""Convergence, convergence-rate and data-consistency experiments."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .. import filters, regpipeline
from ..errors import ConfigError, ContractViolation
from ..filters import FilterSpec
from ..linop import DenseOperator
from ..network import ApproximateProjector, ExactProjector, FeedForwardNet, NullSpaceNetwork
from ..regpipeline import MRegularizer, ParamChoice, alpha_star
from ..training import piecewise_constant_phantoms
from .problems import ProblemSpec, RandomRankDeficient, add_noise, make_problem

DEFAULT_DELTAS = (1e-1, 3e-2, 1e-2, 3e-3, 1e-3, 3e-4, 1e-4)
CONVERGENCE_DELTAS = (1e-1, 3e-2, 1e-2, 3e-3, 1e-3, 3e-4, 1e-4, 3e-5, 1e-5)
DEVIATION_FACTOR = 10.0
MONOTONE_SLACK = 1.10
CONSISTENCY_TOL = 1e-9


# ------------------------------------------------------------------ slope fit
@dataclass(frozen=True)
class SlopeFit:
    slope: float
    intercept: float
    residual: float


def fit_loglog_slope(points) -> SlopeFit:
    """Least-squares line through ``(log delta, log error)``.

    ``residual`` is the root-mean-square deviation of the log errors from the
    fitted line.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 3:
        raise ContractViolation("need at least three (delta, error) pairs")
    if np.any(pts <= 0):
        raise ContractViolation("log-log fit needs positive deltas and errors")
    lx, ly = np.log(pts[:, 0]), np.log(pts[:, 1])
    design = np.column_stack([lx, np.ones_like(lx)])
    (slope, intercept), *_ = np.linalg.lstsq(design, ly, rcond=None)
    resid = ly - (slope * lx + intercept)
    return SlopeFit(float(slope), float(intercept), float(np.sqrt(np.mean(resid**2))))


# ------------------------------------------------------------------ helpers
def _operator(problem) -> DenseOperator:
    if isinstance(problem, DenseOperator):
        return problem
    if isinstance(problem, ProblemSpec):
        return make_problem(problem)
    raise ConfigError(f"expected a ProblemSpec or DenseOperator, got {type(problem).__name__}")


def _network(network, op: DenseOperator) -> NullSpaceNetwork:
    """Accept a NullSpaceNetwork, a FeedForwardNet, a JSON path, or ``None`` (zero network)."""
    if network is None:
        return NullSpaceNetwork(FeedForwardNet.zeros([op.cols] * 4), op)
    if isinstance(network, NullSpaceNetwork):
        if network.operator is not op and network.operator.fingerprint() != op.fingerprint():
            raise ConfigError("network belongs to a different operator")
        return NullSpaceNetwork(network.base, op, network.projector)
    if isinstance(network, FeedForwardNet):
        return NullSpaceNetwork(network, op)
    return NullSpaceNetwork.load(network, op)


def _check_grid(deltas, min_points=5, min_decades=3.0):
    d = np.asarray(deltas, dtype=float)
    if d.ndim != 1 or d.size < min_points:
        raise ConfigError(f"delta grid needs at least {min_points} points")
    if np.any(d <= 0) or np.any(np.diff(d) >= 0):
        raise ConfigError("delta grid must be positive and strictly decreasing")
    if math.log10(d[0] / d[-1]) < min_decades - 1e-9:
        raise ConfigError(f"delta grid must span at least {min_decades:g} decades")
    return d


def _unit(rng, n, radius):
    w = rng.standard_normal(n)
    return w * (radius / np.linalg.norm(w))


# ------------------------------------------------------------- rate experiment
@dataclass
class RateExperimentConfig:
    problem: ProblemSpec = field(default_factory=lambda: ProblemSpec(RandomRankDeficient(64, 96, 48)))
    filter: FilterSpec = field(default_factory=FilterSpec.tsvd)
    smoothness_mu: float = 0.5
    source_radius_rho: float = 1.0
    delta_grid: tuple = DEFAULT_DELTAS
    trials_per_delta: int = 20
    network_path: str | None = None
    projector_mode: str = "exact"
    q_filter: FilterSpec = field(default_factory=FilterSpec.tikhonov)
    phi_exponent: float = 2.0
    constant_d: float = 1.0
    slope_tolerance: float = 0.1
    seed: int = 0

    def __post_init__(self):
        _check_grid(self.delta_grid)
        self.delta_grid = tuple(float(d) for d in self.delta_grid)
        if self.trials_per_delta < 1:
            raise ConfigError("trials_per_delta must be positive")
        if self.projector_mode not in ("exact", "approximate"):
            raise ConfigError(f"projector_mode must be 'exact' or 'approximate', got {self.projector_mode!r}")
        if not self.phi_exponent > 0:
            raise ConfigError("phi_exponent must be positive")

    @property
    def choice(self) -> ParamChoice:
        return ParamChoice(self.smoothness_mu, self.source_radius_rho, self.constant_d)

    def phi_alpha(self, alpha: float) -> float:
        return alpha**self.phi_exponent

    def to_dict(self) -> dict:
        return {
            "problem": self.problem.to_dict(),
            "filter": self.filter.family,
            "landweber_step": self.filter.step,
            "mu": self.smoothness_mu,
            "rho": self.source_radius_rho,
            "deltas": list(self.delta_grid),
            "trials": self.trials_per_delta,
            "network": self.network_path,
            "projector": self.projector_mode,
            "q_filter": self.q_filter.family,
            "phi_exponent": self.phi_exponent,
            "constant_d": self.constant_d,
            "slope_tol": self.slope_tolerance,
            "seed": self.seed,
        }


@dataclass
class RateRow:
    delta: float
    alpha: float
    worst_error: float
    mean_error: float
    deviation: float | None = None


@dataclass
class RateReport:
    rows: list[RateRow]
    fitted_slope: float
    expected_slope: float
    intercept: float
    residual: float
    slope_tolerance: float
    projector_mode: str = "exact"
    deviation_ok: bool | None = None

    @property
    def passed(self) -> bool:
        return abs(self.fitted_slope - self.expected_slope) <= self.slope_tolerance

    @property
    def all_passed(self) -> bool:
        return self.passed and self.deviation_ok is not False

    def summary(self) -> dict:
        out = {
            "slope": self.fitted_slope,
            "expected": self.expected_slope,
            "intercept": self.intercept,
            "residual": self.residual,
            "tolerance": self.slope_tolerance,
            "projector": self.projector_mode,
            "pass": self.passed,
        }
        if self.deviation_ok is not None:
            out["deviation_pass"] = self.deviation_ok
            out["deviations"] = [r.deviation for r in self.rows]
        return out


def run_rate_experiment(config: RateExperimentConfig, network=None, operator: DenseOperator | None = None) -> RateReport:
    """Worst-case reconstruction error over a source set, per noise level.

    For every trial a direction ``w`` with ``||w|| = rho`` is drawn, the
    exact solution is ``Phi((A^T A)^mu w)`` and the data carry noise of norm
    exactly ``delta``. ``network`` (or ``config.network_path``) supplies
    ``Phi``; without either the zero network is used. ``operator`` skips
    regenerating the problem.
    """
    op = operator if operator is not None else make_problem(config.problem)
    cond = filters.verify_rate_conditions(config.filter, config.smoothness_mu, op.lambda_max)
    if not cond.passed:
        raise ConfigError(
            f"filter {config.filter.label!r} fails the rate conditions for mu={config.smoothness_mu:g}: "
            f"{', '.join(cond.failed_checks())} (sampled c1={cond.c1:.3g})"
        )
    phi = _network(network if network is not None else config.network_path, op)
    phi = phi.with_projector(ExactProjector())
    reg = MRegularizer(config.filter, op, phi)
    choice = config.choice
    rate = choice.rate
    approx = config.projector_mode == "approximate"

    rows = []
    for i, delta in enumerate(config.delta_grid):
        alpha = alpha_star(choice, delta)
        dev = None
        if approx:
            phi_alpha = config.phi_alpha(alpha)
            dev = regpipeline.approx_projector(op, config.q_filter, phi_alpha).deviation
        errs = []
        for t in range(config.trials_per_delta):
            rng = np.random.default_rng([config.seed, i, t])
            w = _unit(rng, op.cols, config.source_radius_rho)
            x = regpipeline.source_element(op, phi, config.smoothness_mu, w)
            y_delta = add_noise(op.apply(x), delta, rng)
            if approx:
                x_hat = regpipeline.reconstruct_two_step_approx(reg, alpha, phi_alpha, y_delta, config.q_filter)
            else:
                x_hat = regpipeline.reconstruct_two_step(reg, alpha, y_delta)
            errs.append(float(np.linalg.norm(x_hat - x)))
        rows.append(RateRow(delta, alpha, max(errs), float(np.mean(errs)), dev))

    fit = fit_loglog_slope([(r.delta, r.worst_error) for r in rows])
    deviation_ok = None
    if approx:
        deviation_ok = all(r.deviation <= DEVIATION_FACTOR * r.delta**rate for r in rows)
    return RateReport(rows, fit.slope, rate, fit.intercept, fit.residual, config.slope_tolerance,
                      config.projector_mode, deviation_ok)


# ------------------------------------------------------ convergence experiment
@dataclass
class ConvergenceTable:
    deltas: list[float]
    alphas: list[float]
    sup_errors: list[float]

    @property
    def monotone(self) -> bool:
        e = self.sup_errors
        return all(b <= MONOTONE_SLACK * a for a, b in zip(e, e[1:]))

    @property
    def reduced(self) -> bool:
        return self.sup_errors[-1] < self.sup_errors[0] / 10.0

    @property
    def passed(self) -> bool:
        return self.monotone and self.reduced

    def summary(self) -> dict:
        return {"monotone": self.monotone, "reduced_tenfold": self.reduced, "pass": self.passed,
                "first": self.sup_errors[0], "last": self.sup_errors[-1]}


def run_convergence_experiment(problem, filter: FilterSpec, network=None, delta_grid=CONVERGENCE_DELTAS,
                               trials: int = 20, seed: int = 0, choice: ParamChoice | None = None,
                               x_true=None) -> ConvergenceTable:
    """Sup over noise draws of ``||A^M y - R_alpha(y_delta)||`` for fixed ``y = A x``.

    ``x`` defaults to a seeded piecewise-constant signal; ``alpha`` follows
    ``choice`` (default ``alpha = delta``, the ``mu = 1/2`` rule).
    """
    op = _operator(problem)
    phi = _network(network, op).with_projector(ExactProjector())
    reg = MRegularizer(filter, op, phi)
    choice = choice or ParamChoice(0.5)
    deltas = _check_grid(delta_grid, min_points=3, min_decades=1.0)
    if trials < 1:
        raise ConfigError("trials must be positive")
    if x_true is None:
        x_true = piecewise_constant_phantoms(op.cols, 1, seed=seed)[0]
    y = op.apply(x_true)
    target = regpipeline.m_generalized_inverse(reg, y)
    alphas, sups = [], []
    for i, delta in enumerate(deltas):
        alpha = alpha_star(choice, float(delta))
        worst = 0.0
        for t in range(trials):
            y_delta = add_noise(y, float(delta), [seed, i, t])
            worst = max(worst, float(np.linalg.norm(regpipeline.reconstruct_two_step(reg, alpha, y_delta) - target)))
        alphas.append(alpha)
        sups.append(worst)
    return ConvergenceTable([float(d) for d in deltas], alphas, sups)


# ------------------------------------------------------ data consistency check
@dataclass
class ConsistencyReport:
    max_violation: float
    samples: int
    projector_mode: str
    deviation: float | None = None

    @property
    def passed(self) -> bool:
        return self.max_violation <= CONSISTENCY_TOL

    @property
    def required(self) -> bool:
        """Only the exact projector guarantees data consistency."""
        return self.projector_mode == "exact"

    def summary(self) -> dict:
        out = {"max_violation": self.max_violation, "tolerance": CONSISTENCY_TOL, "samples": self.samples,
               "projector": self.projector_mode, "pass": self.passed, "required": self.required}
        if self.deviation is not None:
            out["deviation"] = self.deviation
        return out


def run_consistency_check(problem, network, samples: int = 1000, seed: int = 0) -> ConsistencyReport:
    """Max of ``||A Phi(x) - A x|| / (||A|| (||x|| + ||N(x)||))`` over Gaussian inputs."""
    op = _operator(problem)
    phi = _network(network, op)
    if samples < 1:
        raise ConfigError("samples must be positive")
    x = np.random.default_rng(seed).standard_normal((samples, op.cols))
    nx = phi.base.forward(x)
    out = x + phi.projector.apply(op, nx)
    num = np.linalg.norm(op.apply(out) - op.apply(x), axis=1)
    den = op.norm * (np.linalg.norm(x, axis=1) + np.linalg.norm(nx, axis=1))
    ratio = np.divide(num, den, out=np.zeros_like(num), where=den > 0)
    mode = "exact" if isinstance(phi.projector, ExactProjector) else "approximate"
    dev = None
    if isinstance(phi.projector, ApproximateProjector):
        dev = regpipeline.projector_deviation(op, phi.projector)
    return ConsistencyReport(float(ratio.max()), samples, mode, dev)
