"""Spectral regularizing filters and the reconstructors they induce.

A filter is a family ``g_alpha`` on ``[0, lambda_max]``; the induced
reconstructor is ``B_alpha = g_alpha(A^T A) A^T``.  Three families are built
in: Tikhonov, truncated SVD and Landweber.  Landweber is indexed by the same
continuous ``alpha`` as the others through ``k = ceil(1/alpha)`` iterations,
and its step ``tau`` sits inside the sum::

    g_alpha(lam) = tau * sum_{j<k} (1 - tau*lam)**j
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractViolation, ParameterError
from .linop import DenseOperator

FAMILIES = ("tikhonov", "tsvd", "landweber")

#: bound used for ``sup |lambda g_alpha(lambda)|``; every built-in stays below 1
BOUND_C = 2.0
LIMIT_RTOL = 1e-3
GROWTH_SLACK = 1.05


@dataclass(frozen=True)
class FilterSpec:
    """Selects a filter family.

    ``step`` is only meaningful for Landweber; ``None`` means ``1/lambda_max``
    of whichever operator the filter is applied to.
    """

    family: str
    step: float | None = None
    label: str = ""

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ContractViolation(f"unknown filter family {self.family!r}; expected one of {FAMILIES}")
        if self.step is not None:
            if self.family != "landweber":
                raise ContractViolation("step only applies to the landweber family")
            if not self.step > 0:
                raise ContractViolation(f"landweber step must be positive, got {self.step}")
        if not self.label:
            object.__setattr__(self, "label", self.family)

    @classmethod
    def tikhonov(cls):
        return cls("tikhonov")

    @classmethod
    def tsvd(cls):
        return cls("tsvd")

    @classmethod
    def landweber(cls, step=None):
        return cls("landweber", step=step)

    @classmethod
    def parse(cls, text: str) -> "FilterSpec":
        """Parse ``tikhonov``, ``tsvd``, ``landweber`` or ``landweber:<step>``."""
        name, _, arg = text.strip().lower().partition(":")
        if name == "landweber" and arg:
            return cls.landweber(float(arg))
        if arg:
            raise ContractViolation(f"filter {name!r} takes no argument")
        return cls(name)

    def resolve_step(self, lambda_max: float) -> float:
        """Landweber step for an operator with ``||A^T A|| = lambda_max``."""
        if self.step is not None:
            return self.step
        if not lambda_max > 0:
            raise ParameterError("cannot pick a default landweber step for a zero operator")
        return 1.0 / lambda_max


def landweber_iterations(alpha: float) -> int:
    return max(1, math.ceil(1.0 / alpha))


def filter_value(spec: FilterSpec, alpha: float, lam, lambda_max: float | None = None):
    """Evaluate ``g_alpha(lam)``; ``lam`` may be a scalar or an array.

    ``lambda_max`` is needed only for Landweber without an explicit step.
    """
    if not alpha > 0:
        raise ContractViolation(f"alpha must be positive, got {alpha}")
    lam_arr = np.asarray(lam, dtype=float)
    if np.any(lam_arr < 0):
        raise ContractViolation("lambda must be nonnegative")
    if spec.family == "tikhonov":
        out = 1.0 / (alpha + lam_arr)
    elif spec.family == "tsvd":
        with np.errstate(divide="ignore"):
            out = np.where(lam_arr >= alpha, 1.0 / np.where(lam_arr > 0, lam_arr, 1.0), 0.0)
    else:
        tau = spec.resolve_step(lambda_max if lambda_max is not None else float(np.max(lam_arr, initial=0.0)))
        out = _landweber(tau, landweber_iterations(alpha), lam_arr)
    return float(out) if np.ndim(out) == 0 else out


def _landweber(tau: float, k: int, lam: np.ndarray) -> np.ndarray:
    t = tau * lam
    out = np.full(lam.shape, k * tau)
    pos = lam > 0
    small = pos & (t < 1.0)
    # 1 - (1 - t)^k without cancellation for small t
    out[small] = -np.expm1(k * np.log1p(-t[small])) / lam[small]
    big = pos & ~small
    out[big] = (1.0 - (1.0 - t[big]) ** k) / lam[big]
    return out


def _check_step(spec: FilterSpec, lambda_max: float) -> None:
    if spec.family != "landweber":
        return
    tau = spec.resolve_step(lambda_max)
    if tau * lambda_max > 1.0 + 1e-12:
        raise ParameterError(
            f"landweber step {tau:g} violates tau * sigma_1^2 <= 1 (sigma_1^2 = {lambda_max:g})"
        )


def reconstruct(spec: FilterSpec, op: DenseOperator, alpha: float, y) -> np.ndarray:
    """Apply ``B_alpha = g_alpha(A^T A) A^T`` to ``y`` (rows of a 2-D ``y`` are a batch)."""
    lam_max = op.lambda_max
    _check_step(spec, lam_max)
    return op.spectral_apply(lambda s: filter_value(spec, alpha, s * s, lam_max) * s, y)


def filtered_projector_apply(spec: FilterSpec, op: DenseOperator, alpha: float, x) -> np.ndarray:
    """``B_alpha A x`` evaluated spectrally, i.e. ``sum g(s^2) s^2 <v, x> v``."""
    lam_max = op.lambda_max
    _check_step(spec, lam_max)
    x = np.asarray(x, dtype=float)
    f = op.svd()
    lam = f.singular_values**2
    coef = filter_value(spec, alpha, lam, lam_max) * lam
    return ((x @ f.right_vectors) * coef) @ f.right_vectors.T


# ----------------------------------------------------------------- verification
@dataclass(frozen=True)
class Check:
    name: str
    value: float
    threshold: float
    passed: bool

    def to_dict(self):
        return {"name": self.name, "value": self.value, "threshold": self.threshold, "pass": self.passed}


@dataclass
class AxiomReport:
    filter: str
    checks: list[Check]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def to_dict(self):
        return {"filter": self.filter, "pass": self.passed, "checks": [c.to_dict() for c in self.checks]}


@dataclass
class RateConditionReport:
    filter: str
    mu: float
    c1: float
    c2: float
    alpha_grid: list[float]
    c1_sequence: list[float]
    c2_sequence: list[float]
    checks: list[Check] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def failed_checks(self) -> list[str]:
        return [c.name for c in self.checks if not c.passed]

    def to_dict(self):
        return {
            "filter": self.filter,
            "mu": self.mu,
            "c1": self.c1,
            "c2": self.c2,
            "alpha_grid": self.alpha_grid,
            "c1_sequence": self.c1_sequence,
            "c2_sequence": self.c2_sequence,
            "pass": self.passed,
            "checks": [c.to_dict() for c in self.checks],
        }


def default_grids(lambda_max: float, spec: FilterSpec | None = None):
    """Log-spaced grids for the sampled checks.

    Lambda covers ``[0, lambda_max]`` with 100 points per decade down to
    ``1e-8 * lambda_max``. Alpha takes quarter-decade steps over
    ``[1e-6, 1e-2] * lambda_max``, each value also present in the lambda
    grid. Landweber's alpha counts iterations (``k = ceil(1/alpha)``) rather
    than measuring spectrum, so its grid is not scaled by ``lambda_max``.
    """
    positive = lambda_max * np.logspace(-8, 0, 801)
    lambda_grid = np.concatenate([[0.0], positive])
    if spec is not None and spec.family == "landweber":
        alpha_grid = np.logspace(-2, -6, 17)
    else:
        alpha_grid = positive[600:199:-25]
    return alpha_grid, lambda_grid


def axiom_grids(lambda_max: float):
    """Grids for :func:`verify_filter_axioms`.

    The pointwise limit is only visible where ``alpha << lambda``, so the
    smallest alpha (``1e-8 * lambda_max``) sits six decades below the
    smallest positive lambda (``0.01 * lambda_max``).
    """
    return lambda_max * np.logspace(0, -8, 9), np.linspace(0.0, lambda_max, 101)


def _validate_grids(alpha_grid, lambda_grid, lambda_max):
    alphas = np.asarray(alpha_grid, dtype=float).ravel()
    lams = np.asarray(lambda_grid, dtype=float).ravel()
    if alphas.size == 0 or lams.size == 0:
        raise ContractViolation("alpha and lambda grids must be nonempty")
    if np.any(alphas <= 0):
        raise ContractViolation("alpha grid must be positive")
    if np.any(lams < 0) or np.any(lams > lambda_max * (1 + 1e-12)):
        raise ContractViolation("lambda grid must lie in [0, lambda_max]")
    return np.sort(alphas)[::-1], lams


def verify_filter_axioms(spec: FilterSpec, lambda_max: float, alpha_grid, lambda_grid) -> AxiomReport:
    """Sample the regularizing-filter axioms on finite grids.

    Two checks are reported: ``sup |lambda g_alpha(lambda)| <= C`` and the
    pointwise limit ``g_alpha(lambda) -> 1/lambda`` at the smallest alpha.
    """
    if not lambda_max > 0:
        raise ContractViolation("lambda_max must be positive")
    _check_step(spec, lambda_max)
    alphas, lams = _validate_grids(alpha_grid, lambda_grid, lambda_max)

    bound = max(float(np.max(np.abs(lams * filter_value(spec, a, lams, lambda_max)))) for a in alphas)
    checks = [Check("bounded_lambda_g", bound, BOUND_C, bound <= BOUND_C)]

    a_min = alphas[-1]
    pos = lams[lams > 0]
    if spec.family == "tsvd":
        # the limit is attained exactly as soon as alpha < lambda
        pos = pos[pos > a_min]
        tol = 0.0
    else:
        tol = LIMIT_RTOL
    if pos.size:
        dev = float(np.max(np.abs(filter_value(spec, a_min, pos, lambda_max) - 1.0 / pos) * pos))
    else:
        dev = 0.0
    checks.append(Check("pointwise_limit", dev, tol, dev <= tol))
    return AxiomReport(spec.label, checks)


def _max_growth(seq: np.ndarray) -> float:
    """Largest ratio of an entry to the running maximum of its predecessors."""
    worst = 1.0
    running = seq[0]
    for v in seq[1:]:
        if running > 0:
            worst = max(worst, v / running)
        elif v > 0:
            return math.inf
        running = max(running, v)
    return float(worst)


def verify_rate_conditions(
    spec: FilterSpec, mu: float, lambda_max: float, alpha_grid=None, lambda_grid=None
) -> RateConditionReport:
    """Estimate the qualification constants ``c1`` and ``c2`` on grids.

    For every alpha (taken in decreasing order) the sampled constants are::

        c1(alpha) = max_lambda lambda^mu |1 - lambda g_alpha(lambda)| / alpha^mu
        c2(alpha) = alpha * max_lambda |g_alpha(lambda)|

    A sequence passes when no entry exceeds the running maximum of the
    previous entries by more than 5%; a filter whose qualification is below
    ``mu`` shows geometric growth of ``c1`` as alpha shrinks.
    """
    if not mu > 0:
        raise ContractViolation(f"mu must be positive, got {mu}")
    if not lambda_max > 0:
        raise ContractViolation("lambda_max must be positive")
    _check_step(spec, lambda_max)
    if alpha_grid is None or lambda_grid is None:
        da, dl = default_grids(lambda_max, spec)
        alpha_grid = da if alpha_grid is None else alpha_grid
        lambda_grid = dl if lambda_grid is None else lambda_grid
    alphas, lams = _validate_grids(alpha_grid, lambda_grid, lambda_max)

    c1_seq, c2_seq = [], []
    for a in alphas:
        g = filter_value(spec, a, lams, lambda_max)
        c1_seq.append(float(np.max(lams**mu * np.abs(1.0 - lams * g))) / a**mu)
        c2_seq.append(a * float(np.max(np.abs(g))))
    c1_arr, c2_arr = np.array(c1_seq), np.array(c2_seq)
    g1, g2 = _max_growth(c1_arr), _max_growth(c2_arr)
    checks = [
        Check("c1_qualification", g1, GROWTH_SLACK, g1 <= GROWTH_SLACK),
        Check("c2_sup_bound", g2, GROWTH_SLACK, g2 <= GROWTH_SLACK),
    ]
    return RateConditionReport(
        filter=spec.label,
        mu=float(mu),
        c1=float(c1_arr.max()),
        c2=float(c2_arr.max()),
        alpha_grid=[float(a) for a in alphas],
        c1_sequence=c1_seq,
        c2_sequence=c2_seq,
        checks=checks,
    )
