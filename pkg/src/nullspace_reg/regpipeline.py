"""Two-step reconstruction ``R_alpha = Phi o B_alpha`` and its ingredients.

``Phi`` is a :class:`~nullspace_reg.network.NullSpaceNetwork` and ``B_alpha``
a filter-based reconstructor. With an exact projector the pair forms a
regularization of ``A^M = Phi o A^+``; replacing the kernel projector by
``Q = Id - B_phi A`` gives the approximate variant.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import filters
from .errors import ContractViolation, NumericalError
from .filters import FilterSpec
from .linop import DenseOperator
from .network import ApproximateProjector, NullSpaceNetwork, spectral_norm


@dataclass
class MRegularizer:
    filter: FilterSpec
    operator: DenseOperator
    phi: NullSpaceNetwork

    def __post_init__(self):
        if self.phi.operator is not self.operator and (
            self.phi.operator.fingerprint() != self.operator.fingerprint()
        ):
            raise ContractViolation("null-space network was built for a different operator")


@dataclass(frozen=True)
class ParamChoice:
    """A-priori rule ``alpha = d * (delta / rho) ** (2 / (2 mu + 1))``."""

    smoothness_mu: float
    source_radius_rho: float = 1.0
    constant_d: float = 1.0

    def __post_init__(self):
        for name in ("smoothness_mu", "source_radius_rho", "constant_d"):
            if not getattr(self, name) > 0:
                raise ContractViolation(f"{name} must be positive")

    @property
    def exponent(self) -> float:
        return 2.0 / (2.0 * self.smoothness_mu + 1.0)

    @property
    def rate(self) -> float:
        """Expected error exponent ``2 mu / (2 mu + 1)``."""
        return 2.0 * self.smoothness_mu / (2.0 * self.smoothness_mu + 1.0)


def alpha_star(choice: ParamChoice, delta: float) -> float:
    if not delta > 0:
        raise ContractViolation(f"noise level must be positive, got {delta}")
    return choice.constant_d * (delta / choice.source_radius_rho) ** choice.exponent


def m_generalized_inverse(reg: MRegularizer, y) -> np.ndarray:
    """``A^M y = Phi(A^+ y)``."""
    return reg.phi.apply(reg.operator.pinv_apply(y))


def reconstruct_two_step(reg: MRegularizer, alpha: float, y_delta) -> np.ndarray:
    """``Phi(B_alpha y_delta)``."""
    return reg.phi.apply(filters.reconstruct(reg.filter, reg.operator, alpha, y_delta))


def source_element(op: DenseOperator, phi: NullSpaceNetwork, mu: float, w) -> np.ndarray:
    """``Phi((A^T A)^mu w)``; the source radius is ``||w||``."""
    return phi.apply(op.frac_power_apply(mu, w))


@dataclass(frozen=True)
class ApproxProjector:
    """``Q = Id - B_phi A`` together with its measured distance to ``P_ker(A)``."""

    operator: DenseOperator
    projector: ApproximateProjector
    deviation: float

    def __call__(self, x) -> np.ndarray:
        return self.projector.apply(self.operator, x)

    def matrix(self) -> np.ndarray:
        return self(np.eye(self.operator.cols))


def projector_deviation(op: DenseOperator, projector) -> float:
    """Spectral norm of ``Q - P_ker(A)`` by power iteration on the explicit difference."""
    eye = np.eye(op.cols)
    diff = projector.apply(op, eye) - op.proj_ker(eye)
    try:
        return spectral_norm(diff, tol=1e-8).value
    except NumericalError as exc:
        return float(exc.estimate)


def approx_projector(op: DenseOperator, filter: FilterSpec, phi_alpha: float) -> ApproxProjector:
    proj = ApproximateProjector(filter, phi_alpha)
    return ApproxProjector(op, proj, projector_deviation(op, proj))


def reconstruct_two_step_approx(reg: MRegularizer, alpha: float, phi_alpha: float, y_delta,
                                q_filter: FilterSpec | None = None) -> np.ndarray:
    """``x1 + Q N(x1)`` with ``x1 = B_alpha y_delta``.

    ``Q`` uses ``q_filter`` (default: the regularizer's own filter) at
    parameter ``phi_alpha``.
    """
    if not phi_alpha > 0:
        raise ContractViolation(f"phi_alpha must be positive, got {phi_alpha}")
    q = ApproximateProjector(q_filter or reg.filter, phi_alpha)
    x1 = filters.reconstruct(reg.filter, reg.operator, alpha, y_delta)
    return x1 + q.apply(reg.operator, reg.phi.base.forward(x1))
