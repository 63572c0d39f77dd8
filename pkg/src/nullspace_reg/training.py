"""Training of the network inside a null-space network.

Both error functionals share the form::

    1/2 sum_n || x_n - (z_n + P N(z_n)) ||^2  +  reg_weight * prod_l ||W_l||

with ``z_n = A^+ A x_n`` and ``P = Id - A^+ A`` in exact mode, and
``z_n = B_alpha A x_n``, ``P = Id - B_alpha A`` in regularized mode.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractViolation, TrainingStalled
from .filters import FilterSpec, filtered_projector_apply
from .linop import DenseOperator
from .network import ApproximateProjector, ExactProjector, FeedForwardNet, spectral_norm

log = logging.getLogger(__name__)

MAX_HALVINGS = 20
# gradients below this (relative to the phantom norm) are roundoff at a stationary point
STATIONARY_GRAD = 1e-10


@dataclass
class TrainingSet:
    phantoms: np.ndarray

    def __post_init__(self):
        self.phantoms = np.atleast_2d(np.asarray(self.phantoms, dtype=float))
        if self.phantoms.shape[0] < 1:
            raise ContractViolation("training set needs at least one phantom")

    @property
    def count(self) -> int:
        return self.phantoms.shape[0]

    @property
    def dim(self) -> int:
        return self.phantoms.shape[1]


@dataclass(frozen=True)
class Regularized:
    """Train against ``B_alpha A x_n`` instead of ``A^+ A x_n``."""

    alpha: float
    filter: FilterSpec = field(default_factory=FilterSpec.tsvd)

    def __post_init__(self):
        if not self.alpha > 0:
            raise ContractViolation(f"alpha must be positive, got {self.alpha}")


EXACT = "exact"


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.1
    epochs: int = 500
    reg_weight: float = 0.0
    seed: int = 0
    mode: str | Regularized = EXACT

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ContractViolation("learning_rate must be positive")
        if self.epochs < 1:
            raise ContractViolation("epochs must be positive")
        if self.reg_weight < 0:
            raise ContractViolation("reg_weight must be nonnegative")
        if self.mode != EXACT and not isinstance(self.mode, Regularized):
            raise ContractViolation(f"unknown training mode {self.mode!r}")

    @staticmethod
    def parse_mode(text: str):
        """``exact`` or ``regularized:<alpha>[:<filter>]``."""
        if text == EXACT:
            return EXACT
        head, _, rest = text.partition(":")
        if head != "regularized" or not rest:
            raise ContractViolation(f"mode must be 'exact' or 'regularized:<alpha>', got {text!r}")
        alpha, _, filt = rest.partition(":")
        return Regularized(float(alpha), FilterSpec.parse(filt) if filt else FilterSpec.tsvd())


@dataclass(frozen=True)
class LossBreakdown:
    data_term: float
    reg_term: float

    @property
    def total(self) -> float:
        return self.data_term + self.reg_term

    def to_row(self, epoch: int):
        return {"epoch": epoch, "data_term": self.data_term, "reg_term": self.reg_term, "total": self.total}


@dataclass
class Gradients:
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def flat(self) -> np.ndarray:
        return np.concatenate([np.concatenate([w.ravel(), b]) for w, b in zip(self.weights, self.biases)])


# ----------------------------------------------------------------------- losses
class _Objective:
    """Inputs, projector and spectral-norm warm starts for one training problem."""

    def __init__(self, op: DenseOperator, tset: TrainingSet, mode, reg_weight: float):
        if tset.dim != op.cols:
            raise ContractViolation(f"phantom dimension {tset.dim} != operator columns {op.cols}")
        self.op = op
        self.x = tset.phantoms
        self.reg_weight = reg_weight
        if mode == EXACT:
            self.projector = ExactProjector()
            self.z = op.proj_ker_perp(self.x)
        else:
            self.projector = ApproximateProjector(mode.filter, mode.alpha)
            self.z = filtered_projector_apply(mode.filter, op, mode.alpha, self.x)
        self._v0: dict[int, np.ndarray] = {}

    def _norms(self, net: FeedForwardNet):
        out = []
        for i, layer in enumerate(net.layers):
            sn = spectral_norm(layer.weight, v0=self._v0.get(i))
            if sn.value > 0:
                self._v0[i] = sn.right
            out.append(sn)
        return out

    def loss(self, net: FeedForwardNet) -> LossBreakdown:
        out = self.z + self.projector.apply(self.op, net.forward(self.z))
        data = 0.5 * float(np.sum((self.x - out) ** 2))
        reg = 0.0
        if self.reg_weight:
            reg = self.reg_weight * float(np.prod([sn.value for sn in self._norms(net)]))
        return LossBreakdown(data, reg)

    def loss_and_grad(self, net: FeedForwardNet):
        nz, cache = net.forward_cached(self.z)
        resid = self.x - (self.z + self.projector.apply(self.op, nz))
        data = 0.5 * float(np.sum(resid**2))
        gw, gb = net.backward(cache, -self.projector.adjoint(self.op, resid))
        reg = 0.0
        if self.reg_weight:
            norms = self._norms(net)
            values = np.array([sn.value for sn in norms])
            reg = self.reg_weight * float(np.prod(values))
            for i, sn in enumerate(norms):
                others = float(np.prod(np.delete(values, i)))
                if others:
                    gw[i] = gw[i] + self.reg_weight * others * np.outer(sn.left, sn.right)
        return LossBreakdown(data, reg), Gradients(gw, gb)


def loss_exact(net: FeedForwardNet, op: DenseOperator, tset: TrainingSet, reg_weight: float = 0.0) -> LossBreakdown:
    return _Objective(op, tset, EXACT, reg_weight).loss(net)


def loss_regularized(
    net: FeedForwardNet, op: DenseOperator, filter: FilterSpec, alpha: float, tset: TrainingSet,
    reg_weight: float = 0.0,
) -> LossBreakdown:
    return _Objective(op, tset, Regularized(alpha, filter), reg_weight).loss(net)


def grad(net: FeedForwardNet, op: DenseOperator, tset: TrainingSet, config: TrainConfig) -> Gradients:
    """Exact gradient of the configured loss by reverse-mode accumulation."""
    return _Objective(op, tset, config.mode, config.reg_weight).loss_and_grad(net)[1]


def train(net: FeedForwardNet, op: DenseOperator, tset: TrainingSet, config: TrainConfig):
    """Full-batch gradient descent with step halving on any loss increase.

    Every epoch starts from ``config.learning_rate`` and halves until the
    total loss does not increase. When no step helps but the gradient is at
    roundoff level the point is stationary and the remaining epochs repeat
    the current loss instead of raising. Returns ``(trained_net, history)`` where
    ``history`` holds ``epochs + 1`` loss breakdowns; the input network is
    left untouched.
    """
    net = net.copy()
    obj = _Objective(op, tset, config.mode, config.reg_weight)
    current, g = obj.loss_and_grad(net)
    history = [current]
    theta = net.get_flat()
    grad_floor = STATIONARY_GRAD * max(1.0, float(np.linalg.norm(tset.phantoms)))
    for epoch in range(1, config.epochs + 1):
        step = config.learning_rate
        direction = g.flat()
        for _ in range(MAX_HALVINGS + 1):
            net.set_flat(theta - step * direction)
            candidate, cand_g = obj.loss_and_grad(net)
            if candidate.total <= current.total:
                break
            step *= 0.5
        else:
            net.set_flat(theta)
            if np.max(np.abs(direction), initial=0.0) <= grad_floor:
                log.debug("stationary at epoch %d", epoch)
                history.extend([current] * (config.epochs + 1 - epoch))
                break
            raise TrainingStalled(f"no descent step found at epoch {epoch} after {MAX_HALVINGS} halvings", history)
        theta = net.get_flat()
        current, g = candidate, cand_g
        history.append(current)
        if epoch % 100 == 0:
            log.debug("epoch %d: data %.6g reg %.6g", epoch, current.data_term, current.reg_term)
    return net, history


# --------------------------------------------------------------------- phantoms
def piecewise_constant_phantoms(n: int, count: int, seed: int = 0, plateaus=(3, 6)) -> np.ndarray:
    """Random step signals with 3 to 6 plateaus and levels in ``[-1, 1]``."""
    lo, hi = plateaus
    if not 1 <= lo <= hi <= n:
        raise ContractViolation(f"plateau range {plateaus} invalid for length {n}")
    rng = np.random.default_rng(seed)
    out = np.empty((count, n))
    for i in range(count):
        k = int(rng.integers(lo, hi + 1))
        cuts = np.sort(rng.choice(np.arange(1, n), size=k - 1, replace=False))
        levels = rng.uniform(-1.0, 1.0, size=k)
        out[i] = np.repeat(levels, np.diff(np.concatenate([[0], cuts, [n]])))
    return out
