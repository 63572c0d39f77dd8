"""Feed-forward networks and the null-space wrapper ``x + P N(x)``.

Vectors are processed in row-batch form: a 2-D input holds one sample per
row, so an affine layer evaluates ``x @ W.T + b``.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ContractViolation, IntegrityError, NumericalError
from .filters import FilterSpec, filtered_projector_apply
from .linop import DenseOperator


# ------------------------------------------------------------------ activations
@dataclass(frozen=True)
class Activation:
    """Componentwise 1-Lipschitz nonlinearity: ``relu``, ``identity`` or ``leaky_relu``."""

    kind: str = "relu"
    slope: float = 0.0

    def __post_init__(self):
        if self.kind not in ("relu", "identity", "leaky_relu"):
            raise ContractViolation(f"unsupported activation {self.kind!r}")
        if self.kind == "leaky_relu" and not 0.0 < self.slope <= 1.0:
            raise ContractViolation(f"leaky_relu slope must lie in (0, 1], got {self.slope}")

    @classmethod
    def parse(cls, text: str) -> "Activation":
        name, _, arg = text.partition(":")
        if name == "leaky_relu":
            return cls(name, float(arg or 0.01))
        return cls(name)

    def __str__(self):
        return f"leaky_relu:{self.slope!r}" if self.kind == "leaky_relu" else self.kind

    def __call__(self, z):
        if self.kind == "identity":
            return z
        if self.kind == "relu":
            return np.maximum(z, 0.0)
        return np.where(z > 0, z, self.slope * z)

    def derivative(self, z):
        """Derivative, with the subgradient at 0 taken from the left branch."""
        if self.kind == "identity":
            return np.ones_like(z)
        if self.kind == "relu":
            return (z > 0).astype(float)
        return np.where(z > 0, 1.0, self.slope)


RELU = Activation("relu")
IDENTITY = Activation("identity")


# ----------------------------------------------------------------------- layers
@dataclass
class AffineLayer:
    weight: np.ndarray
    bias: np.ndarray

    def __post_init__(self):
        self.weight = np.array(self.weight, dtype=float)
        self.bias = np.array(self.bias, dtype=float).ravel()
        if self.weight.ndim != 2 or self.bias.shape != (self.weight.shape[0],):
            raise ContractViolation(
                f"layer shapes inconsistent: weight {self.weight.shape}, bias {self.bias.shape}"
            )
        if not (np.all(np.isfinite(self.weight)) and np.all(np.isfinite(self.bias))):
            raise ContractViolation("layer parameters must be finite")

    @property
    def in_dim(self) -> int:
        return self.weight.shape[1]

    @property
    def out_dim(self) -> int:
        return self.weight.shape[0]


@dataclass
class FeedForwardNet:
    """``sigma_L o W_L o ... o sigma_1 o W_1`` on ``R^n``."""

    layers: list[AffineLayer]
    activations: list[Activation]
    seed: int | None = None

    def __post_init__(self):
        if not self.layers:
            raise ContractViolation("network needs at least one layer")
        if len(self.activations) != len(self.layers):
            raise ContractViolation("one activation per layer required")
        self.activations = [a if isinstance(a, Activation) else Activation.parse(a) for a in self.activations]
        for prev, nxt in zip(self.layers, self.layers[1:]):
            if prev.out_dim != nxt.in_dim:
                raise ContractViolation(f"layer widths do not chain: {prev.out_dim} -> {nxt.in_dim}")
        if self.layers[0].in_dim != self.layers[-1].out_dim:
            raise ContractViolation("network must map R^n to R^n")

    # construction -----------------------------------------------------------
    @classmethod
    def initialize(cls, dims, activations=None, seed: int = 0) -> "FeedForwardNet":
        """Glorot-uniform weights, zero biases.

        ``dims`` lists layer widths ``[n, h_1, ..., n]``. Default activations
        are ReLU on hidden layers and identity on the output layer.
        """
        dims = list(dims)
        if len(dims) < 2:
            raise ContractViolation("dims needs at least input and output width")
        rng = np.random.default_rng(seed)
        layers = []
        for fan_in, fan_out in zip(dims[:-1], dims[1:]):
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            layers.append(AffineLayer(rng.uniform(-limit, limit, (fan_out, fan_in)), np.zeros(fan_out)))
        if activations is None:
            activations = [RELU] * (len(layers) - 1) + [IDENTITY]
        return cls(layers, list(activations), seed=seed)

    @classmethod
    def zeros(cls, dims, activations=None) -> "FeedForwardNet":
        net = cls.initialize(dims, activations)
        for layer in net.layers:
            layer.weight[:] = 0.0
        net.seed = None
        return net

    @classmethod
    def default(cls, n: int, depth: int = 3, seed: int = 0) -> "FeedForwardNet":
        return cls.initialize([n] * (depth + 1), seed=seed)

    def copy(self) -> "FeedForwardNet":
        return copy.deepcopy(self)

    # shape ------------------------------------------------------------------
    @property
    def depth(self) -> int:
        return len(self.layers)

    @property
    def dim(self) -> int:
        return self.layers[0].in_dim

    @property
    def dims(self) -> list[int]:
        return [self.layers[0].in_dim] + [layer.out_dim for layer in self.layers]

    @property
    def num_parameters(self) -> int:
        return sum(layer.weight.size + layer.bias.size for layer in self.layers)

    def get_flat(self) -> np.ndarray:
        return np.concatenate([np.concatenate([l.weight.ravel(), l.bias]) for l in self.layers])

    def set_flat(self, theta) -> None:
        theta = np.asarray(theta, dtype=float)
        if theta.size != self.num_parameters:
            raise ContractViolation(f"expected {self.num_parameters} parameters, got {theta.size}")
        i = 0
        for layer in self.layers:
            k = layer.weight.size
            layer.weight[:] = theta[i : i + k].reshape(layer.weight.shape)
            i += k
            layer.bias[:] = theta[i : i + layer.bias.size]
            i += layer.bias.size

    # evaluation -------------------------------------------------------------
    def forward(self, x) -> np.ndarray:
        return self.forward_cached(x)[0]

    __call__ = forward

    def forward_cached(self, x):
        """Evaluate and keep ``(inputs, preactivations)`` per layer for backprop."""
        a = np.asarray(x, dtype=float)
        if a.ndim not in (1, 2) or a.shape[-1] != self.dim:
            raise ContractViolation(f"network expects trailing dimension {self.dim}, got shape {a.shape}")
        inputs, pre = [], []
        for layer, act in zip(self.layers, self.activations):
            inputs.append(a)
            z = a @ layer.weight.T + layer.bias
            pre.append(z)
            a = act(z)
        return a, (inputs, pre)

    def backward(self, cache, grad_out):
        """Pull ``grad_out`` (same shape as the output) back to parameter gradients.

        Returns ``(weight_grads, bias_grads)``; batch rows are summed.
        """
        inputs, pre = cache
        delta = np.asarray(grad_out, dtype=float)
        gw = [None] * self.depth
        gb = [None] * self.depth
        for i in range(self.depth - 1, -1, -1):
            delta = delta * self.activations[i].derivative(pre[i])
            a = inputs[i]
            if delta.ndim == 1:
                gw[i] = np.outer(delta, a)
                gb[i] = delta.copy()
            else:
                gw[i] = delta.T @ a
                gb[i] = delta.sum(axis=0)
            if i:
                delta = delta @ self.layers[i].weight
        return gw, gb

    # persistence ------------------------------------------------------------
    def to_dict(self) -> dict:
        return {
            "dims": self.dims,
            "activations": [str(a) for a in self.activations],
            "weights": [layer.weight.tolist() for layer in self.layers],
            "biases": [layer.bias.tolist() for layer in self.layers],
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FeedForwardNet":
        layers = [AffineLayer(np.array(w, dtype=float), b) for w, b in zip(d["weights"], d["biases"])]
        net = cls(layers, [Activation.parse(a) for a in d["activations"]], seed=d.get("seed"))
        if d.get("dims") is not None and list(d["dims"]) != net.dims:
            raise ContractViolation(f"dims {d['dims']} disagree with stored weights {net.dims}")
        return net


def forward(net: FeedForwardNet, x) -> np.ndarray:
    return net.forward(x)


# --------------------------------------------------------------- spectral norm
@dataclass(frozen=True)
class SpectralNorm:
    value: float
    left: np.ndarray
    right: np.ndarray
    iterations: int


def spectral_norm(m, v0=None, tol: float = 1e-10, max_iter: int = 10_000) -> SpectralNorm:
    """Largest singular value of ``m`` by power iteration on ``m^T m``.

    Iterates until ``||m^T u - s v|| <= tol * s``, which bounds the relative
    error of ``s`` by roughly ``tol**2``. ``v0`` warm-starts the right
    vector. The converged pair ``(u, v)`` gives the subgradient ``u v^T`` of
    the norm.
    """
    m = np.asarray(m, dtype=float)
    if m.ndim != 2:
        raise ContractViolation("spectral_norm expects a matrix")
    if not np.all(np.isfinite(m)):
        raise ContractViolation("spectral_norm: non-finite entries")
    rows, cols = m.shape
    if not np.any(m):
        u = np.zeros(rows)
        v = np.zeros(cols)
        u[0] = v[0] = 1.0
        return SpectralNorm(0.0, u, v, 0)

    if v0 is None or not np.any(v0):
        v = np.random.default_rng(0).standard_normal(cols)
    else:
        v = np.array(v0, dtype=float)
    v /= np.linalg.norm(v)
    s = 0.0
    for it in range(1, max_iter + 1):
        mv = m @ v
        s_prev, s = s, np.linalg.norm(mv)
        if s == 0.0:
            # start vector in the kernel; restart from a fresh direction
            v = np.random.default_rng(it).standard_normal(cols)
            v /= np.linalg.norm(v)
            continue
        u = mv / s
        w = m.T @ u
        resid = np.linalg.norm(w - s * v)
        v = w / np.linalg.norm(w)
        # stagnation of s at machine precision also ends the loop: with a
        # nearly repeated top singular value the vector converges too slowly
        # but any vector in the cluster yields the same value and a valid
        # subgradient up to that accuracy
        if resid <= tol * s or abs(s - s_prev) <= 4 * np.finfo(float).eps * s:
            # one more half-step keeps (u, v, s) mutually consistent
            mv = m @ v
            s = np.linalg.norm(mv)
            return SpectralNorm(float(s), mv / s, v, it)
    raise NumericalError(f"power iteration did not converge in {max_iter} iterations", estimate=float(s))


def lipschitz_bound(net: FeedForwardNet) -> float:
    """Product of layer spectral norms, an upper bound for the Lipschitz constant."""
    out = 1.0
    for layer in net.layers:
        out *= spectral_norm(layer.weight).value
    return out


# ------------------------------------------------------------------ projectors
@dataclass(frozen=True)
class ExactProjector:
    """``P_ker(A) = Id - A^+ A``."""

    def apply(self, op: DenseOperator, x):
        return op.proj_ker(x)

    adjoint = apply

    def to_dict(self):
        return {"mode": "exact"}


@dataclass(frozen=True)
class ApproximateProjector:
    """``Q = Id - B_phi A`` with ``B_phi`` a filter-based reconstructor."""

    filter: FilterSpec
    phi_alpha: float

    def __post_init__(self):
        if not self.phi_alpha > 0:
            raise ContractViolation(f"phi_alpha must be positive, got {self.phi_alpha}")

    def apply(self, op: DenseOperator, x):
        x = np.asarray(x, dtype=float)
        return x - filtered_projector_apply(self.filter, op, self.phi_alpha, x)

    # B_phi A = g(A^T A) A^T A is symmetric
    adjoint = apply

    def to_dict(self):
        return {"mode": "approximate", "filter": self.filter.family, "step": self.filter.step,
                "phi_alpha": self.phi_alpha}


def projector_from_dict(d: dict | None):
    if not d or d.get("mode", "exact") == "exact":
        return ExactProjector()
    return ApproximateProjector(FilterSpec(d["filter"], step=d.get("step")), float(d["phi_alpha"]))


@dataclass
class NullSpaceNetwork:
    """``Phi(x) = x + P(N(x))`` where ``P`` projects onto (an approximation of) ``ker(A)``."""

    base: FeedForwardNet
    operator: DenseOperator
    projector: ExactProjector | ApproximateProjector = field(default_factory=ExactProjector)

    def __post_init__(self):
        if self.base.dim != self.operator.cols:
            raise ContractViolation(
                f"network dimension {self.base.dim} does not match operator columns {self.operator.cols}"
            )

    def residual(self, x) -> np.ndarray:
        """The correction ``P(N(x))``."""
        return self.projector.apply(self.operator, self.base.forward(x))

    def apply(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return x + self.residual(x)

    __call__ = apply

    def with_projector(self, projector) -> "NullSpaceNetwork":
        return NullSpaceNetwork(self.base, self.operator, projector)

    def to_dict(self) -> dict:
        d = self.base.to_dict()
        d["operator_hash"] = self.operator.fingerprint()
        d["projector"] = self.projector.to_dict()
        return d

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load(cls, path, operator: DenseOperator) -> "NullSpaceNetwork":
        d = json.loads(Path(path).read_text())
        return cls.from_dict(d, operator)

    @classmethod
    def from_dict(cls, d: dict, operator: DenseOperator) -> "NullSpaceNetwork":
        stored = d.get("operator_hash")
        if stored is not None and stored != operator.fingerprint():
            raise IntegrityError("network file was trained for a different operator (hash mismatch)")
        return cls(FeedForwardNet.from_dict(d), operator, projector_from_dict(d.get("projector")))


def nsn_apply(phi: NullSpaceNetwork, x) -> np.ndarray:
    return phi.apply(x)
