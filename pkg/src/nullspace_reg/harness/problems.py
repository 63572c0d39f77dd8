"""Synthetic rank-deficient operators and exact-norm noise."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from ..errors import ConfigError, ContractViolation
from ..linop import DenseOperator


@dataclass(frozen=True)
class Deconvolution:
    """Circular Gaussian blur on ``R^n`` observed at ``keep_rows`` random samples."""

    n: int
    kernel_width: float = 2.0
    keep_rows: int = 32


@dataclass(frozen=True)
class RandomRankDeficient:
    """``U_r diag(sigma) V_r^T`` with log-spaced ``sigma`` in ``[1e-2, 1]``."""

    m: int
    n: int
    rank: int


@dataclass(frozen=True)
class ProblemSpec:
    kind: Deconvolution | RandomRankDeficient
    seed: int = 0

    def __post_init__(self):
        k = self.kind
        if isinstance(k, Deconvolution):
            if k.n < 2 or not 0 < k.keep_rows < k.n:
                raise ConfigError(f"deconvolution needs 0 < keep_rows < n, got keep_rows={k.keep_rows}, n={k.n}")
            if not k.kernel_width > 0:
                raise ConfigError("kernel_width must be positive")
        elif isinstance(k, RandomRankDeficient):
            if min(k.m, k.n) < 1 or not 0 < k.rank < min(k.m, k.n):
                raise ConfigError(f"need 0 < rank < min(m, n), got rank={k.rank} for {k.m}x{k.n}")
        else:
            raise ConfigError(f"unknown problem kind {k!r}")

    @classmethod
    def parse(cls, text: str, seed: int = 0) -> "ProblemSpec":
        """``random:<m>,<n>,<rank>`` or ``deconv:<n>,<width>,<keep_rows>``."""
        name, _, args = text.partition(":")
        parts = [p for p in args.split(",") if p]
        try:
            if name == "random" and len(parts) == 3:
                return cls(RandomRankDeficient(*map(int, parts)), seed)
            if name == "deconv" and len(parts) == 3:
                return cls(Deconvolution(int(parts[0]), float(parts[1]), int(parts[2])), seed)
        except ValueError as exc:
            raise ConfigError(f"bad problem spec {text!r}: {exc}") from None
        raise ConfigError(f"problem spec must be 'random:m,n,rank' or 'deconv:n,width,keep', got {text!r}")

    def to_dict(self) -> dict:
        kind = "random" if isinstance(self.kind, RandomRankDeficient) else "deconv"
        return {"kind": kind, **asdict(self.kind), "seed": self.seed}

    @classmethod
    def from_dict(cls, d: dict) -> "ProblemSpec":
        d = dict(d)
        kind = d.pop("kind")
        seed = d.pop("seed", 0)
        if kind == "random":
            return cls(RandomRankDeficient(**d), seed)
        if kind == "deconv":
            return cls(Deconvolution(**d), seed)
        raise ConfigError(f"unknown problem kind {kind!r}")


def _haar_columns(rng, rows, cols):
    q, r = np.linalg.qr(rng.standard_normal((rows, cols)))
    return q * np.sign(np.diag(r))


def make_problem(spec: ProblemSpec) -> DenseOperator:
    rng = np.random.default_rng(spec.seed)
    k = spec.kind
    if isinstance(k, RandomRankDeficient):
        u = _haar_columns(rng, k.m, k.rank)
        v = _haar_columns(rng, k.n, k.rank)
        sigma = np.logspace(0.0, -2.0, k.rank)
        return DenseOperator((u * sigma) @ v.T)
    idx = np.arange(k.n)
    d = np.abs(idx[:, None] - idx[None, :])
    d = np.minimum(d, k.n - d)
    blur = np.exp(-0.5 * (d / k.kernel_width) ** 2)
    blur /= blur.sum(axis=1, keepdims=True)
    rows = np.sort(rng.choice(k.n, size=k.keep_rows, replace=False))
    return DenseOperator(blur[rows])


def add_noise(y, delta: float, seed) -> np.ndarray:
    """``y + delta * xi / ||xi||`` with Gaussian ``xi``, so the error norm is exactly ``delta``.

    ``seed`` may be an int, a sequence of ints or a numpy ``Generator``.
    """
    if not delta > 0:
        raise ContractViolation(f"delta must be positive, got {delta}")
    y = np.asarray(y, dtype=float)
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    while True:
        xi = rng.standard_normal(y.shape)
        nrm = np.linalg.norm(xi)
        if nrm > 0:
            return y + (delta / nrm) * xi
