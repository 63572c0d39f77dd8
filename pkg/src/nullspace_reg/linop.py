"""Dense linear operators with a cached thin SVD.

Everything spectral in the package (pseudoinverse, kernel projector,
filter-based reconstructions, fractional powers of ``A^T A``) is evaluated
from the retained singular triples of a :class:`DenseOperator`.
"""

from __future__ import annotations

import hashlib
import threading
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ContractViolation, RejectedInput

DEFAULT_RANK_TOL = 1e-12


@dataclass(frozen=True)
class SvdFactorization:
    """Thin SVD restricted to singular values above the rank cutoff.

    ``left_vectors`` is ``m x r``, ``right_vectors`` is ``n x r`` and
    ``singular_values`` is sorted nonincreasing.
    """

    left_vectors: np.ndarray
    singular_values: np.ndarray
    right_vectors: np.ndarray

    @property
    def numerical_rank(self) -> int:
        return int(self.singular_values.size)


class DenseOperator:
    """An ``m x n`` real matrix acting from ``R^n`` to ``R^m``.

    Parameters
    ----------
    entries : array_like, shape (m, n)
        Matrix entries. Copied and frozen.
    rank_tol : float
        Singular values ``<= rank_tol * sigma_1`` are treated as zero.
    """

    def __init__(self, entries, rank_tol: float = DEFAULT_RANK_TOL):
        a = np.array(entries, dtype=float, copy=True)
        if a.ndim == 1:
            a = a.reshape(1, -1)
        if a.ndim != 2 or a.size == 0:
            raise ContractViolation(f"operator entries must be a nonempty matrix, got shape {a.shape}")
        if not 0.0 <= rank_tol < 1.0:
            raise ContractViolation(f"rank_tol must lie in [0, 1), got {rank_tol}")
        a.setflags(write=False)
        self._entries = a
        self.rank_tol = float(rank_tol)
        self._svd: SvdFactorization | None = None
        self._lock = threading.Lock()

    # ------------------------------------------------------------------ basics
    @property
    def entries(self) -> np.ndarray:
        return self._entries

    @property
    def rows(self) -> int:
        return self._entries.shape[0]

    @property
    def cols(self) -> int:
        return self._entries.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self._entries.shape

    def __repr__(self):
        return f"DenseOperator({self.rows}x{self.cols}, rank_tol={self.rank_tol:g})"

    @classmethod
    def from_csv(cls, path, rank_tol: float = DEFAULT_RANK_TOL) -> "DenseOperator":
        """Load a matrix stored as comma-separated rows, one row per line."""
        text = Path(path).read_text()
        rows = [line for line in text.splitlines() if line.strip()]
        data = [[float(v) for v in line.split(",")] for line in rows]
        widths = {len(r) for r in data}
        if len(widths) != 1:
            raise RejectedInput(f"{path}: rows have differing lengths {sorted(widths)}")
        return cls(np.array(data), rank_tol=rank_tol)

    def to_csv(self, path) -> None:
        np.savetxt(path, self._entries, delimiter=",", fmt="%.17g")

    def fingerprint(self) -> str:
        """SHA-256 over shape and float64 little-endian entries."""
        h = hashlib.sha256()
        h.update(np.asarray(self.shape, dtype="<i8").tobytes())
        h.update(np.ascontiguousarray(self._entries, dtype="<f8").tobytes())
        return h.hexdigest()

    # --------------------------------------------------------------------- SVD
    def svd(self) -> SvdFactorization:
        """Return the cached factorization, computing it on first use."""
        if self._svd is None:
            with self._lock:
                if self._svd is None:
                    self._svd = _thin_svd(self._entries, self.rank_tol)
        return self._svd

    @property
    def norm(self) -> float:
        """Spectral norm ``sigma_1`` (0 for the zero matrix)."""
        s = self.svd().singular_values
        return float(s[0]) if s.size else 0.0

    @property
    def lambda_max(self) -> float:
        """Largest eigenvalue of ``A^T A``."""
        return self.norm**2

    # -------------------------------------------------------------- actions
    def apply(self, x) -> np.ndarray:
        x = self._check(x, self.cols, "apply")
        return x @ self._entries.T if x.ndim == 2 else self._entries @ x

    def apply_adjoint(self, y) -> np.ndarray:
        y = self._check(y, self.rows, "apply_adjoint")
        return y @ self._entries if y.ndim == 2 else self._entries.T @ y

    def spectral_apply(self, fn, y) -> np.ndarray:
        """Evaluate ``sum_i fn(sigma_i) <u_i, y> v_i`` over retained triples.

        ``fn`` receives the singular-value vector and returns per-triple
        coefficients. Batches are rows of a 2-D ``y``.
        """
        y = self._check(y, self.rows, "spectral_apply")
        f = self.svd()
        coef = np.asarray(fn(f.singular_values), dtype=float)
        return ((y @ f.left_vectors) * coef) @ f.right_vectors.T

    def pinv_apply(self, y) -> np.ndarray:
        """Minimal-norm least-squares solution ``A^+ y``."""
        return self.spectral_apply(lambda s: 1.0 / s, y)

    def proj_ker(self, x) -> np.ndarray:
        """Orthogonal projection onto ``ker(A)``: ``x - V V^T x``."""
        x = self._check(x, self.cols, "proj_ker")
        v = self.svd().right_vectors
        return x - (x @ v) @ v.T

    def proj_ker_perp(self, x) -> np.ndarray:
        """Projection onto ``ker(A)^perp = ran(A^+)``, i.e. ``A^+ A x``."""
        x = self._check(x, self.cols, "proj_ker_perp")
        v = self.svd().right_vectors
        return (x @ v) @ v.T

    def frac_power_apply(self, mu: float, w) -> np.ndarray:
        """``(A^T A)^mu w``; zero on the numerical kernel."""
        if not mu > 0:
            raise ContractViolation(f"mu must be positive, got {mu}")
        w = self._check(w, self.cols, "frac_power_apply")
        f = self.svd()
        v = f.right_vectors
        return ((w @ v) * f.singular_values ** (2.0 * mu)) @ v.T

    def _check(self, x, dim, where):
        x = np.asarray(x, dtype=float)
        if x.ndim not in (1, 2) or x.shape[-1] != dim:
            raise ContractViolation(f"{where}: expected trailing dimension {dim}, got shape {x.shape}")
        return x


def _thin_svd(a: np.ndarray, rank_tol: float) -> SvdFactorization:
    if not np.all(np.isfinite(a)):
        raise RejectedInput("operator has non-finite entries")
    u, s, vt = np.linalg.svd(a, full_matrices=False)
    if s.size and s[0] > 0:
        r = int(np.count_nonzero(s > rank_tol * s[0]))
    else:
        r = 0
    u = np.ascontiguousarray(u[:, :r])
    v = np.ascontiguousarray(vt[:r].T)
    s = s[:r].copy()
    for arr in (u, s, v):
        arr.setflags(write=False)
    return SvdFactorization(u, s, v)


# Module-level spellings of the operator methods.
def svd(op: DenseOperator) -> SvdFactorization:
    return op.svd()


def apply(op: DenseOperator, x) -> np.ndarray:
    return op.apply(x)


def apply_adjoint(op: DenseOperator, y) -> np.ndarray:
    return op.apply_adjoint(y)


def pinv_apply(op: DenseOperator, y) -> np.ndarray:
    return op.pinv_apply(y)


def proj_ker(op: DenseOperator, x) -> np.ndarray:
    return op.proj_ker(x)


def frac_power_apply(op: DenseOperator, mu: float, w) -> np.ndarray:
    return op.frac_power_apply(mu, w)
