import numpy as np
import pytest

from nullspace_reg.linop import DenseOperator
from nullspace_reg.training import TrainConfig, TrainingSet, grad


def rank_deficient(rng, m, n, rank):
    """Random m x n matrix of exact rank ``rank`` with singular values in [0.1, 10]."""
    u, _ = np.linalg.qr(rng.standard_normal((m, rank)))
    v, _ = np.linalg.qr(rng.standard_normal((n, rank)))
    s = np.exp(rng.uniform(np.log(0.1), np.log(10.0), rank))
    return (u * s) @ v.T


ACCEPTANCE = pytest.StashKey[dict]()


@pytest.fixture
def acceptance(request):
    """``record(number, passed, detail)`` for the acceptance summary."""
    results = request.config.stash.setdefault(ACCEPTANCE, {})

    def record(number, passed, detail):
        results[number] = (bool(passed), detail)
        print(f"criterion {number}: {'PASS' if passed else 'FAIL'} {detail}")

    return record


def pytest_terminal_summary(terminalreporter, config):
    results = config.stash.get(ACCEPTANCE, {})
    if not results:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for number in sorted(results):
        passed, detail = results[number]
        terminalreporter.write_line(f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def oracle_loss(theta, dims, acts, a, x, reg_weight, q=None, z=None):
    """Loss written directly from the definition with numpy primitives."""
    pinv = np.linalg.pinv(a)
    if q is None:
        q = np.eye(a.shape[1]) - pinv @ a
        z = x @ (pinv @ a).T
    h, k, weights, pattern = z, 0, [], []
    for i, act in enumerate(acts):
        w = theta[k:k + dims[i + 1] * dims[i]].reshape(dims[i + 1], dims[i])
        k += w.size
        b = theta[k:k + dims[i + 1]]
        k += dims[i + 1]
        pre = h @ w.T + b
        pattern.append(pre > 0)
        h = np.maximum(pre, 0) if act == "relu" else pre
        weights.append(w)
    out = z + h @ q.T
    data = 0.5 * np.sum((x - out) ** 2)
    reg = reg_weight * np.prod([np.linalg.norm(w, 2) for w in weights])
    return data + reg, np.concatenate([p.ravel() for p in pattern])


def fd_check(net, a, x, reg_weight, mode="exact", h=1e-5):
    """Relative error of ``grad`` against central differences of ``oracle_loss``.

    Parameters whose perturbation flips a ReLU pattern are masked out. A
    regularized ``mode`` must use the Tikhonov filter, which the oracle
    builds with a linear solve.
    """
    op = DenseOperator(a)
    dims = net.dims
    acts = [str(act) for act in net.activations]
    q = z = None
    if mode != "exact":
        # B_alpha A for the oracle, by explicit Tikhonov solve
        n = a.shape[1]
        bA = np.linalg.solve(a.T @ a + mode.alpha * np.eye(n), a.T @ a)
        q, z = np.eye(n) - bA, x @ bA.T
    config = TrainConfig(reg_weight=reg_weight, mode=mode)
    g = grad(net, op, TrainingSet(x), config).flat()
    theta = net.get_flat()
    fd = np.zeros_like(theta)
    skip = np.zeros(theta.size, dtype=bool)
    for i in range(theta.size):
        tp, tm = theta.copy(), theta.copy()
        tp[i] += h
        tm[i] -= h
        lp, pp = oracle_loss(tp, dims, acts, a, x, reg_weight, q, z)
        lm, pm = oracle_loss(tm, dims, acts, a, x, reg_weight, q, z)
        skip[i] = not np.array_equal(pp, pm)
        fd[i] = (lp - lm) / (2 * h)
    keep = ~skip
    rel = np.abs(g - fd)[keep] / np.maximum(np.abs(fd[keep]), 1e-3 * np.max(np.abs(fd)))
    return rel, keep
