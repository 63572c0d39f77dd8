import numpy as np
import pytest

from nullspace_reg.errors import ContractViolation
from nullspace_reg.filters import FilterSpec, reconstruct
from nullspace_reg.linop import DenseOperator
from nullspace_reg.network import IDENTITY, RELU, AffineLayer, FeedForwardNet, NullSpaceNetwork, lipschitz_bound
from nullspace_reg.regpipeline import (
    MRegularizer,
    ParamChoice,
    alpha_star,
    approx_projector,
    m_generalized_inverse,
    reconstruct_two_step,
    reconstruct_two_step_approx,
    source_element,
)

from conftest import rank_deficient


def make_reg(rng, m=5, n=8, rank=3, filt=None, zero=False, seed=0):
    op = DenseOperator(rank_deficient(rng, m, n, rank))
    net = FeedForwardNet.zeros([n, n, n]) if zero else FeedForwardNet.default(n, seed=seed)
    if not zero:
        for layer in net.layers:
            layer.bias[:] = 0.3 * rng.standard_normal(layer.out_dim)
    return MRegularizer(filt or FilterSpec.tikhonov(), op, NullSpaceNetwork(net, op))


# -------------------------------------------------------------- alpha_star
def test_alpha_star_examples():
    assert alpha_star(ParamChoice(0.5), 0.01) == pytest.approx(0.01, rel=1e-14)
    assert alpha_star(ParamChoice(1.0), 0.001) == pytest.approx(0.01, rel=1e-12)
    for mu in (0.25, 1.0, 3.0):
        assert alpha_star(ParamChoice(mu, 0.2), 0.2) == pytest.approx(1.0)
    assert alpha_star(ParamChoice(0.5, constant_d=3.0), 0.01) == pytest.approx(0.03)


def test_alpha_star_rejects_bad_input():
    with pytest.raises(ContractViolation):
        alpha_star(ParamChoice(0.5), 0.0)
    with pytest.raises(ContractViolation):
        ParamChoice(0.0)
    with pytest.raises(ContractViolation):
        ParamChoice(1.0, source_radius_rho=-1)


def test_param_choice_rate():
    assert ParamChoice(0.5).rate == pytest.approx(0.5)
    assert ParamChoice(1.0).rate == pytest.approx(2 / 3)
    assert ParamChoice(1.0).exponent == pytest.approx(2 / 3)


# --------------------------------------------------- generalized inverse
def test_m_inverse_zero_net_is_pinv(rng):
    reg = make_reg(rng, zero=True)
    y = rng.standard_normal(5)
    np.testing.assert_allclose(m_generalized_inverse(reg, y), np.linalg.pinv(reg.operator.entries) @ y, atol=1e-12)


def test_m_inverse_constant_net_at_zero(rng):
    op = DenseOperator(rank_deficient(rng, 3, 6, 2))
    c = rng.standard_normal(6)
    net = FeedForwardNet([AffineLayer(np.zeros((6, 6)), c)], [IDENTITY])
    reg = MRegularizer(FilterSpec.tsvd(), op, NullSpaceNetwork(net, op))
    np.testing.assert_allclose(m_generalized_inverse(reg, np.zeros(3)), op.proj_ker(c), atol=1e-14)


def test_m_inverse_row_operator():
    op = DenseOperator([[1.0, 1.0]])
    reg = MRegularizer(FilterSpec.tsvd(), op, NullSpaceNetwork(FeedForwardNet.zeros([2, 2]), op))
    np.testing.assert_allclose(m_generalized_inverse(reg, [2.0]), [1.0, 1.0], atol=1e-15)


def test_m_inverse_solves_normal_equation(rng):
    reg = make_reg(rng)
    a = reg.operator.entries
    y = rng.standard_normal(5)
    x = m_generalized_inverse(reg, y)
    np.testing.assert_allclose(a.T @ a @ x, a.T @ y, atol=1e-10)


def test_regularizer_operator_mismatch(rng):
    reg = make_reg(rng)
    with pytest.raises(ContractViolation):
        MRegularizer(reg.filter, DenseOperator(2 * reg.operator.entries), reg.phi)


# --------------------------------------------------------------- two-step
def test_two_step_zero_net(rng):
    reg = make_reg(rng, zero=True)
    y = rng.standard_normal(5)
    np.testing.assert_allclose(reconstruct_two_step(reg, 0.1, y), reconstruct(reg.filter, reg.operator, 0.1, y),
                               atol=1e-15)


def test_two_step_tsvd_exact_regime(rng):
    reg = make_reg(rng, filt=FilterSpec.tsvd())
    alpha = 0.5 * reg.operator.svd().singular_values[-1] ** 2
    y = reg.operator.apply(rng.standard_normal(8))
    np.testing.assert_allclose(reconstruct_two_step(reg, alpha, y), m_generalized_inverse(reg, y), atol=1e-12)


def test_two_step_zero_data_zero_bias(rng):
    op = DenseOperator(rank_deficient(rng, 3, 6, 2))
    reg = MRegularizer(FilterSpec.tikhonov(), op, NullSpaceNetwork(FeedForwardNet.default(6, seed=1), op))
    np.testing.assert_array_equal(reconstruct_two_step(reg, 0.1, np.zeros(3)), np.zeros(6))


@pytest.mark.parametrize("filt", [FilterSpec.tikhonov(), FilterSpec.tsvd(), FilterSpec.landweber()])
def test_ker_perp_consistency(rng, filt):
    reg = make_reg(rng, filt=filt)
    y = rng.standard_normal(5)
    alpha = 0.05
    x = reconstruct_two_step(reg, alpha, y)
    np.testing.assert_allclose(reg.operator.proj_ker_perp(x), reconstruct(filt, reg.operator, alpha, y), atol=1e-10)


def test_pointwise_convergence_tikhonov(rng):
    # Tikhonov bias is about alpha / s_min^3 here, so keep s_min near 1
    u, _ = np.linalg.qr(rng.standard_normal((5, 3)))
    v, _ = np.linalg.qr(rng.standard_normal((8, 3)))
    op = DenseOperator((u * [2.0, 1.0, 0.5]) @ v.T)
    reg = MRegularizer(FilterSpec.tikhonov(), op, NullSpaceNetwork(FeedForwardNet.default(8, seed=2), op))
    y = rng.standard_normal(5)
    target = m_generalized_inverse(reg, y)
    errs = [np.linalg.norm(reconstruct_two_step(reg, a, y) - target) for a in np.logspace(-1, -8, 8)]
    assert errs[-1] < 1e-6
    assert all(b <= a for a, b in zip(errs, errs[1:]))


def test_lipschitz_composition_bound(rng):
    reg = make_reg(rng)
    lip = 1.0 + lipschitz_bound(reg.phi.base)
    x = rng.standard_normal(8)
    y = reg.operator.apply(x)
    xp = reg.operator.pinv_apply(y)
    for delta in (1e-1, 1e-2, 1e-3):
        for _ in range(10):
            e = rng.standard_normal(5)
            y_d = y + delta * e / np.linalg.norm(e)
            b = reconstruct(reg.filter, reg.operator, delta, y_d)
            lhs = np.linalg.norm(reg.phi(b) - reg.phi(xp))
            assert lhs <= lip * np.linalg.norm(b - xp) + 1e-9


# ---------------------------------------------------------- source element
def test_source_element_examples(rng):
    op = DenseOperator(np.diag([2.0, 0.0]))
    zero = NullSpaceNetwork(FeedForwardNet.zeros([2, 2]), op)
    np.testing.assert_allclose(source_element(op, zero, 1.0, [1.0, 0.0]), [4.0, 0.0], atol=1e-14)
    relu_net = NullSpaceNetwork(FeedForwardNet.default(2, seed=3), op)
    np.testing.assert_array_equal(source_element(op, relu_net, 0.5, np.zeros(2)), np.zeros(2))


def test_source_element_ker_perp_part(rng):
    op = DenseOperator([[1.0, 1.0]])
    net = FeedForwardNet.default(2, seed=5)
    for layer in net.layers:
        layer.bias[:] = rng.standard_normal(layer.out_dim)
    phi = NullSpaceNetwork(net, op)
    w = np.array([0.3, -1.2])
    x = source_element(op, phi, 0.5, w)
    np.testing.assert_allclose(op.proj_ker_perp(x), op.frac_power_apply(0.5, w), atol=1e-14)


# ---------------------------------------------------- approximate projector
def test_approx_projector_scalar_tikhonov():
    op = DenseOperator([[1.0]])
    for a in (1.0, 0.1, 1e-3):
        q = approx_projector(op, FilterSpec.tikhonov(), a)
        assert q([1.0])[0] == pytest.approx(a / (1 + a), rel=1e-12)
        assert q.deviation == pytest.approx(a / (1 + a), rel=1e-8)


def test_approx_projector_tsvd_exact(rng):
    op = DenseOperator(rank_deficient(rng, 5, 8, 3))
    q = approx_projector(op, FilterSpec.tsvd(), 0.5 * op.svd().singular_values[-1] ** 2)
    np.testing.assert_allclose(q.matrix(), op.proj_ker(np.eye(8)), atol=1e-12)
    assert q.deviation <= 1e-10


@pytest.mark.parametrize("filt", [FilterSpec.tikhonov(), FilterSpec.tsvd(), FilterSpec.landweber()])
def test_approx_projector_fixes_kernel(rng, filt):
    op = DenseOperator(rank_deficient(rng, 5, 8, 3))
    x = op.proj_ker(rng.standard_normal(8))
    np.testing.assert_allclose(approx_projector(op, filt, 0.3)(x), x, atol=1e-12)


def test_approx_projector_deviation_matches_svd(rng):
    op = DenseOperator(rank_deficient(rng, 5, 8, 3))
    q = approx_projector(op, FilterSpec.tikhonov(), 0.2)
    exact = np.linalg.norm(q.matrix() - op.proj_ker(np.eye(8)), 2)
    assert q.deviation == pytest.approx(exact, rel=1e-6)
    # Tikhonov: the deviation is phi / (phi + s_min^2)
    s_min = op.svd().singular_values[-1]
    assert exact == pytest.approx(0.2 / (0.2 + s_min**2), rel=1e-10)


def test_approx_projector_deviation_to_zero(rng):
    op = DenseOperator(rank_deficient(rng, 5, 8, 3))
    devs = [approx_projector(op, FilterSpec.tikhonov(), a).deviation for a in np.logspace(0, -8, 9)]
    assert all(b < a for a, b in zip(devs, devs[1:]))
    assert devs[-1] < 1e-6


def test_two_step_approx_exact_regime(rng):
    reg = make_reg(rng, filt=FilterSpec.tsvd())
    phi_alpha = 0.5 * reg.operator.svd().singular_values[-1] ** 2
    y = rng.standard_normal(5)
    np.testing.assert_allclose(reconstruct_two_step_approx(reg, 0.05, phi_alpha, y),
                               reconstruct_two_step(reg, 0.05, y), atol=1e-12)


def test_two_step_approx_zero_net(rng):
    reg = make_reg(rng, zero=True)
    y = rng.standard_normal(5)
    for pa in (1.0, 1e-3):
        np.testing.assert_array_equal(reconstruct_two_step_approx(reg, 0.1, pa, y, FilterSpec.tikhonov()),
                                      reconstruct(reg.filter, reg.operator, 0.1, y))


def test_two_step_approx_deviation_bound(rng):
    reg = make_reg(rng)
    for pa in (1.0, 0.1, 0.01):
        q = approx_projector(reg.operator, FilterSpec.tikhonov(), pa)
        for _ in range(5):
            y = rng.standard_normal(5)
            approx = reconstruct_two_step_approx(reg, 0.1, pa, y, FilterSpec.tikhonov())
            exact = reconstruct_two_step(reg, 0.1, y)
            n_b = reg.phi.base(reconstruct(reg.filter, reg.operator, 0.1, y))
            assert np.linalg.norm(approx - exact) <= q.deviation * np.linalg.norm(n_b) + 1e-9


def test_two_step_approx_rejects_bad_phi(rng):
    reg = make_reg(rng)
    with pytest.raises(ContractViolation):
        reconstruct_two_step_approx(reg, 0.1, 0.0, np.zeros(5))
