import math

import numpy as np
import pytest

from liesac import liegroup as lg
from liesac.liegroup import GroupKind

from conftest import random_algebra, random_group, series_dexp, series_dexpinv, series_exp

ALL_KINDS = [GroupKind.SO3, GroupKind.SE2, GroupKind.SE3]


# ---------------------------------------------------------------- hat / vee

def test_hat_so3_matches_definition():
    expected = np.array([[0.0, -3.0, 2.0], [3.0, 0.0, -1.0], [-2.0, 1.0, 0.0]])
    assert np.array_equal(lg.hat(GroupKind.SO3, [1.0, 2.0, 3.0]), expected)


def test_hat_zero_is_zero():
    for kind in ALL_KINDS:
        assert np.all(lg.hat(kind, np.zeros(kind.algebra_dim)) == 0.0)


def test_hat_se3_pure_translation():
    m = lg.hat(GroupKind.SE3, [0, 0, 0, 1, 0, 0])
    expected = np.zeros((4, 4))
    expected[0, 3] = 1.0
    assert np.array_equal(m, expected)


@pytest.mark.parametrize("kind", ALL_KINDS)
def test_hat_vee_roundtrip_and_linearity(kind, rng):
    for _ in range(20):
        x = rng.normal(size=kind.algebra_dim)
        y = rng.normal(size=kind.algebra_dim)
        assert np.allclose(lg.vee(kind, lg.hat(kind, x)), x, atol=1e-14)
        lhs = lg.hat(kind, 2.0 * x - 3.0 * y)
        rhs = 2.0 * lg.hat(kind, x) - 3.0 * lg.hat(kind, y)
        assert np.allclose(lhs, rhs, atol=1e-13)


def test_hat_dimension_mismatch():
    with pytest.raises(lg.LieGroupError):
        lg.hat(GroupKind.SE3, [1.0, 2.0, 3.0])
    with pytest.raises(lg.LieGroupError):
        lg.vee(GroupKind.SO3, np.zeros((4, 4)))


# ---------------------------------------------------------------- compose / inverse

@pytest.mark.parametrize("kind", ALL_KINDS)
def test_group_axioms(kind, rng):
    eye = lg.identity(kind)
    for _ in range(10):
        a = random_group(kind, rng)
        b = random_group(kind, rng)
        assert np.allclose(lg.compose(a, lg.inverse(kind, a)), eye, atol=1e-12)
        assert np.allclose(lg.compose(eye, b), b, atol=0.0)
        # dense matrix-multiply oracle
        assert np.allclose(lg.compose(a, b), np.asarray(a) @ np.asarray(b), atol=0.0)


def test_group_element_wrapper(rng):
    a = lg.GroupElement.exp(GroupKind.SE3, random_algebra(GroupKind.SE3, rng))
    b = lg.GroupElement.exp(GroupKind.SE3, random_algebra(GroupKind.SE3, rng))
    c = a.compose(b)
    c.validate()
    assert np.allclose(c.matrix, a.matrix @ b.matrix)
    assert np.allclose(a.compose(a.inverse()).matrix, np.eye(4), atol=1e-12)
    with pytest.raises(lg.LieGroupError):
        a.compose(lg.GroupElement.identity(GroupKind.SE2))
    with pytest.raises(lg.LieGroupError):
        lg.GroupElement.from_matrix(GroupKind.SO3, 1.5 * np.eye(3))


# ---------------------------------------------------------------- exp / log

@pytest.mark.parametrize("kind", ALL_KINDS)
def test_exp_matches_matrix_series(kind, rng):
    assert np.allclose(lg.exp(kind, np.zeros(kind.algebra_dim)), lg.identity(kind))
    for _ in range(50):
        x = random_algebra(kind, rng, 0.0, math.pi - 0.05)
        assert np.abs(lg.exp(kind, x) - series_exp(kind, x)).max() < 1e-12


def test_exp_so3_axis_aligned():
    theta = 0.7
    R = lg.exp(GroupKind.SO3, [theta, 0.0, 0.0])
    expected = np.array([
        [1.0, 0.0, 0.0],
        [0.0, math.cos(theta), -math.sin(theta)],
        [0.0, math.sin(theta), math.cos(theta)],
    ])
    assert np.allclose(R, expected, atol=1e-15)


def test_log_identity_and_se2_pure_rotation():
    for kind in ALL_KINDS:
        assert np.allclose(lg.log(kind, lg.identity(kind)), 0.0)
    g = lg.exp(GroupKind.SE2, [1.0, 0.0, 0.0])
    assert np.allclose(lg.log(GroupKind.SE2, g), [1.0, 0.0, 0.0], atol=1e-14)


@pytest.mark.parametrize("kind", ALL_KINDS)
def test_exp_log_roundtrip(kind, rng):
    for _ in range(100):
        x = random_algebra(kind, rng, 0.0, math.pi - 0.1)
        assert np.abs(lg.log(kind, lg.exp(kind, x)) - x).max() < 1e-9


@pytest.mark.parametrize("kind", ALL_KINDS)
def test_log_roundtrip_small_rotation(kind, rng):
    for mag in [0.0, 1e-10, 1e-6, 1e-4, 0.01, 0.5]:
        x = random_algebra(kind, rng, mag, mag)
        g = lg.exp(kind, x)
        assert np.abs(lg.exp(kind, lg.log(kind, g)) - g).max() < 1e-12


@pytest.mark.parametrize("kind", ALL_KINDS)
def test_log_branch_cut_rejected(kind, rng):
    x = random_algebra(kind, rng, math.pi - 1e-8, math.pi - 1e-8)
    with pytest.raises(lg.LogBranchError):
        lg.log(kind, lg.exp(kind, x))


# ---------------------------------------------------------------- ad / Ad

def test_ad_zero_and_so3_hat(rng):
    for kind in ALL_KINDS:
        assert np.all(lg.ad(kind, np.zeros(kind.algebra_dim)) == 0.0)
    w = rng.normal(size=3)
    assert np.array_equal(lg.ad(GroupKind.SO3, w), lg.hat(GroupKind.SO3, w))


@pytest.mark.parametrize("kind", ALL_KINDS)
def test_ad_matches_matrix_bracket(kind, rng):
    for _ in range(30):
        x = rng.normal(size=kind.algebra_dim)
        y = rng.normal(size=kind.algebra_dim)
        bracket = lg.hat(kind, x) @ lg.hat(kind, y) - lg.hat(kind, y) @ lg.hat(kind, x)
        assert np.allclose(lg.ad(kind, x) @ y, lg.vee(kind, bracket), atol=1e-12)


@pytest.mark.parametrize("kind", ALL_KINDS)
def test_Ad_conjugation_identity(kind, rng):
    for _ in range(30):
        g = random_group(kind, rng)
        x = rng.normal(size=kind.algebra_dim)
        conj = np.asarray(g) @ lg.hat(kind, x) @ lg.inverse(kind, g)
        assert np.abs(lg.Ad(kind, g) @ x - lg.vee(kind, conj)).max() < 1e-10


@pytest.mark.parametrize("kind", ALL_KINDS)
def test_Ad_of_exp_is_expm_of_ad(kind, rng):
    from scipy.linalg import expm
    for _ in range(10):
        x = random_algebra(kind, rng, 0.0, 2.0)
        assert np.allclose(lg.Ad(kind, lg.exp(kind, x)), expm(lg.ad(kind, x)), atol=1e-11)


# ---------------------------------------------------------------- dexp / dexpinv

@pytest.mark.parametrize("kind", ALL_KINDS)
def test_dexp_identity_at_zero(kind):
    assert np.allclose(lg.dexp(kind, np.zeros(kind.algebra_dim)), np.eye(kind.algebra_dim))
    assert np.allclose(lg.dexpinv(kind, np.zeros(kind.algebra_dim)), np.eye(kind.algebra_dim))


@pytest.mark.parametrize("kind", ALL_KINDS)
def test_dexp_matches_series(kind, rng):
    for _ in range(60):
        x = random_algebra(kind, rng, 0.1, 1.0)
        assert np.abs(lg.dexp(kind, x) - series_dexp(kind, x, 25)).max() < 1e-10


@pytest.mark.parametrize("kind", ALL_KINDS)
def test_dexpinv_matches_bernoulli_series(kind, rng):
    for _ in range(60):
        x = random_algebra(kind, rng, 0.0, 1.0)
        assert np.abs(lg.dexpinv(kind, x) - series_dexpinv(kind, x, 20)).max() < 1e-8


@pytest.mark.parametrize("kind", ALL_KINDS)
def test_dexpinv_times_dexp_is_identity(kind, rng):
    eye = np.eye(kind.algebra_dim)
    for _ in range(100):
        x = random_algebra(kind, rng, 0.1, 3.0)
        err = np.abs(lg.dexpinv(kind, x) @ lg.dexp(kind, x) - eye).max()
        assert err < 1e-10


@pytest.mark.parametrize("kind", ALL_KINDS)
def test_dexp_small_rotation_limits(kind, rng):
    # Taylor branch must agree with the series oracle across the switch point.
    for mag in [0.0, 1e-8, 1e-5, 1e-4, 1e-3, 0.01, 0.05, 0.1, 0.149, 0.151, 0.2]:
        x = random_algebra(kind, rng, mag, mag)
        assert np.abs(lg.dexp(kind, x) - series_dexp(kind, x, 25)).max() < 1e-13
        assert np.abs(lg.dexpinv(kind, x) - series_dexpinv(kind, x, 25)).max() < 1e-12


def test_dexp_se2_zero_rotation_limit():
    # at w = 0 the series terminates: ad^2 = 0, so dexp = I + ad/2 exactly
    x = np.array([0.0, 1.0, 2.0])
    d = lg.dexp(GroupKind.SE2, x)
    assert np.allclose(d, np.eye(3) + 0.5 * lg.ad(GroupKind.SE2, x), atol=1e-15)
    assert np.allclose(d, series_dexp(GroupKind.SE2, x, 25), atol=1e-15)
    di = lg.dexpinv(GroupKind.SE2, x)
    expected = np.array([[1.0, 0.0, 0.0], [-1.0, 1.0, 0.0], [0.5, 0.0, 1.0]])
    assert np.allclose(di, expected, atol=1e-15)


@pytest.mark.parametrize("kind", ALL_KINDS)
def test_dexpinv_singularity_rejected(kind):
    x = np.zeros(kind.algebra_dim)
    x[0] = 2.0 * math.pi
    with pytest.raises(lg.DexpSingularError):
        lg.dexpinv(kind, x)


@pytest.mark.parametrize("kind", ALL_KINDS)
def test_dexp_directional_derivative_convention(kind, rng):
    # (1/s) log(exp(x)^-1 exp(x + s eta)) -> dexp(-x) eta   (central difference)
    s = 1e-5
    for _ in range(20):
        x = random_algebra(kind, rng, 0.1, 2.0)
        eta = rng.normal(size=kind.algebra_dim)
        gi = lg.inverse(kind, lg.exp(kind, x))
        plus = lg.log(kind, gi @ lg.exp(kind, x + s * eta))
        minus = lg.log(kind, gi @ lg.exp(kind, x - s * eta))
        fd = (plus - minus) / (2.0 * s)
        expected = lg.dexp(kind, -x) @ eta
        assert np.abs(fd - expected).max() < 1e-5 * max(1.0, np.abs(expected).max())
