"""Shared numeric helpers: series oracles and random samplers."""

import math
from fractions import Fraction

import numpy as np
import pytest

from liesac import liegroup as lg


def bernoulli_numbers(n):
    """First n+1 Bernoulli numbers (B1 = -1/2 convention), exact fractions."""
    out = [Fraction(1)]
    for m in range(1, n + 1):
        acc = Fraction(0)
        for k in range(m):
            acc += Fraction(math.comb(m + 1, k)) * out[k]
        out.append(-acc / (m + 1))
    return out


_BERNOULLI = bernoulli_numbers(32)


def series_dexp(kind, x, terms=25):
    """Truncated sum_j ad_x^j / (j+1)!  -- independent of the closed forms."""
    A = lg.ad(kind, x)
    out = np.eye(A.shape[0])
    term = np.eye(A.shape[0])
    for j in range(1, terms):
        term = term @ A
        out = out + term / math.factorial(j + 1)
    return out


def series_dexpinv(kind, x, terms=20):
    """Truncated Bernoulli series sum_j B_j/j! ad_x^j."""
    A = lg.ad(kind, x)
    out = np.zeros_like(A)
    term = np.eye(A.shape[0])
    for j in range(terms):
        out = out + float(_BERNOULLI[j]) / math.factorial(j) * term
        term = term @ A
    return out


def series_exp(kind, x, terms=30):
    """Truncated matrix-exponential power series of hat(x)."""
    X = lg.hat(kind, x)
    out = np.eye(X.shape[0])
    term = np.eye(X.shape[0])
    for j in range(1, terms):
        term = term @ X / j
        out = out + term
    return out


def random_algebra(kind, rng, w_lo=0.0, w_hi=math.pi - 0.1, trans_scale=2.0):
    """Random algebra vector with rotation magnitude uniform in [w_lo, w_hi]."""
    mag = rng.uniform(w_lo, w_hi)
    if kind is lg.GroupKind.SE2:
        w = mag * rng.choice([-1.0, 1.0])
        return np.array([w, *rng.uniform(-trans_scale, trans_scale, 2)])
    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    w = mag * axis
    if kind is lg.GroupKind.SO3:
        return w
    return np.concatenate([w, rng.uniform(-trans_scale, trans_scale, 3)])


def random_group(kind, rng, w_hi=math.pi - 0.2):
    return lg.exp(kind, random_algebra(kind, rng, 0.0, w_hi))


@pytest.fixture
def rng():
    return np.random.default_rng(20260809)
