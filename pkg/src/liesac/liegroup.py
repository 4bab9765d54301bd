"""Matrix Lie group kernel for SO(3), SE(2) and SE(3).

Group elements are stored as dense matrices (3x3 for SO(3)/SE(2), 4x4 for
SE(3)); Lie algebra elements use minimal coordinates:

    SO(3): omega = (w1, w2, w3)
    SE(2): (w, u, v)      -- scalar rotation rate first, then translation
    SE(3): (w1, w2, w3, v1, v2, v3)

All dexp/dexpinv matrices act on these coordinates, so the column order
above is load-bearing. dexp follows the series sum_j ad^j / (j+1)!, i.e.

    (1/s) * log(exp(x)^-1 exp(x + s*eta)) -> dexp(-x) @ eta

as s -> 0 (left-trivialized derivative of exp).

The per-kind kernels are numba-compiled and shared by the simulation hot
paths; the public functions dispatch on GroupKind and validate shapes.
Scalar coefficients of the closed forms are 0/0 at zero rotation and lose
precision well before that, so each one switches to a Taylor expansion
below ``_TAYLOR_SWITCH``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from numba import njit

__all__ = [
    "GroupKind",
    "GroupElement",
    "LieGroupError",
    "LogBranchError",
    "DexpSingularError",
    "hat",
    "vee",
    "exp",
    "log",
    "ad",
    "Ad",
    "dexp",
    "dexpinv",
    "identity",
    "inverse",
    "compose",
    "check_group_matrix",
]


class LieGroupError(ValueError):
    """Base error for invalid group/algebra inputs."""


class LogBranchError(LieGroupError):
    """Rotation angle at or beyond the principal branch of log."""


class DexpSingularError(LieGroupError):
    """Rotation magnitude at or beyond the 2*pi pole of dexpinv."""


class GroupKind(enum.Enum):
    SO3 = "SO3"
    SE2 = "SE2"
    SE3 = "SE3"

    @property
    def algebra_dim(self) -> int:
        return 6 if self is GroupKind.SE3 else 3

    @property
    def matrix_dim(self) -> int:
        return 4 if self is GroupKind.SE3 else 3


# --------------------------------------------------------------------------
# scalar coefficient helpers
#
# Each is analytic at t = 0; the closed form divides ~t^k quantities and is
# evaluated by Taylor expansion below the switch point (truncation error
# there is ~1e-13, smaller than the cancellation error of the closed form).
# --------------------------------------------------------------------------

_TAYLOR_SWITCH = 0.15
_BRANCH_TOL = 1e-6
_TWO_PI = 2.0 * math.pi


@njit(cache=True)
def _sinc(t):
    # sin(t)/t
    if t < _TAYLOR_SWITCH:
        s = t * t
        return 1.0 - s / 6.0 * (1.0 - s / 20.0 * (1.0 - s / 42.0 * (1.0 - s / 72.0)))
    return math.sin(t) / t


@njit(cache=True)
def _acos_c(t):
    # (1 - cos t)/t^2
    if t < _TAYLOR_SWITCH:
        s = t * t
        return 0.5 * (1.0 - s / 12.0 * (1.0 - s / 30.0 * (1.0 - s / 56.0 * (1.0 - s / 90.0))))
    return (1.0 - math.cos(t)) / (t * t)


@njit(cache=True)
def _bsin_c(t):
    # (t - sin t)/t^3
    if t < _TAYLOR_SWITCH:
        s = t * t
        return (1.0 - s / 20.0 * (1.0 - s / 42.0 * (1.0 - s / 72.0 * (1.0 - s / 110.0)))) / 6.0
    return (t - math.sin(t)) / (t * t * t)


@njit(cache=True)
def _d1_c(t):
    # (t/2 sin t + cos t - 1) / (t^2 (cos t - 1)); dexpinv w-hat^2 coefficient
    if t < _TAYLOR_SWITCH:
        s = t * t
        return (1.0 / 12.0 + s / 720.0 + s * s / 30240.0
                + s * s * s / 1209600.0 + s * s * s * s / 47900160.0)
    c = math.cos(t)
    return (0.5 * t * math.sin(t) + c - 1.0) / (t * t * (c - 1.0))


@njit(cache=True)
def _c1_c(t):
    # (2 - 2 cos t - t/2 sin t)/t^2
    if t < _TAYLOR_SWITCH:
        s = t * t
        return 0.5 - s * s / 720.0 + s * s * s / 20160.0 - s * s * s * s / 1209600.0
    return (2.0 - 2.0 * math.cos(t) - 0.5 * t * math.sin(t)) / (t * t)


@njit(cache=True)
def _c3_c(t):
    # (1 - cos t - t/2 sin t)/t^4
    if t < _TAYLOR_SWITCH:
        s = t * t
        return 1.0 / 24.0 - s / 360.0 + s * s / 13440.0 - s * s * s / 907200.0
    return (1.0 - math.cos(t) - 0.5 * t * math.sin(t)) / (t ** 4)


@njit(cache=True)
def _c4_c(t):
    # (t - 3/2 sin t + t/2 cos t)/t^5
    if t < _TAYLOR_SWITCH:
        s = t * t
        return 1.0 / 120.0 - s / 2520.0 + s * s / 120960.0 - s * s * s / 9979200.0
    return (t - 1.5 * math.sin(t) + 0.5 * t * math.cos(t)) / (t ** 5)


@njit(cache=True)
def _d2_c(t):
    # (t^2/4 + t/4 sin t + cos t - 1) / (t^4 (cos t - 1))
    if t < _TAYLOR_SWITCH:
        s = t * t
        return -(1.0 / 720.0 + s / 15120.0 + s * s / 403200.0 + s * s * s / 11975040.0)
    c = math.cos(t)
    return (0.25 * t * t + 0.25 * t * math.sin(t) + c - 1.0) / (t ** 4 * (c - 1.0))


@njit(cache=True)
def _qcot_c(t):
    # (t/2) sin t / (1 - cos t)  ==  (t/2) cot(t/2)
    if t < _TAYLOR_SWITCH:
        s = t * t
        return 1.0 - s / 12.0 - s * s / 720.0 - s * s * s / 30240.0
    return 0.5 * t * math.sin(t) / (1.0 - math.cos(t))


@njit(cache=True)
def _ese2_c(t):
    # (t sin t + 2 cos t - 2) / (t cos t - t); odd in t
    if abs(t) < _TAYLOR_SWITCH:
        s = t * t
        return t * (1.0 / 6.0 + s / 360.0 + s * s / 15120.0 + s * s * s / 604800.0)
    return (t * math.sin(t) + 2.0 * math.cos(t) - 2.0) / (t * math.cos(t) - t)


# --------------------------------------------------------------------------
# numba kernels, one family per group
# --------------------------------------------------------------------------

@njit(cache=True)
def _skew(w):
    out = np.zeros((3, 3))
    out[0, 1] = -w[2]
    out[0, 2] = w[1]
    out[1, 0] = w[2]
    out[1, 2] = -w[0]
    out[2, 0] = -w[1]
    out[2, 1] = w[0]
    return out


@njit(cache=True)
def _so3_exp(w):
    t = math.sqrt(w[0] * w[0] + w[1] * w[1] + w[2] * w[2])
    W = _skew(w)
    return np.eye(3) + _sinc(t) * W + _acos_c(t) * (W @ W)


@njit(cache=True)
def _so3_dexp(w):
    # equals the translation factor V of the SE(3) exponential
    t = math.sqrt(w[0] * w[0] + w[1] * w[1] + w[2] * w[2])
    W = _skew(w)
    return np.eye(3) + _acos_c(t) * W + _bsin_c(t) * (W @ W)


@njit(cache=True)
def _so3_dexpinv(w):
    t = math.sqrt(w[0] * w[0] + w[1] * w[1] + w[2] * w[2])
    if t >= _TWO_PI - _BRANCH_TOL:
        raise DexpSingularError("dexpinv singular: rotation magnitude at or beyond 2*pi")
    W = _skew(w)
    return np.eye(3) - 0.5 * W + _d1_c(t) * (W @ W)


@njit(cache=True)
def _so3_log(R):
    a0 = R[2, 1] - R[1, 2]
    a1 = R[0, 2] - R[2, 0]
    a2 = R[1, 0] - R[0, 1]
    s = 0.5 * math.sqrt(a0 * a0 + a1 * a1 + a2 * a2)  # sin(theta)
    c = 0.5 * (R[0, 0] + R[1, 1] + R[2, 2] - 1.0)     # cos(theta)
    if c > 1.0:
        c = 1.0
    elif c < -1.0:
        c = -1.0
    t = math.atan2(s, c)
    if t >= math.pi - _BRANCH_TOL:
        raise LogBranchError("rotation angle too close to pi for the principal log")
    out = np.empty(3)
    scale = 0.5 if t < 1e-8 else 0.5 * t / s
    out[0] = scale * a0
    out[1] = scale * a1
    out[2] = scale * a2
    return out


@njit(cache=True)
def _se2_exp(x):
    w = x[0]
    t = abs(w)
    si = _sinc(t)
    oc = _acos_c(t) * w
    out = np.eye(3)
    cw = math.cos(w)
    sw = math.sin(w)
    out[0, 0] = cw
    out[1, 1] = cw
    out[1, 0] = sw
    out[0, 1] = -sw
    out[0, 2] = si * x[1] - oc * x[2]
    out[1, 2] = oc * x[1] + si * x[2]
    return out


@njit(cache=True)
def _se2_log(m):
    w = math.atan2(m[1, 0], m[0, 0])
    if abs(w) >= math.pi - _BRANCH_TOL:
        raise LogBranchError("SE(2) rotation angle too close to +/-pi for the principal log")
    t = abs(w)
    si = _sinc(t)
    oc = _acos_c(t) * w
    den = si * si + oc * oc
    out = np.empty(3)
    out[0] = w
    out[1] = (si * m[0, 2] + oc * m[1, 2]) / den
    out[2] = (-oc * m[0, 2] + si * m[1, 2]) / den
    return out


@njit(cache=True)
def _se2_ad(x):
    out = np.zeros((3, 3))
    out[1, 0] = x[2]
    out[1, 2] = -x[0]
    out[2, 0] = -x[1]
    out[2, 1] = x[0]
    return out


@njit(cache=True)
def _se2_dexp(x):
    w, u, v = x[0], x[1], x[2]
    t = abs(w)
    bs = _bsin_c(t)
    oc2 = _acos_c(t)
    out = np.zeros((3, 3))
    out[0, 0] = 1.0
    out[1, 0] = u * bs * w + v * oc2   # (u(w - sin w) + v(1 - cos w))/w^2
    out[2, 0] = v * bs * w - u * oc2
    si = _sinc(t)
    oc = oc2 * w
    out[1, 1] = si
    out[2, 2] = si
    out[1, 2] = -oc
    out[2, 1] = oc
    return out


@njit(cache=True)
def _se2_dexpinv(x):
    w, u, v = x[0], x[1], x[2]
    if abs(w) >= _TWO_PI - _BRANCH_TOL:
        raise DexpSingularError("dexpinv singular: rotation magnitude at or beyond 2*pi")
    e = _ese2_c(w)
    q = _qcot_c(abs(w))
    out = np.empty((3, 3))
    out[0, 0] = 1.0
    out[0, 1] = 0.0
    out[0, 2] = 0.0
    out[1, 0] = -0.5 * v + 0.5 * u * e
    out[1, 1] = q
    out[1, 2] = 0.5 * w
    out[2, 0] = 0.5 * u + 0.5 * v * e
    out[2, 1] = -0.5 * w
    out[2, 2] = q
    return out


@njit(cache=True)
def _se2_inverse(m):
    out = np.eye(3)
    out[0, 0] = m[0, 0]
    out[0, 1] = m[1, 0]
    out[1, 0] = m[0, 1]
    out[1, 1] = m[1, 1]
    out[0, 2] = -(m[0, 0] * m[0, 2] + m[1, 0] * m[1, 2])
    out[1, 2] = -(m[0, 1] * m[0, 2] + m[1, 1] * m[1, 2])
    return out


@njit(cache=True)
def _se3_exp(x):
    out = np.eye(4)
    out[:3, :3] = _so3_exp(x[:3])
    out[:3, 3] = _so3_dexp(x[:3]) @ x[3:]
    return out


@njit(cache=True)
def _se3_log(m):
    w = _so3_log(m[:3, :3])
    t = math.sqrt(w[0] * w[0] + w[1] * w[1] + w[2] * w[2])
    W = _skew(w)
    Vinv = np.eye(3) - 0.5 * W + _d1_c(t) * (W @ W)
    v = Vinv @ m[:3, 3].copy()
    out = np.empty(6)
    out[:3] = w
    out[3:] = v
    return out


@njit(cache=True)
def _se3_ad(x):
    out = np.zeros((6, 6))
    out[:3, :3] = _skew(x[:3])
    out[3:, 3:] = _skew(x[:3])
    out[3:, :3] = _skew(x[3:])
    return out


@njit(cache=True)
def _se3_dexp(x):
    w, v = x[:3], x[3:]
    t = math.sqrt(w[0] * w[0] + w[1] * w[1] + w[2] * w[2])
    W = _skew(w)
    V = _skew(v)
    WV = W @ V
    VW = V @ W
    b1 = np.eye(3) + _acos_c(t) * W + _bsin_c(t) * (W @ W)
    b2 = (_c1_c(t) * V
          + _bsin_c(t) * (WV + VW)
          + _c3_c(t) * (W @ WV + WV @ W + VW @ W)
          + _c4_c(t) * (W @ WV @ W + WV @ W @ W))
    out = np.zeros((6, 6))
    out[:3, :3] = b1
    out[3:, 3:] = b1
    out[3:, :3] = b2
    return out


@njit(cache=True)
def _se3_dexpinv(x):
    w, v = x[:3], x[3:]
    t = math.sqrt(w[0] * w[0] + w[1] * w[1] + w[2] * w[2])
    if t >= _TWO_PI - _BRANCH_TOL:
        raise DexpSingularError("dexpinv singular: rotation magnitude at or beyond 2*pi")
    W = _skew(w)
    V = _skew(v)
    WV = W @ V
    VW = V @ W
    d1 = _d1_c(t)
    b3 = np.eye(3) - 0.5 * W + d1 * (W @ W)
    b4 = (-0.5 * V + d1 * (WV + VW)
          + _d2_c(t) * (W @ WV @ W + WV @ W @ W))
    out = np.zeros((6, 6))
    out[:3, :3] = b3
    out[3:, 3:] = b3
    out[3:, :3] = b4
    return out


@njit(cache=True)
def _se3_inverse(m):
    out = np.eye(4)
    Rt = m[:3, :3].T.copy()
    out[:3, :3] = Rt
    out[:3, 3] = -(Rt @ m[:3, 3].copy())
    return out


# --------------------------------------------------------------------------
# public dispatchers
# --------------------------------------------------------------------------

def _coords(kind: GroupKind, x) -> np.ndarray:
    x = np.ascontiguousarray(x, dtype=float)
    if x.shape != (kind.algebra_dim,):
        raise LieGroupError(
            f"{kind.value} algebra vector must have shape ({kind.algebra_dim},), got {x.shape}")
    return x


def hat(kind: GroupKind, x) -> np.ndarray:
    """Map minimal coordinates to the matrix Lie algebra."""
    x = _coords(kind, x)
    if kind is GroupKind.SO3:
        return _skew(x)
    if kind is GroupKind.SE2:
        w, u, v = x
        return np.array([[0.0, -w, u], [w, 0.0, v], [0.0, 0.0, 0.0]])
    out = np.zeros((4, 4))
    out[:3, :3] = _skew(x[:3])
    out[:3, 3] = x[3:]
    return out


def vee(kind: GroupKind, m) -> np.ndarray:
    """Inverse of hat."""
    m = np.asarray(m, dtype=float)
    if m.shape != (kind.matrix_dim, kind.matrix_dim):
        raise LieGroupError(
            f"{kind.value} algebra matrix must be {kind.matrix_dim}x{kind.matrix_dim}, got {m.shape}")
    if kind is GroupKind.SO3:
        return np.array([m[2, 1], m[0, 2], m[1, 0]])
    if kind is GroupKind.SE2:
        return np.array([m[1, 0], m[0, 2], m[1, 2]])
    return np.array([m[2, 1], m[0, 2], m[1, 0], m[0, 3], m[1, 3], m[2, 3]])


def ad(kind: GroupKind, x) -> np.ndarray:
    """Matrix of the Lie bracket ad_x(y) = [x, y] in minimal coordinates."""
    x = _coords(kind, x)
    if kind is GroupKind.SO3:
        return _skew(x)
    if kind is GroupKind.SE2:
        return _se2_ad(x)
    return _se3_ad(x)


def Ad(kind: GroupKind, g) -> np.ndarray:
    """Group adjoint: Ad(g) x = vee(g hat(x) g^-1)."""
    g = np.asarray(g, dtype=float)
    if kind is GroupKind.SO3:
        return g.copy()
    if kind is GroupKind.SE2:
        R = g[:2, :2]
        out = np.zeros((3, 3))
        out[0, 0] = 1.0
        out[1, 0] = g[1, 2]
        out[2, 0] = -g[0, 2]
        out[1:, 1:] = R
        return out
    R = g[:3, :3]
    out = np.zeros((6, 6))
    out[:3, :3] = R
    out[3:, 3:] = R
    out[3:, :3] = _skew(g[:3, 3].copy()) @ R
    return out


def exp(kind: GroupKind, x) -> np.ndarray:
    """Closed-form exponential map, returning a group matrix."""
    x = _coords(kind, x)
    if kind is GroupKind.SO3:
        return _so3_exp(x)
    if kind is GroupKind.SE2:
        return _se2_exp(x)
    return _se3_exp(x)


def log(kind: GroupKind, g) -> np.ndarray:
    """Principal-branch logarithm in minimal coordinates.

    Raises LogBranchError when the rotation angle is within 1e-6 of pi
    (SO(3)/SE(3)) or of +/-pi (SE(2)); the axis is not recoverable there.
    """
    g = np.ascontiguousarray(g, dtype=float)
    if kind is GroupKind.SO3:
        return _so3_log(g)
    if kind is GroupKind.SE2:
        return _se2_log(g)
    return _se3_log(g)


def dexp(kind: GroupKind, x) -> np.ndarray:
    """Trivialized tangent of exp: dexp(x) = sum_j ad_x^j / (j+1)!, in closed form."""
    x = _coords(kind, x)
    if kind is GroupKind.SO3:
        return _so3_dexp(x)
    if kind is GroupKind.SE2:
        return _se2_dexp(x)
    return _se3_dexp(x)


def dexpinv(kind: GroupKind, x) -> np.ndarray:
    """Closed-form inverse of dexp; singular at rotation magnitude 2*pi."""
    x = _coords(kind, x)
    if kind is GroupKind.SO3:
        return _so3_dexpinv(x)
    if kind is GroupKind.SE2:
        return _se2_dexpinv(x)
    return _se3_dexpinv(x)


def identity(kind: GroupKind) -> np.ndarray:
    return np.eye(kind.matrix_dim)


def inverse(kind: GroupKind, g) -> np.ndarray:
    """Group inverse exploiting the rotation/translation block structure."""
    g = np.ascontiguousarray(g, dtype=float)
    if kind is GroupKind.SO3:
        return g.T.copy()
    if kind is GroupKind.SE2:
        return _se2_inverse(g)
    return _se3_inverse(g)


def compose(a, b) -> np.ndarray:
    return np.asarray(a) @ np.asarray(b)


def check_group_matrix(kind: GroupKind, g, tol: float = 1e-9) -> None:
    """Raise LieGroupError unless g satisfies the group-membership invariants."""
    g = np.asarray(g, dtype=float)
    d = kind.matrix_dim
    if g.shape != (d, d):
        raise LieGroupError(f"{kind.value} element must be {d}x{d}, got {g.shape}")
    n = 3 if kind is not GroupKind.SE2 else 2
    R = g[:n, :n]
    if np.abs(R.T @ R - np.eye(n)).max() > tol:
        raise LieGroupError("rotation block is not orthogonal within tolerance")
    if np.linalg.det(R) < 0.0:
        raise LieGroupError("rotation block has negative determinant")
    if kind is not GroupKind.SO3:
        bottom = np.zeros(d)
        bottom[-1] = 1.0
        if np.abs(g[-1] - bottom).max() > tol:
            raise LieGroupError("homogeneous bottom row must be [0 ... 0 1]")


@dataclass(frozen=True)
class GroupElement:
    """A point on SO(3), SE(2) or SE(3), stored as a dense matrix.

    The bare constructor does not validate (internal hot paths build
    elements from exp, which lands on the group by construction); use
    ``from_matrix`` for external input.
    """

    kind: GroupKind
    matrix: np.ndarray

    @classmethod
    def from_matrix(cls, kind: GroupKind, matrix, tol: float = 1e-9) -> "GroupElement":
        matrix = np.asarray(matrix, dtype=float)
        check_group_matrix(kind, matrix, tol)
        return cls(kind, matrix)

    @classmethod
    def identity(cls, kind: GroupKind) -> "GroupElement":
        return cls(kind, identity(kind))

    @classmethod
    def exp(cls, kind: GroupKind, x) -> "GroupElement":
        return cls(kind, exp(kind, x))

    def compose(self, other: "GroupElement") -> "GroupElement":
        if other.kind is not self.kind:
            raise LieGroupError(f"cannot compose {self.kind.value} with {other.kind.value}")
        return GroupElement(self.kind, self.matrix @ other.matrix)

    def inverse(self) -> "GroupElement":
        return GroupElement(self.kind, inverse(self.kind, self.matrix))

    def log(self) -> np.ndarray:
        return log(self.kind, self.matrix)

    def validate(self, tol: float = 1e-9) -> None:
        check_group_matrix(self.kind, self.matrix, tol)
