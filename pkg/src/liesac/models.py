"""Plant models evolving on (Lie group x R^k).

A plant couples a group-valued pose g with a Euclidean auxiliary state z:

    g_dot = g * hat(xi(g, z, u, t))
    z_dot = zeta(g, z, u, t)

and is affine in the control, so the stacked rates split as drift(g, z, t)
plus control_matrix(g, z, t) @ u. Concrete plants:

    CarPlant          -- kinematic car on SE(2), z = (w, v_par, phi)
    QuadrotorPlant    -- quadrotor on SE(3), z = (omega, v), inputs are the
                         squared rotor speeds w_i so the box [0, 6] is exact
    TranslationPlant  -- double integrator on the translation subgroup of
                         SE(2); abelian case used for validation
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from . import liegroup as lg
from .liegroup import GroupKind, GroupElement

GRAVITY = 9.81

E3 = np.array([0.0, 0.0, 1.0])


# --------------------------------------------------------------------------
# numba dynamics kernels (shared by the class methods and the compiled
# simulation loops in fastpath)
# --------------------------------------------------------------------------

@njit(cache=True)
def _car_rates(g, z, u):
    v, phi = z[1], z[2]
    sp, cp = math.sin(phi), math.cos(phi)
    xi = np.empty(3)
    xi[0] = v * sp
    xi[1] = v * cp
    xi[2] = 0.0
    zr = np.empty(3)
    zr[0] = u[0] * sp + u[1] * v * cp
    zr[1] = u[0]
    zr[2] = u[1]
    return xi, zr


@njit(cache=True)
def _car_jacobian(g, z, u):
    v, phi = z[1], z[2]
    sp, cp = math.sin(phi), math.cos(phi)
    Dg = np.zeros((6, 3))
    Dz = np.zeros((6, 3))
    Dz[0, 1] = sp
    Dz[0, 2] = v * cp
    Dz[1, 1] = cp
    Dz[1, 2] = -v * sp
    Dz[3, 1] = u[1] * cp
    Dz[3, 2] = u[0] * cp - u[1] * v * sp
    return Dg, Dz


@njit(cache=True)
def _car_project(z, lim):
    out = z.copy()
    if out[2] > lim:
        out[2] = lim
    elif out[2] < -lim:
        out[2] = -lim
    out[0] = out[1] * math.sin(out[2])
    return out


@njit(cache=True)
def _car_limit_rate(z, zr, lim):
    phi, dphi = z[2], zr[2]
    if (phi >= lim and dphi > 0.0) or (phi <= -lim and dphi < 0.0):
        out = zr.copy()
        out[2] = 0.0
        out[0] = zr[1] * math.sin(phi)
        return out
    return zr


@njit(cache=True)
def _quad_rates(g, z, u, par):
    m, jx, jy, jz = par[0], par[1], par[2], par[3]
    kt, km, arm = par[4], par[5], par[6]
    w0, w1, w2 = z[0], z[1], z[2]
    v0, v1, v2 = z[3], z[4], z[5]
    force = kt * (u[0] + u[1] + u[2] + u[3])
    kl = kt * arm
    m0 = kl * (u[1] - u[3])
    m1 = kl * (u[2] - u[0])
    m2 = km * (u[0] - u[1] + u[2] - u[3])
    jw0, jw1, jw2 = jx * w0, jy * w1, jz * w2
    zr = np.empty(6)
    zr[0] = (jw1 * w2 - jw2 * w1 + m0) / jx
    zr[1] = (jw2 * w0 - jw0 * w2 + m1) / jy
    zr[2] = (jw0 * w1 - jw1 * w0 + m2) / jz
    zr[3] = -(w1 * v2 - w2 * v1) - GRAVITY * g[2, 0]
    zr[4] = -(w2 * v0 - w0 * v2) - GRAVITY * g[2, 1]
    zr[5] = force / m - (w0 * v1 - w1 * v0) - GRAVITY * g[2, 2]
    return z.copy(), zr


@njit(cache=True)
def _quad_jacobian(g, z, u, par):
    jx, jy, jz = par[1], par[2], par[3]
    w = z[:3]
    v = z[3:]
    Dg = np.zeros((12, 6))
    Dz = np.zeros((12, 6))
    for i in range(6):
        Dz[i, i] = 1.0
    # omega_dot = J^-1 ((J w) x w): rows scaled by 1/J
    jw0, jw1, jw2 = jx * w[0], jy * w[1], jz * w[2]
    Dz[6, 1] = (jy * w[2] - jw2) / jx
    Dz[6, 2] = (jw1 - jz * w[1]) / jx
    Dz[7, 0] = (jw2 - jx * w[2]) / jy
    Dz[7, 2] = (jz * w[0] - jw0) / jy
    Dz[8, 0] = (jx * w[1] - jw1) / jz
    Dz[8, 1] = (jw0 - jy * w[0]) / jz
    # v_dot = -w x v - 9.81 R^T e3 (+ thrust, control only)
    Dz[9, 1] = -v[2]
    Dz[9, 2] = v[1]
    Dz[10, 0] = v[2]
    Dz[10, 2] = -v[0]
    Dz[11, 0] = -v[1]
    Dz[11, 1] = v[0]
    Dz[9, 4] = w[2]
    Dz[9, 5] = -w[1]
    Dz[10, 3] = -w[2]
    Dz[10, 5] = w[0]
    Dz[11, 3] = w[1]
    Dz[11, 4] = -w[0]
    r0, r1, r2 = g[2, 0], g[2, 1], g[2, 2]
    Dg[9, 1] = -GRAVITY * (-r2)
    Dg[9, 2] = -GRAVITY * r1
    Dg[10, 0] = -GRAVITY * r2
    Dg[10, 2] = -GRAVITY * (-r0)
    Dg[11, 0] = -GRAVITY * (-r1)
    Dg[11, 1] = -GRAVITY * r0
    return Dg, Dz


@njit(cache=True)
def _translation_rates(g, z, u):
    xi = np.empty(3)
    xi[0] = 0.0
    xi[1] = z[0]
    xi[2] = z[1]
    zr = np.empty(2)
    zr[0] = u[0]
    zr[1] = u[1]
    return xi, zr


@njit(cache=True)
def _translation_jacobian(g, z, u):
    Dg = np.zeros((5, 3))
    Dz = np.zeros((5, 2))
    Dz[1, 0] = 1.0
    Dz[2, 1] = 1.0
    return Dg, Dz


@dataclass(frozen=True)
class HybridState:
    """Pair of a group element (pose) and the Euclidean auxiliary vector."""

    g: GroupElement
    z: np.ndarray

    @property
    def kind(self) -> GroupKind:
        return self.g.kind


@dataclass(frozen=True)
class ReferencePoint:
    t: float
    state: HybridState
    u_ff: np.ndarray


class PlantModel:
    """Base plant: fixed dimensions, control box, affine dynamics."""

    kind: GroupKind
    z_dim: int
    u_dim: int

    def __init__(self, u_min, u_max):
        self.u_min = np.asarray(u_min, dtype=float)
        self.u_max = np.asarray(u_max, dtype=float)
        if self.u_min.shape != (self.u_dim,) or self.u_max.shape != (self.u_dim,):
            raise ValueError(f"control bounds must have shape ({self.u_dim},)")
        if not np.all(self.u_min < self.u_max):
            raise ValueError("u_min must be elementwise below u_max")

    @property
    def state_dim(self) -> int:
        return self.kind.algebra_dim + self.z_dim

    def drift(self, g, z, t):
        """Control-free part of the stacked rates: (xi, z_rate)."""
        raise NotImplementedError

    def control_matrix(self, g, z, t) -> np.ndarray:
        """(algebra_dim + z_dim) x u_dim map from controls to rates."""
        raise NotImplementedError

    def dynamics(self, g, z, u, t):
        """Stacked affine dynamics drift + h @ u, returned as (xi, z_rate)."""
        xi, z_rate = self.drift(g, z, t)
        hu = self.control_matrix(g, z, t) @ np.asarray(u, dtype=float)
        n = self.kind.algebra_dim
        return xi + hu[:n], z_rate + hu[n:]

    def analytic_state_jacobian(self, g, z, u, t):
        """(D_g, D_z) of the stacked rates, or None to fall back to FD."""
        return None

    # state-constraint hooks used by the integrator (no-ops by default)
    def project_z(self, z) -> np.ndarray:
        return z

    def limit_z_rate(self, z, z_rate) -> np.ndarray:
        return z_rate


class CarPlant(PlantModel):
    """Kinematic car on SE(2).

    z = (w, v_par, phi): angular rate, forward speed, steering angle;
    controls (u1, u2) = (dv_par/dt, dphi/dt). The angular rate obeys
    w = v_par sin(phi) algebraically; it is carried in z for reporting and
    costing, with its rate given by the chain rule of that relation (the
    state projection re-imposes the relation after each step). The group
    rate is computed from (v_par, phi) directly.
    """

    kind = GroupKind.SE2
    z_dim = 3
    u_dim = 2
    plant_id = 0

    def __init__(self, u_min=(-4.0, -5.0), u_max=(4.0, 5.0),
                 steering_limit=math.pi / 3.0):
        super().__init__(u_min, u_max)
        self.steering_limit = float(steering_limit)
        self.kernel_params = np.array([self.steering_limit])

    def drift(self, g, z, t):
        xi, _ = _car_rates(g, z, np.zeros(2))
        return xi, np.zeros(3)

    def control_matrix(self, g, z, t):
        v_par, phi = z[1], z[2]
        h = np.zeros((6, 2))
        h[3, 0] = math.sin(phi)
        h[3, 1] = v_par * math.cos(phi)
        h[4, 0] = 1.0
        h[5, 1] = 1.0
        return h

    def dynamics(self, g, z, u, t):
        return _car_rates(g, z, np.ascontiguousarray(u, dtype=float))

    def analytic_state_jacobian(self, g, z, u, t):
        return _car_jacobian(g, z, np.ascontiguousarray(u, dtype=float))

    def project_z(self, z):
        return _car_project(z, self.steering_limit)

    def limit_z_rate(self, z, z_rate):
        return _car_limit_rate(z, z_rate, self.steering_limit)


class QuadrotorPlant(PlantModel):
    """Quadrotor on SE(3) with squared rotor speeds as decision variables.

    z = (omega, v): body-fixed angular and linear velocities. Thrust and
    torques are affine in w_i = u_i^2, so the actuation box w in [0, 6]^4
    saturates exactly.
    """

    kind = GroupKind.SE3
    z_dim = 6
    u_dim = 4
    plant_id = 1

    def __init__(self, mass=0.6, inertia=(0.04, 0.0375, 0.0675),
                 k_t=0.6, k_m=0.15, arm=0.2, w_max=6.0):
        super().__init__(np.zeros(4), np.full(4, float(w_max)))
        self.mass = float(mass)
        self.inertia = np.asarray(inertia, dtype=float)
        self.k_t = float(k_t)
        self.k_m = float(k_m)
        self.arm = float(arm)
        self.kernel_params = np.array([self.mass, *self.inertia,
                                       self.k_t, self.k_m, self.arm])
        # (F, M) as a linear map of w, premapped into (omega_dot, v_dot) rows
        kl = self.k_t * self.arm
        torque_map = np.array([
            [0.0, kl, 0.0, -kl],
            [-kl, 0.0, kl, 0.0],
            [self.k_m, -self.k_m, self.k_m, -self.k_m],
        ])
        h = np.zeros((12, 4))
        h[6:9] = torque_map / self.inertia[:, None]
        h[11] = self.k_t / self.mass
        h.flags.writeable = False
        self._h = h

    def hover_control(self) -> np.ndarray:
        return np.full(4, self.mass * GRAVITY / (4.0 * self.k_t))

    def thrust_torque(self, w) -> tuple[float, np.ndarray]:
        w = np.asarray(w, dtype=float)
        force = self.k_t * w.sum()
        kl = self.k_t * self.arm
        torque = np.array([
            kl * (w[1] - w[3]),
            kl * (w[2] - w[0]),
            self.k_m * (w[0] - w[1] + w[2] - w[3]),
        ])
        return force, torque

    def drift(self, g, z, t):
        return _quad_rates(g, z, np.zeros(4), self.kernel_params)

    def control_matrix(self, g, z, t):
        return self._h

    def dynamics(self, g, z, u, t):
        return _quad_rates(g, z, np.ascontiguousarray(u, dtype=float),
                           self.kernel_params)

    def analytic_state_jacobian(self, g, z, u, t):
        return _quad_jacobian(g, z, np.ascontiguousarray(u, dtype=float),
                              self.kernel_params)


class TranslationPlant(PlantModel):
    """Double integrator on pure SE(2) translations; z = planar velocity.

    The rotation coordinate stays identically zero, which makes the group
    abelian: the Lie pipeline must reduce exactly to coordinate-space SAC.
    """

    kind = GroupKind.SE2
    z_dim = 2
    u_dim = 2
    plant_id = 2

    def __init__(self, u_min=(-1.0, -1.0), u_max=(1.0, 1.0)):
        super().__init__(u_min, u_max)
        self.kernel_params = np.zeros(1)

    def drift(self, g, z, t):
        return np.array([0.0, z[0], z[1]]), np.zeros(2)

    def control_matrix(self, g, z, t):
        h = np.zeros((5, 2))
        h[3, 0] = 1.0
        h[4, 1] = 1.0
        return h

    def dynamics(self, g, z, u, t):
        return _translation_rates(g, z, np.ascontiguousarray(u, dtype=float))

    def analytic_state_jacobian(self, g, z, u, t):
        return _translation_jacobian(g, z, np.ascontiguousarray(u, dtype=float))


# --------------------------------------------------------------------------
# linearization (group block corrected by -ad of the current rate)
# --------------------------------------------------------------------------

_FD_STEP = 1e-6


def _fd_state_jacobian(plant, g, z, u, t):
    n = plant.state_dim
    Dg = np.zeros((n, plant.kind.algebra_dim))
    Dz = np.zeros((n, plant.z_dim))

    def stacked(gm, zv):
        xi, zr = plant.dynamics(gm, zv, u, t)
        return np.concatenate([xi, zr])

    for i in range(plant.kind.algebra_dim):
        e = np.zeros(plant.kind.algebra_dim)
        e[i] = _FD_STEP
        gp = g @ lg.exp(plant.kind, e)
        gm = g @ lg.exp(plant.kind, -e)
        Dg[:, i] = (stacked(gp, z) - stacked(gm, z)) / (2.0 * _FD_STEP)
    for i in range(plant.z_dim):
        zp, zm = z.copy(), z.copy()
        zp[i] += _FD_STEP
        zm[i] -= _FD_STEP
        Dz[:, i] = (stacked(g, zp) - stacked(g, zm)) / (2.0 * _FD_STEP)
    return Dg, Dz


def linearize(plant, g, z, u, t):
    """Linearized stacked dynamics (A, B) at (g, z, u, t).

    The combined perturbation state is (eta, dz) with eta = g^-1 delta-g in
    minimal coordinates; the group block of A carries the -ad correction of
    the current group rate on top of the plain directional derivatives.
    """
    u = np.asarray(u, dtype=float)
    jac = plant.analytic_state_jacobian(g, z, u, t)
    if jac is None:
        Dg, Dz = _fd_state_jacobian(plant, g, z, u, t)
    else:
        Dg, Dz = jac
    n_alg = plant.kind.algebra_dim
    xi, _ = plant.dynamics(g, z, u, t)
    A = np.hstack([Dg, Dz])
    A[:n_alg, :n_alg] -= lg.ad(plant.kind, xi)
    B = np.array(plant.control_matrix(g, z, t))
    return A, B


# --------------------------------------------------------------------------
# integration
# --------------------------------------------------------------------------

class DivergenceError(RuntimeError):
    """Integration produced non-finite values."""


def integrate_step(plant, g, z, u, t, dt, return_midpoint=False):
    """One 4th-order Runge-Kutta-Munthe-Kaas step.

    z advances by classical RK4; the group increment is accumulated in the
    algebra with the dexpinv correction and applied as g @ exp(increment),
    so the result stays on the group by construction. Plant state-constraint
    hooks run at each stage (rate limiting) and on the result (projection).

    With return_midpoint the stage-3 input state (an O(dt^3) estimate of the
    state at t + dt/2) is returned as well; the costate pass linearizes the
    dynamics there rather than interpolating endpoint linearizations.
    """
    kind = plant.kind
    half = 0.5 * dt

    xi1, zr1 = plant.dynamics(g, z, u, t)
    zr1 = plant.limit_z_rate(z, zr1)

    def stage(om, zv, tau):
        gs = g @ lg.exp(kind, om)
        xi, zr = plant.dynamics(gs, zv, u, tau)
        zr = plant.limit_z_rate(zv, zr)
        return lg.dexpinv(kind, -om) @ xi, zr, gs

    xi2, zr2, _ = stage(half * xi1, z + half * zr1, t + half)
    z_mid = z + half * zr2
    xi3, zr3, g_mid = stage(half * xi2, z_mid, t + half)
    xi4, zr4, _ = stage(dt * xi3, z + dt * zr3, t + dt)

    om = (dt / 6.0) * (xi1 + 2.0 * xi2 + 2.0 * xi3 + xi4)
    g_next = g @ lg.exp(kind, om)
    z_next = plant.project_z(z + (dt / 6.0) * (zr1 + 2.0 * zr2 + 2.0 * zr3 + zr4))
    if not (np.isfinite(z_next).all() and np.isfinite(g_next).all()):
        raise DivergenceError(f"non-finite state after step at t={t}")
    if return_midpoint:
        return g_next, z_next, (g_mid, z_mid)
    return g_next, z_next


# --------------------------------------------------------------------------
# references
# --------------------------------------------------------------------------

class ConstantReference:
    """Fixed setpoint with zero (or given) feedforward."""

    def __init__(self, state: HybridState, u_ff=None, u_dim: int | None = None):
        self.state = state
        if u_ff is None:
            u_ff = np.zeros(u_dim if u_dim is not None else 0)
        self.u_ff = np.asarray(u_ff, dtype=float)

    def __call__(self, t) -> ReferencePoint:
        return ReferencePoint(t, self.state, self.u_ff)


class FlatOutputReference:
    """Quadrotor reference from sinusoidal flat outputs.

    Position amplitudes/frequencies and the yaw sinusoid define the flat
    outputs; attitude comes from the thrust direction plus yaw, body rates
    from the jerk, and the feedforward rotor commands from inverting the
    (F, M) map and clamping into the actuation box.
    """

    def __init__(self, plant: QuadrotorPlant,
                 amplitude=(12.0, 8.0, 7.0),
                 frequency=(math.pi / 6.0, math.pi / 3.0, math.pi / 6.0),
                 yaw_amplitude=0.5, yaw_frequency=0.5):
        self.plant = plant
        self.amplitude = np.asarray(amplitude, dtype=float)
        self.frequency = np.asarray(frequency, dtype=float)
        self.yaw_amplitude = float(yaw_amplitude)
        self.yaw_frequency = float(yaw_frequency)
        kl = plant.k_t * plant.arm
        self._fm_map = np.array([
            [plant.k_t, plant.k_t, plant.k_t, plant.k_t],
            [0.0, kl, 0.0, -kl],
            [-kl, 0.0, kl, 0.0],
            [plant.k_m, -plant.k_m, plant.k_m, -plant.k_m],
        ])
        # the controller queries the same grid times over and over
        self._cache: dict[float, ReferencePoint] = {}

    def _flat_outputs(self, t):
        a, om = self.amplitude, self.frequency
        pos = a * np.sin(om * t)
        vel = a * om * np.cos(om * t)
        acc = -a * om ** 2 * np.sin(om * t)
        jerk = -a * om ** 3 * np.cos(om * t)
        yaw = self.yaw_amplitude * math.sin(self.yaw_frequency * t)
        yaw_dot = self.yaw_amplitude * self.yaw_frequency * math.cos(self.yaw_frequency * t)
        return pos, vel, acc, jerk, yaw, yaw_dot

    def _attitude_and_rates(self, t):
        pos, vel, acc, jerk, yaw, yaw_dot = self._flat_outputs(t)
        thrust_vec = acc + GRAVITY * E3
        norm = np.linalg.norm(thrust_vec)
        if norm < 1e-6:
            raise ValueError("flatness map singular: commanded thrust vanishes")
        b3 = thrust_vec / norm
        heading = np.array([math.cos(yaw), math.sin(yaw), 0.0])
        cross = np.cross(b3, heading)
        b2 = cross / np.linalg.norm(cross)
        b1 = np.cross(b2, b3)
        R = np.column_stack([b1, b2, b3])

        b3_dot = (jerk - (b3 @ jerk) * b3) / norm
        heading_dot = yaw_dot * np.array([-heading[1], heading[0], 0.0])
        raw = np.cross(b3_dot, heading) + np.cross(b3, heading_dot)
        b2_dot = (raw - (b2 @ raw) * b2) / np.linalg.norm(cross)
        b1_dot = np.cross(b2_dot, b3) + np.cross(b2, b3_dot)
        omega = np.array([-b2 @ b3_dot, b1 @ b3_dot, b2 @ b1_dot])
        return pos, vel, R, omega, norm

    def __call__(self, t) -> ReferencePoint:
        t = float(t)
        hit = self._cache.get(t)
        if hit is not None:
            return hit
        pos, vel, R, omega, thrust_norm = self._attitude_and_rates(t)
        v_body = R.T @ vel

        h = 1e-5
        omega_dot = (self._attitude_and_rates(t + h)[3]
                     - self._attitude_and_rates(t - h)[3]) / (2.0 * h)

        J = self.plant.inertia
        force = self.plant.mass * thrust_norm
        torque = J * omega_dot - np.cross(J * omega, omega)
        w_ff = np.linalg.solve(self._fm_map, np.concatenate([[force], torque]))
        w_ff = np.clip(w_ff, self.plant.u_min, self.plant.u_max)

        g = np.eye(4)
        g[:3, :3] = R
        g[:3, 3] = pos
        state = HybridState(GroupElement(GroupKind.SE3, g), np.concatenate([omega, v_body]))
        out = ReferencePoint(t, state, w_ff)
        if len(self._cache) > 200_000:
            self._cache.clear()
        self._cache[t] = out
        return out
