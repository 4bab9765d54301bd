"""Compiled simulation loops for the built-in plants.

The generic rollout/costate/insertion machinery in `sac` works with any
PlantModel through Python-level dispatch; these numba loops implement the
same algorithms for the three shipped plants (dispatched on plant_id) and
are selected by the controller when the plant type matches exactly. Costs
enter as plain arrays: the caller packs reference poses/auxiliary targets
per node, so time-varying references stay in Python.

Everything here must agree with the generic path to float precision; a
dedicated twin test asserts that.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

from .liegroup import (
    _se2_exp, _se2_log, _se2_dexpinv, _se2_ad, _se2_inverse,
    _se3_exp, _se3_log, _se3_dexpinv, _se3_ad, _se3_inverse,
)
from .models import (
    _car_rates, _car_jacobian, _car_project, _car_limit_rate,
    _quad_rates, _quad_jacobian,
    _translation_rates, _translation_jacobian,
)

KIND_SE2 = 0
KIND_SE3 = 1

CAR = 0
QUAD = 1
TRANSLATION = 2


@njit(cache=True)
def _exp_k(kid, x):
    if kid == KIND_SE2:
        return _se2_exp(x)
    return _se3_exp(x)


@njit(cache=True)
def _log_k(kid, m):
    if kid == KIND_SE2:
        return _se2_log(m)
    return _se3_log(m)


@njit(cache=True)
def _dexpinv_k(kid, x):
    if kid == KIND_SE2:
        return _se2_dexpinv(x)
    return _se3_dexpinv(x)


@njit(cache=True)
def _inverse_k(kid, m):
    if kid == KIND_SE2:
        return _se2_inverse(m)
    return _se3_inverse(m)


@njit(cache=True)
def _ad_k(kid, x):
    if kid == KIND_SE2:
        return _se2_ad(x)
    return _se3_ad(x)


@njit(cache=True)
def _rates(pid, par, g, z, u):
    if pid == CAR:
        return _car_rates(g, z, u)
    if pid == QUAD:
        return _quad_rates(g, z, u, par)
    return _translation_rates(g, z, u)


@njit(cache=True)
def _jacobian(pid, par, g, z, u):
    if pid == CAR:
        return _car_jacobian(g, z, u)
    if pid == QUAD:
        return _quad_jacobian(g, z, u, par)
    return _translation_jacobian(g, z, u)


@njit(cache=True)
def _project(pid, par, z):
    if pid == CAR:
        return _car_project(z, par[0])
    return z


@njit(cache=True)
def _limit(pid, par, z, zr):
    if pid == CAR:
        return _car_limit_rate(z, zr, par[0])
    return zr


@njit(cache=True)
def _rkmk4(pid, kid, par, g, z, u, t, dt):
    """One RK-MK4 step; returns (g1, z1, g_mid, z_mid)."""
    half = 0.5 * dt
    xi1, zr1 = _rates(pid, par, g, z, u)
    zr1 = _limit(pid, par, z, zr1)

    g2 = g @ _exp_k(kid, half * xi1)
    z2 = z + half * zr1
    xi2, zr2 = _rates(pid, par, g2, z2, u)
    zr2 = _limit(pid, par, z2, zr2)
    xi2 = _dexpinv_k(kid, -half * xi1) @ xi2

    g_mid = g @ _exp_k(kid, half * xi2)
    z_mid = z + half * zr2
    xi3, zr3 = _rates(pid, par, g_mid, z_mid, u)
    zr3 = _limit(pid, par, z_mid, zr3)
    xi3 = _dexpinv_k(kid, -half * xi2) @ xi3

    g4 = g @ _exp_k(kid, dt * xi3)
    z4 = z + dt * zr3
    xi4, zr4 = _rates(pid, par, g4, z4, u)
    zr4 = _limit(pid, par, z4, zr4)
    xi4 = _dexpinv_k(kid, -dt * xi3) @ xi4

    om = (dt / 6.0) * (xi1 + 2.0 * xi2 + 2.0 * xi3 + xi4)
    g1 = g @ _exp_k(kid, om)
    z1 = _project(pid, par, z + (dt / 6.0) * (zr1 + 2.0 * zr2 + 2.0 * zr3 + zr4))
    return g1, z1, g_mid, z_mid


@njit(cache=True)
def rollout_loop(pid, kid, par, g0, z0, us, t0, dt):
    n = us.shape[0]
    d = g0.shape[0]
    k = z0.shape[0]
    gs = np.empty((n + 1, d, d))
    zs = np.empty((n + 1, k))
    g_mid = np.empty((n, d, d))
    z_mid = np.empty((n, k))
    gs[0] = g0
    zs[0] = z0
    for i in range(n):
        g1, z1, gm, zm = _rkmk4(pid, kid, par, gs[i], zs[i], us[i], t0 + i * dt, dt)
        gs[i + 1] = g1
        zs[i + 1] = z1
        g_mid[i] = gm
        z_mid[i] = zm
    return gs, zs, g_mid, z_mid


@njit(cache=True)
def _stage_cost_k(kid, g, z, g_d, z_d, M, Qz):
    err = _log_k(kid, _inverse_k(kid, g_d) @ g)
    ez = z - z_d
    return 0.5 * (err @ (M @ err)) + 0.5 * (ez @ (Qz @ ez))


@njit(cache=True)
def _stage_grad_k(kid, g, z, g_d, z_d, M, Qz):
    err = _log_k(kid, _inverse_k(kid, g_d) @ g)
    gg = _dexpinv_k(kid, -err).T @ (M @ err)
    gz = Qz @ (z - z_d)
    out = np.empty(gg.shape[0] + gz.shape[0])
    out[:gg.shape[0]] = gg
    out[gg.shape[0]:] = gz
    return out


@njit(cache=True)
def trapezoid_cost_loop(kid, ts, gs, zs, gd, zd, M, Qz):
    n = ts.shape[0]
    total = 0.0
    prev = _stage_cost_k(kid, gs[0], zs[0], gd[0], zd[0], M, Qz)
    for i in range(1, n):
        cur = _stage_cost_k(kid, gs[i], zs[i], gd[i], zd[i], M, Qz)
        total += 0.5 * (prev + cur) * (ts[i] - ts[i - 1])
        prev = cur
    return total


@njit(cache=True)
def costate_loop(pid, kid, par, ts, gs, zs, g_mid, z_mid, us,
                 gd, zd, gd_mid, zd_mid, M, Qz, rho_T):
    """Backward RK4 costate on the rollout grid (see sac.backward_costate)."""
    n_cells = us.shape[0]
    a = 3 if kid == KIND_SE2 else 6
    k = zs.shape[1]
    n = a + k
    rho = np.empty((n_cells + 1, n))
    rho[n_cells] = rho_T

    A_lo = np.empty((n, n))
    A_hi = np.empty((n, n))
    A_md = np.empty((n, n))
    for i in range(n_cells - 1, -1, -1):
        u = us[i]
        dt = ts[i + 1] - ts[i]
        for (A, gi, zi) in ((A_lo, gs[i], zs[i]),
                            (A_hi, gs[i + 1], zs[i + 1]),
                            (A_md, g_mid[i], z_mid[i])):
            Dg, Dz = _jacobian(pid, par, gi, zi, u)
            xi, _ = _rates(pid, par, gi, zi, u)
            adj = _ad_k(kid, xi)
            A[:, :a] = Dg
            A[:, a:] = Dz
            A[:a, :a] -= adj
        dl_hi = _stage_grad_k(kid, gs[i + 1], zs[i + 1], gd[i + 1], zd[i + 1], M, Qz)
        dl_lo = _stage_grad_k(kid, gs[i], zs[i], gd[i], zd[i], M, Qz)
        dl_md = _stage_grad_k(kid, g_mid[i], z_mid[i], gd_mid[i], zd_mid[i], M, Qz)
        r = rho[i + 1]
        k1 = A_hi.T @ r + dl_hi
        k2 = A_md.T @ (r + 0.5 * dt * k1) + dl_md
        k3 = A_md.T @ (r + 0.5 * dt * k2) + dl_md
        k4 = A_lo.T @ (r + dt * k3) + dl_lo
        rho[i] = r + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return rho


@njit(cache=True)
def insertion_cost_loop(pid, kid, par, ts, gs, zs, us, u2, tau0, tau1,
                        gd, zd, gd_cut, zd_cut, M, Qz):
    """Running cost of the rollout with [tau0, tau1) replaced by u2.

    gd/zd are references at the sample nodes; gd_cut/zd_cut at the (up to
    two) interior cut times. Returns (J_running, g_end, z_end); the caller
    adds the terminal term.
    """
    n = us.shape[0]
    i0 = n - 1
    for i in range(n):
        if ts[i + 1] > tau0:
            i0 = i
            break

    total = 0.0
    prev = _stage_cost_k(kid, gs[0], zs[0], gd[0], zd[0], M, Qz)
    t_prev = ts[0]
    for i in range(i0):
        cur = _stage_cost_k(kid, gs[i + 1], zs[i + 1], gd[i + 1], zd[i + 1], M, Qz)
        total += 0.5 * (prev + cur) * (ts[i + 1] - t_prev)
        prev = cur
        t_prev = ts[i + 1]

    g = gs[i0].copy()
    z = zs[i0].copy()
    for i in range(i0, n):
        t_lo = ts[i]
        t_hi = ts[i + 1]
        a = t_lo
        for cut in (tau0, tau1, t_hi):
            b = cut if cut < t_hi else t_hi
            if b <= a:
                continue
            u = u2 if (a >= tau0 and a < tau1) else us[i]
            g, z, _, _ = _rkmk4(pid, kid, par, g, z, u, a, b - a)
            if b < t_hi:
                # interior cut node: b is exactly tau0 or tau1
                j = 0 if b == tau0 else 1
                cur = _stage_cost_k(kid, g, z, gd_cut[j], zd_cut[j], M, Qz)
            else:
                cur = _stage_cost_k(kid, g, z, gd[i + 1], zd[i + 1], M, Qz)
            total += 0.5 * (prev + cur) * (b - a)
            prev = cur
            a = b
    return total, g, z
