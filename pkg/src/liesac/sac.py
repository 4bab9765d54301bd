"""Sequential Action Control on Lie groups.

Each control cycle performs, over the receding horizon [t, t+T]:

    1. simulate the nominal schedule (rollout),
    2. integrate the costate backward with the group-corrected linearization
       (the -ad term rides along in the stacked A matrix),
    3. synthesize the distance-optimal action pointwise in closed form and
       saturate it elementwise,
    4. pick the insertion time with the most negative mode insertion
       gradient at least one computation delay ahead,
    5. back off the duration until the re-simulated objective actually
       drops by a fraction of the first-order prediction.

The synthesized action is a single constant control vector held over
[tau0, tau0+lambda); the controller buffers exactly one pending action and
replaces it every cycle, so the action computed now is what gets applied
one feedback period later.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from . import liegroup as lg
from .models import integrate_step, linearize
from .objective import QuadraticLieCost


@dataclass
class SacParams:
    """Controller knobs. R must be diagonal (given by its positive diagonal)."""

    horizon: float
    sample_dt: float
    r_diag: np.ndarray
    gamma: float = -15.0          # alpha_d = gamma * J1 unless alpha_fixed is set
    alpha_fixed: float | None = None
    tau_grid_dt: float | None = None   # insertion-time search step (default sample_dt)
    lambda0: float | None = None       # initial duration (default 4 * sample_dt)
    beta: float = 0.5
    max_backtracks: int = 10
    zeta: float = 0.1                  # sufficient-decrease fraction
    t_calc: float | None = None        # computation delay (default: feedback period)
    perturb_cost_threshold: float = 1e-2
    action_zero_tol: float = 1e-6

    def __post_init__(self):
        self.r_diag = np.atleast_1d(np.asarray(self.r_diag, dtype=float))
        if np.any(self.r_diag <= 0.0):
            raise ValueError("R must have strictly positive diagonal entries")
        if self.horizon <= 0.0 or self.sample_dt <= 0.0:
            raise ValueError("horizon and sample_dt must be positive")
        if self.alpha_fixed is None and self.gamma >= 0.0:
            raise ValueError("gamma must be negative in proportional mode")
        if not 0.0 < self.beta < 1.0:
            raise ValueError("beta must lie in (0, 1)")


@dataclass(frozen=True)
class SacAction:
    """One saturated control action scheduled for [tau0, tau0 + duration)."""

    u2: np.ndarray
    tau0: float
    duration: float
    predicted_mig: float


class ControlSchedule:
    """Piecewise-constant nominal control plus at most one pending insertion."""

    def __init__(self, base, action: SacAction | None = None):
        self.base = base
        self.action = action

    def __call__(self, t) -> np.ndarray:
        a = self.action
        if a is not None and a.tau0 <= t < a.tau0 + a.duration:
            return a.u2
        return self.base(t)


@dataclass
class Trajectory:
    """Dense fixed-step rollout record; us[i] is held on [ts[i], ts[i+1}).

    g_mid/z_mid are per-step midpoint state estimates saved by the
    integrator for the costate pass.
    """

    ts: np.ndarray
    gs: np.ndarray
    zs: np.ndarray
    us: np.ndarray
    g_mid: np.ndarray | None = None
    z_mid: np.ndarray | None = None


@dataclass
class StepLog:
    t: float
    J1: float
    predicted_mig: float
    tau0: float
    duration: float
    u: np.ndarray
    mode: str
    perturbed: bool = False
    delta_J: float = 0.0


def rollout(plant, g, z, t0, schedule, horizon, sample_dt) -> Trajectory:
    """Fixed-step RK-MK simulation of a control schedule (ZOH per sample)."""
    n_steps = int(round(horizon / sample_dt))
    d = plant.kind.matrix_dim
    ts = t0 + sample_dt * np.arange(n_steps + 1)
    gs = np.empty((n_steps + 1, d, d))
    zs = np.empty((n_steps + 1, plant.z_dim))
    us = np.empty((n_steps, plant.u_dim))
    g_mid = np.empty((n_steps, d, d))
    z_mid = np.empty((n_steps, plant.z_dim))
    gs[0], zs[0] = g, z
    for i in range(n_steps):
        us[i] = schedule(ts[i])
        gs[i + 1], zs[i + 1], (g_mid[i], z_mid[i]) = integrate_step(
            plant, gs[i], zs[i], us[i], ts[i], sample_dt, return_midpoint=True)
    return Trajectory(ts, gs, zs, us, g_mid, z_mid)


def backward_costate(plant, cost: QuadraticLieCost, traj: Trajectory, M=None) -> np.ndarray:
    """Costate rho(t) on the rollout grid, integrated backward with RK4.

    The stacked linearization and running-cost gradient are evaluated at the
    rollout samples and at the integrator's midpoint state estimates (falling
    back to linear interpolation when a trajectory carries no midpoints);
    the terminal condition is the terminal-cost gradient.
    """
    n_samples = len(traj.ts)
    n_cells = n_samples - 1
    n = plant.state_dim

    # the ZOH control jumps at the samples, so each cell carries its own
    # endpoint linearizations (evaluated at that cell's control)
    A_lo = np.empty((n_cells, n, n))
    A_hi = np.empty((n_cells, n, n))
    Am = np.empty((n_cells, n, n))
    DL = np.empty((n_samples, n))
    DLm = np.empty((n_cells, n))
    DL[-1] = cost.stage_gradient(traj.gs[-1], traj.zs[-1], traj.ts[-1], M=M)
    have_mid = traj.g_mid is not None
    for i in range(n_cells):
        u = traj.us[i]
        A_lo[i], _ = linearize(plant, traj.gs[i], traj.zs[i], u, traj.ts[i])
        A_hi[i], _ = linearize(plant, traj.gs[i + 1], traj.zs[i + 1], u, traj.ts[i + 1])
        DL[i] = cost.stage_gradient(traj.gs[i], traj.zs[i], traj.ts[i], M=M)
        if have_mid:
            t_half = 0.5 * (traj.ts[i] + traj.ts[i + 1])
            Am[i], _ = linearize(plant, traj.g_mid[i], traj.z_mid[i], u, t_half)
            DLm[i] = cost.stage_gradient(traj.g_mid[i], traj.z_mid[i], t_half, M=M)
        else:
            Am[i] = 0.5 * (A_lo[i] + A_hi[i])
            DLm[i] = 0.5 * (DL[i] + DL[i + 1])

    rho = np.empty((n_samples, n))
    rho[-1] = cost.terminal_gradient(traj.gs[-1], traj.zs[-1], traj.ts[-1])
    for i in range(n_cells - 1, -1, -1):
        dt = traj.ts[i + 1] - traj.ts[i]
        At0, Atm, At1 = A_hi[i].T, Am[i].T, A_lo[i].T   # backward: start at t_{i+1}
        r = rho[i + 1]
        k1 = At0 @ r + DL[i + 1]
        k2 = Atm @ (r + 0.5 * dt * k1) + DLm[i]
        k3 = Atm @ (r + 0.5 * dt * k2) + DLm[i]
        k4 = At1 @ (r + dt * k3) + DL[i]
        rho[i] = r + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if not np.isfinite(rho).all():
        from .models import DivergenceError
        raise DivergenceError("costate integration produced non-finite values")
    return rho


def mode_insertion_gradient(plant, rho_tau, g, z, u1, u2, tau) -> float:
    """rho(tau) . [f(x, u2) - f(x, u1)], the cost sensitivity dJ/dlambda at 0+."""
    xi1, zr1 = plant.dynamics(g, z, u1, tau)
    xi2, zr2 = plant.dynamics(g, z, u2, tau)
    diff = np.concatenate([xi2 - xi1, zr2 - zr1])
    return float(rho_tau @ diff)


def optimal_action_path(plant, traj: Trajectory, rho, alpha_d, r_diag):
    """Closed-form action u2*(t) on the grid, before and after saturation.

    With diagonal R the pointwise solve (h^T rho rho^T h + R)^-1 h^T rho
    collapses to a rank-one (Sherman-Morrison) update, so no linear system
    is formed. Returns (u2 saturated, u2 raw, h^T rho).
    """
    n_samples = len(traj.ts)
    m = plant.u_dim
    p = np.empty((n_samples, m))
    u1 = np.empty((n_samples, m))
    for i in range(n_samples):
        h = plant.control_matrix(traj.gs[i], traj.zs[i], traj.ts[i])
        p[i] = h.T @ rho[i]
        u1[i] = traj.us[min(i, n_samples - 2)]
    p_over_r = p / r_diag
    denom = 1.0 + np.sum(p * p_over_r, axis=1)
    raw = u1 + alpha_d * p_over_r / denom[:, None]
    sat = np.clip(raw, plant.u_min, plant.u_max)
    return sat, raw, p


def interpolate_sample(kind, traj: Trajectory, rho, tau):
    """State (geodesic on the group), u1 and costate at an off-grid time."""
    ts = traj.ts
    i = min(max(int(np.searchsorted(ts, tau, side="right") - 1), 0), len(ts) - 2)
    frac = (tau - ts[i]) / (ts[i + 1] - ts[i])
    if frac <= 1e-12:
        return traj.gs[i], traj.zs[i], traj.us[i], rho[i]
    rel = lg.log(kind, lg.inverse(kind, traj.gs[i]) @ traj.gs[i + 1])
    g = traj.gs[i] @ lg.exp(kind, frac * rel)
    z = (1.0 - frac) * traj.zs[i] + frac * traj.zs[i + 1]
    r = (1.0 - frac) * rho[i] + frac * rho[i + 1]
    return g, z, traj.us[i], r


def saturate(u2, u_min, u_max) -> np.ndarray:
    """Elementwise clamp into the actuation box."""
    return np.clip(np.asarray(u2, dtype=float), u_min, u_max)


def choose_insertion_time(migs, ts, t_min):
    """Index of the most negative mode insertion gradient at or after t_min.

    Ties break toward the earliest time. Returns None when no gradient on
    the eligible grid is negative (no-descent signal).
    """
    eligible = np.nonzero(ts[:-1] >= t_min - 1e-12)[0]
    if len(eligible) == 0:
        return None
    best = eligible[np.argmin(migs[eligible])]
    if migs[best] >= 0.0:
        return None
    return int(best)


def simulate_with_insertion(plant, cost, traj: Trajectory, action: SacAction,
                            M=None) -> float:
    """Objective of the nominal rollout with one action spliced in.

    States before the insertion are reused from the nominal record; each
    affected step is split at the insertion boundaries, so the duration is
    not quantized to the sample grid, and the boundary states join the
    quadrature nodes (the induced perturbation has a kink there; without
    those nodes the trapezoid rule misses half the first cell and biases
    dJ/dlambda by O(dt)). A zero-duration action exercises the same split
    path, so duration finite differences cancel the splitting bias.
    """
    ts, us = traj.ts, traj.us
    t_end = float(ts[-1])
    tau0 = min(max(action.tau0, float(ts[0])), t_end)
    tau1 = min(tau0 + max(action.duration, 0.0), t_end)
    i0 = min(int(np.searchsorted(ts, tau0, side="right") - 1), len(us) - 1)

    node_ts = list(ts[:i0 + 1])
    node_gs = list(traj.gs[:i0 + 1])
    node_zs = list(traj.zs[:i0 + 1])
    g, z = traj.gs[i0], traj.zs[i0]
    for i in range(i0, len(us)):
        t_lo, t_hi = float(ts[i]), float(ts[i + 1])
        cuts = sorted({t_lo, t_hi} | {x for x in (tau0, tau1) if t_lo < x < t_hi})
        for a, b in zip(cuts[:-1], cuts[1:]):
            if b - a <= 0.0:
                continue
            u = action.u2 if tau0 <= a < tau1 else us[i]
            g, z = integrate_step(plant, g, z, u, a, b - a)
            node_ts.append(b)
            node_gs.append(g)
            node_zs.append(z)
    return cost.total_objective(np.array(node_ts), node_gs, node_zs, M=M)


class SacController:
    """Receding-horizon SAC loop with a one-action buffer.

    `nominal` picks the base u1 schedule: "zero" for motion planning or
    "feedforward" to follow the cost reference's feedforward controls.
    The weight-matrix perturbation activates only when the synthesized
    action collapses to the nominal while the stage cost is still large
    (the parallel-parking singularity), and is redrawn at intervals.
    """

    def __init__(self, plant, cost: QuadraticLieCost, params: SacParams,
                 feedback_dt: float, nominal: str = "zero", compiled: bool = True):
        if len(params.r_diag) != plant.u_dim:
            raise ValueError("R diagonal length must match the control dimension")
        if cost.z_dim != plant.z_dim:
            raise ValueError("cost z dimension must match the plant")
        self.plant = plant
        self.cost = cost
        self.params = params
        self.feedback_dt = float(feedback_dt)
        if nominal not in ("zero", "feedforward"):
            raise ValueError("nominal must be 'zero' or 'feedforward'")
        self.nominal = nominal
        self.pending: SacAction | None = None
        self.step_index = 0
        self.logs: list[StepLog] = []

        from . import fastpath
        from .models import CarPlant, QuadrotorPlant, TranslationPlant
        self.compiled = compiled and type(plant) in (CarPlant, QuadrotorPlant,
                                                     TranslationPlant)
        if self.compiled:
            self._fp = fastpath
            self._pid = plant.plant_id
            self._kid = (fastpath.KIND_SE3 if plant.kind is lg.GroupKind.SE3
                         else fastpath.KIND_SE2)
            self._par = plant.kernel_params
        self._node_refs = None
        self._mid_refs = None

    # ------------------------------------------------------------ fast lane

    def _pack_refs(self, ts):
        d = self.plant.kind.matrix_dim
        gd = np.empty((len(ts), d, d))
        zd = np.empty((len(ts), self.plant.z_dim))
        reference = self.cost.reference
        for i, t in enumerate(ts):
            ref = reference(t)
            gd[i] = ref.state.g.matrix
            zd[i] = ref.state.z
        return gd, zd

    def _rollout(self, g, z, t) -> Trajectory:
        p = self.params
        schedule = self.schedule()
        if not self.compiled:
            return rollout(self.plant, g, z, t, schedule, p.horizon, p.sample_dt)
        n_steps = int(round(p.horizon / p.sample_dt))
        ts = t + p.sample_dt * np.arange(n_steps + 1)
        us = np.empty((n_steps, self.plant.u_dim))
        for i in range(n_steps):
            us[i] = schedule(ts[i])
        gs, zs, g_mid, z_mid = self._fp.rollout_loop(
            self._pid, self._kid, self._par,
            np.ascontiguousarray(g, dtype=float),
            np.ascontiguousarray(z, dtype=float), us, t, p.sample_dt)
        if not (np.isfinite(zs).all() and np.isfinite(gs).all()):
            from .models import DivergenceError
            raise DivergenceError("non-finite state in rollout")
        return Trajectory(ts, gs, zs, us, g_mid, z_mid)

    def _objective(self, traj: Trajectory, M) -> float:
        if not self.compiled:
            return self.cost.total_objective(traj.ts, traj.gs, traj.zs, M=M)
        gd, zd = self._node_refs
        J = self._fp.trapezoid_cost_loop(
            self._kid, traj.ts, traj.gs, traj.zs, gd, zd,
            self.cost.M if M is None else M, self.cost.Q_z)
        return J + self.cost.terminal_cost(traj.gs[-1], traj.zs[-1], traj.ts[-1])

    def _costate(self, traj: Trajectory, M):
        if not self.compiled:
            return backward_costate(self.plant, self.cost, traj, M=M)
        gd, zd = self._node_refs
        gdm, zdm = self._mid_refs
        rho_T = self.cost.terminal_gradient(traj.gs[-1], traj.zs[-1], traj.ts[-1])
        rho = self._fp.costate_loop(
            self._pid, self._kid, self._par, traj.ts, traj.gs, traj.zs,
            traj.g_mid, traj.z_mid, traj.us, gd, zd, gdm, zdm,
            self.cost.M if M is None else M, self.cost.Q_z, rho_T)
        if not np.isfinite(rho).all():
            from .models import DivergenceError
            raise DivergenceError("costate integration produced non-finite values")
        return rho

    def _insertion_objective(self, traj: Trajectory, action: SacAction, M) -> float:
        if not self.compiled:
            return simulate_with_insertion(self.plant, self.cost, traj, action, M=M)
        t_end = float(traj.ts[-1])
        tau0 = min(max(action.tau0, float(traj.ts[0])), t_end)
        tau1 = min(tau0 + max(action.duration, 0.0), t_end)
        gd, zd = self._node_refs
        gd_cut, zd_cut = self._pack_refs([tau0, tau1])
        J, g_end, z_end = self._fp.insertion_cost_loop(
            self._pid, self._kid, self._par, traj.ts, traj.gs, traj.zs, traj.us,
            np.ascontiguousarray(action.u2, dtype=float), tau0, tau1,
            gd, zd, gd_cut, zd_cut,
            self.cost.M if M is None else M, self.cost.Q_z)
        return J + self.cost.terminal_cost(g_end, z_end, t_end)

    # ------------------------------------------------------------ schedule

    def base_nominal(self, t) -> np.ndarray:
        if self.nominal == "feedforward":
            return self.cost.reference(t).u_ff
        return np.zeros(self.plant.u_dim)

    def schedule(self) -> ControlSchedule:
        return ControlSchedule(self.base_nominal, self.pending)

    def scheduled_control(self, t) -> np.ndarray:
        return self.schedule()(t)

    # ------------------------------------------------------------ pipeline

    def _plan(self, traj: Trajectory, M, t):
        """Costate, candidate actions and insertion gradients for one cycle.

        Candidate times run from t + t_calc in steps of tau_grid_dt (the
        first candidate is exactly the next cycle start, so an accepted
        action is applied one feedback period later); costate and state are
        interpolated where candidates fall between rollout samples.
        """
        p = self.params
        J1 = self._objective(traj, M)
        rho = self._costate(traj, M)
        alpha_d = p.alpha_fixed if p.alpha_fixed is not None else p.gamma * J1

        t_calc = p.t_calc if p.t_calc is not None else self.feedback_dt
        step = p.tau_grid_dt if p.tau_grid_dt is not None else p.sample_dt
        t_last = traj.ts[-1] - step
        n_taus = max(int(math.floor((t_last - (t + t_calc)) / step + 1e-9)) + 1, 0)
        taus = t + t_calc + step * np.arange(n_taus)

        kind = self.plant.kind
        m = self.plant.u_dim
        u2s = np.empty((n_taus, m))
        migs = np.empty(n_taus)
        for j, tau in enumerate(taus):
            g, z, u1, r = interpolate_sample(kind, traj, rho, tau)
            h = self.plant.control_matrix(g, z, tau)
            pv = h.T @ r
            pv_r = pv / p.r_diag
            raw = u1 + alpha_d * pv_r / (1.0 + pv @ pv_r)
            u2s[j] = np.clip(raw, self.plant.u_min, self.plant.u_max)
            migs[j] = pv @ (u2s[j] - u1)
        return J1, alpha_d, taus, u2s, migs

    def _line_search(self, traj, action: SacAction, M):
        p = self.params
        lam_max = traj.ts[-1] - action.tau0
        lam = min(p.lambda0 if p.lambda0 is not None else 4.0 * p.sample_dt, lam_max)
        # zero-duration baseline through the same split path, so the
        # sufficient-decrease comparison is free of quadrature-scheme bias
        J0 = self._insertion_objective(
            traj, SacAction(action.u2, action.tau0, 0.0, 0.0), M)
        for _ in range(p.max_backtracks + 1):
            if lam <= 0.0:
                break
            candidate = SacAction(action.u2, action.tau0, lam, action.predicted_mig)
            J_new = self._insertion_objective(traj, candidate, M)
            if J_new - J0 <= p.zeta * lam * action.predicted_mig:
                return lam, J_new - J0
            lam *= p.beta
        return 0.0, 0.0

    def sac_step(self, g, z, t):
        """One feedback cycle; returns the control for [t, t + feedback_dt)."""
        p = self.params
        if self.pending is not None and self.pending.tau0 + self.pending.duration <= t:
            self.pending = None
        applied = self.scheduled_control(t)
        try:
            return self._sac_cycle(g, z, t, applied)
        except lg.LogBranchError:
            # a rollout state grazed the principal-branch cut; skip this
            # cycle (the applied schedule still moves the state off it)
            log = StepLog(t=t, J1=math.nan, predicted_mig=0.0, tau0=math.nan,
                          duration=0.0, u=applied, mode="nominal")
            self.step_index += 1
            self.logs.append(log)
            return applied, log

    def _sac_cycle(self, g, z, t, applied):
        p = self.params
        traj = self._rollout(g, z, t)
        if self.compiled:
            self._node_refs = self._pack_refs(traj.ts)
            self._mid_refs = self._pack_refs(0.5 * (traj.ts[:-1] + traj.ts[1:]))
        J1, alpha_d, taus, u2s, migs = self._plan(traj, None, t)

        perturbed = False
        M = None
        if self.cost.epsilon > 0.0 and len(taus):
            u1s = np.array([self.schedule()(tau) for tau in taus])
            stuck = (np.abs(u2s - u1s).max() < p.action_zero_tol
                     and self.cost.stage_cost(g, z, t) > p.perturb_cost_threshold)
            if stuck:
                M = self.cost.perturbed_weight(self.step_index)
                J1, alpha_d, taus, u2s, migs = self._plan(traj, M, t)
                perturbed = True

        log = StepLog(t=t, J1=J1, predicted_mig=0.0, tau0=math.nan, duration=0.0,
                      u=applied, mode="nominal", perturbed=perturbed)
        descent_floor = -1e-9 * max(1.0, abs(J1))
        if len(migs) and migs.min() < descent_floor:
            idx = int(np.argmin(migs))
            action = SacAction(u2s[idx], float(taus[idx]), 0.0, float(migs[idx]))
            lam, dJ = self._line_search(traj, action, M)
            if lam > 0.0:
                action = SacAction(action.u2, action.tau0, lam, action.predicted_mig)
                self.pending = action
                log = StepLog(t=t, J1=J1, predicted_mig=action.predicted_mig,
                              tau0=action.tau0, duration=lam, u=applied,
                              mode="SAC", perturbed=perturbed, delta_J=dJ)
        self.step_index += 1
        self.logs.append(log)
        return applied, log


class LqrEndgame:
    """Infinite-horizon LQR about hover, gated by the printed error test.

    The gate accepts when ||log(g_d^-1 g)||^2 + ||omega - omega_d||^2 +
    ||x - x_d||^2 <= threshold^2 (position enters both through the SE(3)
    log and the separate world-frame term, as written) AND the resulting
    rotor commands stay inside the actuation box; otherwise it declines
    and SAC runs.
    """

    def __init__(self, plant, reference, Q=None, R=None, threshold=6.0):
        self.plant = plant
        self.reference = reference
        self.threshold = float(threshold)
        n = plant.state_dim
        if Q is None:
            Q = np.diag(np.concatenate([
                np.full(3, 10.0),   # attitude log error
                np.full(3, 10.0),   # translation log error
                np.full(3, 1.0),    # body rate error
                np.full(3, 1.0),    # body velocity error
            ]))
        if R is None:
            R = np.eye(plant.u_dim)
        A, B = linearize(plant, lg.identity(plant.kind), np.zeros(plant.z_dim),
                         plant.hover_control(), 0.0)
        P = scipy.linalg.solve_continuous_are(A, B, Q, R)
        self.K = np.linalg.solve(R, B.T @ P)
        self.A, self.B = A, B

    def error_metric(self, g, z, t) -> float:
        ref = self.reference(t)
        g_d = ref.state.g.matrix
        try:
            log_err = lg.log(self.plant.kind, lg.inverse(self.plant.kind, g_d) @ g)
        except lg.LogBranchError:
            return math.inf
        omega_err = z[:3] - ref.state.z[:3]
        pos_err = g[:3, 3] - g_d[:3, 3]
        return float(log_err @ log_err + omega_err @ omega_err + pos_err @ pos_err)

    def try_control(self, g, z, t):
        """Gated LQR control, or None when the gate declines."""
        if self.error_metric(g, z, t) > self.threshold ** 2:
            return None
        ref = self.reference(t)
        g_d = ref.state.g.matrix
        log_err = lg.log(self.plant.kind, lg.inverse(self.plant.kind, g_d) @ g)
        e = np.concatenate([log_err, z - ref.state.z])
        u = ref.u_ff - self.K @ e
        if np.all(u >= self.plant.u_min - 1e-12) and np.all(u <= self.plant.u_max + 1e-12):
            return np.clip(u, self.plant.u_min, self.plant.u_max)
        return None
