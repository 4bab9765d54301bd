"""Quadratic costs on Lie groups built through the logarithm map.

The running cost is

    L(g, z, t) = 1/2 ||log(g_d(t)^-1 g)||_M^2 + 1/2 ||z - z_d(t)||_Qz^2

with ||x||_W^2 = x^T W x. Its exact group-block gradient (in right-perturbation
coordinates, D f . eta = d/ds f(g exp(s eta))) is

    dexpinv(-log(g_d^-1 g))^T M log(g_d^-1 g)

which is why the exact dexpinv kernels exist. The weight M supports a seeded
random off-diagonal perturbation used to escape the parallel-parking
singularity where h^T rho vanishes identically under a diagonal M.
"""

from __future__ import annotations

import numpy as np

from . import liegroup as lg
from .liegroup import GroupKind
from .models import ReferencePoint


def _check_symmetric_psd(name, w, dim, definite=False):
    w = np.asarray(w, dtype=float)
    if w.shape != (dim, dim):
        raise ValueError(f"{name} must be {dim}x{dim}, got {w.shape}")
    if dim == 0:
        return w
    if np.abs(w - w.T).max() > 1e-12:
        raise ValueError(f"{name} must be symmetric")
    eigs = np.linalg.eigvalsh(w)
    if definite and eigs.min() <= 0.0:
        raise ValueError(f"{name} must be positive definite (min eig {eigs.min():.3e})")
    if not definite and eigs.min() < -1e-12:
        raise ValueError(f"{name} must be positive semidefinite")
    return w


class QuadraticLieCost:
    """Running + terminal log-quadratic cost against a (possibly moving) reference.

    Parameters
    ----------
    kind : GroupKind
    M : (a, a) symmetric positive definite weight on the group log error.
    Q_z : (k, k) PSD weight on the auxiliary error; zeros if omitted.
    reference : callable t -> ReferencePoint giving (g_d, z_d) and feedforward.
    P_terminal : (a+k, a+k) PSD weight on the stacked terminal error; zero if
        omitted (pure running cost).
    epsilon, interval_steps, seed : off-diagonal M-perturbation parameters; a
        fresh symmetric draw with zero diagonal and entries uniform in
        [-epsilon, epsilon] is made every `interval_steps` controller steps.
    """

    def __init__(self, kind: GroupKind, M, reference, Q_z=None, P_terminal=None,
                 epsilon=0.0, interval_steps=25, seed=0, z_dim=None):
        self.kind = kind
        a = kind.algebra_dim
        self.M = _check_symmetric_psd("M", M, a, definite=True)
        if z_dim is None:
            z_dim = 0 if Q_z is None else np.asarray(Q_z).shape[0]
        self.z_dim = int(z_dim)
        if Q_z is None:
            Q_z = np.zeros((self.z_dim, self.z_dim))
        self.Q_z = _check_symmetric_psd("Q_z", Q_z, self.z_dim)
        n = a + self.z_dim
        if P_terminal is None:
            P_terminal = np.zeros((n, n))
        self.P_terminal = _check_symmetric_psd("P_terminal", P_terminal, n)
        self.reference = reference
        self.epsilon = float(epsilon)
        self.interval_steps = int(interval_steps)
        self.seed = int(seed)
        if self.epsilon < 0.0:
            raise ValueError("epsilon must be nonnegative")
        if self.epsilon > 0.0:
            lam_min = np.linalg.eigvalsh(self.M).min()
            if self.epsilon >= lam_min / a:
                raise ValueError(
                    f"epsilon {self.epsilon} too large: must stay below "
                    f"min-eig(M)/dim = {lam_min / a:.6g} to keep M positive definite")

    # ------------------------------------------------------------- errors

    def target(self, t) -> ReferencePoint:
        return self.reference(t)

    def error(self, g, z, t):
        """(group log error, z error) against the reference at time t."""
        ref = self.reference(t)
        g_d = ref.state.g.matrix
        err_g = lg.log(self.kind, lg.inverse(self.kind, g_d) @ g)
        err_z = np.asarray(z, dtype=float) - ref.state.z
        return err_g, err_z

    # ------------------------------------------------------------- values

    def stage_cost(self, g, z, t, M=None) -> float:
        err_g, err_z = self.error(g, z, t)
        M = self.M if M is None else M
        return 0.5 * (err_g @ M @ err_g) + 0.5 * (err_z @ self.Q_z @ err_z)

    def stage_gradient(self, g, z, t, M=None) -> np.ndarray:
        """Stacked covector (group block exact via dexpinv, z block Q_z e_z)."""
        err_g, err_z = self.error(g, z, t)
        M = self.M if M is None else M
        grad_g = lg.dexpinv(self.kind, -err_g).T @ (M @ err_g)
        return np.concatenate([grad_g, self.Q_z @ err_z])

    def terminal_cost(self, g, z, t) -> float:
        if not self.P_terminal.any():
            return 0.0
        err_g, err_z = self.error(g, z, t)
        e = np.concatenate([err_g, err_z])
        return 0.5 * (e @ self.P_terminal @ e)

    def terminal_gradient(self, g, z, t) -> np.ndarray:
        n = self.kind.algebra_dim + self.z_dim
        if not self.P_terminal.any():
            return np.zeros(n)
        err_g, err_z = self.error(g, z, t)
        e = np.concatenate([err_g, err_z])
        pe = self.P_terminal @ e
        a = self.kind.algebra_dim
        grad_g = lg.dexpinv(self.kind, -err_g).T @ pe[:a]
        return np.concatenate([grad_g, pe[a:]])

    def total_objective(self, ts, g_path, z_path, M=None) -> float:
        """Trapezoidal quadrature of the stage cost plus the terminal term."""
        ts = np.asarray(ts, dtype=float)
        if len(ts) == 0:
            raise ValueError("empty trajectory")
        costs = np.array([
            self.stage_cost(g_path[i], z_path[i], ts[i], M=M) for i in range(len(ts))
        ])
        J = float(np.trapezoid(costs, ts)) if len(ts) > 1 else 0.0
        return J + self.terminal_cost(g_path[-1], z_path[-1], ts[-1])

    # ------------------------------------------------------- M perturbation

    def perturbed_weight(self, step_index: int) -> np.ndarray:
        """M plus the seeded off-diagonal draw for this step's interval.

        The draw is keyed by (seed, step_index // interval_steps), so it is
        reproducible without sequential RNG state and changes every
        `interval_steps` steps while active.
        """
        if self.epsilon == 0.0:
            return self.M
        block = int(step_index) // self.interval_steps
        rng = np.random.default_rng([self.seed, block])
        a = self.kind.algebra_dim
        upper = np.triu(rng.uniform(-self.epsilon, self.epsilon, (a, a)), k=1)
        return self.M + upper + upper.T
