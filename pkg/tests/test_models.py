import math

import numpy as np
import pytest

from liesac import liegroup as lg
from liesac.liegroup import GroupKind
from liesac.models import (
    GRAVITY,
    CarPlant,
    FlatOutputReference,
    HybridState,
    QuadrotorPlant,
    TranslationPlant,
    integrate_step,
    linearize,
)

from conftest import random_algebra, random_group


def make_plants():
    return [CarPlant(), QuadrotorPlant(), TranslationPlant()]


def random_plant_state(plant, rng, spread=1.0):
    g = random_group(plant.kind, rng, w_hi=1.5)
    z = spread * rng.normal(size=plant.z_dim)
    if isinstance(plant, CarPlant):
        z[2] = rng.uniform(-0.8, 0.8)
        z[0] = z[1] * math.sin(z[2])
    return g, z


def random_control(plant, rng):
    return rng.uniform(plant.u_min, plant.u_max)


# ---------------------------------------------------------------- drift

def test_car_at_rest_has_zero_rates():
    car = CarPlant()
    xi, zr = car.drift(lg.identity(GroupKind.SE2), np.zeros(3), 0.0)
    assert np.all(xi == 0.0) and np.all(zr == 0.0)


def test_quadrotor_free_fall():
    quad = QuadrotorPlant()
    xi, zr = quad.drift(np.eye(4), np.zeros(6), 0.0)
    assert np.all(xi == 0.0)
    assert np.allclose(zr, [0, 0, 0, 0, 0, -GRAVITY])


def test_quadrotor_pure_spin_torque_free():
    quad = QuadrotorPlant()
    z = np.array([1.0, 0, 0, 0, 0, 0])
    _, zr = quad.drift(np.eye(4), z, 0.0)
    # J w x w = 0 when w is along a principal axis
    assert np.allclose(zr[:3], 0.0, atol=1e-15)


# ---------------------------------------------------------------- control matrix

def test_car_control_rows_are_unit_injection():
    car = CarPlant()
    rng = np.random.default_rng(3)
    for _ in range(5):
        z = rng.normal(size=3)
        h = car.control_matrix(lg.identity(GroupKind.SE2), z, 0.0)
        assert np.array_equal(h[4], [1.0, 0.0])  # dv_par = u1
        assert np.array_equal(h[5], [0.0, 1.0])  # dphi = u2
        assert np.all(h[:3] == 0.0)              # controls do not enter xi


def test_quadrotor_thrust_torque_values():
    quad = QuadrotorPlant()
    f, m = quad.thrust_torque([1.0, 1.0, 1.0, 1.0])
    assert math.isclose(f, 2.4, rel_tol=1e-12)
    assert np.allclose(m, 0.0)
    f, m = quad.thrust_torque([0.0, 1.0, 0.0, 0.0])
    assert math.isclose(f, 0.6, rel_tol=1e-12)
    assert np.allclose(m, [0.12, 0.0, -0.15], atol=1e-15)


def test_quadrotor_control_matrix_consistent_with_full_dynamics(rng):
    quad = QuadrotorPlant()
    g, z = random_plant_state(quad, rng)
    w0 = np.zeros(4)
    w1 = np.array([0.0, 1.0, 0.0, 0.0])
    xi0, zr0 = quad.dynamics(g, z, w0, 0.0)
    xi1, zr1 = quad.dynamics(g, z, w1, 0.0)
    h = quad.control_matrix(g, z, 0.0)
    diff = np.concatenate([xi1 - xi0, zr1 - zr0])
    assert np.allclose(diff, h @ (w1 - w0), atol=1e-14)


@pytest.mark.parametrize("plant", make_plants(), ids=lambda p: type(p).__name__)
def test_affinity_exact(plant, rng):
    for _ in range(10):
        g, z = random_plant_state(plant, rng)
        u = random_control(plant, rng)
        u2 = random_control(plant, rng)
        xi_a, zr_a = plant.dynamics(g, z, u, 0.3)
        xi_b, zr_b = plant.dynamics(g, z, u2, 0.3)
        h = plant.control_matrix(g, z, 0.3)
        diff = np.concatenate([xi_a - xi_b, zr_a - zr_b])
        assert np.allclose(diff, h @ (u - u2), rtol=0.0, atol=1e-12)


def test_quadrotor_boundary_controls_finite(rng):
    quad = QuadrotorPlant()
    for w in [np.zeros(4), np.full(4, 6.0), np.array([0.0, 6.0, 0.0, 6.0])]:
        g, z = random_plant_state(quad, rng)
        xi, zr = quad.dynamics(g, z, w, 0.0)
        assert np.isfinite(xi).all() and np.isfinite(zr).all()


# ---------------------------------------------------------------- linearize

@pytest.mark.parametrize("plant", make_plants(), ids=lambda p: type(p).__name__)
def test_analytic_jacobian_matches_finite_differences(plant, rng):
    from liesac.models import _fd_state_jacobian
    for _ in range(10):
        g, z = random_plant_state(plant, rng)
        u = random_control(plant, rng)
        Dg_a, Dz_a = plant.analytic_state_jacobian(g, z, u, 0.0)
        Dg_f, Dz_f = _fd_state_jacobian(plant, g, z, u, 0.0)
        assert np.abs(Dg_a - Dg_f).max() < 1e-6
        assert np.abs(Dz_a - Dz_f).max() < 1e-6


def test_quadrotor_linearization_blocks_at_hover():
    quad = QuadrotorPlant()
    A, B = linearize(quad, np.eye(4), np.zeros(6), quad.hover_control(), 0.0)
    n = 6
    # xi = z and ad_xi = 0 at rest: group block is zero, coupling identity
    assert np.allclose(A[:n, :n], 0.0)
    assert np.allclose(A[:n, n:], np.eye(6))
    # -hat(omega), hat(v) blocks vanish; gravity coupling remains
    assert np.allclose(A[n + 3:, n:n + 3], 0.0)
    assert np.allclose(A[n + 3:, n + 3:], 0.0)
    assert np.allclose(A[n + 3:, :3], -GRAVITY * lg.hat(GroupKind.SO3, [0, 0, 1.0]))


@pytest.mark.parametrize("plant", make_plants(), ids=lambda p: type(p).__name__)
def test_linear_prediction_matches_nonlinear_rollout(plant, rng):
    """Propagating (eta, dz) through A tracks the true perturbed flow to O(s^2)."""
    s = 1e-4
    horizon, dt = 0.5, 0.01
    g0, z0 = random_plant_state(plant, rng, spread=0.3)
    u = 0.1 * random_control(plant, rng)
    eta0 = rng.normal(size=plant.kind.algebra_dim)
    dz0 = rng.normal(size=plant.z_dim)
    if isinstance(plant, CarPlant):
        # stay inside the steering box and perturb tangent to w = v sin(phi)
        z0[2] = 0.3
        z0[0] = z0[1] * math.sin(z0[2])
        dz0[0] = math.sin(z0[2]) * dz0[1] + z0[1] * math.cos(z0[2]) * dz0[2]

    g_pert = g0 @ lg.exp(plant.kind, s * eta0)
    z_pert = z0 + s * dz0
    eta = np.concatenate([eta0, dz0])

    g_nom, z_nom = g0, z0
    t = 0.0
    for _ in range(int(round(horizon / dt))):
        A, _ = linearize(plant, g_nom, z_nom, u, t)
        # RK2 on the frozen-interval linearized dynamics
        k1 = A @ eta
        A2, _ = linearize(plant, *integrate_step(plant, g_nom, z_nom, u, t, 0.5 * dt), u, t + 0.5 * dt)
        k2 = A2 @ (eta + 0.5 * dt * k1)
        eta = eta + dt * k2
        g_nom, z_nom = integrate_step(plant, g_nom, z_nom, u, t, dt)
        g_pert, z_pert = integrate_step(plant, g_pert, z_pert, u, t, dt)
        t += dt

    n = plant.kind.algebra_dim
    eta_true = lg.log(plant.kind, lg.inverse(plant.kind, g_nom) @ g_pert) / s
    dz_true = (z_pert - z_nom) / s
    scale = max(1.0, np.abs(np.concatenate([eta_true, dz_true])).max())
    assert np.abs(eta[:n] - eta_true).max() < 5e-3 * scale
    assert np.abs(eta[n:] - dz_true).max() < 5e-3 * scale


def test_zero_perturbation_stays_zero(rng):
    plant = CarPlant()
    g, z = random_plant_state(plant, rng)
    u = random_control(plant, rng)
    A, _ = linearize(plant, g, z, u, 0.0)
    assert np.all(A @ np.zeros(6) == 0.0)


# ---------------------------------------------------------------- integrator

def test_integrate_constant_rate_is_exact(rng):
    quad = QuadrotorPlant()

    class FrozenXi(QuadrotorPlant):
        def dynamics(self, g, z, u, t):
            return np.array([0.3, -0.2, 0.5, 1.0, 0.0, -0.4]), np.zeros(6)

    plant = FrozenXi()
    g = random_group(GroupKind.SE3, rng)
    xi = np.array([0.3, -0.2, 0.5, 1.0, 0.0, -0.4])
    dt = 0.37
    g1, _ = integrate_step(plant, g, np.zeros(6), np.zeros(4), 0.0, dt)
    assert np.abs(g1 - g @ lg.exp(GroupKind.SE3, dt * xi)).max() < 1e-14


def test_integrate_step_halving_is_fourth_order():
    quad = QuadrotorPlant()
    z0 = np.array([1.2, -0.8, 0.5, 0.3, 0.1, -0.2])
    g0 = np.eye(4)
    u = np.zeros(4)

    def endpoint(n_steps):
        g, z = g0, z0
        dt = 1.0 / n_steps
        for i in range(n_steps):
            g, z = integrate_step(quad, g, z, u, i * dt, dt)
        return g, z

    g_ref, z_ref = endpoint(512)
    errs = []
    for n in (16, 32, 64):
        g, z = endpoint(n)
        errs.append(np.abs(g - g_ref).max() + np.abs(z - z_ref).max())
    assert errs[0] / errs[1] > 12.0
    assert errs[1] / errs[2] > 12.0


def test_integrator_preserves_rotation_block(rng):
    quad = QuadrotorPlant()
    g, z = np.eye(4), np.array([0.9, -0.4, 0.7, 0.0, 0.0, 0.0])
    u = quad.hover_control()
    for i in range(10_000):
        g, z = integrate_step(quad, g, z, u, 0.0, 1e-3)
    R = g[:3, :3]
    assert abs(np.linalg.det(R) - 1.0) < 1e-12
    assert np.abs(R.T @ R - np.eye(3)).max() < 1e-9


def test_hover_balance():
    quad = QuadrotorPlant()
    w = quad.hover_control()
    assert np.allclose(w, 2.4525)
    g, z = np.eye(4), np.zeros(6)
    for i in range(100):
        g, z = integrate_step(quad, g, z, w, i * 0.01, 0.01)
    assert np.abs(g[:3, 3]).max() < 1e-9
    assert np.abs(z).max() < 1e-9


def test_car_steering_clamp():
    car = CarPlant()
    g, z = lg.identity(GroupKind.SE2), np.zeros(3)
    u = np.array([1.0, 5.0])  # push steering hard against the limit
    for i in range(200):
        g, z = integrate_step(car, g, z, u, i * 0.01, 0.01)
        assert abs(z[2]) <= math.pi / 3 + 1e-12
    assert math.isclose(z[2], math.pi / 3, rel_tol=1e-9)
    # the algebraic w = v_par sin(phi) is re-imposed by the state projection
    assert abs(z[0] - z[1] * math.sin(z[2])) < 1e-15


def test_divergence_detected():
    from liesac.models import DivergenceError

    class Blowup(TranslationPlant):
        def dynamics(self, g, z, u, t):
            return np.array([0.0, np.inf, 0.0]), np.zeros(2)

    with np.errstate(invalid="ignore"), pytest.raises(DivergenceError):
        integrate_step(Blowup(), lg.identity(GroupKind.SE2), np.zeros(2),
                       np.zeros(2), 0.0, 0.01)


# ---------------------------------------------------------------- flat reference

def test_flat_reference_initial_point_matches_caption():
    quad = QuadrotorPlant()
    ref = FlatOutputReference(quad)
    r0 = ref(0.0)
    assert np.allclose(r0.state.g.matrix[:3, 3], 0.0, atol=1e-12)
    assert np.allclose(r0.state.g.matrix[:3, :3], np.eye(3), atol=1e-12)
    # frozen from the experiment description (2-decimal rounding there)
    assert np.abs(r0.state.z[:3] - [0.94, -0.18, 0.25]).max() < 5e-3
    assert np.abs(r0.state.z[3:] - [6.28, 8.38, 3.67]).max() < 5e-3


def test_flat_reference_position_peak():
    ref = FlatOutputReference(QuadrotorPlant())
    r = ref(3.0)
    assert math.isclose(r.state.g.matrix[0, 3], 12.0, rel_tol=1e-12)


def test_flat_reference_velocity_consistency():
    """FD of the returned poses reproduces the returned body velocities."""
    quad = QuadrotorPlant()
    ref = FlatOutputReference(quad)
    dt = 1e-4
    for t in [0.0, 0.7, 2.3, 5.1, 9.8]:
        gm = ref(t - dt).state.g.matrix
        gp = ref(t + dt).state.g.matrix
        xi_fd = lg.log(GroupKind.SE3, lg.inverse(GroupKind.SE3, gm) @ gp) / (2.0 * dt)
        assert np.abs(xi_fd - ref(t).state.z).max() < 1e-3


def test_flat_reference_feedforward_in_box():
    quad = QuadrotorPlant()
    ref = FlatOutputReference(quad)
    for t in np.linspace(0.0, 12.0, 25):
        w = ref(t).u_ff
        assert np.all(w >= quad.u_min - 1e-12) and np.all(w <= quad.u_max + 1e-12)
