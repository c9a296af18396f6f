import jax
import jax.numpy as jnp
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import central_jacobian, random_quaternion, scalar_derivative
from perchgen.dynamics import (
    G,
    Q,
    RobotParams,
    RobotState,
    derivative,
    integrate_fine,
    shooting_step,
    state_derivative,
    thrust_wrench,
)
from perchgen.errors import InvalidParameterError

RP = RobotParams()
HOVER = RobotState(p_wb=[0.0, 0.0, 1.0], gamma=np.full(4, 0.8 * 9.81 / 4))


def random_state(rng, w_scale=2.0):
    return np.concatenate(
        [rng.normal(size=3), random_quaternion(rng), rng.normal(size=3), w_scale * rng.normal(size=3), rng.uniform(0, 7, 4)]
    )


def oracle(x, u, rp=RP):
    return scalar_derivative(
        x, u, rp.mass, rp.inertia_diag, rp.rotor_x, rp.rotor_y, rp.drag_torque_const, rp.spin_dirs, rp.gravity
    )


def test_params_validation():
    for bad in (dict(mass=0.0), dict(inertia_diag=[1, 0, 1]), dict(gamma_max=0), dict(u_min=1.0), dict(spin_dirs=[1, 1, 0, 1])):
        with pytest.raises(InvalidParameterError):
            RobotParams(**bad)
    assert RP.gamma_max == pytest.approx(7.848)


def test_wrench_symmetric_layout():
    d = 0.1
    rp = RobotParams(rotor_x=[d, -d, -d, d], rotor_y=[-d, d, -d, d])
    c, t = thrust_wrench(np.ones(4), rp)
    np.testing.assert_array_equal(c, [0, 0, 4])
    assert t[0] == 0 and t[1] == 0
    c, t = thrust_wrench(np.zeros(4), rp)
    np.testing.assert_array_equal(c, 0)
    np.testing.assert_array_equal(t, 0)


def test_wrench_yaw_torque():
    rp = RobotParams(drag_torque_const=0.01, spin_dirs=[-1, 1, -1, 1])
    _, t = thrust_wrench([2.0, 1.0, 2.0, 1.0], rp)
    assert t[2] == pytest.approx(-0.02, abs=1e-15)


def test_hover_derivative_is_zero():
    assert HOVER.gamma[0] == pytest.approx(1.962)
    np.testing.assert_allclose(state_derivative(HOVER, np.zeros(4), RP), 0, atol=1e-14)


def test_free_fall_derivative():
    x = RobotState(p_wb=[0, 0, 5])
    d = state_derivative(x, np.zeros(4), RP)
    np.testing.assert_allclose(d[7:10], [0, 0, -9.81], atol=1e-15)


def test_derivative_matches_scalar_oracle(rng):
    for _ in range(100):
        x = random_state(rng)
        u = rng.normal(size=4) * 50
        np.testing.assert_allclose(state_derivative(x, u, RP), oracle(x, u), rtol=1e-12, atol=1e-12)
        # the AD Jacobian against finite differences of the separate implementation
        J = np.asarray(jax.jacfwd(derivative)(jnp.asarray(x), jnp.asarray(u), RP.arrays()))
        J_fd = central_jacobian(lambda y: oracle(y, u), x)
        np.testing.assert_allclose(J, J_fd, atol=1e-8 * max(1.0, np.abs(J_fd).max()))


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_derivative_linear_in_u_and_gamma(seed):
    rng = np.random.default_rng(seed)
    x = random_state(rng)
    u1, u2 = rng.normal(size=4), rng.normal(size=4)
    d = lambda y, u: state_derivative(y, u, RP)  # noqa: E731
    np.testing.assert_allclose(d(x, u1 + u2)[G] - d(x, u2)[G], d(x, u1)[G] - d(x, 0 * u1)[G], atol=1e-12)
    # with zero body rates, v' and w' are affine in gamma
    x[10:13] = 0.0
    g1, g2 = rng.uniform(0, 5, 4), rng.uniform(0, 5, 4)
    xa, xb, xab, x0 = x.copy(), x.copy(), x.copy(), x.copy()
    xa[G], xb[G], xab[G], x0[G] = g1, g2, g1 + g2, 0.0
    lhs = d(xab, u1)[7:13] - d(x0, u1)[7:13]
    rhs = (d(xa, u1)[7:13] - d(x0, u1)[7:13]) + (d(xb, u1)[7:13] - d(x0, u1)[7:13])
    np.testing.assert_allclose(lhs, rhs, atol=1e-10)


def test_shooting_hover_equilibrium():
    out = shooting_step(HOVER, np.zeros(4), 2.0, 30, RP)
    np.testing.assert_allclose(out.vector(), HOVER.vector(), atol=1e-12)


def test_shooting_free_fall():
    x = RobotState(p_wb=[0, 0, 0])
    out = shooting_step(x, np.zeros(4), 0.1, 1, RP)
    assert out.v_w[2] == pytest.approx(-0.981, abs=1e-12)
    assert out.p_wb[2] == pytest.approx(-0.04905, abs=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.1, 5.0), st.integers(1, 60))
def test_shooting_step_scale_equivalence(seed, T, N):
    rng = np.random.default_rng(seed)
    x = RobotState.from_vector(random_state(rng))
    u = rng.normal(size=4) * 20
    a = shooting_step(x, u, T, N, RP).vector()
    b = shooting_step(x, u, 2 * T, 2 * N, RP).vector()
    np.testing.assert_allclose(a, b, atol=1e-12)


def test_shooting_step_rejects_bad_args():
    with pytest.raises(InvalidParameterError):
        shooting_step(HOVER, np.zeros(4), 0.0, 10, RP)
    with pytest.raises(InvalidParameterError):
        shooting_step(HOVER, np.zeros(4), 1.0, 0, RP)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 200))
def test_quaternion_norm_preserved(seed, steps):
    rng = np.random.default_rng(seed)
    x = RobotState.from_vector(random_state(rng, w_scale=10.0))
    # physical step 0.1/7 s keeps h |omega| well inside RK4's stability region;
    # far outside it the state overflows and no normalization can help
    for _ in range(steps % 20 + 1):
        x = shooting_step(x, rng.normal(size=4), 0.1, 7, RP)
    assert abs(np.linalg.norm(x.q_wb) - 1) < 1e-9


def test_integrate_single_node_matches_shooting(rng):
    x = random_state(rng)
    u = rng.normal(size=(1, 4))
    traj = integrate_fine(x, u, 0.05, 0.05, RP)
    assert len(traj) == 2
    np.testing.assert_allclose(traj.states[1], shooting_step(x, u[0], 0.05, 1, RP).vector(), atol=1e-9)


def test_integrate_hover_constant():
    traj = integrate_fine(HOVER, np.zeros((10, 4)), 1.0, 1e-3, RP)
    np.testing.assert_allclose(traj.states, np.tile(HOVER.vector(), (len(traj), 1)), atol=1e-9)


def test_integrate_rejects_bad_dt():
    with pytest.raises(InvalidParameterError):
        integrate_fine(HOVER, np.zeros((3, 4)), 1.0, 0.0, RP)


def test_integrate_snaps_dt_to_node_grid():
    traj = integrate_fine(HOVER, np.zeros((7, 4)), 1.0, 1e-3, RP)
    h = 1.0 / 7
    assert traj.dt <= 1e-3
    assert abs(h / traj.dt - round(h / traj.dt)) < 1e-9
    assert np.all(np.diff(traj.times) > 0)
    np.testing.assert_allclose(np.diff(traj.times), traj.dt, atol=1e-12)
    assert traj.times[-1] == pytest.approx(1.0, abs=1e-12)


def maneuver_inputs(rng, N=10):
    return rng.uniform(-30, 30, size=(N, 4))


def test_integrate_node_boundaries_match_shooting(rng):
    x0 = HOVER.vector()
    U = maneuver_inputs(rng)
    T, N = 1.2, len(U)
    traj = integrate_fine(x0, U, T, 1e-3, RP)
    per = round(T / N / traj.dt)
    x = x0
    for k in range(N):
        x = shooting_step(x, U[k], T, N, RP, substeps=per).vector()
        np.testing.assert_allclose(traj.states[(k + 1) * per], x, atol=1e-9)


def test_integrate_step_halving_converges(rng):
    U = maneuver_inputs(rng)
    a = integrate_fine(HOVER, U, 1.0, 1e-3, RP)
    b = integrate_fine(HOVER, U, 1.0, 5e-4, RP)
    assert np.abs(a.states[-1] - b.states[-1]).max() < 1e-7


def test_integrate_unsnapped_uniform(rng):
    U = maneuver_inputs(rng, 7)
    a = integrate_fine(HOVER, U, 1.0, 1e-3, RP, snap=False)
    assert a.dt == 1e-3
    np.testing.assert_allclose(np.diff(a.times), 1e-3, atol=1e-15)
    b = integrate_fine(HOVER, U, 1.0, 1e-3, RP)
    # both resolve the same piecewise-constant input history
    i = round(0.5 / 1e-3)
    j = int(np.argmin(np.abs(b.times - a.times[i])))
    assert abs(b.times[j] - a.times[i]) < b.dt
    np.testing.assert_allclose(a.states[i], b.states[j], atol=5e-2)


def test_free_fall_keeps_horizontal_velocity():
    x = RobotState(p_wb=[0, 0, 10], v_w=[1.5, -0.7, 0.0])
    traj = integrate_fine(x, np.zeros((4, 4)), 1.0, 1e-3, RP)
    np.testing.assert_allclose(traj.states[:, 7:9], np.tile([1.5, -0.7], (len(traj), 1)), atol=1e-12)
    assert traj.states[-1, 9] == pytest.approx(-9.81, abs=1e-9)


def test_torque_free_momentum_magnitude(rng):
    # equal thrusts with this layout give zero roll and pitch torque; zero spin sum gives zero yaw torque
    g = np.full(4, 2.0)
    _, tau = thrust_wrench(g, RP)
    np.testing.assert_allclose(tau, 0, atol=1e-15)
    for _ in range(5):
        w = rng.normal(size=3) * 3
        x = RobotState(p_wb=[0, 0, 0], q_wb=random_quaternion(rng), omega_b=w, gamma=g)
        traj = integrate_fine(x, np.zeros((10, 4)), 1.0, 1e-3, RP)
        Jw = traj.states[:, 10:13] * RP.inertia_diag
        mag = np.linalg.norm(Jw, axis=1)
        assert np.abs(mag - mag[0]).max() < 1e-6
        np.testing.assert_allclose(np.linalg.norm(traj.states[:, Q], axis=1), 1, atol=1e-9)
