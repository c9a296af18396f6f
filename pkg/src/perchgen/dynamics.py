"""Rotor-thrust-level quadrotor model, RK4 shooting map and fine integrator.

State layout of the flat 17-vector: ``p(0:3) q(3:7) v(7:10) omega(10:13) gamma(13:17)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import partial
from typing import NamedTuple

import jax
import jax.numpy as jnp
import numpy as np

from perchgen import quaternion as quat
from perchgen.errors import InvalidParameterError

NX = 17
NU = 4
P, Q, V, W, G = slice(0, 3), slice(3, 7), slice(7, 10), slice(10, 13), slice(13, 17)


def _vec(x, n):
    return np.asarray(x, dtype=float).reshape(n)


@dataclass(frozen=True)
class RobotState:
    p_wb: np.ndarray = field(default_factory=lambda: np.zeros(3))
    q_wb: np.ndarray = field(default_factory=quat.identity)
    v_w: np.ndarray = field(default_factory=lambda: np.zeros(3))
    omega_b: np.ndarray = field(default_factory=lambda: np.zeros(3))
    gamma: np.ndarray = field(default_factory=lambda: np.zeros(4))

    def __post_init__(self):
        object.__setattr__(self, "p_wb", _vec(self.p_wb, 3))
        object.__setattr__(self, "q_wb", _vec(self.q_wb, 4))
        object.__setattr__(self, "v_w", _vec(self.v_w, 3))
        object.__setattr__(self, "omega_b", _vec(self.omega_b, 3))
        object.__setattr__(self, "gamma", _vec(self.gamma, 4))
        if abs(np.linalg.norm(self.q_wb) - 1.0) > 1e-9:
            raise InvalidParameterError("state quaternion must be unit norm")

    def vector(self) -> np.ndarray:
        return np.concatenate([self.p_wb, self.q_wb, self.v_w, self.omega_b, self.gamma])

    @classmethod
    def from_vector(cls, x) -> RobotState:
        x = np.asarray(x, dtype=float)
        return cls(x[P], x[Q], x[V], x[W], x[G])


@dataclass(frozen=True)
class ControlInput:
    u: np.ndarray = field(default_factory=lambda: np.zeros(4))

    def __post_init__(self):
        u = _vec(self.u, 4)
        if not np.all(np.isfinite(u)):
            raise InvalidParameterError("control input must be finite")
        object.__setattr__(self, "u", u)


def as_state_vector(x) -> np.ndarray:
    return x.vector() if isinstance(x, RobotState) else np.asarray(x, dtype=float)


def as_input_vector(u) -> np.ndarray:
    return u.u if isinstance(u, ControlInput) else np.asarray(u, dtype=float)


class RobotArrays(NamedTuple):
    """Array-only view of :class:`RobotParams` that can be passed through ``jax.jit``."""

    mass: jnp.ndarray
    inertia: jnp.ndarray
    rotor_x: jnp.ndarray
    rotor_y: jnp.ndarray
    kappa: jnp.ndarray
    spin: jnp.ndarray
    gravity: jnp.ndarray
    radii: jnp.ndarray


_D = 0.075


@dataclass(frozen=True)
class RobotParams:
    """Physical and actuation parameters.

    Defaults describe a 0.8 kg racing quadrotor with a 4:1 thrust-to-weight
    ratio. Only the mass and the ratio are measured values; inertia, arm
    length, drag constant, thrust-rate limits and the collision ellipsoid are
    representative assumptions.
    """

    mass: float = 0.8
    inertia_diag: np.ndarray = field(default_factory=lambda: np.array([0.003, 0.003, 0.005]))
    rotor_x: np.ndarray = field(default_factory=lambda: np.array([_D, -_D, -_D, _D]))
    rotor_y: np.ndarray = field(default_factory=lambda: np.array([-_D, _D, -_D, _D]))
    drag_torque_const: float = 0.016
    spin_dirs: np.ndarray = field(default_factory=lambda: np.array([-1.0, 1.0, -1.0, 1.0]))
    gamma_max: float = 4 * 0.8 * 9.81 / 4
    u_min: float = -100.0
    u_max: float = 100.0
    gravity: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, -9.81]))
    ellipsoid_radii: np.ndarray = field(default_factory=lambda: np.array([0.15, 0.15, 0.06]))

    def __post_init__(self):
        for name, n in (("inertia_diag", 3), ("rotor_x", 4), ("rotor_y", 4), ("spin_dirs", 4), ("gravity", 3), ("ellipsoid_radii", 3)):
            object.__setattr__(self, name, _vec(getattr(self, name), n))
        if not self.mass > 0:
            raise InvalidParameterError("mass must be positive")
        if np.any(self.inertia_diag <= 0):
            raise InvalidParameterError("inertia components must be positive")
        if not self.gamma_max > 0:
            raise InvalidParameterError("gamma_max must be positive")
        if not self.u_min < 0 < self.u_max:
            raise InvalidParameterError("thrust-rate limits must satisfy u_min < 0 < u_max")
        if np.any(self.ellipsoid_radii <= 0):
            raise InvalidParameterError("ellipsoid radii must be positive")
        if not np.all(np.isin(self.spin_dirs, (-1.0, 1.0))):
            raise InvalidParameterError("spin_dirs entries must be -1 or 1")

    @property
    def hover_thrust(self) -> float:
        return self.mass * float(np.linalg.norm(self.gravity)) / 4.0

    def arrays(self) -> RobotArrays:
        return RobotArrays(
            jnp.asarray(self.mass, dtype=float),
            jnp.asarray(self.inertia_diag),
            jnp.asarray(self.rotor_x),
            jnp.asarray(self.rotor_y),
            jnp.asarray(self.drag_torque_const, dtype=float),
            jnp.asarray(self.spin_dirs),
            jnp.asarray(self.gravity),
            jnp.asarray(self.ellipsoid_radii),
        )


def _arrays(params) -> RobotArrays:
    return params.arrays() if isinstance(params, RobotParams) else params


def wrench(gamma, p: RobotArrays):
    collective = jnp.stack([jnp.zeros_like(gamma[0]), jnp.zeros_like(gamma[0]), jnp.sum(gamma)])
    torque = jnp.stack([p.rotor_y @ gamma, -(p.rotor_x @ gamma), p.kappa * (p.spin @ gamma)])
    return collective, torque


def derivative(x, u, p: RobotArrays):
    q, v, w, gamma = x[Q], x[V], x[W], x[G]
    collective, torque = wrench(gamma, p)
    q_dot = 0.5 * quat.multiply(q, jnp.concatenate([jnp.zeros(1), w]))
    v_dot = quat.rotate(q, collective) / p.mass + p.gravity
    w_dot = (torque - jnp.cross(w, p.inertia * w)) / p.inertia
    return jnp.concatenate([v, q_dot, v_dot, w_dot, u])


def _renormalize(x):
    return x.at[Q].set(quat.normalize(x[Q]))


def rk4(x, u, h, p, scale=1.0):
    f = lambda y: scale * derivative(y, u, p)  # noqa: E731
    k1 = f(x)
    k2 = f(x + 0.5 * h * k1)
    k3 = f(x + 0.5 * h * k2)
    k4 = f(x + h * k3)
    return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def shooting_map(x, u, T, n_nodes, p: RobotArrays, substeps: int = 1):
    """RK4 on the T-scaled dynamics over the normalized step ``1/n_nodes``.

    With ``substeps > 1`` the node interval is covered by that many equal RK4
    steps, each followed by the quaternion renormalization.
    """
    h = 1.0 / (n_nodes * substeps)
    if substeps == 1:
        return _renormalize(rk4(x, u, h, p, scale=T))
    return jax.lax.fori_loop(0, substeps, lambda _, y: _renormalize(rk4(y, u, h, p, scale=T)), x)


_derivative_jit = jax.jit(derivative)
_shooting_jit = jax.jit(shooting_map, static_argnums=(5,))


def thrust_wrench(gamma, params: RobotParams) -> tuple[np.ndarray, np.ndarray]:
    """Collective body thrust and body torques produced by the rotor thrusts."""
    c, t = wrench(jnp.asarray(gamma, dtype=float), _arrays(params))
    return np.asarray(c), np.asarray(t)


def state_derivative(x, u, params: RobotParams) -> np.ndarray:
    return np.asarray(_derivative_jit(jnp.asarray(as_state_vector(x)), jnp.asarray(as_input_vector(u)), _arrays(params)))


def shooting_step(x, u, T: float, N: int, params: RobotParams, substeps: int = 1) -> RobotState:
    if not T > 0 or N < 1 or substeps < 1:
        raise InvalidParameterError("shooting_step needs T > 0, N >= 1 and substeps >= 1")
    args = (jnp.asarray(as_state_vector(x)), jnp.asarray(as_input_vector(u)), float(T), float(N), _arrays(params))
    out = _shooting_jit(*args, int(substeps))
    return RobotState.from_vector(np.asarray(out))


@dataclass(frozen=True)
class Trajectory:
    """Uniformly sampled trajectory; ``inputs[i]`` is the thrust rate applied from ``times[i]`` on."""

    dt: float
    times: np.ndarray
    states: np.ndarray
    inputs: np.ndarray

    def __len__(self):
        return len(self.times)

    @property
    def duration(self) -> float:
        return float(self.times[-1] - self.times[0])

    def state(self, i: int) -> RobotState:
        return RobotState.from_vector(self.states[i])

    @classmethod
    def empty(cls, dt: float = 0.0) -> Trajectory:
        return cls(dt, np.zeros(0), np.zeros((0, NX)), np.zeros((0, NU)))


@partial(jax.jit, static_argnums=(4,))
def _integrate_snapped(x0, inputs, dt, p, n_sub):
    def fine(x, u):
        x = _renormalize(rk4(x, u, dt, p))
        return x, x

    def node(x, u):
        x, xs = jax.lax.scan(lambda y, _: fine(y, u), x, None, length=n_sub)
        return x, xs

    _, xs = jax.lax.scan(node, x0, inputs)
    return xs.reshape(-1, NX)


@jax.jit
def _integrate_split(x0, ua, ub, frac, dt, p):
    def step(x, args):
        a, b, th = args
        x = rk4(x, a, th * dt, p)
        x = rk4(x, b, (1.0 - th) * dt, p)
        x = _renormalize(x)
        return x, x

    _, xs = jax.lax.scan(step, x0, (ua, ub, frac))
    return xs


def integrate_fine(x0, inputs, T: float, dt: float, params: RobotParams, snap: bool = True) -> Trajectory:
    """Integrate piecewise-constant node inputs (each held for ``T/N``) with RK4 at step ``dt``.

    With ``snap`` the step is reduced to the largest divisor of ``T/N`` not
    above ``dt`` so node boundaries are sampled. Without it the step is exactly
    ``dt`` and RK4 steps straddling a node boundary are split there.
    """
    if not dt > 0:
        raise InvalidParameterError("dt must be positive")
    x0 = as_state_vector(x0)
    U = np.asarray([as_input_vector(u) for u in inputs], dtype=float).reshape(-1, NU)
    N = len(U)
    h = T / N
    p = _arrays(params)
    if snap:
        n_sub = max(1, math.ceil(h / dt - 1e-9))
        dt_eff = h / n_sub
        xs = np.asarray(_integrate_snapped(jnp.asarray(x0), jnp.asarray(U), dt_eff, p, n_sub))
        states = np.vstack([x0, xs])
        times = np.arange(len(states)) * dt_eff
        idx = np.minimum(np.arange(len(states)) // n_sub, N - 1)
        return Trajectory(dt_eff, times, states, U[idx])

    if dt > h * (1 + 1e-9):
        raise InvalidParameterError("unsnapped integration needs dt <= T/N")
    n_steps = max(1, int(math.floor(T / dt + 1e-9)))
    t0 = np.arange(n_steps) * dt
    t1 = t0 + dt
    ka = np.minimum((t0 / h + 1e-12).astype(int), N - 1)
    kb = np.minimum(ka + 1, N - 1)
    boundary = (ka + 1) * h
    frac = np.where(t1 > boundary + 1e-12, (boundary - t0) / dt, 1.0)
    frac = np.clip(frac, 0.0, 1.0)
    xs = np.asarray(_integrate_split(jnp.asarray(x0), jnp.asarray(U[ka]), jnp.asarray(U[kb]), jnp.asarray(frac), dt, p))
    states = np.vstack([x0, xs])
    times = np.arange(len(states)) * dt
    k_all = np.minimum((times / h + 1e-12).astype(int), N - 1)
    return Trajectory(dt, times, states, U[k_all])
