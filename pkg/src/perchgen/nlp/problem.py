"""Variable-horizon multiple-shooting transcription of the perching problem.

Decision vector layout: node states ``X (N+1, 17)``, node inputs ``U (N, 4)``,
the normalized horizon ``tau`` with ``T = T_min + tau (T_max - T_min)``, and,
when the perception constraints are active, one slack per softened
constraint and node, ``S (N+1, 2)`` ordered (cheirality, visibility). The
softened rows are divided by ``fx * fy`` so the slacks are of order one.

The objective is a sum of squared weighted residuals, so the solver's Hessian
is the Gauss-Newton matrix ``2 J_R^T J_R``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import jax
import jax.numpy as jnp
import numpy as np
import scipy.sparse as sp

from perchgen import constraints as cons
from perchgen import quaternion as quat
from perchgen.dynamics import G, NU, NX, P, Q, V, W, RobotParams, RobotState, as_input_vector, as_state_vector, shooting_map
from perchgen.errors import InfeasibleStartError, InvalidParameterError
from perchgen.geometry import LineSegment
from perchgen.nlp.ipm import Evaluation, SolveReport, SolverOptions, solve_nlp

PERCHING = "perching"
RECOVERY = "recovery"
# terminal residuals: position, orientation, velocity, body rates, rotor thrusts
N_TERMINAL = 16


def _w(x, n):
    arr = np.broadcast_to(np.asarray(x, dtype=float), (n,)).copy()
    if np.any(arr < 0):
        raise InvalidParameterError("weights must be non-negative")
    return arr


@dataclass(frozen=True)
class Weights:
    """Diagonal cost weights.

    The running weights multiply the squared thrust integrals, body rates and
    the decayed reprojection error; the terminal ones the position,
    orientation, velocity, body-rate and rotor-thrust errors at the last node.
    ``soft_penalty`` holds the base slack weights of the (cheirality,
    visibility) constraints.
    """

    thrust: np.ndarray = 1.0
    angular_velocity: np.ndarray = 0.1
    reprojection: float = 0.0
    terminal_position: np.ndarray = 1000.0
    terminal_orientation: np.ndarray = 100.0
    terminal_velocity: np.ndarray = 100.0
    terminal_angular_velocity: np.ndarray = 10.0
    terminal_thrust: np.ndarray = 0.0
    perception_decay_rate: float = math.log(100.0)
    soft_penalty: np.ndarray = (0.0, 0.0)

    def __post_init__(self):
        for name, n in (
            ("thrust", 4),
            ("angular_velocity", 3),
            ("terminal_position", 3),
            ("terminal_orientation", 3),
            ("terminal_velocity", 3),
            ("terminal_angular_velocity", 3),
            ("terminal_thrust", 4),
            ("soft_penalty", 2),
        ):
            object.__setattr__(self, name, _w(getattr(self, name), n))
        if self.reprojection < 0 or self.perception_decay_rate < 0:
            raise InvalidParameterError("weights must be non-negative")

    @property
    def running(self) -> np.ndarray:
        return np.concatenate([self.thrust, self.angular_velocity, [self.reprojection]])

    @property
    def terminal(self) -> np.ndarray:
        return np.concatenate(
            [
                self.terminal_position,
                self.terminal_orientation,
                self.terminal_velocity,
                self.terminal_angular_velocity,
                self.terminal_thrust,
            ]
        )

    def scaled(self, c: float) -> Weights:
        """All cost weights multiplied by ``c`` (slack penalties untouched)."""
        return replace(
            self,
            thrust=c * self.thrust,
            angular_velocity=c * self.angular_velocity,
            reprojection=c * self.reprojection,
            terminal_position=c * self.terminal_position,
            terminal_orientation=c * self.terminal_orientation,
            terminal_velocity=c * self.terminal_velocity,
            terminal_angular_velocity=c * self.terminal_angular_velocity,
            terminal_thrust=c * self.terminal_thrust,
        )

    def without_perception(self) -> Weights:
        return replace(self, reprojection=0.0, soft_penalty=np.zeros(2))


@dataclass(frozen=True)
class RecoverySettings:
    """Target and costs of the recovery maneuver flown after the perch."""

    target_position: np.ndarray | None = None
    target_yaw: float | None = None
    backoff_distance: float = 1.0
    min_height_margin: float = 0.5
    t_min: float = 0.5
    t_max: float = 4.0
    n_nodes: int | None = None
    weights: Weights | None = None
    # pulls the final rotor thrusts to hover so the robot is not left mid-rotation
    hover_thrust_weight: float = 1000.0


@dataclass(frozen=True)
class Scenario:
    robot: RobotParams
    camera: cons.CameraModel
    segments: list
    objective_segment: int
    x_init: RobotState
    x_perch: RobotState
    t_min: float
    t_max: float
    z_min: float
    n_nodes: int = 30
    weights: Weights = field(default_factory=Weights)
    perception_enabled: bool = True
    recovery: RecoverySettings = field(default_factory=RecoverySettings)
    solver: SolverOptions = field(default_factory=SolverOptions)
    dt_fine: float = 1e-3
    rk4_substeps: int = 8
    z_margin: float = 0.01
    name: str = "scenario"

    def __post_init__(self):
        object.__setattr__(self, "segments", list(self.segments))
        if not self.t_min < self.t_max or self.t_min <= 0:
            raise InvalidParameterError("need 0 < t_min < t_max")
        if self.z_margin < 0:
            raise InvalidParameterError("z_margin must be non-negative")
        if self.rk4_substeps < 1:
            raise InvalidParameterError("rk4_substeps must be at least 1")
        if self.n_nodes < 2:
            raise InvalidParameterError("n_nodes must be at least 2")
        if self.segments and not 0 <= self.objective_segment < len(self.segments):
            raise InvalidParameterError("objective_segment out of range")
        if self.perception_enabled and not self.segments:
            raise InvalidParameterError("perception needs an objective segment")

    def without_perception(self) -> Scenario:
        return replace(self, perception_enabled=False, weights=self.weights.without_perception())


@dataclass
class DecisionVector:
    states: np.ndarray
    inputs: np.ndarray
    horizon_T: float
    slacks: np.ndarray

    @property
    def n_nodes(self) -> int:
        return len(self.inputs)

    def node_state(self, k: int) -> RobotState:
        x = self.states[k].copy()
        x[Q] /= np.linalg.norm(x[Q])
        return RobotState.from_vector(x)

    def resampled(self, n_nodes: int) -> DecisionVector:
        """Warm start on a different node grid: states interpolated, inputs held piecewise constant."""
        N0 = self.n_nodes
        s_new = np.linspace(0.0, 1.0, n_nodes + 1)
        s_old = np.linspace(0.0, 1.0, N0 + 1)
        states = np.column_stack([np.interp(s_new, s_old, self.states[:, i]) for i in range(NX)])
        states[:, Q] /= np.linalg.norm(states[:, Q], axis=1, keepdims=True)
        mid = (np.arange(n_nodes) + 0.5) / n_nodes
        idx = np.minimum((mid * N0).astype(int), N0 - 1)
        inputs = self.inputs[idx].copy()
        if self.slacks.size:
            slacks = np.column_stack([np.interp(s_new, s_old, self.slacks[:, j]) for j in range(self.slacks.shape[1])])
        else:
            slacks = np.zeros((n_nodes + 1, 0))
        return DecisionVector(states, inputs, self.horizon_T, slacks)


# -- cost terms -------------------------------------------------------------


def running_terms_fn(x, u, T, n_nodes, decay, seg, cam, perception: bool):
    thrust = x[G] * T / n_nodes + u * T**2 / (2.0 * n_nodes**2)
    if perception:
        r = decay * cons.reprojection_fn(x, seg, cam)
    else:
        r = jnp.zeros_like(T)
    return jnp.concatenate([thrust, x[W], jnp.reshape(r, (1,))])


def terminal_terms_fn(x, x_ref):
    q = x[Q] / jnp.linalg.norm(x[Q])
    return jnp.concatenate([x[P] - x_ref[P], quat.error_vector(x_ref[Q], q), x[V] - x_ref[V], x[W] - x_ref[W]])


def decay_factor(k, n_nodes: int, rate: float) -> float:
    return float(np.exp(-rate * k / n_nodes))


def running_cost_terms(x_k, u_k, T: float, scenario: Scenario, k: int = 0) -> np.ndarray:
    """The 8 running residuals: thrust integrals over the node, body rates, decayed reprojection."""
    N = scenario.n_nodes
    if not 0 <= k <= N - 1:
        raise InvalidParameterError("running terms exist for 0 <= k <= N-1")
    seg = scenario.segments[scenario.objective_segment].packed() if scenario.perception_enabled else np.zeros(8)
    out = running_terms_fn(
        jnp.asarray(as_state_vector(x_k)),
        jnp.asarray(as_input_vector(u_k)),
        float(T),
        float(N),
        decay_factor(k, N, scenario.weights.perception_decay_rate),
        seg,
        scenario.camera.arrays(),
        scenario.perception_enabled,
    )
    return np.asarray(out)


def terminal_cost_terms(x_N, scenario: Scenario) -> np.ndarray:
    """Position, orientation, velocity and body-rate errors w.r.t. the perch state."""
    return np.asarray(terminal_terms_fn(jnp.asarray(as_state_vector(x_N)), jnp.asarray(scenario.x_perch.vector())))


# -- the transcription ------------------------------------------------------


def _perception_active(scenario: Scenario, mode: str) -> bool:
    return mode == PERCHING and scenario.perception_enabled


class NlpProblem:
    """Multiple-shooting NLP with exact first derivatives by forward-mode AD."""

    def __init__(self, scenario: Scenario, mode: str = PERCHING):
        if mode not in (PERCHING, RECOVERY):
            raise InvalidParameterError(f"unknown mode {mode!r}")
        self.scenario = scenario
        self.mode = mode
        self.N = N = scenario.n_nodes
        self.n_seg = len(scenario.segments)
        self.perception = _perception_active(scenario, mode)
        w = scenario.weights
        if mode == RECOVERY:
            w = w.without_perception()
        self.weights = w
        # a zero-penalty slack is unbounded and the constraint vacuous
        self.soft_active = np.asarray(self.perception and w.soft_penalty > 0, dtype=bool).reshape(-1)
        if not self.perception:
            self.soft_active = np.zeros(2, dtype=bool)
        self.n_soft = int(self.soft_active.sum())

        self.nX = (N + 1) * NX
        self.nU = N * NU
        self.i_tau = self.nX + self.nU
        self.nS = (N + 1) * self.n_soft
        self.n = self.i_tau + 1 + self.nS
        self.m_eq = (N + 1) * NX
        # the horizon column couples every defect row; damping it keeps early
        # steps from trading the whole trajectory for a change in T
        self.step_damping = np.zeros(self.n)
        self.step_damping[self.i_tau] = 100.0

        self._check_start()
        self._build_functions()
        self._build_patterns()

    # -- structure --------------------------------------------------------

    def constraint_counts(self) -> dict:
        N = self.N
        soft = dict(zip(("cheirality", "visibility"), self.soft_active))
        return {
            "initial_state_blocks": 1,
            "continuity_blocks": N,
            "collision": (N + 1) * self.n_seg,
            "cheirality": (N + 1) if soft["cheirality"] else 0,
            "visibility": (N + 1) if soft["visibility"] else 0,
            "height_bounds": N + 1,
            "thrust_bounds": 2 * 4 * (N + 1),
            "input_bounds": 2 * 4 * N,
            "horizon_bounds": 2,
        }

    def _check_start(self):
        sc = self.scenario
        x0 = sc.x_init.vector()
        rp = sc.robot
        problems = []
        if x0[2] < sc.z_min - 1e-9:
            problems.append(f"height {x0[2]:.3f} below z_min {sc.z_min}")
        if np.any(x0[G] < -1e-9) or np.any(x0[G] > rp.gamma_max + 1e-9):
            problems.append("rotor thrusts outside [0, gamma_max]")
        if self.n_seg:
            h = cons.collision_matrix(x0, sc.segments, rp)[0]
            bad = np.flatnonzero(h < 0)
            if bad.size:
                problems.append(f"collision constraint violated for segments {bad.tolist()}")
        if problems:
            raise InfeasibleStartError("initial state violates hard constraints: " + "; ".join(problems))

    def split(self, z):
        N = self.N
        X = z[: self.nX].reshape(N + 1, NX)
        U = z[self.nX : self.i_tau].reshape(N, NU)
        tau = z[self.i_tau]
        S = z[self.i_tau + 1 :].reshape(N + 1, self.n_soft)
        return X, U, tau, S

    def horizon(self, tau):
        return self.scenario.t_min + tau * (self.scenario.t_max - self.scenario.t_min)

    def pack(self, dv: DecisionVector) -> np.ndarray:
        tau = (dv.horizon_T - self.scenario.t_min) / (self.scenario.t_max - self.scenario.t_min)
        S = np.asarray(dv.slacks, dtype=float).reshape(self.N + 1, -1)
        if S.shape[1] != self.n_soft:
            S = np.full((self.N + 1, self.n_soft), 1e-2)
        return np.concatenate([dv.states.ravel(), dv.inputs.ravel(), [tau], S.ravel()])

    def unpack(self, z) -> DecisionVector:
        X, U, tau, S = self.split(np.asarray(z))
        return DecisionVector(X.copy(), U.copy(), float(self.horizon(tau)), S.copy())

    def row_label(self, kind: str, i: int) -> str:
        if kind == "eq":
            k = i // NX
            return "initial state" if k == 0 else f"shooting continuity node {k}"
        for name, start, stop, per in self._in_groups:
            if start <= i < stop:
                return f"{name} (row {(i - start) // per if per else 0})"
        return f"inequality {i}"

    # -- model functions --------------------------------------------------

    def _build_functions(self):
        sc = self.scenario
        N = self.N
        rp = sc.robot.arrays()
        cam = sc.camera.arrays()
        segs = jnp.asarray(np.stack([s.packed() for s in sc.segments])) if self.n_seg else jnp.zeros((0, 8))
        seg_obj = segs[sc.objective_segment] if self.perception else jnp.zeros(8)
        x_init = jnp.asarray(sc.x_init.vector())
        x_ref = jnp.asarray(sc.x_perch.vector())
        t_min, dT = sc.t_min, sc.t_max - sc.t_min
        w = self.weights
        sqrt_run = jnp.sqrt(jnp.asarray(w.running))
        sqrt_term = jnp.sqrt(jnp.asarray(w.terminal))
        ks = np.arange(N + 1)
        decay_nodes = np.exp(-w.perception_decay_rate * ks / N)
        decay_run = jnp.asarray(decay_nodes[:N])
        soft_w = np.asarray(w.soft_penalty)[self.soft_active]
        sqrt_soft = jnp.asarray(np.sqrt(decay_nodes[:, None] * soft_w[None, :]))
        perception = self.perception
        soft_active = tuple(bool(b) for b in self.soft_active)
        gamma_max, zmin, z_margin = sc.robot.gamma_max, sc.z_min, sc.z_margin
        umin, umax = sc.robot.u_min, sc.robot.u_max
        Nf = float(N)
        # both perception constraints carry px^2; dividing by fx*fy keeps their slacks of order one
        soft_scale = sc.camera.fx * sc.camera.fy
        self.soft_scale = soft_scale

        def run_res(x, u, T, decay):
            return sqrt_run * running_terms_fn(x, u, T, Nf, decay, seg_obj, cam, perception)

        def term_res(x):
            return sqrt_term * jnp.concatenate([terminal_terms_fn(x, x_ref), x[G] - x_ref[G]])

        def shoot(x, u, T):
            return shooting_map(x, u, T, Nf, rp, sc.rk4_substeps)

        def node_ineq(x):
            parts = [x[2:3] - zmin, x[G], gamma_max - x[G]]
            if self.n_seg:
                parts.append(jax.vmap(lambda s: cons.h_ca_fn(x, s, rp))(segs))
            if soft_active[0]:
                parts.append(jnp.reshape(cons.h_lc_fn(x, seg_obj, cam) / soft_scale, (1,)))
            if soft_active[1]:
                parts.append(jnp.reshape(cons.h_sv_fn(x, seg_obj, cam) / soft_scale, (1,)))
            return jnp.concatenate(parts)

        self._n_node_ineq = 1 + 8 + self.n_seg + self.n_soft

        def split(z):
            X = z[: self.nX].reshape(N + 1, NX)
            U = z[self.nX : self.i_tau].reshape(N, NU)
            tau = z[self.i_tau]
            S = z[self.i_tau + 1 :].reshape(N + 1, self.n_soft)
            return X, U, tau, S

        def values(z):
            X, U, tau, S = split(z)
            T = t_min + tau * dT
            R = jnp.concatenate(
                [jax.vmap(run_res, in_axes=(0, 0, None, 0))(X[:-1], U, T, decay_run).ravel(), term_res(X[-1]), (sqrt_soft * S).ravel()]
            )
            F = jax.vmap(shoot, in_axes=(0, 0, None))(X[:-1], U, T)
            ce = jnp.concatenate([X[0] - x_init, (X[1:] - F).ravel()])
            G_node = jax.vmap(node_ineq)(X)  # (N+1, n_node_ineq)
            # free nodes keep a margin above z_min so the path between them stays above it too
            G_node = G_node.at[1:, 0].add(-z_margin)
            n_hard = 9 + self.n_seg
            hard = G_node[:, :n_hard]
            soft = G_node[:, n_hard:] + S
            ci = jnp.concatenate(
                [
                    hard.T.ravel(),
                    soft.T.ravel(),
                    S.T.ravel(),
                    (U - umin).ravel(),
                    (umax - U).ravel(),
                    jnp.stack([tau, 1.0 - tau]),
                ]
            )
            return R, ce, ci

        def derivs(z):
            X, U, tau, S = split(z)
            T = t_min + tau * dT
            jr = jax.vmap(jax.jacfwd(run_res, argnums=(0, 1, 2)), in_axes=(0, 0, None, 0))(X[:-1], U, T, decay_run)
            jt = jax.jacfwd(term_res)(X[-1])
            jf = jax.vmap(jax.jacfwd(shoot, argnums=(0, 1, 2)), in_axes=(0, 0, None))(X[:-1], U, T)
            jg = jax.vmap(jax.jacfwd(node_ineq))(X)  # (N+1, n_node_ineq, 17)
            return jr, jt, jf, jg[:, 9:, :]

        self._values = jax.jit(values)
        self._derivs = jax.jit(derivs)
        self._dT = dT
        self._sqrt_soft = np.asarray(sqrt_soft)

    # -- sparsity ---------------------------------------------------------

    def _build_patterns(self):
        N, nX, i_tau = self.N, self.nX, self.i_tau
        n_seg, n_soft = self.n_seg, self.n_soft
        k = np.arange(N)
        xcol = lambda kk: (NX * kk)[..., None] + np.arange(NX)  # noqa: E731
        ucol = lambda kk: (nX + NU * kk)[..., None] + np.arange(NU)  # noqa: E731

        # residual Jacobian
        r_run = 8 * k[:, None] + np.arange(8)  # (N, 8)
        rows = [np.repeat(r_run[:, :, None], NX, 2), np.repeat(r_run[:, :, None], NU, 2), r_run]
        cols = [np.broadcast_to(xcol(k)[:, None, :], (N, 8, NX)), np.broadcast_to(ucol(k)[:, None, :], (N, 8, NU)), np.full((N, 8), i_tau)]
        r_term = 8 * N + np.arange(N_TERMINAL)
        rows.append(np.repeat(r_term[:, None], NX, 1))
        cols.append(np.broadcast_to(xcol(np.array(N))[None, :], (N_TERMINAL, NX)))
        soft_rows = 8 * N + N_TERMINAL + np.arange((N + 1) * n_soft)
        rows.append(soft_rows)
        cols.append(i_tau + 1 + np.arange((N + 1) * n_soft))
        self._JR_pattern = (np.concatenate([r.ravel() for r in rows]), np.concatenate([c.ravel() for c in cols]))
        self.n_res = 8 * N + N_TERMINAL + (N + 1) * n_soft

        # equality Jacobian
        rows, cols = [], []
        rows.append(np.arange(NX))
        cols.append(np.arange(NX))
        r_next = NX * (k[:, None] + 1) + np.arange(NX)  # (N, 17)
        rows.append(r_next.ravel())
        cols.append(xcol(k + 1).ravel())
        rows.append(np.repeat(r_next[:, :, None], NX, 2).ravel())
        cols.append(np.broadcast_to(xcol(k)[:, None, :], (N, NX, NX)).ravel())
        rows.append(np.repeat(r_next[:, :, None], NU, 2).ravel())
        cols.append(np.broadcast_to(ucol(k)[:, None, :], (N, NX, NU)).ravel())
        rows.append(r_next.ravel())
        cols.append(np.full(N * NX, i_tau))
        self._JE_pattern = (np.concatenate(rows), np.concatenate(cols))
        self._JE_const = np.ones(NX + N * NX)

        # inequality Jacobian; row groups follow the order in ``values``
        nodes = np.arange(N + 1)
        groups = []
        r0 = 0
        rows, cols, data = [], [], []
        self._in_groups = []

        def add_group(name, count, per=1):
            nonlocal r0
            self._in_groups.append((name, r0, r0 + count, per))
            r0 += count
            return r0 - count

        # hard node rows are stored component-major: row = start + j*(N+1) + k
        s = add_group("height bound", N + 1)
        rows.append(s + nodes)
        cols.append(NX * nodes + 2)
        data.append(np.ones(N + 1))
        for sign, name in ((1.0, "thrust lower bound"), (-1.0, "thrust upper bound")):
            s = add_group(name, 4 * (N + 1))
            for j in range(4):
                rows.append(s + j * (N + 1) + nodes)
                cols.append(NX * nodes + 13 + j)
                data.append(np.full(N + 1, sign))
        const_count = sum(len(d) for d in data)
        self._ca_start = add_group("collision avoidance", n_seg * (N + 1), per=N + 1)
        soft_names = [nm for nm, a in zip(("cheirality", "visibility"), self.soft_active) if a]
        self._soft_start = r0
        for nm in soft_names:
            add_group(nm, N + 1)
        self._slack_start = add_group("slack bound", n_soft * (N + 1))
        self._u_start = add_group("input lower bound", N * NU)
        add_group("input upper bound", N * NU)
        self._tau_start = add_group("horizon bound", 2)
        self.m_in = r0

        # the x-dependent rows (collision + soft): (N+1, n_dyn, 17) from jg
        n_dyn = n_seg + n_soft
        dyn_rows = np.empty((N + 1, n_dyn), dtype=int)
        for j in range(n_dyn):
            dyn_rows[:, j] = self._ca_start + j * (N + 1) + nodes
        dyn_r = np.repeat(dyn_rows[:, :, None], NX, 2)
        dyn_c = np.broadcast_to(xcol(nodes)[:, None, :], (N + 1, n_dyn, NX))
        # slack columns inside the soft rows
        soft_r, soft_c = [], []
        for j in range(n_soft):
            soft_r.append(self._soft_start + j * (N + 1) + nodes)
            soft_c.append(i_tau + 1 + n_soft * nodes + j)
        slack_r = [self._slack_start + j * (N + 1) + nodes for j in range(n_soft)]
        u_idx = np.arange(N * NU)
        pattern_rows = rows + [dyn_r.ravel()] + soft_r + slack_r + [self._u_start + u_idx, self._u_start + N * NU + u_idx, np.array([self._tau_start, self._tau_start + 1])]
        pattern_cols = cols + [dyn_c.ravel()] + soft_c + soft_c + [nX + u_idx, nX + u_idx, np.array([i_tau, i_tau])]
        self._JI_pattern = (np.concatenate(pattern_rows), np.concatenate(pattern_cols))
        self._JI_const_head = np.concatenate(data) if data else np.zeros(0)
        self._JI_const_tail = np.concatenate(
            [np.ones(n_soft * (N + 1)), np.ones(n_soft * (N + 1)), np.ones(N * NU), -np.ones(N * NU), [1.0, -1.0]]
        )
        assert const_count == len(self._JI_const_head)

    # -- solver interface ---------------------------------------------------

    def values(self, z):
        R, ce, ci = self._values(jnp.asarray(z))
        R = np.asarray(R)
        return float(R @ R), np.asarray(ce), np.asarray(ci)

    def residuals(self, z) -> np.ndarray:
        return np.asarray(self._values(jnp.asarray(z))[0])

    def evaluate(self, z) -> Evaluation:
        zj = jnp.asarray(z)
        R, ce, ci = (np.asarray(a) for a in self._values(zj))
        (jrx, jru, jrT), jt, (jfx, jfu, jfT), jg = (jax.tree_util.tree_map(np.asarray, a) for a in self._derivs(zj))
        dT = self._dT
        N = self.N
        jr_data = np.concatenate([jrx.ravel(), jru.ravel(), (jrT * dT).ravel(), jt.ravel(), self._sqrt_soft.ravel()])
        JR = sp.csr_matrix((jr_data, self._JR_pattern), shape=(self.n_res, self.n))
        je_data = np.concatenate([self._JE_const, (-jfx).ravel(), (-jfu).ravel(), (-jfT * dT).ravel()])
        JE = sp.csc_matrix((je_data, self._JE_pattern), shape=(self.m_eq, self.n))
        ji_data = np.concatenate([self._JI_const_head, jg.ravel(), self._JI_const_tail])
        JI = sp.csc_matrix((ji_data, self._JI_pattern), shape=(self.m_in, self.n))
        grad = 2.0 * (JR.T @ R)
        H = sp.csc_matrix(2.0 * (JR.T @ JR))
        del N
        return Evaluation(float(R @ R), grad, H, ce, JE, ci, JI)

    def objective_breakdown(self, z) -> dict:
        R = self.residuals(z)
        N = self.N
        run = R[: 8 * N].reshape(N, 8)
        return {
            "thrust": float(np.sum(run[:, :4] ** 2)),
            "angular_velocity": float(np.sum(run[:, 4:7] ** 2)),
            "reprojection": float(np.sum(run[:, 7] ** 2)),
            "terminal": float(np.sum(R[8 * N : 8 * N + N_TERMINAL] ** 2)),
            "soft": float(np.sum(R[8 * N + N_TERMINAL :] ** 2)),
        }

    def shooting_defects(self, z) -> np.ndarray:
        _, ce, _ = self.values(z)
        return ce[NX:].reshape(self.N, NX)


def build_problem(scenario: Scenario, mode: str = PERCHING) -> NlpProblem:
    return NlpProblem(scenario, mode)


def initial_guess(scenario: Scenario, mode: str = PERCHING) -> DecisionVector:
    """Straight-line guess: interpolated poses and velocities, hover thrusts, zero inputs."""
    N = scenario.n_nodes
    x0 = scenario.x_init.vector()
    x1 = scenario.x_perch.vector()
    s = np.linspace(0.0, 1.0, N + 1)
    states = np.empty((N + 1, NX))
    for k, t in enumerate(s):
        states[k, P] = (1 - t) * x0[P] + t * x1[P]
        states[k, Q] = quat.slerp(x0[Q], x1[Q], t)
        states[k, V] = (1 - t) * x0[V] + t * x1[V]
        states[k, W] = (1 - t) * x0[W] + t * x1[W]
        states[k, G] = scenario.robot.hover_thrust
    states[0] = x0
    inputs = np.zeros((N, NU))
    T = 0.5 * (scenario.t_min + scenario.t_max)
    return DecisionVector(states, inputs, T, soft_slacks(scenario, states, mode))


def soft_slacks(scenario: Scenario, states, mode: str = PERCHING) -> np.ndarray:
    """Slacks that satisfy the softened perception rows at ``states`` with a 1e-2 margin."""
    states = np.asarray(states, dtype=float)
    if not _perception_active(scenario, mode):
        return np.zeros((len(states), 0))
    active = scenario.weights.soft_penalty > 0
    if not np.any(active):
        return np.zeros((len(states), 0))
    seg = scenario.segments[scenario.objective_segment]
    _, lc, sv = cons.perception_traces(states, seg, scenario.camera)
    vals = np.column_stack([lc, sv])[:, active] / (scenario.camera.fx * scenario.camera.fy)
    vals = np.where(np.isfinite(vals), vals, 0.0)
    return np.maximum(0.0, -vals) + 1e-2


def solve(problem: NlpProblem, guess: DecisionVector, opts: SolverOptions | None = None, log=None):
    """Solve ``problem`` from ``guess``; returns ``(DecisionVector, SolveReport)``."""
    opts = opts or problem.scenario.solver
    z0 = problem.pack(guess)
    if z0.shape != (problem.n,):
        raise InvalidParameterError("guess does not match the problem structure")
    z, report, _ = solve_nlp(problem, z0, opts, log=log)
    dv = problem.unpack(z)
    report.horizon_T = dv.horizon_T
    return dv, report
