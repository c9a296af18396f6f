"""Perching plus recovery: solve, integrate finely, audit collisions, re-solve once if needed, chain."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from perchgen import quaternion as quat
from perchgen.constraints import collision_matrix
from perchgen.dynamics import RobotState, Trajectory, integrate_fine
from perchgen.errors import AuditFailureError, ChainingError, SolverStageError
from perchgen.nlp.ipm import SolveReport
from perchgen.nlp.problem import (
    PERCHING,
    RECOVERY,
    DecisionVector,
    Scenario,
    build_problem,
    initial_guess,
    solve,
)

logger = logging.getLogger("perchgen.pipeline")

JUNCTION_TOL = 1e-9


@dataclass(frozen=True)
class Violation:
    time: float
    segment_index: int
    h_ca: float
    position: np.ndarray


@dataclass
class StageResult:
    solution: DecisionVector
    report: SolveReport
    trajectory: Trajectory
    audit: list
    resolved: bool = False
    scenario: Scenario | None = None


@dataclass
class ManeuverResult:
    perch_trajectory: Trajectory
    recovery_trajectory: Trajectory
    chained: Trajectory
    perch_report: SolveReport
    recovery_report: SolveReport
    audit: list = field(default_factory=list)
    perch: StageResult | None = None
    recovery: StageResult | None = None

    @property
    def resolved(self) -> bool:
        """True when the perch stage needed the higher-N re-solve."""
        return bool(self.perch and self.perch.resolved)


def audit_collisions(traj: Trajectory, segments, params) -> list[Violation]:
    """Every (sample, segment) pair with ``h_ca < 0``, ordered by time then segment."""
    if len(traj) == 0 or len(segments) == 0:
        return []
    H = collision_matrix(traj.states, segments, params)
    return [
        Violation(float(traj.times[i]), int(j), float(H[i, j]), traj.states[i, :3].copy())
        for i, j in np.argwhere(H < 0)
    ]


def chain(perch: Trajectory, recovery: Trajectory) -> Trajectory:
    """Append ``recovery`` to ``perch``; the shared junction sample appears once."""
    if len(recovery) == 0:
        return perch
    if len(perch) == 0:
        return recovery
    dev = float(np.max(np.abs(perch.states[-1] - recovery.states[0])))
    if not dev < JUNCTION_TOL:
        raise ChainingError(f"junction state mismatch {dev:.3e} exceeds {JUNCTION_TOL:g}", dev)
    if not math.isclose(perch.dt, recovery.dt, rel_tol=1e-12):
        raise ChainingError(f"sample periods differ ({perch.dt!r} vs {recovery.dt!r})", 0.0)
    states = np.vstack([perch.states, recovery.states[1:]])
    inputs = np.vstack([perch.inputs[:-1], recovery.inputs])
    times = perch.times[0] + np.arange(len(states)) * perch.dt
    return Trajectory(perch.dt, times, states, inputs)


def recovery_target(scenario: Scenario) -> tuple[np.ndarray, float]:
    """Hover pose the recovery flies to.

    Unless configured: back off from the perch point against the horizontal
    approach direction, at least ``min_height_margin`` above ``z_min``, with
    the yaw the maneuver started with.
    """
    rs = scenario.recovery
    p_perch = scenario.x_perch.p_wb
    if rs.target_position is not None:
        target = np.asarray(rs.target_position, dtype=float)
    else:
        approach = p_perch - scenario.x_init.p_wb
        approach[2] = 0.0
        norm = np.linalg.norm(approach)
        back = -approach / norm if norm > 1e-9 else np.zeros(3)
        target = p_perch + rs.backoff_distance * back
        target[2] = max(p_perch[2], scenario.z_min + rs.min_height_margin)
    yaw = rs.target_yaw if rs.target_yaw is not None else quat.to_euler(scenario.x_init.q_wb)[2]
    return target, float(yaw)


def recovery_scenario(scenario: Scenario, start) -> Scenario:
    """Scenario of the recovery leg, starting from the (fine-integrated) perch state."""
    rs = scenario.recovery
    target, yaw = recovery_target(scenario)
    x0 = start if isinstance(start, RobotState) else RobotState.from_vector(start)
    hover = RobotState(p_wb=target, q_wb=quat.from_euler(0.0, 0.0, yaw), gamma=np.full(4, scenario.robot.hover_thrust))
    weights = rs.weights if rs.weights is not None else replace(scenario.weights, terminal_thrust=rs.hover_thrust_weight)
    return replace(
        scenario,
        x_init=x0,
        x_perch=hover,
        t_min=rs.t_min,
        t_max=rs.t_max,
        n_nodes=rs.n_nodes or scenario.n_nodes,
        weights=weights.without_perception(),
        perception_enabled=False,
        name=scenario.name + "_recovery",
    )


def _integrate(scenario: Scenario, dv: DecisionVector, dt: float, snap: bool) -> Trajectory:
    return integrate_fine(scenario.x_init, dv.inputs, dv.horizon_T, dt, scenario.robot, snap=snap)


def _solve_stage(stage: str, scenario: Scenario, mode: str, dt: float, snap: bool, guess=None) -> StageResult:
    """Solve, integrate and audit; on violations re-solve once with twice the nodes."""
    problem = build_problem(scenario, mode)
    dv, report = solve(problem, guess if guess is not None else initial_guess(scenario, mode))
    logger.info("%s: %s after %d iterations (T=%.4f s)", stage, report.status, report.iterations, dv.horizon_T)
    if not report.converged:
        raise SolverStageError(stage, report)
    traj = _integrate(scenario, dv, dt, snap)
    audit = audit_collisions(traj, scenario.segments, scenario.robot)
    if not audit:
        return StageResult(dv, report, traj, audit, scenario=scenario)

    logger.info("%s: %d colliding samples, re-solving with N=%d", stage, len(audit), 2 * scenario.n_nodes)
    fine = replace(scenario, n_nodes=2 * scenario.n_nodes)
    problem = build_problem(fine, mode)
    dv, report = solve(problem, dv.resampled(fine.n_nodes))
    logger.info("%s re-solve: %s after %d iterations", stage, report.status, report.iterations)
    if not report.converged:
        raise SolverStageError(stage + " re-solve", report)
    traj = _integrate(fine, dv, dt, snap)
    audit = audit_collisions(traj, fine.segments, fine.robot)
    if audit:
        raise AuditFailureError(audit)
    return StageResult(dv, report, traj, audit, resolved=True, scenario=fine)


def generate_maneuver(scenario: Scenario, guess: DecisionVector | None = None, dt: float | None = None) -> ManeuverResult:
    """Perching trajectory followed by the recovery to a safe hover.

    The perch leg is integrated with the largest step not above ``dt`` that
    lands on every node; the recovery leg reuses that step so the chained
    trajectory is uniformly sampled.
    """
    dt = dt or scenario.dt_fine
    perch = _solve_stage("perch", scenario, PERCHING, dt, snap=True, guess=guess)
    end = perch.trajectory.states[-1]
    rec_sc = recovery_scenario(scenario, end)
    recovery = _solve_stage("recovery", rec_sc, RECOVERY, perch.trajectory.dt, snap=False)
    chained = chain(perch.trajectory, recovery.trajectory)
    return ManeuverResult(
        perch_trajectory=perch.trajectory,
        recovery_trajectory=recovery.trajectory,
        chained=chained,
        perch_report=perch.report,
        recovery_report=recovery.report,
        audit=[],
        perch=perch,
        recovery=recovery,
    )

