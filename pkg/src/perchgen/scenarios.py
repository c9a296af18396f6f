"""Built-in scenarios used by the tests, the experiment scripts and the CLI examples.

The geometry mirrors the indoor setup of the perching experiments (a 0.8 kg
quadrotor hovering about 2 m in front of horizontal mock-up lines). Weights,
horizons and camera intrinsics are tuned values, not measured ones.
"""

from __future__ import annotations

import math
from dataclasses import replace

import numpy as np

from perchgen import quaternion as quat
from perchgen.constraints import CameraModel
from perchgen.dynamics import RobotParams, RobotState, integrate_fine
from perchgen.geometry import LineSegment
from perchgen.nlp.ipm import SolverOptions
from perchgen.nlp.problem import RecoverySettings, Scenario, Weights, build_problem, initial_guess, solve

WIRE_RADIUS = 0.01
PERCH_CLEARANCE = 0.02


def hover_state(position, yaw: float = 0.0, robot: RobotParams | None = None) -> RobotState:
    robot = robot or RobotParams()
    return RobotState(p_wb=position, q_wb=quat.from_euler(0.0, 0.0, yaw), gamma=np.full(4, robot.hover_thrust))


def perch_state(line_point, orientation, robot: RobotParams | None = None, wire_radius: float = WIRE_RADIUS) -> RobotState:
    """Zero-velocity state whose underside touches the line at ``line_point``."""
    robot = robot or RobotParams()
    body_z = np.asarray(quat.rotate(orientation, np.array([0.0, 0.0, 1.0])))
    offset = robot.ellipsoid_radii[2] + wire_radius + PERCH_CLEARANCE
    return RobotState(p_wb=np.asarray(line_point, dtype=float) + offset * body_z, q_wb=orientation, gamma=np.full(4, robot.hover_thrust))


def horizontal_line(center, half_length: float = 3.0, direction=(0.0, 1.0, 0.0)) -> LineSegment:
    d = np.asarray(direction, dtype=float)
    return LineSegment(center, d / np.linalg.norm(d), half_length, WIRE_RADIUS)


def stationary(n_nodes: int = 30) -> Scenario:
    robot = RobotParams()
    x = hover_state([0.0, 0.0, 2.0], robot=robot)
    return Scenario(
        robot=robot,
        camera=CameraModel(),
        segments=[],
        objective_segment=0,
        x_init=x,
        x_perch=x,
        t_min=0.5,
        t_max=3.0,
        z_min=0.5,
        n_nodes=n_nodes,
        weights=Weights(),
        perception_enabled=False,
        recovery=RecoverySettings(target_position=np.array([0.0, 0.0, 2.0]), target_yaw=0.0, t_min=0.5, t_max=3.0),
        name="stationary",
    )


def vertical_climb(height: float = 2.0, n_nodes: int = 30) -> Scenario:
    robot = RobotParams()
    x0 = hover_state([0.0, 0.0, 1.0], robot=robot)
    x1 = hover_state([0.0, 0.0, 1.0 + height], robot=robot)
    return Scenario(
        robot=robot,
        camera=CameraModel(),
        segments=[],
        objective_segment=0,
        x_init=x0,
        x_perch=x1,
        t_min=0.8,
        t_max=4.0,
        z_min=0.5,
        n_nodes=n_nodes,
        weights=Weights(thrust=1.0, angular_velocity=0.1, terminal_position=1e4, terminal_orientation=1e3, terminal_velocity=1e3, terminal_angular_velocity=1e2),
        perception_enabled=False,
        name="vertical_climb",
    )


def perching_80(perception: bool = True, n_nodes: int = 30) -> Scenario:
    """Perch with the body pitched 80 degrees nose-up against a horizontal line 2 m ahead."""
    robot = RobotParams()
    line_height = 2.5
    segments = [
        horizontal_line([0.0, 0.0, line_height]),
        horizontal_line([0.3, 0.0, line_height + 0.9], direction=(0.2, 1.0, 0.05)),
        horizontal_line([0.6, 0.0, line_height - 0.7], direction=(-0.15, 1.0, 0.0)),
    ]
    x0 = hover_state([-1.9, 0.5, 2.1], yaw=math.radians(40.0), robot=robot)
    q_perch = quat.from_euler(0.0, math.radians(-80.0), 0.0)
    xp = perch_state([0.0, 0.0, line_height], q_perch, robot)
    weights = Weights(
        thrust=1.0,
        angular_velocity=0.05,
        reprojection=3e-5 if perception else 0.0,
        terminal_position=2e4,
        terminal_orientation=2e3,
        terminal_velocity=2e3,
        terminal_angular_velocity=20.0,
        soft_penalty=(1.0, 1.0) if perception else (0.0, 0.0),
    )
    return Scenario(
        robot=robot,
        camera=CameraModel(),
        segments=segments,
        objective_segment=0,
        x_init=x0,
        x_perch=xp,
        t_min=0.5,
        t_max=4.0,
        z_min=0.5,
        n_nodes=n_nodes,
        weights=weights,
        perception_enabled=perception,
        recovery=RecoverySettings(t_min=0.5, t_max=4.0),
        solver=SolverOptions(max_iterations=5000),
        name="perching_80" + ("_pa" if perception else ""),
    )


def perching_180(n_nodes: int = 30) -> Scenario:
    """Upside-down perch under a line at 3.7 m with 0.8 m minimum height."""
    robot = RobotParams()
    line_height = 3.7
    segments = [horizontal_line([0.0, 0.0, line_height])]
    x0 = hover_state([-1.5, 0.0, 2.5], robot=robot)
    q_perch = quat.from_axis_angle([0.0, 1.0, 0.0], math.pi)
    xp = perch_state([0.0, 0.0, line_height], q_perch, robot)
    weights = Weights(
        thrust=1.0,
        angular_velocity=0.02,
        terminal_position=2e4,
        terminal_orientation=2e3,
        terminal_velocity=2e3,
        terminal_angular_velocity=20.0,
    )
    return Scenario(
        robot=robot,
        camera=CameraModel(),
        segments=segments,
        objective_segment=0,
        x_init=x0,
        x_perch=xp,
        t_min=0.5,
        t_max=4.0,
        z_min=0.8,
        n_nodes=n_nodes,
        weights=weights,
        perception_enabled=False,
        recovery=RecoverySettings(t_min=0.5, t_max=4.0),
        name="perching_180",
    )


def dash(n_nodes: int = 8) -> Scenario:
    """Hover-to-hover dash of 6 m, short horizon, no obstacles."""
    robot = RobotParams()
    x0 = hover_state([0.0, 0.0, 1.5], robot=robot)
    x1 = hover_state([6.0, 0.0, 1.5], robot=robot)
    return Scenario(
        robot=robot,
        camera=CameraModel(),
        segments=[],
        objective_segment=0,
        x_init=x0,
        x_perch=x1,
        t_min=2.0,
        t_max=3.0,
        z_min=0.5,
        n_nodes=n_nodes,
        weights=Weights(
            thrust=1.0,
            angular_velocity=0.05,
            terminal_position=2e4,
            terminal_orientation=2e3,
            terminal_velocity=2e3,
            terminal_angular_velocity=20.0,
        ),
        perception_enabled=False,
        recovery=RecoverySettings(target_position=np.array([6.0, 0.0, 1.5]), target_yaw=0.0, t_min=0.5, t_max=3.0),
        name="dash",
    )


def node_gap_segment(scenario: Scenario, gap: int | None = None, half_length: float = 0.05) -> LineSegment:
    """Short wire across the coarse solution's path, halfway between two shooting nodes.

    The nodes on either side are far enough that the wire's collision term is
    switched off there, so only the fine integration sees it.
    """
    dv, report = solve(build_problem(scenario), initial_guess(scenario))
    if not report.converged:
        raise RuntimeError(f"coarse solve did not converge ({report.status})")
    traj = integrate_fine(scenario.x_init, dv.inputs, dv.horizon_T, scenario.dt_fine, scenario.robot)
    N = scenario.n_nodes
    gap = N // 2 - 1 if gap is None else gap
    i = int(round((gap + 0.5) * dv.horizon_T / N / traj.dt))
    position, velocity = traj.states[i, :3], traj.states[i, 7:10]
    across = np.cross(velocity, [0.0, 0.0, 1.0])
    return LineSegment(position, across / np.linalg.norm(across), half_length, 0.005)


def adversarial_gap(n_nodes: int = 8) -> Scenario:
    """The dash with a thin wire hidden between two of its coarse shooting nodes."""
    base = dash(n_nodes)
    return replace(base, segments=[node_gap_segment(base)], name="adversarial_gap")
