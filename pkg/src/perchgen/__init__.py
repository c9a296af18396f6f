"""Perception-aware perching trajectory generation for multirotors near powerlines."""

import jax

jax.config.update("jax_enable_x64", True)

from perchgen.geometry import (  # noqa: E402
    CatenaryParams,
    LineSegment,
    Pose,
    catenary_sample,
    fit_segments,
    segment_endpoints,
    transform_line_to_frame,
)
from perchgen.dynamics import (  # noqa: E402
    ControlInput,
    RobotParams,
    RobotState,
    Trajectory,
    integrate_fine,
    shooting_step,
    state_derivative,
    thrust_wrench,
)

__all__ = [
    "CatenaryParams",
    "ControlInput",
    "LineSegment",
    "Pose",
    "RobotParams",
    "RobotState",
    "Trajectory",
    "catenary_sample",
    "fit_segments",
    "integrate_fine",
    "segment_endpoints",
    "shooting_step",
    "state_derivative",
    "thrust_wrench",
    "transform_line_to_frame",
]
