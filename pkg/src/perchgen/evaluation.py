"""Constraint and cost traces of a sampled trajectory, plus their summary."""

from __future__ import annotations

import numpy as np

from perchgen import quaternion as quat
from perchgen.constraints import collision_matrix, perception_traces
from perchgen.dynamics import G, Trajectory
from perchgen.nlp.problem import Scenario

FORMAT_VERSION = 1


def _min(a) -> float | None:
    a = np.asarray(a, dtype=float)
    a = a[np.isfinite(a)]
    return float(a.min()) if a.size else None


def _roll_pitch(states) -> np.ndarray:
    return np.array([quat.to_euler(q)[:2] for q in states[:, 3:7]]).reshape(-1, 2)


def tracking_rmse(traj: Trajectory, reference: Trajectory) -> dict:
    """Position and roll-pitch RMSE against ``reference`` sampled on the same grid."""
    n = min(len(traj), len(reference))
    if n == 0:
        return {"position": None, "roll_pitch_deg": None}
    dp = traj.states[:n, :3] - reference.states[:n, :3]
    drp = _roll_pitch(traj.states[:n]) - _roll_pitch(reference.states[:n])
    drp = (drp + np.pi) % (2 * np.pi) - np.pi
    return {
        "position": float(np.sqrt(np.mean(np.sum(dp**2, axis=1)))),
        "roll_pitch_deg": float(np.degrees(np.sqrt(np.mean(np.sum(drp**2, axis=1))))),
    }


def evaluate(traj: Trajectory, scenario: Scenario, reference: Trajectory | None = None) -> dict:
    """EvaluationReport of ``traj`` under ``scenario``.

    Perception traces use the objective segment whether or not the scenario
    plans with perception, so plans with and without it can be compared.
    """
    states = traj.states
    n = len(traj)
    h_ca = collision_matrix(states, scenario.segments, scenario.robot) if n else np.zeros((0, len(scenario.segments)))
    if scenario.segments and n:
        r, lc, sv = perception_traces(states, scenario.segments[scenario.objective_segment], scenario.camera)
    else:
        r = lc = sv = np.full(n, np.nan)
    gamma = states[:, G]
    z = states[:, 2]
    summary = {
        "samples": n,
        "duration": float(traj.times[-1] - traj.times[0]) if n else 0.0,
        "min_h_ca": _min(h_ca),
        "min_h_ca_per_segment": [_min(h_ca[:, j]) for j in range(h_ca.shape[1])],
        "collision": bool(n and h_ca.size and np.min(h_ca) < 0),
        "min_height_margin": _min(z - scenario.z_min),
        "min_thrust": _min(gamma),
        "max_thrust": float(gamma.max()) if n else None,
        "min_thrust_margin": _min(np.minimum(gamma, scenario.robot.gamma_max - gamma)),
        "mean_abs_reprojection": float(np.nanmean(np.abs(r))) if np.any(np.isfinite(r)) else None,
        "min_h_lc": _min(lc),
        "min_h_sv": _min(sv),
        "rmse": tracking_rmse(traj, reference) if reference is not None else None,
    }

    def col(a):
        return [None if not np.isfinite(v) else float(v) for v in np.ravel(a)]

    return {
        "format_version": FORMAT_VERSION,
        "scenario": scenario.name,
        "traces": {
            "t": col(traj.times),
            "h_ca": [col(row) for row in h_ca],
            "reprojection": col(r),
            "h_lc": col(lc),
            "h_sv": col(sv),
            "thrust": [col(row) for row in gamma],
            "z": col(z),
        },
        "summary": summary,
    }


def summary_from_traces(report: dict, z_min: float, gamma_max: float) -> dict:
    """Recompute the margin part of the summary from the stored traces."""
    tr = report["traces"]

    def arr(v):
        return np.array([np.nan if x is None else x for x in np.ravel(v)], dtype=float)

    h = np.array([arr(row) for row in tr["h_ca"]]).reshape(len(tr["t"]), -1)
    gamma = np.array([arr(row) for row in tr["thrust"]]).reshape(-1, 4)
    r = arr(tr["reprojection"])
    return {
        "samples": len(tr["t"]),
        "min_h_ca": _min(h),
        "min_height_margin": _min(arr(tr["z"]) - z_min),
        "min_thrust": _min(gamma),
        "min_thrust_margin": _min(np.minimum(gamma, gamma_max - gamma)),
        "mean_abs_reprojection": float(np.nanmean(np.abs(r))) if np.any(np.isfinite(r)) else None,
        "min_h_lc": _min(arr(tr["h_lc"])),
        "min_h_sv": _min(arr(tr["h_sv"])),
    }
