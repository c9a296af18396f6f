"""Scenario files (JSON), trajectories (CSV) and node solutions (JSON).

All lengths are meters, times seconds, angles radians unless a key says
otherwise (``*_deg``), forces newtons, thrust rates newtons per second.
Every file carries ``format_version``.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import replace

import jsonschema
import numpy as np

from perchgen import quaternion as quat
from perchgen.constraints import CameraModel
from perchgen.dynamics import NU, NX, RobotParams, RobotState, Trajectory
from perchgen.errors import PerchError, ScenarioFormatError
from perchgen.geometry import CatenaryParams, LineSegment, Pose, catenary_sample, fit_segments, sag_parameter_for_sag
from perchgen.nlp.ipm import SolverOptions
from perchgen.nlp.problem import DecisionVector, RecoverySettings, Scenario, Weights

FORMAT_VERSION = 1

STATE_COLUMNS = ["px", "py", "pz", "qw", "qx", "qy", "qz", "vx", "vy", "vz", "wx", "wy", "wz", "g1", "g2", "g3", "g4"]
INPUT_COLUMNS = ["u1", "u2", "u3", "u4"]
CSV_COLUMNS = ["t"] + STATE_COLUMNS + INPUT_COLUMNS


class TrajectoryFormatError(PerchError, ValueError):
    pass


# -- schema -------------------------------------------------------------------


def _vec(n, desc=""):
    return {"type": "array", "items": {"type": "number"}, "minItems": n, "maxItems": n, "description": desc}


_POS = {"type": "number", "exclusiveMinimum": 0}
_NONNEG = {"type": "number", "minimum": 0}
_WEIGHT = {"oneOf": [_NONNEG, {"type": "array", "items": _NONNEG, "minItems": 1}]}

_STATE = {
    "type": "object",
    "additionalProperties": False,
    "description": "Robot state. Give either position or contact_point (a point on a line the underside touches), "
    "and at most one of quaternion [w, x, y, z] or euler_deg [roll, pitch, yaw] in degrees.",
    "properties": {
        "position": _vec(3, "m, world frame"),
        "contact_point": _vec(3, "m, world frame"),
        "quaternion": _vec(4, "body to world, Hamilton [w, x, y, z]"),
        "euler_deg": _vec(3, "roll, pitch, yaw in degrees (ZYX)"),
        "velocity": _vec(3, "m/s, world frame"),
        "angular_velocity": _vec(3, "rad/s, body frame"),
        "thrust": _vec(4, "N per rotor; defaults to hover"),
    },
}

_WEIGHTS = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "thrust": _WEIGHT,
        "angular_velocity": _WEIGHT,
        "reprojection": _NONNEG,
        "terminal_position": _WEIGHT,
        "terminal_orientation": _WEIGHT,
        "terminal_velocity": _WEIGHT,
        "terminal_angular_velocity": _WEIGHT,
        "terminal_thrust": _WEIGHT,
        "perception_decay_rate": {**_NONNEG, "description": "beta, dimensionless"},
        "soft_penalty": {"type": "array", "items": _NONNEG, "minItems": 2, "maxItems": 2},
    },
}

_SEGMENT = {
    "oneOf": [
        {
            "type": "object",
            "additionalProperties": False,
            "required": ["origin", "direction", "half_length"],
            "properties": {
                "origin": _vec(3, "segment center, m"),
                "direction": _vec(3, "unit direction"),
                "half_length": _POS,
                "wire_radius": _NONNEG,
            },
        },
        {
            "type": "object",
            "additionalProperties": False,
            "required": ["endpoints"],
            "properties": {
                "endpoints": {"type": "array", "items": _vec(3), "minItems": 2, "maxItems": 2},
                "wire_radius": _NONNEG,
            },
        },
    ]
}

CATENARY_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["span"],
    "properties": {
        "format_version": {"const": FORMAT_VERSION},
        "span": {**_POS, "description": "horizontal tower distance, m"},
        "sag": {**_POS, "description": "midspan sag for equal tower heights, m"},
        "sag_parameter": {**_POS, "description": "catenary scale a, m"},
        "start_height": {"type": "number"},
        "end_height": {"type": "number"},
        "start_xy": _vec(2),
        "heading_deg": {"type": "number"},
        "wire_radius": _NONNEG,
        "points": {"type": "integer", "minimum": 2},
        "fit": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"segment_count": {"type": "integer", "minimum": 1}, "max_error": _POS},
        },
    },
}

SCENARIO_SCHEMA = {
    "$schema": "http://json-schema.org/draft-07/schema#",
    "title": "perching scenario",
    "type": "object",
    "additionalProperties": False,
    "required": ["format_version", "x_init", "x_perch", "bounds"],
    "properties": {
        "format_version": {"const": FORMAT_VERSION},
        "name": {"type": "string"},
        "robot": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "mass": {**_POS, "description": "kg"},
                "inertia_diag": {"type": "array", "items": _POS, "minItems": 3, "maxItems": 3, "description": "kg m^2"},
                "rotor_x": _vec(4, "m"),
                "rotor_y": _vec(4, "m"),
                "drag_torque_const": {"type": "number", "description": "m (torque per unit thrust)"},
                "spin_dirs": {"type": "array", "items": {"enum": [-1, 1]}, "minItems": 4, "maxItems": 4},
                "gamma_max": {**_POS, "description": "N per rotor"},
                "u_min": {"type": "number", "exclusiveMaximum": 0, "description": "N/s"},
                "u_max": {"type": "number", "exclusiveMinimum": 0, "description": "N/s"},
                "gravity": _vec(3, "m/s^2"),
                "ellipsoid_radii": {"type": "array", "items": _POS, "minItems": 3, "maxItems": 3, "description": "m"},
            },
        },
        "camera": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "fx": _POS,
                "fy": _POS,
                "cx": {"type": "number"},
                "cy": {"type": "number"},
                "extrinsics": {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["position", "quaternion"],
                    "properties": {"position": _vec(3, "camera in body frame, m"), "quaternion": _vec(4, "camera to body")},
                },
            },
        },
        "segments": {"type": "array", "items": _SEGMENT},
        "catenary": CATENARY_SCHEMA,
        "objective_segment": {"type": "integer", "minimum": 0},
        "x_init": _STATE,
        "x_perch": _STATE,
        "bounds": {
            "type": "object",
            "additionalProperties": False,
            "required": ["t_min", "t_max", "z_min"],
            "properties": {"t_min": _POS, "t_max": _POS, "z_min": {"type": "number"}, "z_margin": _NONNEG},
        },
        "n_nodes": {"type": "integer", "minimum": 2},
        "rk4_substeps": {"type": "integer", "minimum": 1},
        "dt": {**_POS, "description": "fine integration step, s"},
        "weights": _WEIGHTS,
        "perception_enabled": {"type": "boolean"},
        "recovery": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "target_position": _vec(3, "m"),
                "target_yaw_deg": {"type": "number"},
                "backoff_distance": _NONNEG,
                "min_height_margin": _NONNEG,
                "t_min": _POS,
                "t_max": _POS,
                "n_nodes": {"type": "integer", "minimum": 2},
                "weights": _WEIGHTS,
                "hover_thrust_weight": _NONNEG,
            },
        },
        "solver": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "max_iterations": {"type": "integer", "minimum": 1},
                "kkt_tolerance": _POS,
                "eq_tolerance": _POS,
                "compl_tolerance": _POS,
                "mu_init": _POS,
                "mu_factor": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                "mu_power": {"type": "number", "minimum": 1},
                "mu_min": _POS,
                "barrier_tolerance_factor": _POS,
                "fraction_to_boundary": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                "regularization": _POS,
                "max_regularization": _POS,
                "gradient_scaling": _POS,
            },
        },
    },
}


def validate(doc: dict, schema: dict = SCENARIO_SCHEMA):
    try:
        jsonschema.validate(doc, schema)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ScenarioFormatError(f"{where}: {exc.message}") from None


# -- scenario <-> dict -------------------------------------------------------------


def _arr(v):
    return [float(x) for x in np.ravel(v)]


def _weight_value(w):
    w = np.ravel(w)
    return float(w[0]) if np.all(w == w[0]) else _arr(w)


def _state_from(d: dict, robot: RobotParams, wire_radius: float) -> RobotState:
    from perchgen.scenarios import perch_state

    if ("position" in d) == ("contact_point" in d):
        raise ScenarioFormatError("state needs exactly one of position or contact_point")
    if "quaternion" in d and "euler_deg" in d:
        raise ScenarioFormatError("state takes quaternion or euler_deg, not both")
    if "quaternion" in d:
        q = np.asarray(d["quaternion"], dtype=float)
        if not abs(np.linalg.norm(q) - 1.0) < 1e-6:
            raise ScenarioFormatError("state quaternion must have unit norm")
        # leave round-off alone so saved scenarios load back bit-for-bit
        if abs(np.linalg.norm(q) - 1.0) > 1e-12:
            q = q / np.linalg.norm(q)
    else:
        roll, pitch, yaw = np.radians(d.get("euler_deg", [0.0, 0.0, 0.0]))
        q = quat.from_euler(roll, pitch, yaw)
    if "contact_point" in d:
        p = perch_state(d["contact_point"], q, robot, wire_radius).p_wb
    else:
        p = np.asarray(d["position"], dtype=float)
    return RobotState(
        p_wb=p,
        q_wb=q,
        v_w=d.get("velocity", np.zeros(3)),
        omega_b=d.get("angular_velocity", np.zeros(3)),
        gamma=d.get("thrust", np.full(4, robot.hover_thrust)),
    )


def _state_to(x: RobotState) -> dict:
    return {
        "position": _arr(x.p_wb),
        "quaternion": _arr(x.q_wb),
        "velocity": _arr(x.v_w),
        "angular_velocity": _arr(x.omega_b),
        "thrust": _arr(x.gamma),
    }


def _weights_from(d: dict | None) -> Weights:
    return Weights(**(d or {}))


def _weights_to(w: Weights) -> dict:
    return {
        "thrust": _weight_value(w.thrust),
        "angular_velocity": _weight_value(w.angular_velocity),
        "reprojection": float(w.reprojection),
        "terminal_position": _weight_value(w.terminal_position),
        "terminal_orientation": _weight_value(w.terminal_orientation),
        "terminal_velocity": _weight_value(w.terminal_velocity),
        "terminal_angular_velocity": _weight_value(w.terminal_angular_velocity),
        "terminal_thrust": _weight_value(w.terminal_thrust),
        "perception_decay_rate": float(w.perception_decay_rate),
        "soft_penalty": _arr(w.soft_penalty),
    }


def catenary_from(d: dict) -> tuple[CatenaryParams, int]:
    if ("sag" in d) == ("sag_parameter" in d):
        raise ScenarioFormatError("catenary needs exactly one of sag or sag_parameter")
    a = d["sag_parameter"] if "sag_parameter" in d else sag_parameter_for_sag(d["span"], d["sag"])
    params = CatenaryParams(
        span=float(d["span"]),
        sag_parameter=float(a),
        start_height=float(d.get("start_height", 0.0)),
        end_height=float(d.get("end_height", 0.0)),
        start_xy=tuple(d.get("start_xy", (0.0, 0.0))),
        heading=math.radians(d.get("heading_deg", 0.0)),
    )
    return params, int(d.get("points", max(200, int(math.ceil(d["span"] / 0.05)) + 1)))


def catenary_segments(d: dict) -> list[LineSegment]:
    params, n = catenary_from(d)
    fit = d.get("fit") or {}
    if ("segment_count" in fit) == ("max_error" in fit):
        raise ScenarioFormatError("catenary fit needs exactly one of segment_count or max_error")
    return fit_segments(catenary_sample(params, n), wire_radius=float(d.get("wire_radius", 0.0)), **fit)


def _segment_from(d: dict) -> LineSegment:
    r = float(d.get("wire_radius", 0.0))
    if "endpoints" in d:
        return LineSegment.from_endpoints(np.asarray(d["endpoints"][0]), np.asarray(d["endpoints"][1]), r)
    direction = np.asarray(d["direction"], dtype=float)
    if not abs(np.linalg.norm(direction) - 1.0) < 1e-6:
        raise ScenarioFormatError("segment direction must be a unit vector")
    return LineSegment(np.asarray(d["origin"], dtype=float), direction / np.linalg.norm(direction), float(d["half_length"]), r)


def _segment_to(s: LineSegment) -> dict:
    return {"origin": _arr(s.origin_w), "direction": _arr(s.direction_w), "half_length": float(s.half_length), "wire_radius": float(s.wire_radius)}


def scenario_from_dict(doc: dict) -> Scenario:
    """Validate ``doc`` against the schema and build the scenario."""
    validate(doc)
    try:
        robot = RobotParams(**doc.get("robot", {}))
        cam_doc = dict(doc.get("camera", {}))
        if "extrinsics" in cam_doc:
            e = cam_doc.pop("extrinsics")
            cam_doc["extrinsics"] = Pose(np.asarray(e["position"], dtype=float), np.asarray(e["quaternion"], dtype=float))
        camera = CameraModel(**cam_doc)
        segments = [_segment_from(s) for s in doc.get("segments", [])]
        if "catenary" in doc:
            segments += catenary_segments(doc["catenary"])
        objective = int(doc.get("objective_segment", 0))
        wire = segments[objective].wire_radius if objective < len(segments) else 0.0
        rec_doc = dict(doc.get("recovery", {}))
        if "target_yaw_deg" in rec_doc:
            rec_doc["target_yaw"] = math.radians(rec_doc.pop("target_yaw_deg"))
        if "target_position" in rec_doc:
            rec_doc["target_position"] = np.asarray(rec_doc["target_position"], dtype=float)
        if "weights" in rec_doc:
            rec_doc["weights"] = _weights_from(rec_doc["weights"])
        bounds = doc["bounds"]
        kwargs = {}
        for key in ("n_nodes", "rk4_substeps"):
            if key in doc:
                kwargs[key] = int(doc[key])
        if "dt" in doc:
            kwargs["dt_fine"] = float(doc["dt"])
        if "z_margin" in bounds:
            kwargs["z_margin"] = float(bounds["z_margin"])
        return Scenario(
            robot=robot,
            camera=camera,
            segments=segments,
            objective_segment=objective,
            x_init=_state_from(doc["x_init"], robot, wire),
            x_perch=_state_from(doc["x_perch"], robot, wire),
            t_min=float(bounds["t_min"]),
            t_max=float(bounds["t_max"]),
            z_min=float(bounds["z_min"]),
            weights=_weights_from(doc.get("weights")),
            perception_enabled=bool(doc.get("perception_enabled", bool(segments))),
            recovery=RecoverySettings(**rec_doc),
            solver=SolverOptions(**doc.get("solver", {})),
            name=doc.get("name", "scenario"),
            **kwargs,
        )
    except ScenarioFormatError:
        raise
    except (ValueError, TypeError, KeyError) as exc:
        raise ScenarioFormatError(str(exc)) from exc


def scenario_to_dict(sc: Scenario) -> dict:
    r, cam, rs, so = sc.robot, sc.camera, sc.recovery, sc.solver
    rec = {
        "backoff_distance": rs.backoff_distance,
        "min_height_margin": rs.min_height_margin,
        "t_min": rs.t_min,
        "t_max": rs.t_max,
        "hover_thrust_weight": rs.hover_thrust_weight,
    }
    if rs.target_position is not None:
        rec["target_position"] = _arr(rs.target_position)
    if rs.target_yaw is not None:
        rec["target_yaw_deg"] = math.degrees(rs.target_yaw)
    if rs.n_nodes is not None:
        rec["n_nodes"] = rs.n_nodes
    if rs.weights is not None:
        rec["weights"] = _weights_to(rs.weights)
    return {
        "format_version": FORMAT_VERSION,
        "name": sc.name,
        "robot": {
            "mass": r.mass,
            "inertia_diag": _arr(r.inertia_diag),
            "rotor_x": _arr(r.rotor_x),
            "rotor_y": _arr(r.rotor_y),
            "drag_torque_const": r.drag_torque_const,
            "spin_dirs": [int(s) for s in r.spin_dirs],
            "gamma_max": r.gamma_max,
            "u_min": r.u_min,
            "u_max": r.u_max,
            "gravity": _arr(r.gravity),
            "ellipsoid_radii": _arr(r.ellipsoid_radii),
        },
        "camera": {
            "fx": cam.fx,
            "fy": cam.fy,
            "cx": cam.cx,
            "cy": cam.cy,
            "extrinsics": {"position": _arr(cam.extrinsics.position), "quaternion": _arr(cam.extrinsics.orientation)},
        },
        "segments": [_segment_to(s) for s in sc.segments],
        "objective_segment": sc.objective_segment,
        "x_init": _state_to(sc.x_init),
        "x_perch": _state_to(sc.x_perch),
        "bounds": {"t_min": sc.t_min, "t_max": sc.t_max, "z_min": sc.z_min, "z_margin": sc.z_margin},
        "n_nodes": sc.n_nodes,
        "rk4_substeps": sc.rk4_substeps,
        "dt": sc.dt_fine,
        "weights": _weights_to(sc.weights),
        "perception_enabled": sc.perception_enabled,
        "recovery": rec,
        "solver": {
            "max_iterations": so.max_iterations,
            "kkt_tolerance": so.kkt_tolerance,
            "eq_tolerance": so.eq_tolerance,
            "compl_tolerance": so.compl_tolerance,
            "mu_init": so.mu_init,
            "mu_factor": so.mu_factor,
            "mu_power": so.mu_power,
            "mu_min": so.mu_min,
            "barrier_tolerance_factor": so.barrier_tolerance_factor,
            "fraction_to_boundary": so.fraction_to_boundary,
            "regularization": so.regularization,
            "max_regularization": so.max_regularization,
            "gradient_scaling": so.gradient_scaling,
        },
    }


def load_json(path) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise ScenarioFormatError(f"{path}: invalid JSON ({exc})") from None
    except OSError as exc:
        raise ScenarioFormatError(f"{path}: {exc.strerror}") from None


def load_scenario(path) -> Scenario:
    return scenario_from_dict(load_json(path))


def save_json(doc: dict, path):
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")


def save_scenario(sc: Scenario, path):
    save_json(scenario_to_dict(sc), path)


# -- trajectories --------------------------------------------------------------


def trajectory_to_csv(traj: Trajectory) -> str:
    buf = io.StringIO()
    buf.write(f"# format_version: {FORMAT_VERSION}\n")
    buf.write(",".join(CSV_COLUMNS) + "\n")
    rows = np.column_stack([traj.times, traj.states, traj.inputs]) if len(traj) else np.zeros((0, len(CSV_COLUMNS)))
    for row in rows:
        buf.write(",".join("%.17g" % v for v in row) + "\n")
    return buf.getvalue()


def trajectory_from_csv(text: str) -> Trajectory:
    lines = text.splitlines()
    if not lines or lines[0].strip() != f"# format_version: {FORMAT_VERSION}":
        raise TrajectoryFormatError("missing or unsupported format_version line")
    reader = csv.reader(lines[1:])
    header = next(reader, None)
    if header != CSV_COLUMNS:
        raise TrajectoryFormatError(f"column mismatch: expected {CSV_COLUMNS}, got {header}")
    rows = []
    for i, row in enumerate(reader):
        if len(row) != len(CSV_COLUMNS):
            raise TrajectoryFormatError(f"row {i} has {len(row)} fields, expected {len(CSV_COLUMNS)}")
        try:
            rows.append([float(v) for v in row])
        except ValueError:
            raise TrajectoryFormatError(f"row {i} holds a non-numeric field") from None
    data = np.asarray(rows, dtype=float).reshape(-1, len(CSV_COLUMNS))
    times = data[:, 0]
    dt = float(times[1] - times[0]) if len(times) > 1 else 0.0
    return Trajectory(dt, times, data[:, 1 : 1 + NX], data[:, 1 + NX : 1 + NX + NU])


def save_trajectory(traj: Trajectory, path):
    with open(path, "w", newline="") as fh:
        fh.write(trajectory_to_csv(traj))


def load_trajectory(path) -> Trajectory:
    try:
        with open(path) as fh:
            return trajectory_from_csv(fh.read())
    except OSError as exc:
        raise TrajectoryFormatError(f"{path}: {exc.strerror}") from None


# -- node solutions ----------------------------------------------------------------


def solution_to_dict(dv: DecisionVector) -> dict:
    return {
        "format_version": FORMAT_VERSION,
        "horizon_T": float(dv.horizon_T),
        "states": dv.states.tolist(),
        "inputs": dv.inputs.tolist(),
        "slacks": dv.slacks.tolist(),
    }


def solution_from_dict(doc: dict) -> DecisionVector:
    if doc.get("format_version") != FORMAT_VERSION:
        raise ScenarioFormatError("unsupported solution format_version")
    try:
        states = np.asarray(doc["states"], dtype=float).reshape(-1, NX)
        inputs = np.asarray(doc["inputs"], dtype=float).reshape(-1, NU)
        slacks = np.asarray(doc.get("slacks", []), dtype=float).reshape(len(states), -1)
        T = float(doc["horizon_T"])
    except (KeyError, ValueError, TypeError) as exc:
        raise ScenarioFormatError(f"malformed solution: {exc}") from None
    if len(states) != len(inputs) + 1:
        raise ScenarioFormatError("solution needs one more state than inputs")
    return DecisionVector(states, inputs, T, slacks)


def seeded_guess(scenario: Scenario, seed: DecisionVector) -> DecisionVector:
    """Warm start from a stored solution: resampled to the scenario's N, slacks rebuilt."""
    from perchgen.nlp.problem import initial_guess, soft_slacks

    if seed.n_nodes != scenario.n_nodes:
        seed = seed.resampled(scenario.n_nodes)
    base = initial_guess(scenario)
    states = seed.states.copy()
    states[0] = base.states[0]
    T = float(np.clip(seed.horizon_T, scenario.t_min, scenario.t_max))
    return replace(base, states=states, inputs=seed.inputs.copy(), horizon_T=T, slacks=soft_slacks(scenario, states))
