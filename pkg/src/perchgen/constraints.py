"""Collision-avoidance and perception functions of the robot state.

The ``*_fn`` functions are traceable JAX code on packed arrays (17-vector
state, 8-vector segment, :class:`RobotArrays`, :class:`CameraArrays`) and are
what the transcription differentiates. The remaining functions wrap them for
dataclass inputs and add the degeneracy checks.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import jax
import jax.numpy as jnp
import numpy as np

from perchgen import quaternion as quat
from perchgen.dynamics import P, Q, RobotArrays, RobotParams, _arrays, as_state_vector
from perchgen.errors import DegenerateGeometryError, InvalidParameterError
from perchgen.geometry import LineSegment, Pose

_NORMAL_EPS = 1e-18
_DEPTH_EPS = 1e-12


def _camera_default_extrinsics() -> Pose:
    # optical axis along body x, image x along -body y, image y along -body z
    r = np.array([[0.0, 0.0, 1.0], [-1.0, 0.0, 0.0], [0.0, -1.0, 0.0]])
    w = 0.5 * np.sqrt(1.0 + np.trace(r))
    q = np.array([w, (r[2, 1] - r[1, 2]) / (4 * w), (r[0, 2] - r[2, 0]) / (4 * w), (r[1, 0] - r[0, 1]) / (4 * w)])
    return Pose(np.array([0.1, 0.0, 0.0]), q / np.linalg.norm(q))


class CameraArrays(NamedTuple):
    fx: jnp.ndarray
    fy: jnp.ndarray
    p_bc: jnp.ndarray
    q_bc: jnp.ndarray


@dataclass(frozen=True)
class CameraModel:
    """Pinhole camera rigidly mounted on the body.

    ``cx``/``cy`` are kept for I/O only: the model always works in pixel
    coordinates centered on the optical axis.
    """

    fx: float = 380.0
    fy: float = 380.0
    cx: float = 0.0
    cy: float = 0.0
    extrinsics: Pose = field(default_factory=_camera_default_extrinsics)

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise InvalidParameterError("focal lengths must be positive")

    def arrays(self) -> CameraArrays:
        return CameraArrays(
            jnp.asarray(self.fx, dtype=float),
            jnp.asarray(self.fy, dtype=float),
            jnp.asarray(self.extrinsics.position),
            jnp.asarray(self.extrinsics.orientation),
        )


class ScaledLine(NamedTuple):
    origin_scaled: np.ndarray
    direction_scaled: np.ndarray


class PerceptionVectors(NamedTuple):
    n_i: np.ndarray
    l_i: np.ndarray
    p2d: np.ndarray
    d3d: np.ndarray
    p3d: np.ndarray
    degenerate: bool


# -- traceable model -------------------------------------------------------


def inflated_radii(seg, p: RobotArrays):
    return p.radii + seg[7]


def scale_line_fn(x, seg, p: RobotArrays):
    delta = inflated_radii(seg, p)
    q = x[Q]
    o = quat.rotate_inverse(q, seg[0:3] - x[P]) / delta
    l = quat.rotate_inverse(q, seg[3:6]) / delta
    return o, l


def collision_raw_fn(o, l):
    return (o @ o - 1.0) * (l @ l) - (o @ l) ** 2


def sigmoid(d, d0, sharpness):
    # arctan(sinh(z)) written as 2·arctan(tanh(z/2)) so the derivative stays finite far away
    return 0.5 + (2.0 / jnp.pi) * jnp.arctan(jnp.tanh(0.5 * sharpness * (d - d0)))


def augmentation_fn(x, seg, p: RobotArrays):
    delta = inflated_radii(seg, p)
    lam1 = 1.0 / jnp.min(delta)
    r = x[P] - seg[0:3]
    dist = jnp.sqrt(r @ r + 1e-24)
    d0 = seg[6] + jnp.max(delta)
    return lam1**2 * sigmoid(dist, d0, 4.0 / jnp.max(delta))


def h_ca_fn(x, seg, p: RobotArrays):
    o, l = scale_line_fn(x, seg, p)
    return collision_raw_fn(o, l) + augmentation_fn(x, seg, p)


def camera_pose_fn(x, cam: CameraArrays):
    q = x[Q]
    return x[P] + quat.rotate(q, cam.p_bc), quat.multiply(q, cam.q_bc)


def perception_fn(x, seg, cam: CameraArrays):
    """``(n_I, l_I, p2d, d3d, p3d, e1_I, e2_I)`` for the segment seen from the camera."""
    p_wc, q_wc = camera_pose_fn(x, cam)
    o_c = quat.rotate_inverse(q_wc, seg[0:3] - p_wc)
    l_c = quat.rotate_inverse(q_wc, seg[3:6])
    n_c = jnp.cross(o_c, l_c)
    kp = jnp.stack([cam.fx, cam.fy, jnp.ones_like(cam.fx)])
    kl = jnp.stack([cam.fy, cam.fx, cam.fx * cam.fy])
    l_i = kp * l_c
    n_i = kl * n_c
    e_z = jnp.array([0.0, 0.0, 1.0])
    p2d = jnp.cross(n_i, jnp.cross(e_z, n_i))
    d3d = jnp.cross(l_i, n_i)
    p3d = p2d / d3d[2]
    e1_i = kp * (o_c - seg[6] * l_c)
    e2_i = kp * (o_c + seg[6] * l_c)
    return n_i, l_i, p2d, d3d, p3d, e1_i, e2_i


def reprojection_fn(x, seg, cam: CameraArrays):
    n_i = perception_fn(x, seg, cam)[0]
    return n_i[2] / jnp.sqrt(n_i[0] ** 2 + n_i[1] ** 2)


def h_lc_fn(x, seg, cam: CameraArrays):
    return perception_fn(x, seg, cam)[3][2]


def h_sv_fn(x, seg, cam: CameraArrays):
    _, _, _, _, p3d, e1, e2 = perception_fn(x, seg, cam)
    return -((p3d - e1) @ (p3d - e2))


# -- public wrappers -------------------------------------------------------

_scale_line = jax.jit(scale_line_fn)
_augmentation = jax.jit(augmentation_fn)
_h_ca = jax.jit(h_ca_fn)
_perception = jax.jit(perception_fn)
_h_ca_batch = jax.jit(jax.vmap(jax.vmap(h_ca_fn, in_axes=(None, 0, None)), in_axes=(0, None, None)))
_perception_batch = jax.jit(
    jax.vmap(lambda x, s, c: (reprojection_fn(x, s, c), h_lc_fn(x, s, c), h_sv_fn(x, s, c)), in_axes=(0, None, None))
)


def _seg(seg) -> np.ndarray:
    return seg.packed() if isinstance(seg, LineSegment) else np.asarray(seg, dtype=float)


def _cam(cam):
    return cam.arrays() if isinstance(cam, CameraModel) else cam


def scale_line(seg: LineSegment, x, params: RobotParams) -> ScaledLine:
    o, l = _scale_line(as_state_vector(x), _seg(seg), _arrays(params))
    return ScaledLine(np.asarray(o), np.asarray(l))


def collision_raw(sl: ScaledLine) -> float:
    o = np.asarray(sl.origin_scaled, dtype=float)
    l = np.asarray(sl.direction_scaled, dtype=float)
    return float((o @ o - 1.0) * (l @ l) - (o @ l) ** 2)


def augmentation_k(x, seg: LineSegment, params: RobotParams) -> float:
    return float(_augmentation(as_state_vector(x), _seg(seg), _arrays(params)))


def collision_constraint_hca(x, seg: LineSegment, params: RobotParams) -> float:
    return float(_h_ca(as_state_vector(x), _seg(seg), _arrays(params)))


def collision_matrix(states, segments, params: RobotParams) -> np.ndarray:
    """``h_ca`` for every (sample, segment) pair, shape ``(len(states), len(segments))``."""
    states = np.atleast_2d(states)
    if len(segments) == 0:
        return np.zeros((len(states), 0))
    segs = np.stack([_seg(s) for s in segments])
    return np.asarray(_h_ca_batch(states, segs, _arrays(params)))


def perception_traces(states, seg: LineSegment, cam: CameraModel) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Reprojection error, cheirality and visibility values along a state sequence."""
    r, lc, sv = _perception_batch(np.atleast_2d(states), _seg(seg), _cam(cam))
    return np.asarray(r), np.asarray(lc), np.asarray(sv)


def line_in_camera(x, seg: LineSegment, cam: CameraModel) -> PerceptionVectors:
    n_i, l_i, p2d, d3d, p3d, _, _ = (np.asarray(a) for a in _perception(as_state_vector(x), _seg(seg), _cam(cam)))
    degenerate = bool(n_i[0] ** 2 + n_i[1] ** 2 < _NORMAL_EPS) or not np.all(np.isfinite(p3d))
    return PerceptionVectors(n_i, l_i, p2d, d3d, p3d, degenerate)


def segment_in_image(x, seg: LineSegment, cam: CameraModel) -> tuple[np.ndarray, np.ndarray]:
    out = _perception(as_state_vector(x), _seg(seg), _cam(cam))
    return np.asarray(out[5]), np.asarray(out[6])


def reprojection_error(x, seg: LineSegment, cam: CameraModel) -> float:
    n_i = line_in_camera(x, seg, cam).n_i
    norm2 = n_i[0] ** 2 + n_i[1] ** 2
    if norm2 < _NORMAL_EPS:
        raise DegenerateGeometryError("line passes through the camera center")
    return float(n_i[2] / np.sqrt(norm2))


def cheirality_constraint_hlc(x, seg: LineSegment, cam: CameraModel) -> float:
    return float(line_in_camera(x, seg, cam).d3d[2])


def visibility_from_points(p3d, e1, e2) -> float:
    p3d, e1, e2 = (np.asarray(a, dtype=float) for a in (p3d, e1, e2))
    return float(-((p3d - e1) @ (p3d - e2)))


def visibility_constraint_hsv(x, seg: LineSegment, cam: CameraModel) -> float:
    n_i, _, _, d3d, p3d, e1, e2 = (np.asarray(a) for a in _perception(as_state_vector(x), _seg(seg), _cam(cam)))
    if abs(d3d[2]) < _DEPTH_EPS:
        raise DegenerateGeometryError("closest line point lies in the camera plane")
    return visibility_from_points(p3d, e1, e2)
