"""Hamilton quaternions stored as ``[w, x, y, z]``.

Every function is written against ``jax.numpy`` so it can be traced and
differentiated; plain numpy arrays are accepted as input.
"""

import jax.numpy as jnp
import numpy as np


def multiply(a, b):
    aw, ax, ay, az = a[0], a[1], a[2], a[3]
    bw, bx, by, bz = b[0], b[1], b[2], b[3]
    return jnp.stack(
        [
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        ]
    )


def conjugate(q):
    return jnp.stack([q[0], -q[1], -q[2], -q[3]])


def rotate(q, v):
    """Rotate ``v`` by the unit quaternion ``q`` (``q ⊙ [0, v] ⊙ q*``)."""
    u = q[1:]
    t = 2.0 * jnp.cross(u, v)
    return v + q[0] * t + jnp.cross(u, t)


def rotate_inverse(q, v):
    return rotate(conjugate(q), v)


def normalize(q):
    return q / jnp.linalg.norm(q)


def to_matrix(q):
    w, x, y, z = q[0], q[1], q[2], q[3]
    return jnp.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def error_vector(q_target, q):
    """Imaginary part of ``q_target⁻¹ ⊙ q`` in the hemisphere with non-negative real part."""
    d = multiply(conjugate(q_target), q)
    sign = jnp.where(d[0] < 0.0, -1.0, 1.0)
    return sign * d[1:]


# The helpers below are plain numpy; they build scenarios and guesses and are
# never differentiated.


def identity() -> np.ndarray:
    return np.array([1.0, 0.0, 0.0, 0.0])


def from_axis_angle(axis, angle: float) -> np.ndarray:
    axis = np.asarray(axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    return np.concatenate([[np.cos(angle / 2.0)], np.sin(angle / 2.0) * axis])


def from_euler(roll: float, pitch: float, yaw: float) -> np.ndarray:
    """ZYX convention: yaw about z, then pitch about y, then roll about x."""
    qz = from_axis_angle([0, 0, 1], yaw)
    qy = from_axis_angle([0, 1, 0], pitch)
    qx = from_axis_angle([1, 0, 0], roll)
    return np.asarray(multiply(multiply(qz, qy), qx))


def to_euler(q) -> np.ndarray:
    """Inverse of :func:`from_euler`, returns ``(roll, pitch, yaw)``."""
    w, x, y, z = np.asarray(q, dtype=float)
    roll = np.arctan2(2 * (w * x + y * z), 1 - 2 * (x * x + y * y))
    pitch = np.arcsin(np.clip(2 * (w * y - z * x), -1.0, 1.0))
    yaw = np.arctan2(2 * (w * z + x * y), 1 - 2 * (y * y + z * z))
    return np.array([roll, pitch, yaw])


def geodesic_angle(a, b) -> float:
    """Rotation angle in [0, pi] between two unit quaternions."""
    d = np.asarray(multiply(conjugate(np.asarray(a, dtype=float)), np.asarray(b, dtype=float)))
    # atan2 keeps full precision near 0 and near pi, unlike arccos of the dot product
    return float(2.0 * np.arctan2(np.linalg.norm(d[1:]), abs(d[0])))


def slerp(a, b, t: float) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    dot = float(np.dot(a, b))
    if dot < 0.0:
        b = -b
        dot = -dot
    if dot > 1.0 - 1e-12:
        out = a + t * (b - a)
        return out / np.linalg.norm(out)
    theta = np.arccos(dot)
    out = (np.sin((1.0 - t) * theta) * a + np.sin(t * theta) * b) / np.sin(theta)
    return out / np.linalg.norm(out)
