"""Powerline geometry: segments, catenaries, polyline reduction and frame changes."""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from perchgen import quaternion as quat
from perchgen.errors import InvalidParameterError

_UNIT_TOL = 1e-9


@dataclass(frozen=True)
class LineSegment:
    """A straight powerline piece stored as midpoint, unit direction and half length."""

    origin_w: np.ndarray
    direction_w: np.ndarray
    half_length: float
    wire_radius: float = 0.0

    def __post_init__(self):
        o = np.asarray(self.origin_w, dtype=float).reshape(3)
        d = np.asarray(self.direction_w, dtype=float).reshape(3)
        if abs(np.linalg.norm(d) - 1.0) > _UNIT_TOL:
            raise InvalidParameterError(f"segment direction must be unit norm, got |l|={np.linalg.norm(d)}")
        if not self.half_length > 0:
            raise InvalidParameterError("segment half_length must be positive")
        if self.wire_radius < 0:
            raise InvalidParameterError("wire_radius must be non-negative")
        object.__setattr__(self, "origin_w", o)
        object.__setattr__(self, "direction_w", d)
        object.__setattr__(self, "half_length", float(self.half_length))
        object.__setattr__(self, "wire_radius", float(self.wire_radius))

    @classmethod
    def from_endpoints(cls, e1, e2, wire_radius: float = 0.0) -> LineSegment:
        e1 = np.asarray(e1, dtype=float)
        e2 = np.asarray(e2, dtype=float)
        span = e2 - e1
        length = np.linalg.norm(span)
        if length == 0:
            raise InvalidParameterError("segment endpoints coincide")
        return cls((e1 + e2) / 2.0, span / length, length / 2.0, wire_radius)

    def packed(self) -> np.ndarray:
        """``[origin(3), direction(3), half_length, wire_radius]`` for the traced model code."""
        return np.concatenate([self.origin_w, self.direction_w, [self.half_length, self.wire_radius]])


@dataclass(frozen=True)
class Pose:
    position: np.ndarray = field(default_factory=lambda: np.zeros(3))
    orientation: np.ndarray = field(default_factory=quat.identity)

    def __post_init__(self):
        p = np.asarray(self.position, dtype=float).reshape(3)
        q = np.asarray(self.orientation, dtype=float).reshape(4)
        if abs(np.linalg.norm(q) - 1.0) > _UNIT_TOL:
            raise InvalidParameterError("pose orientation must be a unit quaternion")
        object.__setattr__(self, "position", p)
        object.__setattr__(self, "orientation", q)

    def inverse(self) -> Pose:
        q_inv = np.asarray(quat.conjugate(self.orientation))
        return Pose(-np.asarray(quat.rotate(q_inv, self.position)), q_inv)


@dataclass(frozen=True)
class CatenaryParams:
    """Catenary ``z = z_v + a·cosh((x - x_v)/a)`` hung between two towers.

    ``heading`` is the azimuth of the horizontal span direction and ``start_xy``
    the horizontal position of the first tower.
    """

    span: float
    sag_parameter: float
    start_height: float = 0.0
    end_height: float = 0.0
    start_xy: tuple[float, float] = (0.0, 0.0)
    heading: float = 0.0

    def __post_init__(self):
        if not self.span > 0:
            raise InvalidParameterError("catenary span must be positive")
        if not self.sag_parameter > 0:
            raise InvalidParameterError("catenary sag_parameter must be positive")

    def vertex_offset(self) -> float:
        """Horizontal distance from the first tower to the catenary's lowest point."""
        a, L = self.sag_parameter, self.span
        dh = self.end_height - self.start_height
        A = np.arcsinh(dh / (2.0 * a * np.sinh(L / (2.0 * a)))) - L / (2.0 * a)
        return -a * A

    def height(self, s) -> np.ndarray:
        a = self.sag_parameter
        xv = self.vertex_offset()
        s = np.asarray(s, dtype=float)
        return self.start_height + a * (np.cosh((s - xv) / a) - np.cosh(-xv / a))


def sag_parameter_for_sag(span: float, sag: float) -> float:
    """Catenary scale ``a`` giving midspan sag ``sag`` for towers of equal height."""
    if not (span > 0 and sag > 0):
        raise InvalidParameterError("span and sag must be positive")
    return brentq(lambda a: a * (np.cosh(span / (2 * a)) - 1.0) - sag, span / 50.0, 1e9 * span, xtol=1e-13)


def catenary_sample(params: CatenaryParams, n_points: int) -> np.ndarray:
    """Sample ``n_points`` catenary points uniformly spaced in the horizontal coordinate."""
    if n_points < 2:
        raise InvalidParameterError("n_points must be at least 2")
    s = np.linspace(0.0, params.span, n_points)
    z = params.height(s)
    # pin the endpoints exactly; the closed form is accurate to rounding there
    z[0], z[-1] = params.start_height, params.end_height
    c, d = np.cos(params.heading), np.sin(params.heading)
    x0, y0 = params.start_xy
    return np.column_stack([x0 + c * s, y0 + d * s, z])


def point_segment_distance(points, a, b) -> np.ndarray:
    points = np.atleast_2d(points)
    ab = b - a
    denom = float(ab @ ab)
    if denom == 0.0:
        return np.linalg.norm(points - a, axis=1)
    t = np.clip((points - a) @ ab / denom, 0.0, 1.0)
    return np.linalg.norm(points - (a + t[:, None] * ab), axis=1)


def polyline_distance(points, vertices) -> np.ndarray:
    """Distance from each point to the nearest piece of the polyline ``vertices``."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    best = np.full(len(points), np.inf)
    for a, b in zip(vertices[:-1], vertices[1:]):
        best = np.minimum(best, point_segment_distance(points, a, b))
    return best


def _farthest(polyline, i, j):
    """Index and distance of the interior point of ``polyline[i:j+1]`` farthest from its chord."""
    if j - i < 2:
        return None, 0.0
    d = point_segment_distance(polyline[i + 1 : j], polyline[i], polyline[j])
    # argmax returns the first maximum, i.e. ties go to the lower index
    k = int(np.argmax(d))
    return i + 1 + k, float(d[k])


def fit_breakpoints(polyline, max_error: float | None = None, segment_count: int | None = None) -> list[int]:
    """Indices of ``polyline`` kept by recursive farthest-point splitting."""
    polyline = np.asarray(polyline, dtype=float)
    if polyline.ndim != 2 or len(polyline) < 2:
        raise InvalidParameterError("polyline needs at least two points")
    if (max_error is None) == (segment_count is None):
        raise InvalidParameterError("give exactly one of max_error or segment_count")
    n = len(polyline)
    if segment_count is not None:
        if segment_count < 1 or segment_count > n - 1:
            raise InvalidParameterError(f"segment_count must be in [1, {n - 1}]")
        budget = segment_count
    else:
        if max_error < 0:
            raise InvalidParameterError("max_error must be non-negative")
        budget = n - 1

    keep = {0, n - 1}
    heap = []
    k, d = _farthest(polyline, 0, n - 1)
    if k is not None:
        heap.append((-d, k, 0, n - 1))
    pieces = 1
    while heap and pieces < budget:
        neg_d, k, i, j = heapq.heappop(heap)
        if max_error is not None and -neg_d <= max_error:
            break
        keep.add(k)
        pieces += 1
        for a, b in ((i, k), (k, j)):
            kk, dd = _farthest(polyline, a, b)
            if kk is not None:
                heapq.heappush(heap, (-dd, kk, a, b))
    if segment_count is not None and pieces < segment_count:
        # every remaining piece is already exact; split the longest ones by index
        while pieces < segment_count:
            idx = sorted(keep)
            gaps = [(idx[t + 1] - idx[t], -idx[t]) for t in range(len(idx) - 1)]
            width, neg_start = max(gaps)
            keep.add(-neg_start + width // 2)
            pieces += 1
    return sorted(keep)


def fit_segments(
    polyline, max_error: float | None = None, segment_count: int | None = None, wire_radius: float = 0.0
) -> list[LineSegment]:
    """Approximate a polyline by concatenated segments whose endpoints are polyline points.

    Exactly one of ``max_error`` (meters) or ``segment_count`` must be given.
    """
    polyline = np.asarray(polyline, dtype=float)
    idx = fit_breakpoints(polyline, max_error=max_error, segment_count=segment_count)
    return [LineSegment.from_endpoints(polyline[a], polyline[b], wire_radius) for a, b in zip(idx[:-1], idx[1:])]


def fit_error_stats(points, segments: list[LineSegment]) -> dict:
    vertices = [segment_endpoints(segments[0])[0]] + [segment_endpoints(s)[1] for s in segments]
    d = polyline_distance(points, np.asarray(vertices))
    return {"mean_error": float(d.mean()), "max_error": float(d.max()), "segment_count": len(segments)}


def segment_endpoints(seg: LineSegment) -> tuple[np.ndarray, np.ndarray]:
    return seg.origin_w - seg.half_length * seg.direction_w, seg.origin_w + seg.half_length * seg.direction_w


def transform_line_to_frame(seg: LineSegment, frame_pose: Pose) -> tuple[np.ndarray, np.ndarray]:
    """Express the segment's origin and direction in the frame located at ``frame_pose``."""
    q = frame_pose.orientation
    origin = quat.rotate_inverse(q, seg.origin_w - frame_pose.position)
    direction = quat.rotate_inverse(q, seg.direction_w)
    return np.asarray(origin), np.asarray(direction)
