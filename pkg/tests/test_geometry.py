import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import random_quaternion, random_unit, rotmat
from perchgen.errors import InvalidParameterError
from perchgen.geometry import (
    CatenaryParams,
    LineSegment,
    Pose,
    catenary_sample,
    fit_breakpoints,
    fit_error_stats,
    fit_segments,
    polyline_distance,
    sag_parameter_for_sag,
    segment_endpoints,
    transform_line_to_frame,
)

SPAN = 185.0
SAG = 5.0


@pytest.fixture(scope="module")
def line_185():
    a = sag_parameter_for_sag(SPAN, SAG)
    return CatenaryParams(SPAN, a, 30.0, 30.0)


def test_segment_invariants():
    with pytest.raises(InvalidParameterError):
        LineSegment([0, 0, 0], [1, 1, 0], 1.0)
    with pytest.raises(InvalidParameterError):
        LineSegment([0, 0, 0], [1, 0, 0], 0.0)
    with pytest.raises(InvalidParameterError):
        LineSegment([0, 0, 0], [1, 0, 0], 1.0, -0.1)
    with pytest.raises(InvalidParameterError):
        Pose([0, 0, 0], [1, 0.1, 0, 0])


def test_catenary_rejects_degenerate():
    with pytest.raises(InvalidParameterError):
        CatenaryParams(0.0, 10.0)
    with pytest.raises(InvalidParameterError):
        CatenaryParams(10.0, -1.0)
    with pytest.raises(InvalidParameterError):
        catenary_sample(CatenaryParams(10.0, 10.0), 1)


def test_catenary_symmetric_midpoint_lowest():
    pts = catenary_sample(CatenaryParams(50.0, 40.0, 10.0, 10.0), 3)
    assert pts[1, 2] < pts[0, 2] and pts[1, 2] < pts[2, 2]
    assert pts[0, 2] == pts[2, 2] == 10.0
    assert pts[1, 0] == 25.0


def test_catenary_matches_cosh(line_185):
    a = line_185.sag_parameter
    pts = catenary_sample(line_185, 2000)
    # towers at equal height: the vertex is at midspan, sag below the towers
    x = pts[:, 0] - SPAN / 2
    z_ref = 30.0 - SAG + a * (np.cosh(x / a) - 1.0)
    assert np.max(np.abs(pts[:, 2] - z_ref)) < 1e-9
    assert np.max(np.abs(np.diff(pts[:, 0]) - SPAN / 1999)) < 1e-9
    assert abs(pts[:, 2].min() - (30.0 - SAG)) < 1e-4


def test_catenary_uneven_towers():
    p = CatenaryParams(100.0, 80.0, 10.0, 16.0)
    pts = catenary_sample(p, 101)
    assert pts[0, 2] == 10.0 and pts[-1, 2] == 16.0
    # it is still a cosh of scale a: second differences match a·cosh'' = cosh/a
    h = 1.0
    dd = (pts[2:, 2] - 2 * pts[1:-1, 2] + pts[:-2, 2]) / h**2
    slope = np.gradient(pts[:, 2], h)[1:-1]
    np.testing.assert_allclose(dd, np.sqrt(1 + slope**2) / 80.0, rtol=2e-3)


def test_fit_straight_line_single_segment():
    pts = np.column_stack([np.linspace(0, 10, 50), 2 * np.linspace(0, 10, 50), np.full(50, 3.0)])
    segs = fit_segments(pts, segment_count=1)
    assert len(segs) == 1
    assert fit_error_stats(pts, segs)["max_error"] < 1e-12
    e1, e2 = segment_endpoints(segs[0])
    np.testing.assert_allclose(e1, pts[0], atol=1e-12)
    np.testing.assert_allclose(e2, pts[-1], atol=1e-12)


def test_fit_rejects_bad_input():
    with pytest.raises(InvalidParameterError):
        fit_segments(np.zeros((1, 3)), segment_count=1)
    with pytest.raises(InvalidParameterError):
        fit_segments(np.zeros((0, 3)), max_error=0.1)
    with pytest.raises(InvalidParameterError):
        fit_segments(np.random.rand(5, 3))


def test_fit_185m_catenary(line_185):
    pts = catenary_sample(line_185, 2000)
    segs = fit_segments(pts, segment_count=15)
    dense = catenary_sample(line_185, 20000)
    stats = fit_error_stats(dense, segs)
    assert len(segs) == 15
    assert stats["mean_error"] <= 0.05
    assert 12.0 < np.mean([2 * s.half_length for s in segs]) < 13.0


def test_fit_error_non_increasing_with_count(line_185):
    pts = catenary_sample(line_185, 2000)
    dense = catenary_sample(line_185, 20000)
    errs = [fit_error_stats(dense, fit_segments(pts, segment_count=n))["max_error"] for n in (5, 15, 30)]
    assert errs[0] >= errs[1] >= errs[2]


@settings(max_examples=30, deadline=None)
@given(st.floats(0.001, 0.5))
def test_fit_max_error_target(tol):
    p = CatenaryParams(60.0, 30.0, 5.0, 8.0)
    pts = catenary_sample(p, 400)
    segs = fit_segments(pts, max_error=tol)
    assert polyline_distance(pts, np.array([segment_endpoints(segs[0])[0]] + [segment_endpoints(s)[1] for s in segs])).max() <= tol


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 40))
def test_fit_endpoints_are_polyline_points(seed, count):
    rng = np.random.default_rng(seed)
    pts = np.cumsum(rng.normal(size=(60, 3)), axis=0)
    idx = fit_breakpoints(pts, segment_count=count)
    segs = fit_segments(pts, segment_count=count)
    assert idx[0] == 0 and idx[-1] == len(pts) - 1 and idx == sorted(set(idx))
    assert len(segs) == count
    for (a, b), s in zip(zip(idx[:-1], idx[1:]), segs):
        e1, e2 = segment_endpoints(s)
        np.testing.assert_allclose(e1, pts[a], atol=1e-12)
        np.testing.assert_allclose(e2, pts[b], atol=1e-12)
    for s, t in zip(segs[:-1], segs[1:]):
        np.testing.assert_allclose(segment_endpoints(s)[1], segment_endpoints(t)[0], atol=1e-12)


def test_fit_ties_break_to_lower_index():
    # a symmetric tent: the two bumps are equally far from the chord
    pts = np.array([[0, 0, 0], [1, 1, 0], [2, 0, 0], [3, 1, 0], [4, 0, 0]], dtype=float)
    pts[2, 1] = 0.5
    assert fit_breakpoints(pts, segment_count=2) == [0, 1, 4]


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_fit_error_rigid_invariance(seed):
    rng = np.random.default_rng(seed)
    pts = np.cumsum(rng.normal(size=(40, 3)), axis=0)
    R = rotmat(random_quaternion(rng))
    t = rng.normal(size=3) * 10
    moved = pts @ R.T + t
    a = fit_error_stats(pts, fit_segments(pts, segment_count=6))
    b = fit_error_stats(moved, fit_segments(moved, segment_count=6))
    assert abs(a["max_error"] - b["max_error"]) < 1e-9
    assert abs(a["mean_error"] - b["mean_error"]) < 1e-9


def test_endpoints_axis_aligned():
    e1, e2 = segment_endpoints(LineSegment([0, 0, 0], [1, 0, 0], 2.0))
    np.testing.assert_array_equal(e1, [-2, 0, 0])
    np.testing.assert_array_equal(e2, [2, 0, 0])


@given(st.integers(0, 2**32 - 1))
def test_endpoints_midpoint_and_length(seed):
    rng = np.random.default_rng(seed)
    s = LineSegment(rng.normal(size=3), random_unit(rng), rng.uniform(0.01, 10))
    e1, e2 = segment_endpoints(s)
    np.testing.assert_allclose((e1 + e2) / 2, s.origin_w, atol=1e-12)
    assert abs(np.linalg.norm(e2 - e1) - 2 * s.half_length) < 1e-12


def test_transform_identity_and_translation():
    s = LineSegment([1, 2, 3], [0, 0, 1], 1.0)
    o, d = transform_line_to_frame(s, Pose())
    np.testing.assert_array_equal(o, s.origin_w)
    np.testing.assert_array_equal(d, s.direction_w)
    o, d = transform_line_to_frame(s, Pose([1, 2, 3]))
    np.testing.assert_array_equal(o, [0, 0, 0])


@given(st.integers(0, 2**32 - 1))
def test_transform_round_trip(seed):
    rng = np.random.default_rng(seed)
    s = LineSegment(rng.normal(size=3) * 5, random_unit(rng), 1.0)
    pose = Pose(rng.normal(size=3) * 5, random_quaternion(rng))
    o, d = transform_line_to_frame(s, pose)
    assert abs(np.linalg.norm(d) - 1) < 1e-12
    o2, d2 = transform_line_to_frame(LineSegment(o, d / np.linalg.norm(d), 1.0), pose.inverse())
    np.testing.assert_allclose(o2, s.origin_w, atol=1e-12)
    np.testing.assert_allclose(d2, s.direction_w, atol=1e-12)
