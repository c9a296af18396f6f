import math

import numpy as np
import pytest

from oracles import random_quaternion, random_unit, scaled_clearance, sigmoid_plateau_band
from perchgen import quaternion as quat
from perchgen.constraints import augmentation_k, collision_matrix
from perchgen.dynamics import G, P, RobotParams, Trajectory
from perchgen.errors import ChainingError
from perchgen.geometry import LineSegment, segment_endpoints
from perchgen.pipeline import audit_collisions, chain, generate_maneuver, recovery_target

RP = RobotParams()
EPS_V = 0.05


def straight_trajectory(p0, p1, n, q=(1.0, 0.0, 0.0, 0.0), dt=1e-3):
    s = np.linspace(0.0, 1.0, n)[:, None]
    states = np.zeros((n, 17))
    states[:, P] = (1 - s) * np.asarray(p0, dtype=float) + s * np.asarray(p1, dtype=float)
    states[:, 3:7] = q
    return Trajectory(dt, np.arange(n) * dt, states, np.zeros((n, 4)))


# -- audit ----------------------------------------------------------------------


def test_audit_far_is_empty():
    seg = LineSegment([0, 0, 10], [0, 1, 0], 2.0, 0.01)
    traj = straight_trajectory([-3, 0, 1], [3, 0, 1], 500)
    assert audit_collisions(traj, [seg], RP) == []


def test_audit_brackets_crossing():
    seg = LineSegment([0, 0, 2], [0, 1, 0], 2.0, 0.01)
    n, dt = 2001, 1e-3
    traj = straight_trajectory([-1, 0, 2], [1, 0, 2], n, dt=dt)
    v = audit_collisions(traj, [seg], RP)
    assert v
    t_cross = 0.5 * (n - 1) * dt
    times = [e.time for e in v]
    assert min(times) <= t_cross + dt and max(times) >= t_cross - dt
    assert times == sorted(times)
    assert all(e.segment_index == 0 and e.h_ca < 0 for e in v)


def test_audit_orders_by_time_then_segment():
    segs = [LineSegment([0, 0, 2], [0, 1, 0], 2.0), LineSegment([0, 0, 2], [0, 0.6, 0.8], 2.0)]
    v = audit_collisions(straight_trajectory([-1, 0, 2], [1, 0, 2], 401), segs, RP)
    keys = [(e.time, e.segment_index) for e in v]
    assert keys == sorted(keys)
    assert {e.segment_index for e in v} == {0, 1}


def test_audit_agrees_with_oracle(rng):
    checked = flagged = 0
    for _ in range(40):
        seg = LineSegment(rng.uniform(-2, 2, 3), random_unit(rng), rng.uniform(0.2, 2.0), 0.01)
        mid = seg.origin_w + rng.uniform(-1.2, 1.2) * seg.half_length * seg.direction_w
        d = random_unit(rng)
        traj = straight_trajectory(mid - d, mid + d + rng.normal(size=3) * 0.2, 200, q=random_quaternion(rng))
        hit = {round(e.time / traj.dt) for e in audit_collisions(traj, [seg], RP)}
        H = collision_matrix(traj.states, [seg], RP)[:, 0]
        delta = RP.ellipsoid_radii + seg.wire_radius
        e1, e2 = segment_endpoints(seg)
        for i, x in enumerate(traj.states):
            if abs(H[i]) < 1e-3 or not sigmoid_plateau_band(augmentation_k(x, seg, RP), 1.0 / delta.min() ** 2):
                continue
            inside = scaled_clearance(x[:3], x[3:7], delta, e1, e2, 401, 401) < 1.0
            assert (i in hit) == inside
            checked += 1
            flagged += inside
    assert checked > 2000 and flagged > 100


# -- chaining -----------------------------------------------------------------


def test_chain_with_empty_is_identity():
    t = straight_trajectory([0, 0, 1], [1, 0, 1], 10)
    assert chain(t, Trajectory.empty(t.dt)) is t


def test_chain_junction_and_time_axis():
    a = straight_trajectory([0, 0, 1], [1, 0, 1], 11)
    b = straight_trajectory([1, 0, 1], [1, 1, 1], 21)
    a.states[:, G] = 1.5
    b.states[:, G] = 1.5
    c = chain(a, b)
    assert len(c) == 31
    np.testing.assert_array_equal(c.states[10], a.states[-1])
    np.testing.assert_array_equal(c.states[10, G], b.states[0, G])
    np.testing.assert_allclose(np.diff(c.times), a.dt, rtol=1e-12)


def test_chain_rejects_mismatch():
    a = straight_trajectory([0, 0, 1], [1, 0, 1], 11)
    b = straight_trajectory([1.001, 0, 1], [1, 1, 1], 21)
    with pytest.raises(ChainingError) as err:
        chain(a, b)
    assert err.value.max_deviation == pytest.approx(1e-3)


# -- maneuvers ------------------------------------------------------------------


def check_maneuver(sc, res):
    for traj in (res.perch_trajectory, res.recovery_trajectory, res.chained):
        H = collision_matrix(traj.states, sc.segments, sc.robot)
        assert H.size == 0 or H.min() >= 0
        assert traj.states[:, 2].min() >= sc.z_min
        assert traj.states[:, G].min() >= 0 and traj.states[:, G].max() <= sc.robot.gamma_max
        np.testing.assert_allclose(np.linalg.norm(traj.states[:, 3:7], axis=1), 1.0, atol=1e-9)
    c = res.chained
    assert np.all(np.diff(c.times) > 0)
    np.testing.assert_allclose(np.diff(c.times), c.dt, rtol=1e-9)
    n = len(res.perch_trajectory)
    assert np.abs(c.states[n - 1] - res.recovery_trajectory.states[0]).max() < 1e-9
    # perch plan: terminal rest
    plan = res.perch.solution.states[-1]
    assert np.linalg.norm(plan[7:10]) < EPS_V and np.linalg.norm(plan[10:13]) < EPS_V
    # recovery ends at rest at its hover target, with hover thrusts
    target, _ = recovery_target(sc)
    end = res.recovery_trajectory.states[-1]
    assert np.linalg.norm(end[P] - target) < 0.01
    assert np.linalg.norm(end[7:10]) < EPS_V and np.linalg.norm(end[10:13]) < EPS_V
    np.testing.assert_allclose(end[G], sc.robot.hover_thrust, atol=0.02)


def test_stationary_maneuver(maneuver_stationary):
    sc, res = maneuver_stationary
    check_maneuver(sc, res)
    for traj in (res.perch_trajectory, res.recovery_trajectory):
        assert np.abs(traj.states[:, P] - sc.x_init.p_wb).max() < 1e-3
    assert not res.resolved


def test_perching_80_no_resolve(maneuver_80):
    sc, res = maneuver_80
    check_maneuver(sc, res)
    assert not res.resolved
    assert res.perch_report.iterations <= 5000
    assert np.linalg.norm(res.perch.solution.states[-1, P] - sc.x_perch.p_wb) < 0.01


def test_fine_integration_matches_plan_nodes(maneuver_80):
    sc, res = maneuver_80
    dv, traj = res.perch.solution, res.perch_trajectory
    per = round(dv.horizon_T / sc.n_nodes / traj.dt)
    nodes = traj.states[::per]
    assert len(nodes) == sc.n_nodes + 1
    # the plan takes 8 RK4 steps per node (about 10 ms each) against 1 ms here;
    # the drift must stay well inside the collision and height margins
    assert np.abs(nodes[:, P] - dv.states[:, P]).max() < 5e-3
    np.testing.assert_allclose(nodes[0], dv.states[0], atol=1e-12)


def test_perching_180(maneuver_180):
    sc, res = maneuver_180
    check_maneuver(sc, res)
    q = res.perch.solution.states[-1, 3:7]
    tilt = math.degrees(quat.geodesic_angle(quat.identity(), q))
    assert abs(tilt - 180.0) < 1.0


def test_adversarial_resolves(maneuver_adversarial):
    sc, res = maneuver_adversarial
    assert res.resolved
    assert res.perch.scenario.n_nodes == 2 * sc.n_nodes
    assert res.perch.audit == []
    check_maneuver(sc, res)


def test_generate_deterministic(maneuver_stationary):
    sc, res = maneuver_stationary
    again = generate_maneuver(sc)
    np.testing.assert_array_equal(again.chained.states, res.chained.states)
    np.testing.assert_array_equal(again.chained.times, res.chained.times)
