"""Reprojection error of the 80 degree perch with and without perception awareness."""

import numpy as np

from perchgen import scenarios
from perchgen.constraints import perception_traces
from perchgen.pipeline import generate_maneuver


def main():
    rows = []
    for perception in (False, True):
        sc = scenarios.perching_80(perception=perception)
        res = generate_maneuver(sc)
        traj = res.perch_trajectory
        s = (traj.times - traj.times[0]) / (traj.times[-1] - traj.times[0])
        r, lc, sv = perception_traces(traj.states, sc.segments[sc.objective_segment], sc.camera)
        rows.append((perception, s, np.abs(r), lc, sv))
    print("fraction   |r| no-PA   |r| PA   (px)")
    for f in np.linspace(0.0, 1.0, 11):
        vals = [np.interp(f, s, r) for _, s, r, _, _ in rows]
        print(f"  {f:4.1f}    {vals[0]:9.1f} {vals[1]:8.1f}")
    for perception, s, r, lc, sv in rows:
        m = s <= 0.7
        print(
            f"{'PA' if perception else 'no-PA':5s} mean |r| over first 70%: {r[m].mean():.1f} px, "
            f"min h_lc {lc[s <= 0.5].min():.3g}, min h_sv {sv[s <= 0.5].min():.3g} (first half)"
        )


if __name__ == "__main__":
    main()
