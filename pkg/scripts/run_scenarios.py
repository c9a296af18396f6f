"""Solve built-in scenarios and print a one-line summary per stage."""

import argparse
import math
import time

import numpy as np

from perchgen import quaternion as quat
from perchgen import scenarios
from perchgen.constraints import collision_matrix
from perchgen.pipeline import generate_maneuver

BUILTIN = {
    "stationary": scenarios.stationary,
    "vertical_climb": scenarios.vertical_climb,
    "perching_80": lambda: scenarios.perching_80(perception=False),
    "perching_80_pa": lambda: scenarios.perching_80(perception=True),
    "perching_180": scenarios.perching_180,
    "dash": scenarios.dash,
    "adversarial_gap": scenarios.adversarial_gap,
}


def summarize(name, sc, res, wall):
    plan = res.perch.solution
    err = np.linalg.norm(plan.states[-1, :3] - sc.x_perch.p_wb)
    tilt = math.degrees(quat.geodesic_angle(quat.identity(), plan.states[-1, 3:7]))
    H = collision_matrix(res.chained.states, sc.segments, sc.robot)
    print(
        f"{name:16s} perch {res.perch_report.status} {res.perch_report.iterations:4d} it  "
        f"recovery {res.recovery_report.status} {res.recovery_report.iterations:4d} it  "
        f"N {plan.n_nodes:2d}{' (re-solved)' if res.resolved else ''}  T {plan.horizon_T:.3f} s  "
        f"terminal err {100 * err:.2f} cm  tilt {tilt:6.1f} deg  "
        f"min h_ca {H.min() if H.size else float('nan'):.3g}  {wall:.1f} s"
    )


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("names", nargs="*", default=list(BUILTIN))
    args = ap.parse_args()
    unknown = sorted(set(args.names) - set(BUILTIN))
    if unknown:
        ap.error(f"unknown scenarios {unknown}; choose from {sorted(BUILTIN)}")
    for name in args.names:
        sc = BUILTIN[name]()
        t0 = time.perf_counter()
        res = generate_maneuver(sc)
        summarize(name, sc, res, time.perf_counter() - t0)


if __name__ == "__main__":
    main()
