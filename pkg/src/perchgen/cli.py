"""Command line: ``generate``, ``evaluate`` and ``approx``.

Exit codes: 0 success, 2 malformed input (schema, format, infeasible start),
3 solver failure, 4 audit or chaining failure. Failures print a JSON error
object on stderr. ``PERCHGEN_LOG`` sets the log level (default WARNING).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

from perchgen import serialization as ser
from perchgen.errors import (
    AuditFailureError,
    ChainingError,
    DegenerateGeometryError,
    InfeasibleStartError,
    InvalidParameterError,
    NumericalFailureError,
    ScenarioFormatError,
    SolverStageError,
)
from perchgen.evaluation import evaluate
from perchgen.geometry import catenary_sample, fit_error_stats, polyline_distance, segment_endpoints

EXIT_OK = 0
EXIT_SCHEMA = 2
EXIT_SOLVER = 3
EXIT_AUDIT = 4

_EXIT_CODES = (
    (ScenarioFormatError, EXIT_SCHEMA),
    (ser.TrajectoryFormatError, EXIT_SCHEMA),
    (InfeasibleStartError, EXIT_SCHEMA),
    (DegenerateGeometryError, EXIT_SCHEMA),
    (InvalidParameterError, EXIT_SCHEMA),
    (SolverStageError, EXIT_SOLVER),
    (NumericalFailureError, EXIT_SOLVER),
    (AuditFailureError, EXIT_AUDIT),
    (ChainingError, EXIT_AUDIT),
)


def _error_doc(exc: Exception, code: int) -> dict:
    doc = {"format_version": ser.FORMAT_VERSION, "error": type(exc).__name__, "message": str(exc), "exit_code": code}
    if isinstance(exc, SolverStageError):
        doc["stage"] = exc.stage
        doc["report"] = exc.report.to_dict()
    elif isinstance(exc, NumericalFailureError):
        doc["block"] = exc.block
    elif isinstance(exc, AuditFailureError):
        doc["violations"] = [
            {"time": v.time, "segment_index": v.segment_index, "h_ca": v.h_ca, "position": [float(p) for p in v.position]}
            for v in exc.violations
        ]
    elif isinstance(exc, ChainingError):
        doc["max_deviation"] = exc.max_deviation
    return doc


def _dump(doc: dict) -> str:
    return json.dumps(doc, indent=1) + "\n"


def cmd_generate(scenario_path, out_dir, no_perception=False, dt=None, seed_guess=None) -> int:
    from perchgen.pipeline import generate_maneuver

    scenario = ser.load_scenario(scenario_path)
    if no_perception:
        scenario = scenario.without_perception()
    if dt is not None:
        scenario = replace(scenario, dt_fine=float(dt))
    guess = None
    if seed_guess is not None:
        guess = ser.seeded_guess(scenario, ser.solution_from_dict(ser.load_json(seed_guess)))
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    result = generate_maneuver(scenario, guess=guess)

    csv_text = ser.trajectory_to_csv(result.chained)
    (out / "trajectory.csv").write_text(csv_text)
    # evaluated from the serialized samples so `evaluate` on the CSV reproduces it exactly
    report = evaluate(ser.trajectory_from_csv(csv_text), scenario)
    (out / "evaluation.json").write_text(_dump(report))
    solve_doc = {
        "format_version": ser.FORMAT_VERSION,
        "scenario": scenario.name,
        "perception_enabled": scenario.perception_enabled,
        "perch": {**result.perch_report.to_dict(), "n_nodes": result.perch.solution.n_nodes, "resolved": result.resolved},
        "recovery": {**result.recovery_report.to_dict(), "n_nodes": result.recovery.solution.n_nodes, "resolved": result.recovery.resolved},
        "perch_samples": len(result.perch_trajectory),
        "dt": result.chained.dt,
        "audit": [],
    }
    (out / "solve_report.json").write_text(_dump(solve_doc))
    (out / "perch_solution.json").write_text(_dump(ser.solution_to_dict(result.perch.solution)))
    (out / "recovery_solution.json").write_text(_dump(ser.solution_to_dict(result.recovery.solution)))
    return EXIT_OK


def cmd_evaluate(trajectory_csv, scenario_path, reference=None, out=None) -> dict:
    traj = ser.load_trajectory(trajectory_csv)
    scenario = ser.load_scenario(scenario_path)
    ref = ser.load_trajectory(reference) if reference is not None else None
    report = evaluate(traj, scenario, ref)
    text = _dump(report)
    if out is None:
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)
    return report


def cmd_approx(spec: dict, segment_count=None, max_error=None, out=None) -> dict:
    """Fit segments to a catenary; returns the segments and the fit error statistics."""
    spec = dict(spec)
    if segment_count is not None or max_error is not None:
        spec["fit"] = {"segment_count": segment_count} if segment_count is not None else {"max_error": max_error}
    ser.validate(spec, ser.CATENARY_SCHEMA)
    params, n_points = ser.catenary_from(spec)
    segments = ser.catenary_segments(spec)
    points = catenary_sample(params, n_points)
    # errors measured on a sampling independent of the fitted breakpoints
    check = catenary_sample(params, 4 * n_points - 3)
    stats = fit_error_stats(check, segments)
    vertices = [segment_endpoints(segments[0])[0]] + [segment_endpoints(s)[1] for s in segments]
    stats["max_error_fit_points"] = float(polyline_distance(points, vertices).max())
    doc = {
        "format_version": ser.FORMAT_VERSION,
        "catenary": {"span": params.span, "sag_parameter": params.sag_parameter, "points": n_points, **spec.get("fit", {})},
        "segments": [ser._segment_to(s) for s in segments],
        "stats": stats,
    }
    text = _dump(doc)
    if out is None:
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)
    return doc


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="perchgen", description="Perception-aware perching trajectory generation.")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="solve perch and recovery, write trajectory and reports")
    g.add_argument("scenario", help="scenario JSON file")
    g.add_argument("out_dir", help="output directory")
    g.add_argument("--no-perception", action="store_true", help="zero perception weights and drop the perception constraints")
    g.add_argument("--dt", type=float, default=None, help="fine integration step in seconds (default from scenario)")
    g.add_argument("--seed-guess", default=None, help="solution JSON of an earlier run used as warm start")

    e = sub.add_parser("evaluate", help="recompute constraint and cost traces of a trajectory CSV")
    e.add_argument("trajectory")
    e.add_argument("scenario")
    e.add_argument("--reference", default=None, help="reference trajectory CSV for the RMSE summary")
    e.add_argument("--out", default=None)

    a = sub.add_parser("approx", help="approximate a catenary by line segments")
    a.add_argument("spec", nargs="?", default=None, help="catenary JSON (keys as the scenario 'catenary' block)")
    a.add_argument("--span", type=float)
    a.add_argument("--sag", type=float)
    a.add_argument("--sag-parameter", type=float)
    a.add_argument("--start-height", type=float)
    a.add_argument("--end-height", type=float)
    a.add_argument("--points", type=int)
    a.add_argument("--wire-radius", type=float)
    how = a.add_mutually_exclusive_group()
    how.add_argument("--segments", type=int, dest="segment_count")
    how.add_argument("--max-error", type=float)
    a.add_argument("--out", default=None)
    return p


def _approx_spec(args) -> dict:
    spec = ser.load_json(args.spec) if args.spec else {}
    for key in ("span", "sag", "sag_parameter", "start_height", "end_height", "points", "wire_radius"):
        value = getattr(args, key)
        if value is not None:
            spec[key] = value
    if args.sag_parameter is not None:
        spec.pop("sag", None)
    elif args.sag is not None:
        spec.pop("sag_parameter", None)
    if not spec.get("fit") and args.segment_count is None and args.max_error is None:
        raise ScenarioFormatError("approx needs --segments or --max-error (or a 'fit' block)")
    return spec


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("PERCHGEN_LOG", "WARNING").upper(), format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        if args.command == "generate":
            return cmd_generate(args.scenario, args.out_dir, args.no_perception, args.dt, args.seed_guess)
        if args.command == "evaluate":
            cmd_evaluate(args.trajectory, args.scenario, args.reference, args.out)
            return EXIT_OK
        cmd_approx(_approx_spec(args), args.segment_count, args.max_error, args.out)
        return EXIT_OK
    except tuple(exc for exc, _ in _EXIT_CODES) as exc:
        code = next(c for t, c in _EXIT_CODES if isinstance(exc, t))
        doc = _error_doc(exc, code)
        sys.stderr.write(json.dumps(doc) + "\n")
        if args.command == "generate":
            Path(args.out_dir).mkdir(parents=True, exist_ok=True)
            (Path(args.out_dir) / "error.json").write_text(_dump(doc))
        return code


if __name__ == "__main__":
    sys.exit(main())
