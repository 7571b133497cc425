"""Command-line entry point.

Exit codes: 0 all checks pass, 1 a check failed, 2 the scenario is
invalid, 3 internal error.
"""
from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from .errors import ScenarioParseError, ValidationError

EXIT_OK, EXIT_FAIL, EXIT_INVALID, EXIT_INTERNAL = 0, 1, 2, 3


def _write(text, out):
    if out:
        from .scenario import write_atomic

        write_atomic(text, out)
    else:
        sys.stdout.write(text)


def cmd_run(args):
    from .scenario import emit, load_scenario, run

    scen = load_scenario(args.scenario)
    report = run(scen, seed=args.seed, tol_scale=args.tol_scale, workers=args.workers, timing=args.timing)
    if args.out:
        emit(report, args.out)
    else:
        sys.stdout.write(report.to_json())
    for c in report.checks:
        print(c.summary_line(), file=sys.stderr)
    return EXIT_OK if report.passed else EXIT_FAIL


def cmd_selfcheck(args):
    from .scenario import canonical_json
    from .selfcheck import selfcheck

    res = selfcheck(seed=args.seed, count=args.count)
    _write(canonical_json(res), args.out)
    for c in res["checks"]:
        flag = "PASS" if c["passed"] else "FAIL"
        print(f"[{flag}] {c['name']}: max rel err {c['max']:.3e}", file=sys.stderr)
    print(f"[{'PASS' if res['deterministic'] else 'FAIL'}] byte-identical reports", file=sys.stderr)
    return EXIT_OK if res["passed"] else EXIT_FAIL


def cmd_list(args):
    import inspect

    from .metric_lab import BUILTINS

    for name, ctor in BUILTINS.items():
        doc = (inspect.getdoc(ctor) or "").splitlines()[0]
        print(f"{name}{inspect.signature(ctor)}\n    {doc}")
    return EXIT_OK


def cmd_transport(args):
    from .holonomy import holonomy_report, random_loops
    from .scenario import canonical_json, load_scenario

    scen = load_scenario(args.scenario)
    if scen.loops is None:
        raise ValidationError("loops", "transport needs a loops entry")
    lp = dict(scen.loops)
    if args.seed is not None:
        lp["seed"] = args.seed
    cps = scen.cps
    loops = random_loops(cps.chart, lp["count"], lp["seed"], lp["harmonics"], lp["amplitude"])
    results = holonomy_report(cps.metric, scen.lee, cps.t1, cps.t2, loops, scen.transport_tol)
    out = {
        "scenario": scen.name,
        "scenario_digest": scen.digest,
        "loops": [{"start": r.loop.start.tolist(), "lee_integral": r.lee_integral,
                   "length_scaling": r.length_scaling, "error_estimate": r.error, "steps": r.steps,
                   "angle_T1": r.angles["T1"], "angle_T2": r.angles["T2"],
                   "scaling_mismatch": r.angles["scaling"], "end_frame": r.end_frame.tolist()}
                  for r in results],
    }
    _write(canonical_json(out), args.out)
    return EXIT_OK


def cmd_geodesic(args):
    from .holonomy import geodesic_integrate
    from .scenario import canonical_json, load_scenario

    scen = load_scenario(args.scenario)
    geo = scen.geodesic
    if geo is None:
        raise ValidationError("geodesic", "scenario has no geodesic entry")
    path = geodesic_integrate(scen.cps.metric, geo["x0"], geo["v0"], geo["length"], geo["tol"])
    idx = np.linspace(0, len(path.points) - 1, min(args.samples, len(path.points))).round().astype(int)
    out = {
        "scenario": scen.name,
        "length": geo["length"],
        "steps": path.steps,
        "error_estimate": path.error,
        "speed_drift": path.speed_drift,
        "points": path.points[idx].tolist(),
    }
    _write(canonical_json(out), args.out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="weylcps", description="Numerical checks for conformal product structures.")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run the checks of a scenario file")
    r.add_argument("scenario")
    r.add_argument("--out")
    r.add_argument("--seed", type=int)
    r.add_argument("--tol-scale", type=float, default=1.0)
    r.add_argument("--workers", type=int, default=1)
    r.add_argument("--timing", action="store_true", help="record wall time (breaks byte-identical reports)")
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("selfcheck", help="jet derivatives against finite differences on every builtin")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--count", type=int, default=64)
    s.add_argument("--out")
    s.set_defaults(func=cmd_selfcheck)

    lb = sub.add_parser("list-builtins", help="list metric constructors")
    lb.set_defaults(func=cmd_list)

    t = sub.add_parser("transport", help="parallel transport around the scenario loops")
    t.add_argument("scenario")
    t.add_argument("--seed", type=int)
    t.add_argument("--out")
    t.set_defaults(func=cmd_transport)

    g = sub.add_parser("geodesic", help="integrate the scenario geodesic")
    g.add_argument("scenario")
    g.add_argument("--samples", type=int, default=21)
    g.add_argument("--out")
    g.set_defaults(func=cmd_geodesic)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if getattr(args, "tol_scale", 1.0) <= 0:
            raise ValidationError("--tol-scale", "must be positive")
        return args.func(args)
    except (ScenarioParseError, ValidationError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except Exception as exc:  # pragma: no cover - last resort
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
