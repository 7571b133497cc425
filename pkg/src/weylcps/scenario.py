"""Scenario files: loading, validation, execution and run reports.

A scenario is a JSON object::

    {
      "name": "kahler_warped_t4",
      "metric": {"constructor": "kahler_warped_torus", "params": {"phi": "0.3*sin(2*pi*s)*cos(2*pi*t)"}},
      "lee_form": "auto",
      "splitting": "auto",
      "sampling": {"count": 200, "seed": 0},
      "quadrature": {"grid": [64, 64, 1, 1]},
      "loops": {"count": 20, "seed": 7, "harmonics": 3, "amplitude": 0.3},
      "transport_tol": 1e-8,
      "geodesic": {"x0": [0.3, 0.1, 0, 0], "v0": [0, 1, 0, 0], "length": 10},
      "checks": ["derivS", {"name": "curvS", "tol": 1e-7}]
    }

Everything is parsed and compiled before any numeric work starts.
"""
from __future__ import annotations

import hashlib
import inspect
import json
import os
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Optional

import numpy as np

from . import __version__
from . import expr_lang as el
from . import structure as sv
from .chart import OneFormField, ScalarField, VectorField
from .errors import ScenarioParseError, ValidationError, WeylcpsError
from .holonomy import geodesic_integrate, holonomy_report, random_loops
from .metric_lab import BUILTINS, CpsMetric

CHECK_NAMES = (
    "derivS", "parallel_splitting", "curvS", "trace_lemma", "trace_chain", "ineq_la", "rank1_suite",
    "construct_eta", "construct_surface", "weyl_axioms", "exactness", "kahler", "lee_solve",
    "geodesic_field", "holonomy", "geodesic",
)
TOP_KEYS = {"name", "description", "metric", "lee_form", "splitting", "sampling", "quadrature", "loops",
            "transport_tol", "geodesic", "checks"}


@dataclass
class CheckSpec:
    name: str
    tol: Optional[float] = None
    expect: str = "below"
    options: dict = field(default_factory=dict)
    label: Optional[str] = None


@dataclass
class Scenario:
    name: str
    cps: CpsMetric
    lee: Any  # OneFormField or None
    checks: list
    sampling: dict
    quadrature: Optional[list] = None
    loops: Optional[dict] = None
    transport_tol: float = 1e-8
    geodesic: Optional[dict] = None
    digest: str = ""
    source: dict = field(default_factory=dict)
    fixed_points: Optional[np.ndarray] = None

    def points(self, seed_override=None) -> np.ndarray:
        chart = self.cps.chart
        if self.fixed_points is not None:
            return chart.reduce(self.fixed_points)
        if "grid" in self.sampling:
            return chart.grid(self.sampling["grid"])
        seed = self.sampling.get("seed", 0) if seed_override is None else seed_override
        return chart.sample(int(self.sampling.get("count", 200)), int(seed))


# ------------------------------------------------------------------ parsing

def _parse_json(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioParseError(exc.msg, exc.lineno, exc.colno) from exc


def load_scenario(path) -> Scenario:
    """Read, validate and compile a scenario file."""
    with open(path, "rb") as fh:
        raw = fh.read()
    try:
        text = raw.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise ScenarioParseError("file is not UTF-8", 1, exc.start + 1) from exc
    data = _parse_json(text)
    scen = build_scenario(data)
    scen.digest = hashlib.sha256(raw).hexdigest()
    return scen


def loads_scenario(text: str) -> Scenario:
    data = _parse_json(text)
    scen = build_scenario(data)
    scen.digest = hashlib.sha256(text.encode("utf-8")).hexdigest()
    return scen


def _require(cond, key, message):
    if not cond:
        raise ValidationError(key, message)


def _num(value, key, positive=False):
    ok = isinstance(value, (int, float)) and not isinstance(value, bool) and np.isfinite(value)
    _require(ok, key, "must be a finite number")
    if positive:
        _require(value > 0, key, "must be positive")
    return float(value)


def _build_metric(spec, key="metric") -> CpsMetric:
    _require(isinstance(spec, dict), key, "must be an object")
    ctor_name = spec.get("constructor")
    _require(ctor_name in BUILTINS, f"{key}.constructor", f"unknown constructor {ctor_name!r}")
    params = dict(spec.get("params", {}))
    _require(isinstance(params, dict), f"{key}.params", "must be an object")
    ctor = BUILTINS[ctor_name]
    sig = inspect.signature(ctor)
    for p in params:
        _require(p in sig.parameters, f"{key}.params.{p}", f"not a parameter of {ctor_name}")
    if ctor_name == "conformal_product":
        for p in ("g1", "g2"):
            _require(p in params, f"{key}.params.{p}", "factor metric required")
            params[p] = _build_metric(params[p], f"{key}.params.{p}")
        params.setdefault("f1", "0")
        params.setdefault("f2", "0")
    try:
        return ctor(**params)
    except ValidationError as exc:
        raise ValidationError(f"{key}.params.{exc.key}", str(exc)) from exc
    except WeylcpsError as exc:
        raise ValidationError(f"{key}.params", str(exc)) from exc
    except TypeError as exc:
        raise ValidationError(f"{key}.params", str(exc)) from exc


def _build_lee(spec, cps: CpsMetric, key="lee_form"):
    chart = cps.chart
    if spec is None or spec == "auto":
        return cps.lee
    if spec == "zero":
        return None
    _require(isinstance(spec, dict), key, 'must be "auto", "zero" or an object')
    try:
        if "components" in spec:
            comps = spec["components"]
            _require(isinstance(comps, list) and len(comps) == chart.dim, f"{key}.components",
                     f"needs {chart.dim} expressions")
            return OneFormField(chart, [el.parse(str(c), chart.names) for c in comps])
        if "auto_plus" in spec:
            comps = spec["auto_plus"]
            _require(isinstance(comps, list) and len(comps) == chart.dim, f"{key}.auto_plus",
                     f"needs {chart.dim} expressions")
            extra = OneFormField(chart, [el.parse(str(c), chart.names) for c in comps])
            return extra if cps.lee is None else cps.lee + extra
        if "exact" in spec:
            return ScalarField(chart, el.parse(str(spec["exact"]), chart.names)).differential()
        if "same_factor" in spec:
            _require(cps.lee_same_factor is not None, f"{key}.same_factor", "constructor has no same-factor form")
            return cps.lee_same_factor
    except WeylcpsError as exc:
        if isinstance(exc, ValidationError):
            raise
        raise ValidationError(key, str(exc)) from exc
    raise ValidationError(key, "unrecognized Lee form specification")


def _build_frames(rows, chart, key):
    _require(isinstance(rows, list) and rows, key, "must be a non-empty list of vectors")
    out = []
    for k, r in enumerate(rows):
        _require(isinstance(r, list) and len(r) == chart.dim, f"{key}[{k}]", f"needs {chart.dim} components")
        try:
            out.append(VectorField(chart, [el.parse(str(c), chart.names) for c in r]))
        except WeylcpsError as exc:
            raise ValidationError(f"{key}[{k}]", str(exc)) from exc
    return out


def _check_spec(item, k) -> CheckSpec:
    key = f"checks[{k}]"
    if isinstance(item, str):
        item = {"name": item}
    _require(isinstance(item, dict), key, "must be a name or an object")
    name = item.get("name")
    _require(name in CHECK_NAMES, key, f"unknown check {name!r}")
    for extra in item:
        _require(extra in ("name", "tol", "expect", "options", "label"), f"{key}.{extra}", "unknown key")
    tol = item.get("tol")
    if tol is not None:
        tol = _num(tol, f"{key}.tol", positive=True)
    expect = item.get("expect", "below")
    _require(expect in ("below", "violation"), f"{key}.expect", 'must be "below" or "violation"')
    options = item.get("options", {})
    _require(isinstance(options, dict), f"{key}.options", "must be an object")
    return CheckSpec(name, tol, expect, dict(options), item.get("label"))


def build_scenario(data) -> Scenario:
    """Validate a decoded scenario object and compile every expression in it."""
    _require(isinstance(data, dict), "scenario", "top level must be an object")
    for key in data:
        _require(key in TOP_KEYS, key, "unknown key")
    _require("metric" in data, "metric", "required")
    cps = _build_metric(data["metric"])
    chart = cps.chart
    lee = _build_lee(data.get("lee_form", "auto"), cps)
    split = data.get("splitting", "auto")
    if split != "auto":
        _require(isinstance(split, dict) and "T1" in split and "T2" in split, "splitting",
                 'must be "auto" or {"T1": [...], "T2": [...]}')
        t1 = _build_frames(split["T1"], chart, "splitting.T1")
        t2 = _build_frames(split["T2"], chart, "splitting.T2")
        _require(len(t1) + len(t2) == chart.dim, "splitting", "frames must span the tangent space")
        cps = CpsMetric(**{**cps.__dict__, "t1": t1, "t2": t2, "xi": t2[0] if len(t2) == 1 else None})
    checks_raw = data.get("checks", [])
    _require(isinstance(checks_raw, list), "checks", "must be a list")
    checks = [_check_spec(item, k) for k, item in enumerate(checks_raw)]

    sampling = data.get("sampling", {"count": 200, "seed": 0})
    _require(isinstance(sampling, dict), "sampling", "must be an object")
    if "grid" in sampling:
        grid = sampling["grid"]
        _require(isinstance(grid, list) and len(grid) == chart.dim and all(isinstance(m, int) and m > 0 for m in grid),
                 "sampling.grid", f"needs {chart.dim} positive integers")
    else:
        count = sampling.get("count", 200)
        _require(isinstance(count, int) and count > 0, "sampling.count", "must be a positive integer")
        _require(isinstance(sampling.get("seed", 0), int), "sampling.seed", "must be an integer")

    quad = data.get("quadrature")
    if quad is not None:
        grid = quad.get("grid") if isinstance(quad, dict) else None
        _require(isinstance(grid, list) and len(grid) == chart.dim and all(isinstance(m, int) and m > 0 for m in grid),
                 "quadrature.grid", f"needs {chart.dim} positive integers")
        _require(chart.all_periodic, "quadrature", "quadrature needs every axis periodic")
        quad = grid

    loops = data.get("loops")
    if loops is not None:
        _require(isinstance(loops, dict), "loops", "must be an object")
        for k in loops:
            _require(k in ("count", "seed", "harmonics", "amplitude"), f"loops.{k}", "unknown key")
        loops = {"count": int(loops.get("count", 20)), "seed": int(loops.get("seed", 0)),
                 "harmonics": int(loops.get("harmonics", 3)),
                 "amplitude": _num(loops.get("amplitude", 0.2), "loops.amplitude", positive=True)}
    ttol = _num(data.get("transport_tol", 1e-8), "transport_tol", positive=True)

    geo = data.get("geodesic")
    if geo is not None:
        _require(isinstance(geo, dict) and "x0" in geo and "v0" in geo, "geodesic", "needs x0 and v0")
        for k in ("x0", "v0"):
            _require(isinstance(geo[k], list) and len(geo[k]) == chart.dim, f"geodesic.{k}",
                     f"needs {chart.dim} numbers")
            [_num(v, f"geodesic.{k}") for v in geo[k]]
        geo = {"x0": [float(v) for v in geo["x0"]], "v0": [float(v) for v in geo["v0"]],
               "length": _num(geo.get("length", 1.0), "geodesic.length", positive=True),
               "tol": _num(geo.get("tol", 1e-10), "geodesic.tol", positive=True),
               "axis": geo.get("axis")}
        if geo["axis"] is not None:
            _require(geo["axis"] in chart.names, "geodesic.axis", "not a chart coordinate")

    for k, c in enumerate(checks):
        try:
            _validate_check_needs(c, k, cps, quad, loops, geo)
        except ValidationError:
            raise
        except WeylcpsError as exc:
            raise ValidationError(f"checks[{k}].options", str(exc)) from exc
    return Scenario(data.get("name", cps.name), cps, lee, checks, sampling, quad, loops, ttol, geo, source=data)


def _validate_check_needs(c: CheckSpec, k, cps: CpsMetric, quad, loops, geo):
    key = f"checks[{k}]"
    if "lee_form" in c.options:
        c.options["_lee"] = _build_lee(c.options["lee_form"], cps, f"{key}.options.lee_form")
    needs_J = {"curvS", "trace_lemma", "trace_chain", "rank1_suite", "construct_eta", "construct_surface",
               "kahler", "geodesic_field"}
    if c.name in needs_J:
        _require(cps.J is not None, key, f"{c.name} needs a constructor with a complex structure")
    if c.name == "holonomy":
        _require(loops is not None, key, "holonomy needs a loops entry")
    if c.name == "geodesic":
        _require(geo is not None, key, "geodesic needs a geodesic entry")
    if c.name == "construct_eta":
        o = c.options
        _require(isinstance(o.get("eta"), list) and len(o["eta"]) == cps.dim, f"{key}.options.eta",
                 f"needs {cps.dim} expressions")
        c.options["_eta"] = OneFormField(cps.chart, [el.parse(str(v), cps.chart.names) for v in o["eta"]])
        c.options["_E"] = _build_frames(o.get("E"), cps.chart, f"{key}.options.E")
    if c.name == "construct_surface" and "xi" in c.options:
        c.options["_xi"] = _build_frames([c.options["xi"]], cps.chart, f"{key}.options.xi")[0]
    if c.name == "exactness":
        _require("phi" in c.options, f"{key}.options.phi", "required")
        c.options["_phi"] = ScalarField(cps.chart, el.parse(str(c.options["phi"]), cps.chart.names))
    if c.name == "ineq_la":
        for opt in ("n", "trials", "seed"):
            _require(isinstance(c.options.get(opt, 0), int), f"{key}.options.{opt}", "must be an integer")
    if c.name == "weyl_axioms":
        seeds = c.options.get("random_lee", [])
        _require(isinstance(seeds, list) and all(isinstance(s, int) for s in seeds), f"{key}.options.random_lee",
                 "must be a list of integer seeds")


# ------------------------------------------------------------------ running

def _run_check(scen: Scenario, c: CheckSpec, points, tol_scale, ss_cache) -> sv.ResidualReport:
    kw = {"tol": c.tol, "tol_scale": tol_scale}
    cps = scen.cps

    def ss():
        if "_lee" in c.options:
            lee = c.options["_lee"]
            return sv.StructureSample(cps, points, lee if lee is not None else _zero(cps))
        if "ss" not in ss_cache:
            ss_cache["ss"] = sv.StructureSample(cps, points, scen.lee if scen.lee is not None else _zero(cps))
        return ss_cache["ss"]

    name = c.name
    if name == "derivS":
        return sv.check_derivS(ss(), expect=c.expect, **kw)
    if name == "parallel_splitting":
        return sv.check_parallel_splitting(ss(), expect=c.expect, **kw)
    if name == "curvS":
        return sv.check_curvS(ss(), expect=c.expect, **kw)
    if name == "trace_lemma":
        return sv.check_trace_lemma(ss(), expect=c.expect, **kw)
    if name == "trace_chain":
        return sv.check_trace_chain(ss(), quadrature=scen.quadrature, expect=c.expect, **kw)
    if name == "rank1_suite":
        return sv.check_rank1_suite(ss(), expect=c.expect, **kw)
    if name == "kahler":
        return sv.check_kahler(ss(), **kw)
    if name == "geodesic_field":
        return sv.check_geodesic_field(ss(), expect=c.expect, **kw)
    if name == "ineq_la":
        o = c.options
        return sv.check_ineq_linear_algebra(o.get("n", cps.dim), o.get("trials", 1000), o.get("seed", 0), **kw)
    if name == "weyl_axioms":
        seeds = c.options.get("random_lee", [])
        if not seeds:
            return sv.check_weyl_axioms(ss(), expect=c.expect, **kw)
        subs = []
        for s in seeds:
            lee = sv.random_lee_form(cps.chart, s)
            r = sv.check_weyl_axioms(sv.StructureSample(cps, points, lee), expect=c.expect, **kw)
            r.name = f"random_lee_{s}"
            subs.append(r)
        return sv.ResidualReport.combine("weyl_axioms", "torsion-free, D g = -2 theta (x) g", subs, c.expect)
    if name == "exactness":
        return sv.check_exactness(cps, c.options["_phi"], points, **kw)
    if name == "lee_solve":
        return _lee_solve(scen, c, points, tol_scale)
    if name == "construct_eta":
        theta, rep = sv.construct_weyl_from_eta(cps, c.options["_eta"], c.options["_E"], points, **kw)
        return _attach_theta_match(rep, scen, points, theta, c, tol_scale)
    if name == "construct_surface":
        xi = c.options.get("_xi")
        theta, rep = sv.construct_surface_weyl(cps, points, xi=xi, J_sign=int(c.options.get("J_sign", 1)),
                                               expect=c.expect, **kw)
        if xi is None and c.options.get("compare", True):
            rep = _attach_theta_match(rep, scen, points, theta, c, tol_scale)
        return rep
    if name == "holonomy":
        return _holonomy(scen, c, tol_scale)
    if name == "geodesic":
        return _geodesic(scen, c, tol_scale)
    raise ValidationError(name, "unknown check")


def _zero(cps):
    from .chart import zero_oneform
    return zero_oneform(cps.chart)


def _attach_theta_match(rep, scen, points, theta, c, tol_scale):
    if scen.lee is None:
        ref = np.zeros_like(theta)
    else:
        ref = scen.lee.values(points)
    tol = (c.tol if c.tol is not None else sv.TOL_FIRST) * tol_scale
    match = sv.ResidualReport.from_residuals("theta_match", "constructed theta equals the scenario Lee form",
                                             np.abs(theta - ref).max(axis=1), points, tol)
    return sv.ResidualReport.combine(rep.name, rep.anchor, rep.subchecks + [match], values=rep.values)


def _lee_solve(scen, c, points, tol_scale):
    cps = scen.cps
    theta = sv.solve_lee_from_splitting(cps.metric, cps.t1, cps.t2, points)
    tol = (c.tol if c.tol is not None else sv.TOL_FIRST) * tol_scale
    ref = scen.lee.values(points) if scen.lee is not None else np.zeros_like(theta)
    subs = [sv.ResidualReport.from_residuals("parallel_condition", "solved theta equals the canonical Lee form",
                                             np.abs(theta - ref).max(axis=1), points, tol, c.expect)]
    if cps.lee_same_factor is not None and c.options.get("same_factor_discrepancy", True):
        stmt = cps.lee_same_factor.values(points)
        subs.append(sv.ResidualReport.from_residuals(
            "same_factor_form", "solved theta differs from -d^{M1} f1 - d^{M2} f2",
            np.abs(theta - stmt).max(axis=1), points, float(c.options.get("discrepancy_tol", 1e-3)), "violation"))
    return sv.ResidualReport.combine("lee_solve", "unique Weyl connection making the product splitting parallel", subs,
                                     values={"note": cps.notes[0]} if cps.notes else None)


def _holonomy(scen, c, tol_scale):
    cps = scen.cps
    lp = scen.loops
    loops = random_loops(cps.chart, lp["count"], lp["seed"], lp["harmonics"], lp["amplitude"])
    ttol = scen.transport_tol
    results = holonomy_report(cps.metric, scen.lee, cps.t1, cps.t2, loops, ttol)
    angle_tol = (c.tol if c.tol is not None else 1e-5) * tol_scale
    pts = np.stack([r.loop.start for r in results])
    ang = np.array([max(r.angles["T1"], r.angles["T2"]) for r in results])
    subs = [sv.ResidualReport.from_residuals("principal_angles", "D-transport preserves T1 and T2",
                                             ang, pts, angle_tol, c.expect)]
    if c.expect == "below":
        subs.append(sv.ResidualReport.from_residuals(
            "length_scaling", "|P v| / |v| = exp(-int theta)", [r.angles["scaling"] for r in results], pts,
            2 * ttol * tol_scale))
        subs.append(sv.ResidualReport.from_residuals(
            "conformal", "transported Gram matrix = exp(-2 int theta) x initial", [r.angles["conformal"] for r in results],
            pts, 2 * ttol * tol_scale))
    values = {"loops": len(results), "max_steps": max(r.steps for r in results),
              "max_error_estimate": max(r.error for r in results)}
    return sv.ResidualReport.combine("holonomy", "D-transport around loops preserves T1 and T2", subs, c.expect, values)


def _geodesic(scen, c, tol_scale):
    cps = scen.cps
    geo = scen.geodesic
    path = geodesic_integrate(cps.metric, geo["x0"], geo["v0"], geo["length"], geo["tol"])
    tol = (c.tol if c.tol is not None else 1e-6) * tol_scale
    subs = [sv.ResidualReport.from_residuals("speed", "unit speed is conserved", [path.speed_drift], None,
                                             tol, c.expect)]
    if geo.get("axis") is not None:
        k = cps.chart.names.index(geo["axis"])
        drift = np.abs(path.points[:, k] - path.points[0, k])
        subs.append(sv.ResidualReport.from_residuals(f"{geo['axis']}_drift", "geodesic stays on its coordinate line",
                                                     drift, path.points, tol, c.expect))
    end = path.points[-1]
    return sv.ResidualReport.combine("geodesic", "integral curves of J xi are geodesics", subs, c.expect,
                                     {"end": [float(v) for v in end], "steps": path.steps,
                                      "error_estimate": path.error})


@dataclass
class RunReport:
    scenario: str
    digest: str
    checks: list
    seed: Optional[int] = None
    tol_scale: float = 1.0
    wall_time_s: Optional[float] = None

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def to_dict(self) -> dict:
        return {
            "tool": "weylcps",
            "version": __version__,
            "scenario": self.scenario,
            "scenario_digest": self.digest,
            "seed": self.seed,
            "tol_scale": self.tol_scale,
            "wall_time_s": self.wall_time_s,
            "passed": self.passed,
            "checks": [c.to_dict() for c in self.checks],
        }

    def to_json(self) -> str:
        return canonical_json(self.to_dict())


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2, allow_nan=True) + "\n"


def run(scen: Scenario, seed: Optional[int] = None, tol_scale: float = 1.0, workers: int = 1,
        timing: bool = False) -> RunReport:
    """Execute the checks in declaration order; a failing check never aborts its siblings."""
    import time

    t0 = time.perf_counter()
    if seed is not None and scen.loops is not None:
        scen.loops = {**scen.loops, "seed": int(seed)}
    points = scen.points(seed)
    cache: dict = {}

    def one(c: CheckSpec):
        try:
            rep = _run_check(scen, c, points, tol_scale, cache)
        except Exception as exc:  # recorded per check
            rep = sv.ResidualReport.failure(c.name, "", exc, c.expect)
        if c.label:
            rep.name = c.label
        return rep

    if workers > 1 and len(scen.checks) > 1:
        # warm the shared sample so threads do not race on lazy properties
        cache["ss"] = sv.StructureSample(scen.cps, points, scen.lee if scen.lee is not None else _zero(scen.cps))
        with ThreadPoolExecutor(max_workers=workers) as pool:
            reports = list(pool.map(one, scen.checks))
    else:
        reports = [one(c) for c in scen.checks]
    wall = time.perf_counter() - t0 if timing else None
    used_seed = seed if seed is not None else scen.sampling.get("seed")
    return RunReport(scen.name, scen.digest, reports, used_seed, tol_scale, wall)


def emit(report: RunReport, path) -> None:
    """Write the report atomically."""
    write_atomic(report.to_json(), path)


def write_atomic(text: str, path) -> None:
    """Temp file in the target directory, then rename over the target."""
    target = os.path.abspath(path)
    fd, tmp = tempfile.mkstemp(dir=os.path.dirname(target), prefix=".report-", suffix=".json")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, target)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
