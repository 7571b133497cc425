"""Oracle battery: jet derivatives against central differences on every builtin."""
from __future__ import annotations

import numpy as np

from . import structure as sv
from .chart import fd_oracle
from .connection import ConnectionSample
from .metric_lab import (conformal_product, flat_torus, kahler_warped_torus, sphere_chart,
                         surface_conformal_torus)

REL_TOL = 1e-6


def default_builtins() -> dict:
    """One instance of every builtin family, with non-trivial parameters."""
    return {
        "flat_torus": flat_torus(4),
        "sphere_chart": sphere_chart(),
        "conformal_product": conformal_product(
            flat_torus(2, names=("s", "t")), flat_torus(2, names=("x", "y")),
            "0.3*sin(2*pi*x) + 0.2*cos(2*pi*s)", "0.1*cos(2*pi*t)*sin(2*pi*y)"),
        "kahler_warped_torus": kahler_warped_torus(),
        "surface_conformal_torus": surface_conformal_torus(),
    }


def rel_err(a, b) -> np.ndarray:
    """``|a - b| / max(1, |b|)`` elementwise."""
    a, b = np.asarray(a), np.asarray(b)
    return np.abs(a - b) / np.maximum(1.0, np.abs(b))


def fd_christoffels(metric, points) -> np.ndarray:
    """Christoffel symbols from central-difference metric derivatives (no jets)."""
    g, dg, _ = fd_oracle(metric, points)
    ginv = np.linalg.inv(g)
    K = np.einsum("bjli->blij", dg) + np.einsum("bilj->blij", dg) - np.einsum("bijl->blij", dg)
    return 0.5 * np.einsum("bkl,blij->bkij", ginv, K)


def christoffel_oracle(cps, count=64, seed=0) -> sv.ResidualReport:
    pts = cps.chart.sample(count, seed)
    jet = ConnectionSample(cps.metric, pts).christoffel.val
    fd = fd_christoffels(cps.metric, pts)
    r = rel_err(jet, fd).max(axis=(1, 2, 3))
    return sv.ResidualReport.from_residuals(cps.name, "jet Christoffels vs central differences", r, pts, REL_TOL)


def lee_oracle(cps, count=64, seed=0) -> sv.ResidualReport:
    """Gradient of the Lee form components against central differences."""
    pts = cps.chart.sample(count, seed)
    _v, grad, _h = cps.lee.jet(pts)
    _fv, fgrad, _fh = fd_oracle(cps.lee, pts)
    r = rel_err(grad, fgrad).max(axis=(1, 2))
    return sv.ResidualReport.from_residuals(f"{cps.name}_lee", "jet d(theta) vs central differences", r, pts, REL_TOL)


def run_battery(seed: int = 0, count: int = 64) -> list:
    reports = []
    for cps in default_builtins().values():
        reports.append(christoffel_oracle(cps, count, seed))
        reports.append(lee_oracle(cps, count, seed))
    return reports


def selfcheck(seed: int = 0, count: int = 64) -> dict:
    """Run the battery twice and confirm the serialized reports are identical."""
    from .scenario import canonical_json

    first = [r.to_dict() for r in run_battery(seed, count)]
    second = [r.to_dict() for r in run_battery(seed, count)]
    identical = canonical_json(first) == canonical_json(second)
    passed = identical and all(r["passed"] for r in first)
    return {"checks": first, "deterministic": identical, "passed": passed, "seed": seed}
