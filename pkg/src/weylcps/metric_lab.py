"""Metric fields, complex structures and the builtin metric families.

Every constructor returns a ``CpsMetric``: the metric on its chart plus the
canonical data of the conformal product structure it carries (Lee form,
splitting frames, and when available the complex structure and the unit
field spanning the rank-one factor).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import expr_lang as el
from .chart import (Chart, EndoField, OneFormField, ScalarField, TensorField, VectorField,
                    coordinate_field, zero_oneform)
from .errors import DegenerateMetric, NonPeriodicAxis, PeriodicityError, ValidationError

LEE_CONVENTION_NOTE = (
    "Lee form of the conformal product is the one that makes the product splitting parallel: "
    "theta(Z2) = -Z2(f1), theta(Z1) = -Z1(f2); the same-factor form "
    "-d^{M1} f1 - d^{M2} f2 differs whenever f1 varies along M1"
)


class MetricField(TensorField):
    """Symmetric positive-definite matrix field.

    Only the upper triangle is compiled; the lower triangle mirrors it so
    symmetry holds exactly.
    """

    kind = "metric"

    def __init__(self, chart: Chart, components, kind=None):
        comps = [[None] * chart.dim for _ in range(chart.dim)]
        for i in range(chart.dim):
            for j in range(chart.dim):
                comps[i][j] = components[min(i, j)][max(i, j)]
        super().__init__(chart, comps, "metric")

    def _unique_indices(self):
        return [(i, j) for i in range(self.chart.dim) for j in range(i, self.chart.dim)]

    def jet(self, points, reduce=True):
        val, grad, hess = super().jet(points, reduce)
        iu, ju = np.triu_indices(self.chart.dim, 1)
        val[..., ju, iu] = val[..., iu, ju]
        grad[..., ju, iu, :] = grad[..., iu, ju, :]
        hess[..., ju, iu, :, :] = hess[..., iu, ju, :, :]
        check_positive_definite(val)
        return val, grad, hess

    def values(self, points, reduce=True):
        val = super().values(points, reduce)
        iu, ju = np.triu_indices(self.chart.dim, 1)
        val[..., ju, iu] = val[..., iu, ju]
        return val

    def conformal(self, factor) -> "MetricField":
        """``exp(2 * factor) * g`` as a new metric field."""
        w = el.call("exp", el.mul(el.Num(2.0), el.as_expr(factor, self.chart.names)))
        return MetricField(self.chart, [[el.mul(w, self.exprs[i, j]) for j in range(self.chart.dim)]
                                        for i in range(self.chart.dim)])


def check_positive_definite(g: np.ndarray) -> None:
    try:
        np.linalg.cholesky(g)
    except np.linalg.LinAlgError as exc:
        raise DegenerateMetric("metric is not positive definite at a sampled point") from exc


class ComplexStructureField(EndoField):
    """Endomorphism field squaring to minus the identity.

    Integrability is not checked; the builtin constructors produce
    integrable structures, user-supplied ones are the caller's
    responsibility.
    """

    def residuals(self, metric: MetricField, points):
        """Pointwise ``|J^2 + Id|`` and ``|g(J., J.) - g|`` (max-abs entries)."""
        J = self.values(points)
        g = metric.values(points)
        sq = np.einsum("...ij,...jk->...ik", J, J) + np.eye(self.chart.dim)
        compat = np.einsum("...ki,...kl,...lj->...ij", J, g, J) - g
        return np.abs(sq).max(axis=(-2, -1)), np.abs(compat).max(axis=(-2, -1))


def sharp(g: np.ndarray, omega: np.ndarray) -> np.ndarray:
    """Raise an index: solve ``g X = omega`` pointwise."""
    check_positive_definite(g)
    return np.linalg.solve(g, omega[..., None])[..., 0]


def flat(g: np.ndarray, X: np.ndarray) -> np.ndarray:
    return np.einsum("...ij,...j->...i", g, X)


@dataclass
class CpsMetric:
    """A metric together with its canonical conformal product data."""

    name: str
    chart: Chart
    metric: MetricField
    lee: Optional[OneFormField] = None
    t1: list = field(default_factory=list)
    t2: list = field(default_factory=list)
    J: Optional[ComplexStructureField] = None
    xi: Optional[VectorField] = None
    blocks: Optional[tuple] = None
    lee_same_factor: Optional[OneFormField] = None
    notes: tuple = ()

    @property
    def dim(self):
        return self.chart.dim

    def with_lee(self, lee: OneFormField) -> "CpsMetric":
        out = CpsMetric(**self.__dict__)
        out.lee = lee
        return out

    def frames_orthogonality(self, points) -> np.ndarray:
        """Pointwise max ``|g(U, V)|`` over U in T1-frame, V in T2-frame."""
        g = self.metric.values(points)
        res = np.zeros(np.shape(points)[:-1])
        for U in self.t1:
            u = U.values(points)
            for V in self.t2:
                v = V.values(points)
                res = np.maximum(res, np.abs(np.einsum("...i,...ij,...j->...", u, g, v)))
        return res


# ----------------------------------------------------------------- constructors

def _default_names(dim):
    if dim == 2:
        return ("s", "t")
    if dim == 4:
        return ("s", "t", "x", "y")
    return tuple(f"x{k + 1}" for k in range(dim))


def _standard_J(dim, offset=0, size=None):
    size = dim if size is None else size
    J = [[0.0] * dim for _ in range(dim)]
    for k in range(offset, offset + size, 2):
        J[k + 1][k] = 1.0
        J[k][k + 1] = -1.0
    return J


def flat_torus(dim: int = 2, names: Optional[Sequence[str]] = None, rank: int = 1) -> CpsMetric:
    """Unit-period flat torus; splitting T2 = last ``rank`` coordinates."""
    names = tuple(names) if names is not None else _default_names(dim)
    if len(names) != dim:
        raise ValidationError("names", "length must equal dim")
    if not 1 <= rank <= dim // 2:
        raise ValidationError("rank", f"must lie in [1, {dim // 2}]")
    chart = Chart(names, periods=(1.0,) * dim)
    g = MetricField(chart, np.eye(dim).tolist())
    t1 = [coordinate_field(chart, k) for k in range(dim - rank)]
    t2 = [coordinate_field(chart, k) for k in range(dim - rank, dim)]
    J = ComplexStructureField(chart, _standard_J(dim)) if dim % 2 == 0 else None
    xi = t2[0] if rank == 1 else None
    blocks = (tuple(range(dim - rank)), tuple(range(dim - rank, dim)))
    return CpsMetric("flat_torus", chart, g, zero_oneform(chart), t1, t2, J, xi, blocks)


def sphere_chart() -> CpsMetric:
    """Unit sphere in polar coordinates, ``dtheta^2 + sin(theta)^2 dphi^2``.

    As the warped product with warp ``log sin(theta)`` on the circle factor
    its canonical Lee form is ``-cot(theta) dtheta``.
    """
    chart = Chart(("theta", "phi"), periods=(None, 2 * math.pi), bounds=((0.05, math.pi - 0.05), None))
    g = MetricField(chart, [["1", "0"], ["0", "sin(theta)^2"]])
    lee = OneFormField(chart, ["-cos(theta)/sin(theta)", "0"])
    t1 = [coordinate_field(chart, 0)]
    t2 = [coordinate_field(chart, 1)]
    return CpsMetric("sphere_chart", chart, g, lee, t1, t2, None, None, ((0,), (1,)))


def conformal_product(g1: CpsMetric, g2: CpsMetric, f1, f2) -> CpsMetric:
    """``exp(2 f1) g1 + exp(2 f2) g2`` on the product chart.

    ``f1`` and ``f2`` are expressions over the joint coordinates.  The Lee
    form satisfies ``theta(Z2) = -Z2(f1)`` and ``theta(Z1) = -Z1(f2)``.
    """
    c1, c2 = g1.chart, g2.chart
    names = c1.names + c2.names
    if len(set(names)) != len(names):
        raise ValidationError("names", "factor charts must use distinct coordinate names")
    chart = Chart(names, periods=c1.periods + c2.periods, bounds=c1.bounds + c2.bounds)
    f1 = el.as_expr(f1, names)
    f2 = el.as_expr(f2, names)
    n1, n = c1.dim, chart.dim
    w1 = el.call("exp", el.mul(el.Num(2.0), f1))
    w2 = el.call("exp", el.mul(el.Num(2.0), f2))
    comps = [[el.Num(0.0)] * n for _ in range(n)]
    for i in range(n1):
        for j in range(n1):
            comps[i][j] = el.mul(w1, g1.metric.exprs[i, j])
    for i in range(n - n1):
        for j in range(n - n1):
            comps[n1 + i][n1 + j] = el.mul(w2, g2.metric.exprs[i, j])
    g = MetricField(chart, comps)
    lee = [el.neg(el.differentiate(f2, names[k])) for k in range(n1)]
    lee += [el.neg(el.differentiate(f1, names[k])) for k in range(n1, n)]
    stmt = [el.neg(el.differentiate(f1, names[k])) for k in range(n1)]
    stmt += [el.neg(el.differentiate(f2, names[k])) for k in range(n1, n)]
    b1, b2 = tuple(range(n1)), tuple(range(n1, n))
    t1 = [coordinate_field(chart, k) for k in b1]
    t2 = [coordinate_field(chart, k) for k in b2]
    if len(t2) > len(t1):
        t1, t2, b1, b2 = t2, t1, b2, b1
    return CpsMetric("conformal_product", chart, g, OneFormField(chart, lee), t1, t2, None, None,
                     (b1, b2), OneFormField(chart, stmt), (LEE_CONVENTION_NOTE,))


def check_doubly_periodic(expr, names: Sequence[str], lattice: int = 32, atol: float = 1e-10) -> None:
    """Raise ``PeriodicityError`` unless ``expr`` has period 1 in (s, t).

    Evaluated directly, without chart reduction, on a ``lattice^2`` grid.
    """
    tape = el.compile_expr(expr, names)
    grid = (np.arange(lattice) + 0.5) / lattice
    S, T = np.meshgrid(grid, grid, indexing="ij")
    pts = np.zeros(S.shape + (len(names),))
    pts[..., 0], pts[..., 1] = S, T
    base = tape.value(pts)
    for k in (0, 1):
        shifted = pts.copy()
        shifted[..., k] += 1.0
        if np.max(np.abs(tape.value(shifted) - base)) > atol:
            raise PeriodicityError(f"{el.to_string(el.as_expr(expr, names))} is not 1-periodic in {names[k]!r}")


def kahler_warped_torus(phi="0.3*sin(2*pi*s)*cos(2*pi*t)", k_dim: int = 2, orientation: int = 1) -> CpsMetric:
    """``exp(-2 phi) ds^2 + dt^2 + g_K`` with a flat torus factor K.

    ``xi = exp(phi) d/ds`` spans T2 and ``J xi = orientation * d/dt``.  The
    canonical Lee form is ``(d phi / dt) dt``.
    """
    if k_dim < 0 or k_dim % 2:
        raise ValidationError("k_dim", "K factor must have even dimension")
    if orientation not in (1, -1):
        raise ValidationError("orientation", "must be +1 or -1")
    knames = ("x", "y") if k_dim == 2 else tuple(f"x{k + 1}" for k in range(k_dim))
    names = ("s", "t") + knames
    phi = el.as_expr(phi, ("s", "t"))
    check_doubly_periodic(phi, names)
    n = len(names)
    chart = Chart(names, periods=(1.0,) * n)
    ephi = el.call("exp", phi)
    emphi = el.call("exp", el.neg(phi))
    comps = np.eye(n).astype(object)
    comps[0, 0] = el.call("exp", el.mul(el.Num(-2.0), phi))
    g = MetricField(chart, comps.tolist())
    J = _standard_J(n, offset=2, size=k_dim)
    J = [[el.Num(float(v)) for v in row] for row in J]
    o = el.Num(float(orientation))
    J[1][0] = el.mul(o, emphi)
    J[0][1] = el.neg(el.mul(o, ephi))
    xi = VectorField(chart, [ephi] + [0.0] * (n - 1))
    lee = OneFormField(chart, [0.0, el.differentiate(phi, "t")] + [0.0] * k_dim)
    t1 = [coordinate_field(chart, k) for k in range(1, n)]
    return CpsMetric("kahler_warped_torus", chart, g, lee, t1, [xi], ComplexStructureField(chart, J), xi,
                     (tuple(range(1, n)), (0,)))


def surface_conformal_torus(psi="0.2*sin(2*pi*s)*sin(2*pi*t)") -> CpsMetric:
    """``exp(2 psi)(ds^2 + dt^2)`` on the torus with ``xi = exp(-psi) d/ds``.

    The canonical Lee form is ``-d psi``, the value the surface construction
    produces for this unit field.
    """
    names = ("s", "t")
    psi = el.as_expr(psi, names)
    check_doubly_periodic(psi, names)
    chart = Chart(names, periods=(1.0, 1.0))
    w = el.call("exp", el.mul(el.Num(2.0), psi))
    g = MetricField(chart, [[w, 0.0], [0.0, w]])
    emp = el.call("exp", el.neg(psi))
    xi = VectorField(chart, [emp, 0.0])
    jxi = VectorField(chart, [0.0, emp])
    J = ComplexStructureField(chart, _standard_J(2))
    lee = OneFormField(chart, [el.neg(el.differentiate(psi, v)) for v in names])
    return CpsMetric("surface_conformal_torus", chart, g, lee, [xi], [jxi], J, xi, None)


BUILTINS = {
    "flat_torus": flat_torus,
    "sphere_chart": sphere_chart,
    "conformal_product": conformal_product,
    "kahler_warped_torus": kahler_warped_torus,
    "surface_conformal_torus": surface_conformal_torus,
}


# -------------------------------------------------------------------- quadrature

def integrate_periodic(f, metric: MetricField, grid: Sequence[int]) -> float:
    """Rectangle-rule integral of ``f * sqrt(det g)`` over the period cell.

    ``f`` is a ``ScalarField`` or a callable mapping ``(N, n)`` points to
    ``(N,)`` values.  Summation is numpy's pairwise reduction over a fixed
    ordering, so the result is reproducible bit for bit.
    """
    chart = metric.chart
    if len(grid) != chart.dim:
        raise ValueError("grid needs one resolution per axis")
    for k, p in enumerate(chart.periods):
        if p is None:
            raise NonPeriodicAxis(f"axis {chart.names[k]!r} is not periodic")
    pts = chart.grid(grid)
    vals = f.values(pts) if isinstance(f, TensorField) else np.asarray(f(pts), dtype=float)
    vol = np.sqrt(np.linalg.det(metric.values(pts)))
    cell = float(np.prod([p / m for p, m in zip(chart.periods, grid)]))
    return float(np.sum(vals * vol) * cell)
