"""Conformal product structure objects and their residual suites.

Every check evaluates pointwise residual arrays over a batch of sample
points and folds them into a ``ResidualReport``.  Vectors and 1-forms are
measured in the g-norm, endomorphisms in the g-induced Frobenius norm.
Tensorial identities are tested along every pair of vectors from the
Gram-Schmidt orthonormal frame.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional, Sequence

import numpy as np

from .chart import OneFormField, TensorField, VectorField
from .connection import (ConnectionSample, WeylData, differential_forms, nabla_endo, nabla_oneform,
                         nabla_vector, orthonormal_frame, weyl_endo_derivative, wedge)
from .errors import (DimensionError, FrameDegenerate, NotClosed, NotParallel, PreconditionError)
from .jets import JetArray, jeinsum
from .metric_lab import CpsMetric, MetricField, integrate_periodic

TOL_ALGEBRAIC = 1e-10
TOL_FIRST = 1e-8
TOL_CURVATURE = 1e-7


# ----------------------------------------------------------------- reports

@dataclass
class ResidualReport:
    """Max/mean of a pointwise residual against a tolerance.

    ``expect == "violation"`` turns the check into a negative control that
    passes when the maximum exceeds ``tol``.
    """

    name: str
    anchor: str
    samples: int
    max: float
    mean: float
    location: Optional[list]
    tol: float
    passed: bool
    expect: str = "below"
    subchecks: list = field(default_factory=list)
    values: dict = field(default_factory=dict)
    error: Optional[str] = None
    # per-point residual in units of the tolerance (not serialized)
    pointwise: Optional[np.ndarray] = field(default=None, repr=False, compare=False)

    @classmethod
    def from_residuals(cls, name, anchor, residuals, points, tol, expect="below", values=None):
        r = np.abs(np.asarray(residuals, dtype=float)).reshape(-1)
        pts = np.asarray(points, dtype=float).reshape(-1, np.shape(points)[-1]) if points is not None else None
        if r.size == 0:
            mx, mean, loc = 0.0, 0.0, None
        else:
            if not np.all(np.isfinite(r)):
                raise FloatingPointError(f"{name}: non-finite residual")
            k = int(np.argmax(r))
            mx, mean = float(r[k]), float(np.mean(r))
            mean = min(mean, mx)
            loc = pts[k % len(pts)].tolist() if pts is not None and len(pts) else None
        passed = mx > tol if expect == "violation" else mx <= tol
        pointwise = r / tol if pts is not None and r.size == len(pts) and tol > 0 else None
        return cls(name, anchor, int(r.size), mx, mean, loc, float(tol), bool(passed), expect,
                   values=dict(values or {}), pointwise=pointwise)

    @classmethod
    def combine(cls, name, anchor, subchecks, expect="below", values=None):
        """Aggregate sub-reports; a negative control passes when any sub-report is violated."""
        if not subchecks:
            return cls(name, anchor, 0, 0.0, 0.0, None, 0.0, True, expect, [], dict(values or {}))
        worst = max(subchecks, key=lambda s: s.max)
        mean = float(np.mean([s.mean for s in subchecks]))
        if expect == "violation":
            passed = any(s.max > s.tol for s in subchecks)
        else:
            passed = all(s.passed for s in subchecks)
        per = [s.pointwise for s in subchecks if s.pointwise is not None]
        pointwise = None
        if per and all(p.shape == per[0].shape for p in per):
            pointwise = np.max(np.stack(per), axis=0)
        return cls(name, anchor, sum(s.samples for s in subchecks), worst.max, min(mean, worst.max),
                   worst.location, worst.tol, bool(passed), expect, list(subchecks), dict(values or {}),
                   pointwise=pointwise)

    @classmethod
    def failure(cls, name, anchor, exc: Exception, expect="below"):
        return cls(name, anchor, 0, 0.0, 0.0, None, 0.0, False, expect, error=f"{type(exc).__name__}: {exc}")

    def to_dict(self) -> dict:
        out = {
            "name": self.name,
            "anchor": self.anchor,
            "samples": self.samples,
            "max": self.max,
            "mean": self.mean,
            "location": self.location,
            "tol": self.tol,
            "passed": self.passed,
            "expect": self.expect,
        }
        if self.values:
            out["values"] = self.values
        if self.subchecks:
            out["subchecks"] = [s.to_dict() for s in self.subchecks]
        if self.error is not None:
            out["error"] = self.error
        return out

    def find(self, name) -> "ResidualReport":
        for s in self.subchecks:
            if s.name == name:
                return s
        raise KeyError(name)

    def summary_line(self) -> str:
        flag = "PASS" if self.passed else "FAIL"
        if self.error:
            return f"[{flag}] {self.name}: {self.error}"
        rel = ">" if self.expect == "violation" else "<="
        return f"[{flag}] {self.name}: max={self.max:.3e} (want {rel} {self.tol:.1e}) mean={self.mean:.3e} n={self.samples}"


class _Tol:
    """Resolve per-subcheck tolerances with a global scale and override."""

    def __init__(self, tol=None, tol_scale=1.0):
        self.override = tol
        self.scale = tol_scale

    def __call__(self, default):
        return (self.override if self.override is not None else default) * self.scale


# ----------------------------------------------------------- linear algebra

def symmetric_product(X, Y, g) -> np.ndarray:
    """Matrix of ``Z -> <X, Z> Y + <Y, Z> X`` (batched over the leading axis)."""
    Xf = np.einsum("...ij,...j->...i", g, X)
    Yf = np.einsum("...ij,...j->...i", g, Y)
    return np.einsum("...i,...j->...ij", Y, Xf) + np.einsum("...i,...j->...ij", X, Yf)


def vec_norm(g, v):
    return np.sqrt(np.maximum(np.einsum("...i,...ij,...j->...", v, g, v), 0.0))


def form_norm(ginv, w):
    return np.sqrt(np.maximum(np.einsum("...i,...ij,...j->...", w, ginv, w), 0.0))


def endo_norm(g, ginv, E):
    """g-Frobenius norm ``sqrt(tr(E^* E))`` with ``E^* = g^-1 E^T g``."""
    val = np.einsum("...ia,...ba,...bc,...ci->...", ginv, E, g, E)
    return np.sqrt(np.maximum(val, 0.0))


def twoform_norm(ginv, A):
    val = np.einsum("...ia,...jb,...ij,...ab->...", ginv, ginv, A, A)
    return np.sqrt(np.maximum(0.5 * val, 0.0))


def _mv(A, v):
    return np.einsum("bij,bj->bi", A, v)


def _dot(a, b):
    return np.einsum("bi,bi->b", a, b)


def _tr(A):
    return np.einsum("bii->b", A)


# ------------------------------------------------------------ splitting data

def _stack_frame(fields, cs) -> JetArray:
    vals, ders = [], []
    for F in fields:
        v, d, _ = F.jet(cs.points, reduce=False)
        vals.append(v)
        ders.append(d)
    return JetArray(np.stack(vals, axis=2), np.stack(ders, axis=2))


class SplittingS:
    """Orthogonal splitting T1 + T2 given by frames, and its involution S.

    ``S`` is +1 on T1 and -1 on T2; the larger factor is taken as T1.
    """

    def __init__(self, metric: MetricField, t1: Sequence[VectorField], t2: Sequence[VectorField]):
        if not t1 or not t2:
            raise FrameDegenerate("both factors of the splitting need a frame")
        if len(t1) + len(t2) != metric.chart.dim:
            raise FrameDegenerate("frames must span the tangent space")
        if len(t2) > len(t1):
            t1, t2 = t2, t1
        self.metric = metric
        self.t1 = list(t1)
        self.t2 = list(t2)

    @property
    def rank(self) -> int:
        return len(self.t2)

    @property
    def n(self) -> int:
        return self.metric.chart.dim

    def evaluate(self, cs: ConnectionSample) -> JetArray:
        F2 = _stack_frame(self.t2, cs)
        G2 = jeinsum("ia,ij,jb->ab", F2, cs.g, F2)
        try:
            A = G2.inv()
        except np.linalg.LinAlgError as exc:
            raise FrameDegenerate("T2 frame is degenerate") from exc
        P = jeinsum("ia,ab,jb,jk->ik", F2, A, F2, cs.g)
        eye = np.broadcast_to(np.eye(self.n), P.val.shape)
        return JetArray.constant(eye, self.n) - P * 2.0

    def invariants(self, cs: ConnectionSample, S: Optional[np.ndarray] = None) -> dict:
        """Pointwise residuals of S^2 = Id, g-symmetry, S|T1 = id, frame orthogonality, trace."""
        S = self.evaluate(cs).val if S is None else S
        g = cs.g.val
        eye = np.eye(self.n)
        F1 = _stack_frame(self.t1, cs).val
        F2 = _stack_frame(self.t2, cs).val
        gS = g @ S
        cross = np.einsum("bia,bij,bjc->bac", F1, g, F2)
        return {
            "S_squared": np.abs(S @ S - eye).max(axis=(1, 2)),
            "S_symmetric": np.abs(gS - np.swapaxes(gS, 1, 2)).max(axis=(1, 2)),
            "S_on_T1": np.abs(S @ F1 - F1).max(axis=(1, 2)),
            "frames_orthogonal": np.abs(cross).max(axis=(1, 2)),
            "trace": np.abs(_tr(S) - (self.n - 2 * self.rank)),
        }


@dataclass
class Rank1Witness:
    """Unit field xi spanning T2, J xi, b = theta(J xi) and theta_0 = theta - b (J xi)^flat."""

    xi: JetArray
    Jxi: JetArray
    b: JetArray
    theta0: JetArray

    @classmethod
    def build(cls, cs: ConnectionSample, xi: JetArray, J: JetArray) -> "Rank1Witness":
        Jxi = jeinsum("ij,j->i", J, xi)
        b = jeinsum("i,i->", cs.theta, Jxi)
        Jxi_flat = jeinsum("ij,j->i", cs.g, Jxi)
        theta0 = cs.theta - Jxi_flat * b
        return cls(xi, Jxi, b, theta0)

    def invariants(self, cs: ConnectionSample) -> dict:
        return {
            "xi_unit": np.abs(vec_norm(cs.g.val, self.xi.val) - 1.0),
            "theta0_xi": np.abs(_dot(self.theta0.val, self.xi.val)),
            "theta0_Jxi": np.abs(_dot(self.theta0.val, self.Jxi.val)),
        }


class StructureSample:
    """Everything a check needs at a batch of points, evaluated lazily."""

    def __init__(self, cps: CpsMetric, points, lee=None):
        self.cps = cps
        lee = cps.lee if lee is None else lee
        self.cs = ConnectionSample(cps.metric, points, lee)
        self.points = self.cs.points
        self.n = self.cs.n

    @cached_property
    def splitting(self) -> SplittingS:
        return SplittingS(self.cps.metric, self.cps.t1, self.cps.t2)

    @cached_property
    def S(self) -> JetArray:
        return self.splitting.evaluate(self.cs)

    @cached_property
    def J(self) -> JetArray:
        if self.cps.J is None:
            raise ValueError(f"{self.cps.name} carries no complex structure")
        return self.cps.J.jet1(self.points)

    @cached_property
    def xi(self) -> JetArray:
        if self.cps.xi is not None:
            return self.cps.xi.jet1(self.points)
        if self.splitting.rank != 1:
            raise ValueError("rank-one witness needs a rank-one splitting")
        F = self.splitting.t2[0].jet1(self.points)
        nrm = jeinsum("i,ij,j->", F, self.cs.g, F)
        inv_len = JetArray(nrm.val ** -0.5, -0.5 * nrm.val[:, None] ** -1.5 * nrm.der)
        return F * inv_len

    @cached_property
    def witness(self) -> Rank1Witness:
        return Rank1Witness.build(self.cs, self.xi, self.J)

    @property
    def frame(self):
        return self.cs.frame


def _frame_pairs(n):
    return list(itertools.product(range(n), repeat=2))


# ------------------------------------------------------------------- checks

def check_derivS(ss: StructureSample, tol=None, tol_scale=1.0, expect="below") -> ResidualReport:
    """nabla_X S = SX . theta - S theta . X, and equivalently D_X S = 0."""
    T = _Tol(tol, tol_scale)
    cs = ss.cs
    g, ginv = cs.g.val, cs.ginv.val
    S = ss.S
    nab = nabla_endo(cs, S)
    Dw = weyl_endo_derivative(cs, S)
    th = cs.theta_sharp.val
    Sth = _mv(S.val, th)
    r1 = np.zeros(len(cs.points))
    r2 = np.zeros(len(cs.points))
    for a in range(ss.n):
        X = ss.frame[:, :, a]
        lhs = np.einsum("bijl,bl->bij", nab, X)
        rhs = symmetric_product(_mv(S.val, X), th, g) - symmetric_product(Sth, X, g)
        r1 = np.maximum(r1, endo_norm(g, ginv, lhs - rhs))
        r2 = np.maximum(r2, endo_norm(g, ginv, np.einsum("bijl,bl->bij", Dw, X)))
    inv = ss.splitting.invariants(cs, S.val)
    subs = [
        ResidualReport.from_residuals("nabla_S_formula", "nabla_X S = SX . theta# - S theta# . X", r1, cs.points, T(TOL_FIRST), expect),
        ResidualReport.from_residuals("D_S_parallel", "D_X S = 0", r2, cs.points, T(TOL_FIRST), expect),
    ]
    if expect == "below":
        subs.append(ResidualReport.from_residuals(
            "S_invariants", "S|T1 = id, S|T2 = -id", np.max(np.stack(list(inv.values())), axis=0),
            cs.points, T(TOL_ALGEBRAIC)))
    return ResidualReport.combine("derivS", "nabla_X S = SX . theta# - S theta# . X  <=>  D_X S = 0", subs, expect)


def check_parallel_splitting(ss: StructureSample, tol=None, tol_scale=1.0, expect="below") -> ResidualReport:
    """|<D_X U, V>| for U, V in opposite factors, plus the block-derivative identity on product charts."""
    T = _Tol(tol, tol_scale)
    cs = ss.cs
    g = cs.g.val
    W = cs.weyl.val
    split = ss.splitting
    frames1 = [F.jet1(cs.points) for F in split.t1]
    frames2 = [F.jet1(cs.points) for F in split.t2]
    res = np.zeros(len(cs.points))
    for A, B in ((frames1, frames2), (frames2, frames1)):
        for U in A:
            for V in B:
                scale = vec_norm(g, U.val) * vec_norm(g, V.val)
                for a in range(ss.n):
                    X = ss.frame[:, :, a]
                    DU = np.einsum("bkl,bl->bk", U.der, X) + np.einsum("bklm,bl,bm->bk", W, X, U.val)
                    res = np.maximum(res, np.abs(cs.inner(DU, V.val)) / scale)
    subs = [ResidualReport.from_residuals("D_parallel", "<D_X U, V> = 0, U in T1, V in T2", res, cs.points,
                                          T(1e-9), expect)]
    if ss.cps.blocks is not None:
        subs.append(ResidualReport.from_residuals("gd", "Z2(g(X1, Y1)) = -2 theta(Z2) g(X1, Y1)",
                                                  _gd_residual(cs, ss.cps.blocks), cs.points, T(1e-9), expect))
    if expect == "below":
        inv = split.invariants(cs, ss.S.val)
        subs.append(ResidualReport.from_residuals("frames_orthogonal", "T1 orthogonal to T2",
                                                  inv["frames_orthogonal"], cs.points, T(TOL_ALGEBRAIC)))
    return ResidualReport.combine("parallel_splitting", "orthogonal D-parallel splitting; Z2(g(X1, Y1)) = -2 theta(Z2) g(X1, Y1)", subs, expect)


def _gd_residual(cs: ConnectionSample, blocks) -> np.ndarray:
    g, dg = cs.g.val, cs.g.der
    th = cs.theta.val
    res = np.zeros(len(cs.points))
    for b1, b2 in (blocks, blocks[::-1]):
        for i in b1:
            for j in b1:
                for z in b2:
                    scale = np.sqrt(g[:, i, i] * g[:, j, j] * g[:, z, z])
                    r = dg[:, i, j, z] + 2.0 * th[:, z] * g[:, i, j]
                    res = np.maximum(res, np.abs(r) / scale)
    return res


def curvS_rhs(X, Y, S, T, th, g) -> np.ndarray:
    """Right-hand side of the curvature identity for a D-parallel involution S."""
    sp = lambda a, b: symmetric_product(a, b, g)  # noqa: E731
    SX, SY = _mv(S, X), _mv(S, Y)
    TX, TY = _mv(T, X), _mv(T, Y)
    Sth = _mv(S, th)
    thX, thY = _dot(th, np.einsum("bij,bj->bi", g, X)), _dot(th, np.einsum("bij,bj->bi", g, Y))
    nrm = np.einsum("bi,bij,bj->b", th, g, th)[:, None, None]
    return (sp(SY, TX) - sp(SX, TY) + sp(_mv(S, TY), X) - sp(_mv(S, TX), Y)
            + thY[:, None, None] * sp(SX, th) - thY[:, None, None] * sp(Sth, X)
            + thX[:, None, None] * sp(Sth, Y) - thX[:, None, None] * sp(SY, th)
            - nrm * (sp(SX, Y) - sp(SY, X)))


def check_kahler(ss: StructureSample, tol=None, tol_scale=1.0) -> ResidualReport:
    """J^2 = -Id, g(J., J.) = g and nabla J = 0."""
    T = _Tol(tol, tol_scale)
    cs = ss.cs
    J = ss.J
    g, ginv = cs.g.val, cs.ginv.val
    sq = np.abs(J.val @ J.val + np.eye(ss.n)).max(axis=(1, 2))
    compat = np.abs(np.swapaxes(J.val, 1, 2) @ g @ J.val - g).max(axis=(1, 2))
    nJ = nabla_endo(cs, J)
    par = np.zeros(len(cs.points))
    for a in range(ss.n):
        par = np.maximum(par, endo_norm(g, ginv, np.einsum("bijl,bl->bij", nJ, ss.frame[:, :, a])))
    subs = [
        ResidualReport.from_residuals("J_squared", "J^2 = -Id", sq, cs.points, T(TOL_ALGEBRAIC)),
        ResidualReport.from_residuals("J_orthogonal", "g(J., J.) = g", compat, cs.points, T(TOL_ALGEBRAIC)),
        ResidualReport.from_residuals("nabla_J", "nabla J = 0", par, cs.points, T(TOL_FIRST)),
    ]
    return ResidualReport.combine("kahler", "Kahler structure (g, J)", subs)


def check_curvS(ss: StructureSample, tol=None, tol_scale=1.0, expect="below") -> ResidualReport:
    """R_{X,Y} S against its expression through theta and T, for (X, Y) and (JX, JY)."""
    T_ = _Tol(tol, tol_scale)
    cs = ss.cs
    g, ginv = cs.g.val, cs.ginv.val
    S, T, th = ss.S.val, cs.T, cs.theta_sharp.val
    J = ss.J.val
    R = cs.riemann
    N = len(cs.points)
    r = {k: np.zeros(N) for k in ("curvS", "curvJ_S", "curvS_minus_curvJ_S", "kahler_symmetry")}

    def RS(X, Y):
        Rm = np.einsum("blkij,bi,bj->blk", R, X, Y)
        return Rm @ S - S @ Rm

    for a, c in _frame_pairs(ss.n):
        X, Y = ss.frame[:, :, a], ss.frame[:, :, c]
        JX, JY = _mv(J, X), _mv(J, Y)
        lhs, lhsJ = RS(X, Y), RS(JX, JY)
        rhs, rhsJ = curvS_rhs(X, Y, S, T, th, g), curvS_rhs(JX, JY, S, T, th, g)
        for key, val in (("curvS", lhs - rhs), ("curvJ_S", lhsJ - rhsJ),
                         ("curvS_minus_curvJ_S", rhs - rhsJ), ("kahler_symmetry", lhs - lhsJ)):
            r[key] = np.maximum(r[key], endo_norm(g, ginv, val))
    anchors = {
        "curvS": "R_{X,Y} S = SY . TX - SX . TY + ...",
        "curvJ_S": "R_{JX,JY} S = SJY . TJX - ...",
        "curvS_minus_curvJ_S": "right-hand sides agree for (X,Y) and (JX,JY)",
        "kahler_symmetry": "R_{X,Y} S = R_{JX,JY} S",
    }
    subs = [ResidualReport.from_residuals(k, anchors[k], v, cs.points, T_(TOL_CURVATURE), expect) for k, v in r.items()]
    return ResidualReport.combine("curvS", "R_{X,Y} S for the D-parallel involution, and R_{X,Y} S = R_{JX,JY} S", subs, expect)


def _trace_terms(ss: StructureSample) -> dict:
    """Shared scalar quantities of the trace computations."""
    cs = ss.cs
    S, J = ss.S, ss.J
    th = cs.theta_sharp
    JSJS = jeinsum("ij,jk,kl,lm->im", J, S, J, S)
    Sth_form = jeinsum("ij,jk,k->i", cs.g, S, th)
    JSJS_form = jeinsum("ij,jk,k->i", cs.g, JSJS, th)
    n = ss.n
    Tm = cs.T
    tv = th.val
    return {
        "n": n,
        "trT": _tr(Tm),
        "trS": _tr(S.val),
        "trST": _tr(S.val @ Tm),
        "trJSJST": _tr(JSJS.val @ Tm),
        "trJSJS": _tr(JSJS.val),
        "norm2": _dot(cs.theta.val, tv),
        "th_Sth": _dot(cs.theta.val, _mv(S.val, tv)),
        "th_JSJSth": _dot(cs.theta.val, _mv(JSJS.val, tv)),
        "delta_th": differential_forms(cs, cs.theta)["delta"],
        "delta_Sth": differential_forms(cs, Sth_form)["delta"],
        "delta_JSJSth": differential_forms(cs, JSJS_form)["delta"],
        "Sth_form": Sth_form,
        "JSJS_form": JSJS_form,
    }


def check_trace_lemma(ss: StructureSample, tol=None, tol_scale=1.0, expect="below") -> ResidualReport:
    """Traces of T, ST, JSJST through codifferentials."""
    T = _Tol(tol, tol_scale)
    q = _trace_terms(ss)
    n = q["n"]
    r1 = q["trT"] + q["delta_th"]
    r2 = q["trST"] - (-q["delta_Sth"] - q["trS"] * q["norm2"] + n * q["th_Sth"])
    r3 = q["trJSJST"] - (-q["delta_JSJSth"] + q["th_JSJSth"] + q["norm2"] - q["norm2"] * q["trJSJS"]
                         - q["trS"] * q["th_Sth"])
    pts = ss.points
    subs = [
        ResidualReport.from_residuals("i", "tr(T) = -delta theta", r1, pts, T(TOL_FIRST), expect),
        ResidualReport.from_residuals("ii", "tr(ST) = -delta(S theta) - tr(S)|theta|^2 + n<theta, S theta>", r2, pts, T(TOL_CURVATURE), expect),
        ResidualReport.from_residuals("iii", "tr(JSJST) = -delta(JSJS theta) + ...", r3, pts, T(TOL_CURVATURE), expect),
    ]
    return ResidualReport.combine("trace_lemma", "traces of T, ST and JSJST through codifferentials", subs, expect)


def curv_Y_S_sides(ss: StructureSample, Y: np.ndarray):
    """Both sides of the contracted curvature identity at vectors ``Y``."""
    cs = ss.cs
    n = ss.n
    S, J, T = ss.S.val, ss.J.val, cs.T
    t = cs.theta_sharp.val
    g = cs.g.val
    ip = lambda a, b: np.einsum("bi,bij,bj->b", a, g, b)[:, None]  # noqa: E731
    mv = _mv
    trT, trS = _tr(T)[:, None], _tr(S)[:, None]
    trST = _tr(S @ T)[:, None]
    trTJ = _tr(T @ J)[:, None]
    trSTJ = _tr(S @ T @ J)[:, None]
    nrm = ip(t, t)
    thY = ip(t, Y)
    SY, TY, St, Jt = mv(S, Y), mv(T, Y), mv(S, t), mv(J, t)
    JY = mv(J, Y)
    lhs = (mv(T, SY) + trT * SY - trS * TY + (n - 1) * mv(S, TY) - trST * Y
           + thY * (trS * t + (1 - n) * St) + ip(St, t) * Y - ip(SY, t) * t
           + nrm * ((n - 1) * SY - trS * Y))
    rhs = (mv(T, mv(J, mv(S, JY))) + trTJ * mv(S, JY) - mv(S, mv(J, mv(T, JY))) + mv(J, mv(S, mv(T, JY)))
           - trSTJ * JY + mv(S, TY)
           - ip(Jt, Y) * mv(S, Jt) + ip(Jt, Y) * mv(J, St) - ip(St, Jt) * JY - thY * St
           - ip(mv(J, mv(S, Jt)), Y) * t
           + nrm * (SY + mv(J, mv(S, JY))))
    return lhs, rhs


def check_trace_chain(ss: StructureSample, quadrature: Optional[Sequence[int]] = None, tol=None,
                      tol_scale=1.0, expect="below") -> ResidualReport:
    """Contracted curvature identity, the scalar trace identities, and the Stokes integrals."""
    Tl = _Tol(tol, tol_scale)
    cs = ss.cs
    g = cs.g.val
    n = ss.n
    pts = ss.points
    rY = np.zeros(len(pts))
    for a in range(n):
        lhs, rhs = curv_Y_S_sides(ss, ss.frame[:, :, a])
        rY = np.maximum(rY, vec_norm(g, lhs - rhs))
    q = _trace_terms(ss)
    trace = (2 * (n - 1) * q["trT"] - 2 * q["trS"] * q["trST"] - 2 * q["trJSJST"] + 2 * q["trS"] * q["th_Sth"]
             + 2 * q["th_JSJSth"] + q["norm2"] * (n * n - 3 * n + 2 - q["trS"] ** 2 - q["trJSJS"]))
    trace2 = (q["norm2"] * (n * n - 3 * n + q["trS"] ** 2 + q["trJSJS"]) - 2 * (n - 2) * q["trS"] * q["th_Sth"]
              - 2 * (n - 1) * q["delta_th"] + 2 * q["trS"] * q["delta_Sth"] + 2 * q["delta_JSJSth"])
    subs = [
        ResidualReport.from_residuals("curv_Y_S", "contracted identity TSY + tr(T)SY - tr(S)TY + ...", rY, pts, Tl(TOL_CURVATURE), expect),
        ResidualReport.from_residuals("trace", "0 = 2(n-1)tr(T) - 2tr(S)tr(ST) - ...", trace, pts, Tl(TOL_CURVATURE), expect),
        ResidualReport.from_residuals("trace2", "0 = |theta|^2(n^2-3n+tr(S)^2+tr(JSJS)) - ...", trace2, pts, Tl(TOL_CURVATURE), expect),
    ]
    values = {"trS": float(np.mean(q["trS"])), "trJSJS": float(np.mean(q["trJSJS"]))}
    rank = ss.splitting.rank
    if rank == 1:
        trace3 = (2 * (n - 2) ** 2 * (q["norm2"] - q["th_Sth"]) - 2 * (n - 1) * q["delta_th"]
                  + 2 * (n - 2) * q["delta_Sth"] + 2 * q["delta_JSJSth"])
        subs.append(ResidualReport.from_residuals("trace3", "0 = 2(n-2)^2(|theta|^2 - <theta, S theta>) - ...", trace3, pts, Tl(TOL_CURVATURE), expect))
        subs.append(ResidualReport.from_residuals("trS_rank1", "tr(S) = n - 2", q["trS"] - (n - 2), pts, Tl(TOL_ALGEBRAIC), expect))
        subs.append(ResidualReport.from_residuals("trJSJS_rank1", "tr(JSJS) = 4 - n", q["trJSJS"] - (4 - n), pts, Tl(TOL_ALGEBRAIC), expect))
    if quadrature is not None:
        integrals = stokes_integrals(ss.cps, quadrature, lee=ss.cs._lee)
        values.update(integrals)
        for key, v in integrals.items():
            if key == "rank1_defect" and rank != 1:
                continue
            subs.append(ResidualReport.from_residuals(f"int_{key}", f"integral of {key} vanishes", [v], None,
                                                      Tl(TOL_ALGEBRAIC), expect))
    return ResidualReport.combine("trace_chain", "contracted curvature identity, scalar trace identities, vanishing integrals", subs, expect, values)


def stokes_integrals(cps: CpsMetric, grid: Sequence[int], lee=None) -> dict:
    """Integrals over the period cell of the codifferential terms and the rank-one defect."""
    grid = list(grid)

    def integrands(pts):
        ss = StructureSample(cps, pts, lee)
        q = _trace_terms(ss)
        n = ss.n
        return {
            "delta_theta": q["delta_th"],
            "delta_S_theta": q["delta_Sth"],
            "delta_JSJS_theta": q["delta_JSJSth"],
            "rank1_defect": 2 * (n - 2) ** 2 * (q["norm2"] - q["th_Sth"]),
        }

    pts = cps.chart.grid(grid)
    vals = integrands(pts)
    return {k: integrate_periodic(lambda p, v=v: v, cps.metric, grid) for k, v in vals.items()}


def check_rank1_suite(ss: StructureSample, tol=None, tol_scale=1.0, expect="below") -> ResidualReport:
    """Sub-checks (a)-(j) of the rank-one analysis plus theta(xi) = 0."""
    Tl = _Tol(tol, tol_scale)
    cs = ss.cs
    n = ss.n
    g, ginv = cs.g.val, cs.ginv.val
    wit = ss.witness
    xi, Jxi, b = wit.xi, wit.Jxi, wit.b
    J = ss.J.val
    T = cs.T
    t = cs.theta_sharp.val
    th = cs.theta.val
    trT = _tr(T)
    trJT = _tr(J @ T)
    N = len(cs.points)
    nxi = nabla_vector(cs, xi)
    nJxi = nabla_vector(cs, Jxi)
    xi_flat = jeinsum("ij,j->i", cs.g, xi)
    Jxi_flat = jeinsum("ij,j->i", cs.g, Jxi)
    R = cs.riemann
    ip = lambda a, c: cs.inner(a, c)[:, None]  # noqa: E731
    frame = ss.frame
    r = {k: np.zeros(N) for k in ("a", "b", "c", "g", "j")}
    for a in range(n):
        X = frame[:, :, a]
        JX = _mv(J, X)
        TX = _mv(T, X)
        thX = _dot(th, X)[:, None]
        Xxi = ip(X, xi.val)
        JXxi = ip(JX, xi.val)
        ra = np.einsum("bkl,bl->bk", nxi, X) - Xxi * t
        rc = (-thX * t + TX - Xxi * _mv(T, xi.val)) - (_dot(th, Jxi.val)[:, None] * JXxi * t - JXxi * _mv(T, Jxi.val))
        rg = TX - Xxi * _mv(T, xi.val) - thX * t + JXxi * trT[:, None] * Jxi.val
        rj1 = np.einsum("bkl,bl->bk", nxi, X) - b.val[:, None] * Xxi * Jxi.val
        rj2 = np.einsum("bkl,bl->bk", nJxi, X) + b.val[:, None] * Xxi * xi.val
        r["a"] = np.maximum(r["a"], vec_norm(g, ra))
        r["c"] = np.maximum(r["c"], vec_norm(g, rc))
        r["g"] = np.maximum(r["g"], vec_norm(g, rg))
        r["j"] = np.maximum(r["j"], np.maximum(vec_norm(g, rj1), vec_norm(g, rj2)))
        for c in range(n):
            Y = frame[:, :, c]
            RXY = np.einsum("blkij,bk,bi,bj->bl", R, xi.val, X, Y)
            thY = _dot(th, Y)[:, None]
            Yxi = ip(Y, xi.val)
            rhs = thY * Xxi * t - thX * Yxi * t + Yxi * TX - Xxi * _mv(T, Y)
            r["b"] = np.maximum(r["b"], vec_norm(g, RXY - rhs))
    TJxi = _mv(T, Jxi.val)
    rd = vec_norm(g, TJxi - b.val[:, None] * t - trT[:, None] * Jxi.val)
    re = form_norm(ginv, b.der - cs.flat(TJxi) + trJT[:, None] * xi_flat.val)
    rf = np.abs(_dot(b.der, xi.val) + trJT)
    nrm = jeinsum("i,i->", cs.theta, cs.theta_sharp)
    rh = form_norm(ginv, 0.5 * nrm.der - 0.5 * _dot(nrm.der, xi.val)[:, None] * xi_flat.val
                   - nrm.val[:, None] * th - (b.val * trT)[:, None] * Jxi_flat.val)
    th0 = wit.theta0
    nrm0 = jeinsum("i,ij,j->", th0, cs.ginv, th0)
    ri = form_norm(ginv, 0.5 * nrm0.der - 0.5 * _dot(nrm0.der, xi.val)[:, None] * xi_flat.val - nrm0.val[:, None] * th)
    rj_theta = vec_norm(g, t - b.val[:, None] * Jxi.val)
    forms = differential_forms(cs, xi_flat, J)
    xf, Jf = xi_flat.val, Jxi_flat.val
    dixi = np.max(np.stack([
        twoform_norm(ginv, forms["d"] - wedge(xf, th)),
        twoform_norm(ginv, forms["dc"] - wedge(Jf, th)),
        np.abs(forms["delta"] + _dot(th, xi.val)),
        np.abs(forms["deltac"] + _dot(th, Jxi.val)),
    ]), axis=0)
    theta_xi = np.abs(_dot(th, xi.val))
    inv = wit.invariants(cs)
    anchors = {
        "a": "nabla_X xi = <X, xi> theta#",
        "b": "R_{X,Y} xi = theta(Y)<X,xi>theta# - theta(X)<Y,xi>theta# + <Y,xi>TX - <X,xi>TY",
        "c": "-theta(X)theta# + TX - <X,xi>T xi = theta(J xi)<JX,xi>theta# - <JX,xi>TJ xi",
        "d": "TJ xi = b theta# + tr(T) J xi",
        "e": "db = (TJ xi)^flat - tr(JT) xi^flat",
        "f": "xi(b) = -tr(JT)",
        "g": "TX = <X,xi>T xi + theta(X)theta# - <JX,xi>tr(T)J xi",
        "h": "d|theta|^2/2 = xi(|theta|^2)/2 xi^flat + |theta|^2 theta + b tr(T) J xi^flat",
        "i": "d|theta_0|^2/2 = xi(|theta_0|^2)/2 xi^flat + |theta_0|^2 theta",
        "j": "nabla_X xi = b<X,xi>J xi, nabla_X J xi = -b<X,xi>xi",
        "j_theta": "theta# = b J xi",
        "dixi": "d xi^flat = xi^flat ^ theta, d^c xi^flat = J xi^flat ^ theta, delta xi^flat = -theta(xi), delta^c xi^flat = -theta(J xi)",
        "theta_xi": "theta vanishes on T2",
        "witness": "|xi| = 1, theta_0(xi) = theta_0(J xi) = 0",
    }
    resid = {"a": r["a"], "b": r["b"], "c": r["c"], "d": rd, "e": re, "f": rf, "g": r["g"], "h": rh, "i": ri,
             "j": r["j"], "j_theta": rj_theta, "dixi": dixi}
    subs = [ResidualReport.from_residuals(k, anchors[k], v, cs.points, Tl(TOL_CURVATURE), expect) for k, v in resid.items()]
    subs.append(ResidualReport.from_residuals("theta_xi", anchors["theta_xi"], theta_xi, cs.points, Tl(TOL_ALGEBRAIC), expect))
    if expect == "below":
        subs.append(ResidualReport.from_residuals("witness", anchors["witness"], np.max(np.stack(list(inv.values())), axis=0),
                                                  cs.points, Tl(TOL_ALGEBRAIC)))
    return ResidualReport.combine("rank1_suite", "rank-one derivation chain: nabla xi, R xi, T, b, theta_0", subs, expect)


def J_on_form(J: np.ndarray, alpha: np.ndarray) -> np.ndarray:
    """``(J alpha)(X) = -alpha(J X)``; equivalently ``(J alpha)# = J(alpha#)``."""
    return -np.einsum("bm,bml->bl", alpha, J)


def _D_vector(cs: ConnectionSample, V: JetArray, theta_vals: np.ndarray, X: np.ndarray) -> np.ndarray:
    """``D_X V`` for the Weyl connection with Lee form values ``theta_vals``."""
    nab = np.einsum("bkl,bl->bk", nabla_vector(cs, V), X)
    ts = cs.sharp(theta_vals)
    return (nab + _dot(theta_vals, V.val)[:, None] * X + _dot(theta_vals, X)[:, None] * V.val
            - cs.inner(X, V.val)[:, None] * ts)


def construct_weyl_from_eta(cps: CpsMetric, eta: OneFormField, E: Sequence[VectorField], points,
                            tol=None, tol_scale=1.0):
    """Weyl structure from a closed unit 1-form vanishing on a parallel complex subbundle.

    Returns ``(theta, report)`` where ``theta`` holds the Lee form values
    ``J alpha`` at the points, with ``alpha(X) = <nabla_X xi, J xi>`` and
    ``xi = J eta#``.
    """
    Tl = _Tol(tol, tol_scale)
    if cps.J is None:
        raise ValueError("construction needs a complex structure")
    cs = ConnectionSample(cps.metric, points)
    g, ginv = cs.g.val, cs.ginv.val
    J = cps.J.jet1(cs.points)
    w = eta.jet1(cs.points)
    pts = cs.points
    unit = np.abs(form_norm(ginv, w.val) - 1.0)
    if unit.max() > Tl(TOL_ALGEBRAIC):
        raise PreconditionError(f"eta is not of unit length (max deviation {unit.max():.3e})")
    Ej = [F.jet1(pts) for F in E]
    vanish = np.zeros(len(pts))
    for e in Ej:
        vanish = np.maximum(vanish, np.abs(_dot(w.val, e.val)) / vec_norm(g, e.val))
    if vanish.max() > Tl(TOL_ALGEBRAIC):
        raise PreconditionError(f"eta does not vanish on E (max {vanish.max():.3e})")
    d_eta = twoform_norm(ginv, differential_forms(cs, w)["d"])
    if d_eta.max() > Tl(TOL_FIRST):
        raise NotClosed(f"d eta does not vanish (max {d_eta.max():.3e})")
    Emat = np.stack([e.val for e in Ej], axis=2)
    Eon = orthonormal_frame(g, Emat)
    par = np.zeros(len(pts))
    for e in Ej:
        nab = nabla_vector(cs, e)
        for a in range(cs.n):
            v = np.einsum("bkl,bl->bk", nab, cs.frame[:, :, a])
            proj = np.einsum("bka,bk->ba", Eon, cs.flat(v))
            perp = v - np.einsum("bka,ba->bk", Eon, proj)
            par = np.maximum(par, vec_norm(g, perp) / vec_norm(g, e.val))
    if par.max() > Tl(TOL_FIRST):
        raise NotParallel(f"E is not nabla-parallel (max {par.max():.3e})")

    eta_sharp = jeinsum("ij,j->i", cs.ginv, w)
    xi = jeinsum("ij,j->i", J, eta_sharp)
    Jxi = jeinsum("ij,j->i", J, xi)
    nxi = nabla_vector(cs, xi)
    alpha = np.einsum("bij,bil,bj->bl", g, nxi, Jxi.val)
    theta = J_on_form(J.val, alpha)
    xi_flat = cs.flat(xi.val)
    r3 = np.zeros(len(pts))
    split = np.zeros(len(pts))
    perp_frame = [e.val for e in Ej] + [Jxi.val]
    for a in range(cs.n):
        X = cs.frame[:, :, a]
        r3 = np.maximum(r3, vec_norm(g, np.einsum("bkl,bl->bk", nxi, X) - _dot(alpha, X)[:, None] * Jxi.val))
        DX = _D_vector(cs, xi, theta, X)
        for Y in perp_frame:
            split = np.maximum(split, np.abs(cs.inner(DX, Y)) / vec_norm(g, Y))
    subs = [
        ResidualReport.from_residuals("eta_unit", "|eta| = 1", unit, pts, Tl(TOL_ALGEBRAIC)),
        ResidualReport.from_residuals("eta_on_E", "eta|E = 0", vanish, pts, Tl(TOL_ALGEBRAIC)),
        ResidualReport.from_residuals("E_parallel", "E is nabla-parallel", par, pts, Tl(TOL_FIRST)),
        ResidualReport.from_residuals("d_eta", "d eta = 0", d_eta, pts, Tl(TOL_FIRST)),
        ResidualReport.from_residuals("nxi3", "nabla_X xi = alpha(X) J xi", r3, pts, Tl(TOL_FIRST)),
        ResidualReport.from_residuals("nxi4", "alpha ^ xi^flat = 0", twoform_norm(ginv, wedge(alpha, xi_flat)), pts, Tl(TOL_FIRST)),
        ResidualReport.from_residuals("nxi5", "alpha(J xi) = 0", _dot(alpha, Jxi.val), pts, Tl(TOL_FIRST)),
        ResidualReport.from_residuals("D_parallel", "<D_X xi, Y> = 0 for Y orthogonal to xi", split, pts, Tl(TOL_FIRST)),
    ]
    return theta, ResidualReport.combine("construct_eta", "closed unit eta vanishing on a parallel E gives theta = J alpha", subs)


def construct_surface_weyl(cps: CpsMetric, points, xi: Optional[VectorField] = None, tol=None, tol_scale=1.0,
                           J_sign: int = 1, expect: str = "below"):
    """Weyl structure on a surface making the line field of a unit ``xi`` parallel.

    ``J_sign=-1`` applies the opposite convention ``(J alpha)(X) = alpha(J X)``
    and exists to show that it fails.
    """
    Tl = _Tol(tol, tol_scale)
    if cps.dim != 2:
        raise DimensionError("surface construction needs a 2-dimensional chart")
    xi = cps.xi if xi is None else xi
    cs = ConnectionSample(cps.metric, points)
    g = cs.g.val
    J = cps.J.jet1(cs.points)
    xj = xi.jet1(cs.points)
    unit = np.abs(vec_norm(g, xj.val) - 1.0)
    if unit.max() > Tl(TOL_ALGEBRAIC):
        raise PreconditionError(f"xi is not of unit length (max deviation {unit.max():.3e})")
    Jxi = jeinsum("ij,j->i", J, xj)
    nxi = nabla_vector(cs, xj)
    alpha = np.einsum("bij,bil,bj->bl", g, nxi, Jxi.val)
    theta = J_sign * J_on_form(J.val, alpha)
    split = np.zeros(len(cs.points))
    for a in range(2):
        DX = _D_vector(cs, xj, theta, cs.frame[:, :, a])
        split = np.maximum(split, np.abs(cs.inner(DX, Jxi.val)))
    subs = [
        ResidualReport.from_residuals("xi_unit", "|xi| = 1", unit, cs.points, Tl(TOL_ALGEBRAIC)),
        ResidualReport.from_residuals("D_parallel", "<D_X xi, J xi> = 0", split, cs.points, Tl(TOL_FIRST), expect),
    ]
    return theta, ResidualReport.combine("construct_surface", "surface: theta = J alpha makes the line field of xi D-parallel",
                                         subs, expect)


# -------------------------------------------------------- linear-algebra check

def random_orthogonal(n, rng) -> np.ndarray:
    q, r = np.linalg.qr(rng.standard_normal((n, n)))
    return q * np.sign(np.diag(r))


def standard_complex_structure(n) -> np.ndarray:
    J = np.zeros((n, n))
    for k in range(0, n, 2):
        J[k + 1, k] = 1.0
        J[k, k + 1] = -1.0
    return J


def check_ineq_linear_algebra(n: int, trials: int, seed: int, tol=None, tol_scale=1.0) -> ResidualReport:
    """``tr(JSJS) >= -n`` on random orthogonal pairs, equality exactly when SJ = JS."""
    if n % 2:
        raise DimensionError("n must be even")
    Tl = _Tol(tol, tol_scale)
    rng = np.random.default_rng(seed)
    J0 = standard_complex_structure(n)
    violation = np.zeros(trials)
    equality = np.zeros(trials)
    for k in range(trials):
        r = int(rng.integers(0, n + 1))
        S = random_orthogonal(n, rng)
        S = S @ np.diag([1.0] * (n - r) + [-1.0] * r) @ S.T
        P = random_orthogonal(n, rng)
        J = P @ J0 @ P.T
        val = np.trace(J @ S @ J @ S)
        violation[k] = max(0.0, -n - val)
        # commuting pair: S built from J-invariant planes
        m = int(rng.integers(0, n // 2 + 1))
        Sc = P @ np.diag([1.0] * (n - 2 * m) + [-1.0] * (2 * m)) @ P.T
        equality[k] = abs(np.trace(J @ Sc @ J @ Sc) + n)
    subs = [
        ResidualReport.from_residuals("lower_bound", "tr(JSJS) >= -n", violation, None, Tl(TOL_ALGEBRAIC)),
        ResidualReport.from_residuals("equality", "SJ = JS gives tr(JSJS) = -n", equality, None, Tl(TOL_ALGEBRAIC)),
        # exact integer arithmetic: any failing (n, r) pair counts as residual 1
        ResidualReport.from_residuals("integer_identity", "n^2-3n+(n-2r)^2-n-2(n-2)(n-2r) = 4r(r-2), n <= 40",
                                      [len(ineqtheta_integer_identity())], None, 0.0),
    ]
    return ResidualReport.combine("ineq_la", "tr(JSJS) = -<JS, SJ> >= -n, equality iff SJ = JS", subs, values={"n": n, "trials": trials})


def ineqtheta_integer_identity(n_max: int = 40) -> list:
    """``(n, r)`` pairs with ``2 <= r <= n/2`` where the integer identity fails (expected empty)."""
    bad = []
    for n in range(4, n_max + 1):
        for r in range(2, n // 2 + 1):
            if n * n - 3 * n + (n - 2 * r) ** 2 - n - 2 * (n - 2) * (n - 2 * r) != 4 * r * (r - 2):
                bad.append((n, r))
    return bad


# ------------------------------------------------- Weyl structure sanity

def solve_lee_from_splitting(metric: MetricField, t1: Sequence[VectorField], t2: Sequence[VectorField],
                             points) -> np.ndarray:
    """Least-squares Lee form making the splitting D-parallel.

    Solves ``<D_X U, V> = 0`` for all frame directions ``X``, ``U`` in one
    factor and ``V`` in the other, which is linear in ``theta``:
    ``<nabla_X U, V> + theta(U)<X, V> + theta(X)<U, V> - <X, U> theta(V) = 0``.
    Returns values ``(N, n)``.
    """
    cs = ConnectionSample(metric, points)
    N, n = cs.points.shape
    f1 = [F.jet1(cs.points) for F in t1]
    f2 = [F.jet1(cs.points) for F in t2]
    rows, rhs = [], []
    for A, B in ((f1, f2), (f2, f1)):
        for U in A:
            nab = nabla_vector(cs, U)
            for V in B:
                for a in range(n):
                    X = cs.frame[:, :, a]
                    rows.append(U.val * cs.inner(X, V.val)[:, None] + X * cs.inner(U.val, V.val)[:, None]
                                - V.val * cs.inner(X, U.val)[:, None])
                    rhs.append(-cs.inner(np.einsum("bkl,bl->bk", nab, X), V.val))
    A = np.stack(rows, axis=1)
    b = np.stack(rhs, axis=1)
    if np.any(np.linalg.matrix_rank(A) < n):
        raise FrameDegenerate("splitting does not determine the Lee form")
    return np.einsum("bij,bj->bi", np.linalg.pinv(A), b)


def random_lee_form(chart, seed: int, harmonics: int = 2, amplitude: float = 0.3) -> OneFormField:
    """Seeded trigonometric 1-form; periodic axes use integer frequencies."""
    rng = np.random.default_rng(seed)
    comps = []
    for _ in range(chart.dim):
        terms = []
        for _h in range(harmonics):
            k = chart.dim
            freq = rng.integers(-2, 3, size=k)
            phase = rng.uniform(0, 2 * np.pi)
            amp = amplitude * rng.standard_normal()
            arg = " + ".join(
                f"{2 * np.pi * int(f) / (p if p is not None else 1.0):.17g}*{name}"
                for f, p, name in zip(freq, chart.periods, chart.names))
            terms.append(f"{amp:.17g}*cos({arg} + {phase:.17g})")
        comps.append(" + ".join(terms))
    return OneFormField(chart, comps)


def check_weyl_axioms(ss: StructureSample, tol=None, tol_scale=1.0, expect="below") -> ResidualReport:
    """``D g + 2 theta (x) g`` and the torsion ``W^k_ij - W^k_ji``, g-normalized."""
    Tl = _Tol(tol, tol_scale)
    cs = ss.cs
    g = cs.g
    W = cs.weyl.val
    th = cs.theta.val
    # (D_l g)_ij = d_l g_ij - W^m_li g_mj - W^m_lj g_im
    Dg = (g.der - np.einsum("bmli,bmj->bijl", W, g.val) - np.einsum("bmlj,bim->bijl", W, g.val))
    comp = Dg + 2.0 * np.einsum("bl,bij->bijl", th, g.val)
    E = ss.frame
    comp_on = np.einsum("bijl,bia,bjc,bld->bacd", comp, E, E, E)
    tors = W - np.swapaxes(W, 2, 3)
    Einv = np.linalg.inv(E)
    tors_on = np.einsum("bek,bkij,bia,bjc->beac", Einv, tors, E, E)
    subs = [
        ResidualReport.from_residuals("metric", "D g = -2 theta (x) g", np.abs(comp_on).max(axis=(1, 2, 3)),
                                      cs.points, Tl(TOL_ALGEBRAIC * 10), expect),
        ResidualReport.from_residuals("torsion", "D_X Y - D_Y X = [X, Y]", np.abs(tors_on).max(axis=(1, 2, 3)),
                                      cs.points, Tl(TOL_ALGEBRAIC * 10), expect),
    ]
    return ResidualReport.combine("weyl_axioms", "torsion-free, D g = -2 theta (x) g", subs, expect)


def check_exactness(cps: CpsMetric, phi, points, tol=None, tol_scale=1.0) -> ResidualReport:
    """For ``theta = d phi`` the Weyl coefficients equal the Christoffels of ``exp(2 phi) g``."""
    from .chart import ScalarField
    Tl = _Tol(tol, tol_scale)
    f = phi if isinstance(phi, ScalarField) else ScalarField(cps.chart, phi)
    weyl = ConnectionSample(cps.metric, points, f.differential()).weyl.val
    lc = ConnectionSample(cps.metric.conformal(f.exprs[()]), points).christoffel.val
    res = np.abs(weyl - lc).max(axis=(1, 2, 3))
    sub = ResidualReport.from_residuals("christoffel_match", "D = Levi-Civita of exp(2 phi) g", res,
                                        np.atleast_2d(points), Tl(TOL_FIRST))
    return ResidualReport.combine("exactness", "theta = d phi: D is Levi-Civita of exp(2 phi) g", [sub])


def check_geodesic_field(ss: StructureSample, zeta: Optional[VectorField] = None, tol=None, tol_scale=1.0,
                         expect="below") -> ResidualReport:
    """``nabla_zeta zeta = 0`` and ``|zeta| = 1`` for ``zeta = J xi`` by default."""
    Tl = _Tol(tol, tol_scale)
    cs = ss.cs
    Z = zeta.jet1(cs.points) if zeta is not None else ss.witness.Jxi
    acc = np.einsum("bkl,bl->bk", nabla_vector(cs, Z), Z.val)
    subs = [
        ResidualReport.from_residuals("nabla_zeta_zeta", "nabla_zeta zeta = 0", vec_norm(cs.g.val, acc), cs.points,
                                      Tl(1e-9), expect),
        ResidualReport.from_residuals("unit", "|zeta| = 1", vec_norm(cs.g.val, Z.val) - 1.0, cs.points,
                                      Tl(TOL_ALGEBRAIC), expect),
    ]
    return ResidualReport.combine("geodesic_field", "unit geodesic vector field", subs, expect)
