"""Parallel transport along loops, geodesics and principal angles.

Transport solves ``v' = -W(gamma', v)`` where ``W`` are the connection
coefficients of the Weyl connection (Levi-Civita when the Lee form is
zero).  A scalar channel carries the running integral of ``theta(gamma')``
so the length scaling ``exp(-int theta)`` is computed with the same steps.
Integration is classical RK4 with uniform steps, doubled until the
Richardson estimate ``|y_2m - y_m| / 15`` falls below the tolerance.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import scipy.linalg

from .chart import Chart, OneFormField, TensorField
from .errors import DimensionError, FrameDegenerate, ToleranceNotMet
from .metric_lab import MetricField

MAX_HALVINGS = 12
INITIAL_STEPS = 16


# ------------------------------------------------------------------ loops

@dataclass(frozen=True)
class FourierSegment:
    """``p0 + sum_h a_h (cos(2 pi h tau) - 1) + b_h sin(2 pi h tau)``, tau in [0, 1]."""

    p0: np.ndarray
    a: np.ndarray  # (H, n)
    b: np.ndarray  # (H, n)

    def position(self, tau):
        tau = np.asarray(tau, dtype=float)[..., None, None]
        h = np.arange(1, len(self.a) + 1)[:, None]
        w = 2 * np.pi * h * tau
        return self.p0 + np.sum(self.a * (np.cos(w) - 1.0) + self.b * np.sin(w), axis=-2)

    def velocity(self, tau):
        tau = np.asarray(tau, dtype=float)[..., None, None]
        h = np.arange(1, len(self.a) + 1)[:, None]
        w = 2 * np.pi * h * tau
        return np.sum(2 * np.pi * h * (-self.a * np.sin(w) + self.b * np.cos(w)), axis=-2)


@dataclass(frozen=True)
class LinearSegment:
    start: np.ndarray
    end: np.ndarray

    def position(self, tau):
        tau = np.asarray(tau, dtype=float)[..., None]
        return self.start + tau * (self.end - self.start)

    def velocity(self, tau):
        tau = np.asarray(tau, dtype=float)
        return np.broadcast_to(self.end - self.start, tau.shape + self.start.shape)


@dataclass
class LoopPath:
    """Closed curve made of segments parameterized over [0, 1] each."""

    chart: Chart
    segments: list

    def __post_init__(self):
        if not self.segments:
            raise ValueError("a loop needs at least one segment")
        for k, seg in enumerate(self.segments):
            nxt = self.segments[(k + 1) % len(self.segments)]
            gap = self._wrapped(seg.position(1.0) - nxt.position(0.0))
            if np.max(np.abs(gap)) > 1e-12:
                raise ValueError(f"segment {k} does not join the next one (gap {np.max(np.abs(gap)):.2e})")

    def _wrapped(self, d):
        d = np.array(d, dtype=float)
        for k, p in enumerate(self.chart.periods):
            if p is not None:
                d[..., k] -= p * np.round(d[..., k] / p)
        return d

    @property
    def start(self) -> np.ndarray:
        return np.asarray(self.segments[0].position(0.0))

    @property
    def length(self) -> float:
        """Total parameter length (one unit per segment)."""
        return float(len(self.segments))

    @classmethod
    def polygon(cls, chart, vertices):
        v = [np.asarray(p, dtype=float) for p in vertices]
        return cls(chart, [LinearSegment(v[k], v[(k + 1) % len(v)]) for k in range(len(v))])


def random_loops(chart: Chart, count: int, seed: int, harmonics: int = 3, amplitude: float = 0.2,
                 center=None) -> list:
    """Seeded Fourier loops whose excursion per axis stays within ``amplitude``.

    Base points are drawn uniformly from the fundamental domain (shrunk by
    ``amplitude`` on bounded axes) unless ``center`` is given.
    """
    rng = np.random.default_rng(seed)
    n = chart.dim
    loops = []
    for _ in range(count):
        if center is None:
            p0 = np.empty(n)
            for k, (p, b) in enumerate(zip(chart.periods, chart.bounds)):
                if p is not None:
                    p0[k] = rng.uniform(0.0, p)
                else:
                    lo, hi = b[0] + amplitude, b[1] - amplitude
                    if lo >= hi:
                        raise ValueError("amplitude too large for bounded axis")
                    p0[k] = rng.uniform(lo, hi)
        else:
            p0 = np.asarray(center, dtype=float).copy()
        decay = 1.0 / np.arange(1, harmonics + 1)[:, None]
        a = rng.standard_normal((harmonics, n)) * decay
        b = rng.standard_normal((harmonics, n)) * decay
        bound = np.sum(2 * np.abs(a) + np.abs(b), axis=0)
        scale = amplitude * rng.uniform(0.5, 1.0, size=n) / bound
        loops.append(LoopPath(chart, [FourierSegment(p0, a * scale, b * scale)]))
    return loops


# ---------------------------------------------------------- connection data

def christoffel_values(metric: MetricField, x: np.ndarray):
    """``(g, Gamma)`` values at points ``x`` (chart-reduced)."""
    val, grad, _ = metric.jet(x)
    ginv = np.linalg.inv(val)
    K = (np.einsum("bjli->blij", grad) + np.einsum("bilj->blij", grad) - np.einsum("bijl->blij", grad))
    return val, 0.5 * np.einsum("bkl,blij->bkij", ginv, K), ginv


def weyl_values(metric: MetricField, lee: Optional[TensorField], x: np.ndarray):
    """``(g, W, theta)`` with ``D_{d_i} d_j = W[k, i, j] d_k``."""
    g, G, ginv = christoffel_values(metric, x)
    n = g.shape[-1]
    if lee is None:
        return g, G, np.zeros(x.shape)
    th = lee.values(x)
    ts = np.einsum("bij,bj->bi", ginv, th)
    eye = np.eye(n)
    W = (G + np.einsum("ki,bj->bkij", eye, th) + np.einsum("kj,bi->bkij", eye, th)
         - np.einsum("bij,bk->bkij", g, ts))
    return g, W, th


# --------------------------------------------------------------- transport

@dataclass
class TransportResult:
    """End frame of a transport, its error estimate and derived diagnostics."""

    loop: LoopPath
    start_frame: np.ndarray
    end_frame: np.ndarray
    lee_integral: float
    error: float
    steps: int
    angles: dict = field(default_factory=dict)

    @property
    def length_scaling(self) -> float:
        """Predicted length ratio ``exp(-int theta)``."""
        return float(np.exp(-self.lee_integral))


def _rk4_transport(metric, lee, loops, V0, steps):
    """Transport every loop in lockstep with ``steps`` uniform steps per segment."""
    L = len(loops)
    n = V0.shape[1]
    nseg = len(loops[0].segments)
    V = V0.copy()
    I = np.zeros(L)
    h = 1.0 / steps

    def rhs(tau, seg_idx, V):
        x = np.stack([lp.segments[seg_idx].position(tau) for lp in loops])
        dx = np.stack([lp.segments[seg_idx].velocity(tau) for lp in loops])
        _g, W, th = weyl_values(metric, lee, x)
        dV = -np.einsum("bkij,bi,bjm->bkm", W, dx, V)
        dI = np.einsum("bi,bi->b", th, dx)
        return dV, dI

    for s in range(nseg):
        for k in range(steps):
            t0 = k * h
            k1v, k1i = rhs(t0, s, V)
            k2v, k2i = rhs(t0 + h / 2, s, V + h / 2 * k1v)
            k3v, k3i = rhs(t0 + h / 2, s, V + h / 2 * k2v)
            k4v, k4i = rhs(t0 + h, s, V + h * k3v)
            V = V + h / 6 * (k1v + 2 * k2v + 2 * k3v + k4v)
            I = I + h / 6 * (k1i + 2 * k2i + 2 * k3i + k4i)
    return V, I


def transport_batch(metric: MetricField, lee: Optional[TensorField], loops: Sequence[LoopPath], frame0,
                    tol: float = 1e-8, initial_steps: int = INITIAL_STEPS,
                    max_halvings: int = MAX_HALVINGS) -> list:
    """Parallel transport of ``frame0`` (``(n, m)`` or ``(L, n, m)``) around each loop."""
    loops = list(loops)
    if tol <= 0:
        raise ValueError("tol must be positive")
    if len({len(lp.segments) for lp in loops}) != 1:
        # lockstep needs equal segment counts; fall back to one loop at a time
        out = []
        for k, lp in enumerate(loops):
            f0 = np.asarray(frame0, dtype=float)
            out += transport_batch(metric, lee, [lp], f0[k] if f0.ndim == 3 else f0, tol, initial_steps, max_halvings)
        return out
    L = len(loops)
    F0 = np.asarray(frame0, dtype=float)
    if F0.ndim == 2:
        F0 = np.broadcast_to(F0, (L,) + F0.shape)
    F0 = np.array(F0)
    if F0.shape[1] != metric.chart.dim:
        raise DimensionError("frame vectors must have one component per coordinate")
    steps = initial_steps
    V, I = _rk4_transport(metric, lee, loops, F0, steps)
    for _ in range(max_halvings):
        V2, I2 = _rk4_transport(metric, lee, loops, F0, 2 * steps)
        err = np.maximum(np.abs(V2 - V).max(axis=(1, 2)), np.abs(I2 - I)) / 15.0
        steps *= 2
        V, I = V2, I2
        if np.all(err < tol):
            return [TransportResult(lp, F0[k], V[k], float(I[k]), float(err[k]), steps)
                    for k, lp in enumerate(loops)]
    raise ToleranceNotMet(f"transport error {err.max():.3e} above {tol:.1e} after {max_halvings} halvings")


def parallel_transport(W, loop: LoopPath, frame0, tol: float = 1e-8) -> TransportResult:
    """Transport ``frame0`` around ``loop`` under the Weyl connection ``W``."""
    return transport_batch(W.metric, W.lee, [loop], frame0, tol)[0]


# ---------------------------------------------------------------- geodesics

@dataclass
class GeodesicPath:
    points: np.ndarray  # (m + 1, n), unreduced chart coordinates
    velocities: np.ndarray
    speed: np.ndarray  # g-norm of the velocity at each sample
    error: float
    steps: int

    @property
    def speed_drift(self) -> float:
        return float(np.max(np.abs(self.speed - self.speed[0])))


def _rk4_geodesic(metric, x0, v0, length, steps):
    h = length / steps

    def rhs(y):
        x, v = y[:, 0], y[:, 1]
        _g, G, _ = christoffel_values(metric, x)
        return np.stack([v, -np.einsum("bkij,bi,bj->bk", G, v, v)], axis=1)

    y = np.stack([x0, v0])[None]
    path = [y[0]]
    for _ in range(steps):
        k1 = rhs(y)
        k2 = rhs(y + h / 2 * k1)
        k3 = rhs(y + h / 2 * k2)
        k4 = rhs(y + h * k3)
        y = y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        path.append(y[0])
    return np.array(path)


def geodesic_integrate(metric: MetricField, x0, v0, length: float, tol: float = 1e-10,
                       initial_steps: int = 64, max_halvings: int = MAX_HALVINGS) -> GeodesicPath:
    """Unit-speed geodesic from ``x0`` in direction ``v0`` over arclength ``length``."""
    x0 = np.asarray(x0, dtype=float)
    v0 = np.asarray(v0, dtype=float)
    g0 = metric.values(x0)
    nrm = float(np.sqrt(v0 @ g0 @ v0))
    if not nrm > 0:
        raise ValueError("initial velocity must be nonzero")
    v0 = v0 / nrm
    steps = initial_steps
    path = _rk4_geodesic(metric, x0, v0, length, steps)
    for _ in range(max_halvings):
        fine = _rk4_geodesic(metric, x0, v0, length, 2 * steps)
        err = float(np.abs(fine[-1] - path[-1]).max() / 15.0)
        steps *= 2
        path = fine
        if err < tol:
            x, v = path[:, 0], path[:, 1]
            g = metric.values(x)
            speed = np.sqrt(np.einsum("bi,bij,bj->b", v, g, v))
            return GeodesicPath(x, v, speed, err, steps)
    raise ToleranceNotMet(f"geodesic error {err:.3e} above {tol:.1e} after {max_halvings} halvings")


# ---------------------------------------------------------------- subspaces

def subspace_angles(A, B, g) -> np.ndarray:
    """Principal angles (descending) between column spans of ``A`` and ``B`` in the metric ``g``."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    if A.ndim == 1 or A.shape[0] != np.shape(g)[0]:
        A = A.reshape(np.shape(g)[0], -1)
    if B.ndim == 1 or B.shape[0] != np.shape(g)[0]:
        B = B.reshape(np.shape(g)[0], -1)
    if A.shape[1] != B.shape[1]:
        raise FrameDegenerate("subspaces must have equal dimension")
    Lt = np.linalg.cholesky(np.asarray(g, dtype=float)).T
    a, b = Lt @ A, Lt @ B
    for m in (a, b):
        s = np.linalg.svd(m, compute_uv=False)
        if s[-1] <= 1e-12 * max(s[0], 1.0):
            raise FrameDegenerate("frame columns are dependent")
    return scipy.linalg.subspace_angles(a, b)


def holonomy_report(metric: MetricField, lee, t1, t2, loops: Sequence[LoopPath], tol: float = 1e-8) -> list:
    """Transport the joint T1 + T2 frame around each loop and attach angle/scaling diagnostics.

    ``t1``/``t2`` are lists of vector fields.  Each result gains
    ``angles["T1"]``, ``angles["T2"]`` (max principal angle against the
    frame at the base point), ``angles["conformal"]`` (max deviation of the
    transported Gram matrix from ``exp(-2 int theta)`` times the initial one).
    """
    r1 = len(t1)
    base = np.stack([lp.start for lp in loops])
    frames = np.stack([np.stack([F.values(base) for F in list(t1) + list(t2)], axis=2)], axis=0)[0]
    results = transport_batch(metric, lee, loops, frames, tol)
    for res, p in zip(results, base):
        g = metric.values(p)
        V0, V1 = res.start_frame, res.end_frame
        res.angles["T1"] = float(np.max(subspace_angles(V1[:, :r1], V0[:, :r1], g)))
        res.angles["T2"] = float(np.max(subspace_angles(V1[:, r1:], V0[:, r1:], g)))
        G0 = V0.T @ g @ V0
        G1 = V1.T @ g @ V1
        res.angles["conformal"] = float(np.max(np.abs(G1 - res.length_scaling ** 2 * G0)) / np.max(np.abs(G0)))
        lens0 = np.sqrt(np.diag(G0))
        lens1 = np.sqrt(np.diag(G1))
        res.angles["scaling"] = float(np.max(np.abs(lens1 / lens0 - res.length_scaling)))
    return results
