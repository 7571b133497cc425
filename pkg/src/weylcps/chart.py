"""Coordinate charts and smooth fields on them.

Fields are arrays of compiled expressions.  Evaluation is batched: a
point array ``(N, n)`` yields values ``(N, *shape)``, gradients
``(N, *shape, n)`` and Hessians ``(N, *shape, n, n)``.  A single point
``(n,)`` drops the batch axis.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.stats import qmc

from . import expr_lang as el
from .errors import DimensionError, OutOfChart
from .jets import Jet2, JetArray

FD_STEP = 1e-5
FD_STEP2 = 1e-4


@dataclass(frozen=True)
class Chart:
    """Coordinate chart with optional per-axis periods or bounds."""

    names: tuple
    periods: tuple = None
    bounds: tuple = None

    def __post_init__(self):
        names = tuple(self.names)
        object.__setattr__(self, "names", names)
        n = len(names)
        if n < 2:
            raise DimensionError("chart dimension must be at least 2")
        if len(set(names)) != n:
            raise ValueError(f"coordinate names must be distinct: {names}")
        periods = tuple(self.periods) if self.periods is not None else (None,) * n
        bounds = tuple(self.bounds) if self.bounds is not None else (None,) * n
        if len(periods) != n or len(bounds) != n:
            raise DimensionError("periods/bounds length must match chart dimension")
        for p, b, name in zip(periods, bounds, names):
            if p is None and b is None:
                raise ValueError(f"axis {name!r} needs a period or bounds")
            if p is not None and p <= 0:
                raise ValueError(f"period of {name!r} must be positive")
        object.__setattr__(self, "periods", tuple(None if p is None else float(p) for p in periods))
        object.__setattr__(
            self, "bounds", tuple(None if b is None else (float(b[0]), float(b[1])) for b in bounds)
        )

    @property
    def dim(self) -> int:
        return len(self.names)

    @property
    def all_periodic(self) -> bool:
        return all(p is not None for p in self.periods)

    def reduce(self, points) -> np.ndarray:
        """Reduce periodic coordinates; reject points outside bounded axes."""
        x = np.array(points, dtype=float)
        if x.shape[-1] != self.dim:
            raise DimensionError(f"points have {x.shape[-1]} coordinates, chart has {self.dim}")
        for k, (p, b) in enumerate(zip(self.periods, self.bounds)):
            if p is not None:
                x[..., k] = np.mod(x[..., k], p)
            else:
                lo, hi = b
                if np.any(x[..., k] < lo) or np.any(x[..., k] > hi):
                    raise OutOfChart(f"coordinate {self.names[k]!r} outside [{lo}, {hi}]")
        return x

    def sample(self, count: int, seed: int) -> np.ndarray:
        """Deterministic scrambled-Halton sample of the fundamental domain."""
        u = qmc.Halton(d=self.dim, scramble=True, seed=seed).random(count)
        lo = np.array([0.0 if p is not None else b[0] for p, b in zip(self.periods, self.bounds)])
        span = np.array([p if p is not None else b[1] - b[0] for p, b in zip(self.periods, self.bounds)])
        return lo + u * span

    def grid(self, resolution: Sequence[int]) -> np.ndarray:
        axes = []
        for k, m in enumerate(resolution):
            p = self.periods[k]
            if p is not None:
                axes.append(np.arange(m) * (p / m))
            else:
                lo, hi = self.bounds[k]
                axes.append(np.linspace(lo, hi, m + 2)[1:-1])
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)


def _as_batch(points):
    x = np.asarray(points, dtype=float)
    return (x[None, :], True) if x.ndim == 1 else (x, False)


class TensorField:
    """Field whose components are expressions over the chart coordinates.

    ``kind`` is one of ``scalar``, ``vector``, ``oneform``, ``endo``,
    ``metric``.  Components may be given as source strings, numbers or
    expression trees.
    """

    kind = "tensor"

    def __init__(self, chart: Chart, components, kind: Optional[str] = None):
        self.chart = chart
        if kind is not None:
            self.kind = kind
        src = np.empty((), dtype=object)
        src[()] = components
        if isinstance(components, (list, tuple, np.ndarray)):
            src = np.array(components, dtype=object)
        comps = np.empty(src.shape, dtype=object)
        for idx in np.ndindex(src.shape):
            comps[idx] = el.as_expr(src[idx], chart.names)
        expected = {"scalar": (), "vector": (chart.dim,), "oneform": (chart.dim,),
                    "endo": (chart.dim, chart.dim), "metric": (chart.dim, chart.dim)}.get(self.kind)
        if expected is not None and comps.shape != expected:
            raise DimensionError(f"{self.kind} field needs shape {expected}, got {comps.shape}")
        self.exprs = comps
        self.tapes = np.empty(comps.shape, dtype=object)
        for idx in np.ndindex(comps.shape):
            self.tapes[idx] = el.compile_expr(comps[idx], chart.names)

    @property
    def shape(self):
        return self.exprs.shape

    def source(self):
        out = np.empty(self.shape, dtype=object)
        for idx in np.ndindex(self.shape):
            out[idx] = el.to_string(self.exprs[idx])
        return out.tolist() if self.shape else out.item()

    def _unique_indices(self):
        return list(np.ndindex(self.shape))

    def jet(self, points, reduce: bool = True):
        """Values, gradients and Hessians at ``points``."""
        x, single = _as_batch(points)
        if reduce:
            x = self.chart.reduce(x)
        N, n = x.shape[0], self.chart.dim
        val = np.zeros((N,) + self.shape)
        grad = np.zeros((N,) + self.shape + (n,))
        hess = np.zeros((N,) + self.shape + (n, n))
        cache = {}
        for idx in self._unique_indices():
            tape = self.tapes[idx]
            key = tape.instructions
            if key not in cache:
                if tape.is_constant:
                    cache[key] = (tape.value(x), None, None)
                else:
                    j = tape.jet(x)
                    cache[key] = (j.value, j.grad, j.hessian)
            v, g, h = cache[key]
            val[(slice(None),) + idx] = v
            if g is not None:
                grad[(slice(None),) + idx] = g
                hess[(slice(None),) + idx] = h
        if single:
            return val[0], grad[0], hess[0]
        return val, grad, hess

    def values(self, points, reduce: bool = True) -> np.ndarray:
        x, single = _as_batch(points)
        if reduce:
            x = self.chart.reduce(x)
        out = np.zeros((x.shape[0],) + self.shape)
        for idx in self._unique_indices():
            out[(slice(None),) + idx] = self.tapes[idx].value(x)
        return out[0] if single else out

    def jet1(self, points) -> JetArray:
        x, _ = _as_batch(points)
        v, g, _h = self.jet(x)
        return JetArray(v, g)

    def _combine(self, other, fn):
        if type(other) is not type(self) or other.shape != self.shape:
            raise TypeError("fields must be of the same kind and shape")
        comps = np.empty(self.shape, dtype=object)
        for idx in np.ndindex(self.shape):
            comps[idx] = fn(self.exprs[idx], other.exprs[idx])
        return type(self)(self.chart, comps.tolist() if self.shape else comps.item(), self.kind)

    def __add__(self, other):
        return self._combine(other, el.add)

    def __sub__(self, other):
        return self._combine(other, el.sub)

    def scaled(self, factor):
        f = el.as_expr(factor, self.chart.names)
        comps = np.empty(self.shape, dtype=object)
        for idx in np.ndindex(self.shape):
            comps[idx] = el.mul(f, self.exprs[idx])
        return type(self)(self.chart, comps.tolist() if self.shape else comps.item(), self.kind)


class ScalarField(TensorField):
    kind = "scalar"

    def __init__(self, chart, expr, kind=None):
        super().__init__(chart, expr if not isinstance(expr, list) else expr[0], "scalar")

    def jet2(self, points) -> Jet2:
        x, _ = _as_batch(points)
        return self.tapes[()].jet(self.chart.reduce(x))

    def differential(self) -> "OneFormField":
        return OneFormField(self.chart, [el.differentiate(self.exprs[()], v) for v in self.chart.names])


class VectorField(TensorField):
    kind = "vector"

    def __init__(self, chart, components, kind=None):
        super().__init__(chart, list(components), "vector")


class OneFormField(TensorField):
    kind = "oneform"

    def __init__(self, chart, components, kind=None):
        super().__init__(chart, list(components), "oneform")


class EndoField(TensorField):
    kind = "endo"

    def __init__(self, chart, components, kind=None):
        super().__init__(chart, [list(r) for r in components], "endo")


def coordinate_field(chart: Chart, k: int) -> VectorField:
    return VectorField(chart, [1.0 if i == k else 0.0 for i in range(chart.dim)])


def zero_oneform(chart: Chart) -> OneFormField:
    return OneFormField(chart, [0.0] * chart.dim)


# ------------------------------------------------------------------ operations

def eval_field(f: TensorField, p):
    """Component values with first and second derivatives at ``p``."""
    return f.jet(p)


def lie_bracket(X: VectorField, Y: VectorField, p) -> np.ndarray:
    """Components of ``[X, Y] = (dY) X - (dX) Y`` at ``p``."""
    xv, xd, _ = X.jet(p)
    yv, yd, _ = Y.jet(p)
    return np.einsum("...kl,...l->...k", yd, xv) - np.einsum("...kl,...l->...k", xd, yv)


def fd_oracle(f: TensorField, p, h: float = FD_STEP, h2: float = FD_STEP2):
    """Central-difference jet built only from the value channel.

    Gradient uses step ``h``; the Hessian uses the second-order stencil with
    step ``h2``.  Returns ``(value, gradient, hessian)`` shaped like
    ``TensorField.jet``.
    """
    x, single = _as_batch(p)
    n = f.chart.dim
    eye = np.eye(n)

    def F(y):
        return f.values(y)

    base = F(x)
    grad = np.zeros(base.shape + (n,))
    hess = np.zeros(base.shape + (n, n))
    for k in range(n):
        grad[..., k] = (F(x + h * eye[k]) - F(x - h * eye[k])) / (2 * h)
        hess[..., k, k] = (F(x + h2 * eye[k]) - 2 * base + F(x - h2 * eye[k])) / (h2 * h2)
    for k, l in itertools.combinations(range(n), 2):
        ek, elv = h2 * eye[k], h2 * eye[l]
        mixed = (F(x + ek + elv) - F(x + ek - elv) - F(x - ek + elv) + F(x - ek - elv)) / (4 * h2 * h2)
        hess[..., k, l] = mixed
        hess[..., l, k] = mixed
    if single:
        return base[0], grad[0], hess[0]
    return base, grad, hess
