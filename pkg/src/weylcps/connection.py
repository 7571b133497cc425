"""Levi-Civita and Weyl connections, curvature and first-order operators.

Index conventions (batch axis first, omitted below):

* ``christoffel.val[k, i, j]`` is Gamma^k_ij, ``christoffel.der[k, i, j, l]``
  its derivative along coordinate ``l``;
* ``riemann[l, k, i, j]`` is the l-component of R(d_i, d_j) d_k with
  ``R_{X,Y} = nabla_X nabla_Y - nabla_Y nabla_X - nabla_[X,Y]``;
* endomorphisms act on column vectors, ``E[i, j]`` = i-component of E(d_j);
* ``nabla`` of a field carries the direction as the last axis.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Optional, Union

import numpy as np

from .chart import OneFormField, TensorField, VectorField, _as_batch
from .errors import FrameDegenerate
from .jets import JetArray, jeinsum
from .metric_lab import MetricField, check_positive_definite


@dataclass(frozen=True)
class WeylData:
    """A metric and the Lee form of a Weyl connection (``None`` means zero)."""

    metric: MetricField
    lee: Optional[OneFormField] = None

    @property
    def chart(self):
        return self.metric.chart

    def sample(self, points) -> "ConnectionSample":
        return ConnectionSample(self.metric, points, self.lee)


def _levi_civita(g: JetArray, ginv: JetArray, hess: np.ndarray) -> JetArray:
    dg = JetArray(g.der, hess)  # dg.val[a, b, c] = d_c g_ab
    K = jeinsum("jli->lij", dg) + jeinsum("ilj->lij", dg) - jeinsum("ijl->lij", dg)
    return jeinsum("kl,lij->kij", ginv, K) * 0.5


def _curvature_from(G: JetArray) -> np.ndarray:
    d = G.der
    v = G.val
    return (
        np.einsum("bljki->blkij", d)
        - np.einsum("blikj->blkij", d)
        + np.einsum("blim,bmjk->blkij", v, v)
        - np.einsum("bljm,bmik->blkij", v, v)
    )


class ConnectionSample:
    """Connection data of (g, theta) evaluated once at a batch of points.

    ``lee`` may be a ``OneFormField`` (derivatives available, so ``T`` and
    Weyl curvature work), an array of values ``(N, n)``, or ``None``.
    """

    def __init__(self, metric: MetricField, points, lee: Union[OneFormField, np.ndarray, None] = None):
        x, self.single = _as_batch(points)
        self.metric = metric
        self.chart = metric.chart
        self.points = self.chart.reduce(x)
        self.n = self.chart.dim
        self._lee = lee

    # ---------------------------------------------------------------- metric
    @cached_property
    def _metric_jet(self):
        return self.metric.jet(self.points, reduce=False)

    @cached_property
    def g(self) -> JetArray:
        val, grad, _ = self._metric_jet
        return JetArray(val, grad)

    @cached_property
    def ginv(self) -> JetArray:
        return self.g.inv()

    @cached_property
    def christoffel(self) -> JetArray:
        return _levi_civita(self.g, self.ginv, self._metric_jet[2])

    @cached_property
    def riemann(self) -> np.ndarray:
        return _curvature_from(self.christoffel)

    # -------------------------------------------------------------- Lee form
    @cached_property
    def has_lee_derivatives(self) -> bool:
        return not isinstance(self._lee, np.ndarray)

    @cached_property
    def theta(self) -> JetArray:
        N, n = self.points.shape
        if self._lee is None:
            return JetArray(np.zeros((N, n)), np.zeros((N, n, n)))
        if isinstance(self._lee, np.ndarray):
            vals = np.broadcast_to(self._lee, (N, n)).astype(float)
            return JetArray(vals, np.full((N, n, n), np.nan))
        val, grad, _ = self._lee.jet(self.points, reduce=False)
        return JetArray(val, grad)

    @cached_property
    def theta_sharp(self) -> JetArray:
        return jeinsum("ij,j->i", self.ginv, self.theta)

    @cached_property
    def T(self) -> np.ndarray:
        """Endomorphism ``X -> nabla_X theta^sharp``."""
        if not self.has_lee_derivatives:
            raise ValueError("Lee form given by values only; nabla theta unavailable")
        return nabla_vector(self, self.theta_sharp)

    @cached_property
    def weyl(self) -> JetArray:
        """Weyl coefficients ``D_{d_i} d_j = W[k, i, j] d_k``."""
        eye = np.broadcast_to(np.eye(self.n), (self.points.shape[0], self.n, self.n))
        th = self.theta
        corr = (jeinsum("ki,j->kij", eye, th) + jeinsum("kj,i->kij", eye, th)
                - jeinsum("ij,k->kij", self.g, self.theta_sharp))
        return self.christoffel + corr

    @cached_property
    def weyl_riemann(self) -> np.ndarray:
        return _curvature_from(self.weyl)

    # ------------------------------------------------------------ utilities
    def inner(self, X, Y) -> np.ndarray:
        return np.einsum("bi,bij,bj->b", X, self.g.val, Y)

    def flat(self, X) -> np.ndarray:
        return np.einsum("bij,bj->bi", self.g.val, X)

    def sharp(self, w) -> np.ndarray:
        return np.einsum("bij,bj->bi", self.ginv.val, w)

    @cached_property
    def frame(self) -> np.ndarray:
        """Orthonormal frame ``(N, n, n)``; column ``a`` is ``e_a``."""
        return orthonormal_frame(self.g.val)


def orthonormal_frame(g: np.ndarray, basis: Optional[np.ndarray] = None) -> np.ndarray:
    """Modified Gram-Schmidt of ``basis`` columns (default coordinate frame)."""
    N, n = g.shape[0], g.shape[-1]
    basis = np.eye(n) if basis is None else np.asarray(basis, dtype=float)
    E = np.array(np.broadcast_to(basis, (N, n, basis.shape[-1])))
    for a in range(E.shape[-1]):
        for c in range(a):
            proj = np.einsum("bi,bij,bj->b", E[:, :, c], g, E[:, :, a])
            E[:, :, a] -= proj[:, None] * E[:, :, c]
        norm2 = np.einsum("bi,bij,bj->b", E[:, :, a], g, E[:, :, a])
        if np.any(norm2 <= 1e-28):
            raise FrameDegenerate("Gram-Schmidt met a dependent vector")
        E[:, :, a] /= np.sqrt(norm2)[:, None]
    return E


# -------------------------------------------------------- covariant derivatives

def nabla_vector(cs: ConnectionSample, V: JetArray) -> np.ndarray:
    """``out[k, l] = (nabla_l V)^k``."""
    return V.der + np.einsum("bklm,bm->bkl", cs.christoffel.val, V.val)


def nabla_oneform(cs: ConnectionSample, w: JetArray) -> np.ndarray:
    """``out[k, l] = (nabla_l w)_k``."""
    return w.der - np.einsum("bmlk,bm->bkl", cs.christoffel.val, w.val)


def nabla_endo(cs: ConnectionSample, E: JetArray) -> np.ndarray:
    """``out[i, j, l] = (nabla_l E)^i_j``."""
    G = cs.christoffel.val
    return E.der + np.einsum("bilm,bmj->bijl", G, E.val) - np.einsum("bim,bmlj->bijl", E.val, G)


def weyl_endo_derivative(cs: ConnectionSample, E: JetArray) -> np.ndarray:
    """``out[i, j, l] = (D_l E)^i_j`` for the Weyl connection."""
    W = cs.weyl.val
    return E.der + np.einsum("bilm,bmj->bijl", W, E.val) - np.einsum("bim,bmlj->bijl", E.val, W)


def _field_jet(F, cs: ConnectionSample) -> JetArray:
    if isinstance(F, JetArray):
        return F
    if isinstance(F, TensorField):
        val, grad, _ = F.jet(cs.points, reduce=False)
        return JetArray(val, grad)
    arr = np.broadcast_to(np.asarray(F, dtype=float), cs.points.shape)
    return JetArray.constant(arr, cs.n)


def _direction(X, cs):
    if isinstance(X, TensorField):
        return X.values(cs.points, reduce=False)
    if isinstance(X, JetArray):
        return X.val
    return np.broadcast_to(np.asarray(X, dtype=float), cs.points.shape)


def _out(cs, arr):
    return arr[0] if cs.single else arr


def christoffels(g: MetricField, p) -> ConnectionSample:
    """Levi-Civita connection sample at ``p`` (Gamma and dGamma)."""
    cs = ConnectionSample(g, p)
    _ = cs.christoffel
    return cs


def weyl_derivative(W: WeylData, X, Y, p) -> np.ndarray:
    """``D_X Y = nabla_X Y + theta(Y) X + theta(X) Y - <X, Y> theta^sharp``."""
    cs = W.sample(p)
    x = _direction(X, cs)
    Yj = _field_jet(Y, cs)
    nab = np.einsum("bkl,bl->bk", nabla_vector(cs, Yj), x)
    th = cs.theta.val
    out = (nab + np.einsum("bi,bi->b", th, Yj.val)[:, None] * x
           + np.einsum("bi,bi->b", th, x)[:, None] * Yj.val
           - cs.inner(x, Yj.val)[:, None] * cs.theta_sharp.val)
    return _out(cs, out)


def covariant_derivative(g: MetricField, F, X, p, kind: Optional[str] = None) -> np.ndarray:
    """``nabla_X F`` for a vector field, 1-form or endomorphism field."""
    cs = ConnectionSample(g, p)
    kind = kind or getattr(F, "kind", None)
    Fj = _field_jet(F, cs)
    x = _direction(X, cs)
    if kind == "vector":
        out = np.einsum("bkl,bl->bk", nabla_vector(cs, Fj), x)
    elif kind == "oneform":
        out = np.einsum("bkl,bl->bk", nabla_oneform(cs, Fj), x)
    elif kind in ("endo", "metric"):
        if kind == "metric":
            # (nabla_l g)_ij
            G = cs.christoffel.val
            out = (Fj.der - np.einsum("bmli,bmj->bijl", G, Fj.val) - np.einsum("bmlj,bim->bijl", G, Fj.val))
        else:
            out = nabla_endo(cs, Fj)
        out = np.einsum("bijl,bl->bij", out, x)
    else:
        raise ValueError(f"unsupported field kind {kind!r}")
    return _out(cs, out)


def lee_endomorphism(W: WeylData, p) -> np.ndarray:
    """``T = nabla theta`` as an endomorphism at ``p``."""
    cs = W.sample(p)
    return _out(cs, cs.T)


def curvature(W, X, Y, Z, p, weyl: bool = False) -> np.ndarray:
    """``R_{X,Y} Z``; ``W`` is a ``WeylData`` or a bare ``MetricField``."""
    if isinstance(W, MetricField):
        W = WeylData(W)
    cs = W.sample(p)
    R = cs.weyl_riemann if weyl else cs.riemann
    x, y, z = (_direction(v, cs) for v in (X, Y, Z))
    return _out(cs, np.einsum("blkij,bk,bi,bj->bl", R, z, x, y))


def curvature_operator(cs: ConnectionSample, x, y, weyl: bool = False) -> np.ndarray:
    R = cs.weyl_riemann if weyl else cs.riemann
    return np.einsum("blkij,bi,bj->blk", R, x, y)


def curvature_on_endo(W, X, Y, S, p, weyl: bool = False) -> np.ndarray:
    """``R_{X,Y} S = [R_{X,Y}, S]`` as a matrix at ``p``."""
    if isinstance(W, MetricField):
        W = WeylData(W)
    cs = W.sample(p)
    x, y = _direction(X, cs), _direction(Y, cs)
    Sv = S.values(cs.points, reduce=False) if isinstance(S, TensorField) else np.broadcast_to(S, (cs.points.shape[0], cs.n, cs.n))
    Rm = curvature_operator(cs, x, y, weyl)
    return _out(cs, Rm @ Sv - Sv @ Rm)


# ------------------------------------------------------------ exterior calculus

def wedge(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """``(a ^ b)(X, Y) = a(X) b(Y) - a(Y) b(X)`` as an antisymmetric matrix."""
    return np.einsum("bi,bj->bij", a, b) - np.einsum("bj,bi->bij", a, b)


def differential_forms(cs: ConnectionSample, w: JetArray, J: Optional[np.ndarray] = None) -> dict:
    """d, delta, d^c and delta^c of the 1-form jet ``w`` at the sample points.

    Frame sums run over the deterministic Gram-Schmidt frame of ``cs``.
    """
    nab = nabla_oneform(cs, w)  # [k, l] = (nabla_l w)_k
    E = cs.frame
    grads = np.einsum("bkl,bla->bak", nab, E)  # nabla_{e_a} w
    out = {
        "d": np.swapaxes(nab, 1, 2) - nab,
        "delta": -np.einsum("bak,bka->b", grads, E),
    }
    if J is not None:
        JE = np.einsum("bij,bja->bia", J, E)
        JEflat = np.einsum("bij,bja->bai", cs.g.val, JE)
        out["dc"] = sum(wedge(JEflat[:, a], grads[:, a]) for a in range(cs.n))
        out["deltac"] = -np.einsum("bak,bka->b", grads, JE)
    return out


def differential_ops(g: MetricField, J, omega, p) -> dict:
    """``{d, delta, dc, deltac}`` of the 1-form field ``omega`` at ``p``."""
    cs = ConnectionSample(g, p)
    w = _field_jet(omega, cs)
    Jv = None
    if J is not None:
        Jv = J.values(cs.points, reduce=False) if isinstance(J, TensorField) else np.broadcast_to(J, (cs.points.shape[0], cs.n, cs.n))
    res = differential_forms(cs, w, Jv)
    return {k: _out(cs, v) for k, v in res.items()}


def codifferential(cs: ConnectionSample, w: JetArray) -> np.ndarray:
    return differential_forms(cs, w)["delta"]
