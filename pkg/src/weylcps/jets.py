"""Forward-mode jets.

``Jet2`` is the scalar atom of all differentiation: value, gradient and
Hessian with respect to the chart coordinates.  Every array carries an
arbitrary leading batch shape so one jet holds the same scalar sampled
at many points.  Hessians are stored as packed upper triangles, which
makes their symmetry structural.

``JetArray`` is the first-order companion used for tensor fields: a
value array of shape ``batch + shape`` together with its coordinate
derivatives of shape ``batch + shape + (n,)``.  ``jeinsum`` contracts
jet arrays with the product rule applied automatically.
"""
from __future__ import annotations

import string
from functools import lru_cache

import numpy as np

from .errors import DomainError


@lru_cache(maxsize=None)
def triu_indices(n: int):
    return np.triu_indices(n)


@lru_cache(maxsize=None)
def _unpack_index(n: int):
    # full (i, j) -> packed slot
    iu, ju = triu_indices(n)
    idx = np.empty((n, n), dtype=np.intp)
    idx[iu, ju] = np.arange(iu.size)
    idx[ju, iu] = np.arange(iu.size)
    return idx


def pack_symmetric(h: np.ndarray) -> np.ndarray:
    """Upper triangle of ``h[..., n, n]`` as ``[..., n(n+1)/2]``."""
    n = h.shape[-1]
    iu, ju = triu_indices(n)
    return h[..., iu, ju]


def unpack_symmetric(packed: np.ndarray, n: int) -> np.ndarray:
    return packed[..., _unpack_index(n)]


def _sym_outer(a, b, n):
    iu, ju = triu_indices(n)
    return a[..., iu] * b[..., ju] + a[..., ju] * b[..., iu]


def _self_outer(a, n):
    iu, ju = triu_indices(n)
    return a[..., iu] * a[..., ju]


class Jet2:
    """Second-order jet of a scalar; arithmetic follows the chain rule.

    Parameters
    ----------
    value : ndarray of shape batch
    grad : ndarray of shape batch + (n,)
    hess : ndarray of shape batch + (n(n+1)/2,)
        Packed upper triangle of the Hessian.
    """

    __slots__ = ("value", "grad", "hess")

    def __init__(self, value, grad, hess):
        self.value = np.asarray(value, dtype=float)
        self.grad = np.asarray(grad, dtype=float)
        self.hess = np.asarray(hess, dtype=float)

    @property
    def n(self) -> int:
        return self.grad.shape[-1]

    @property
    def hessian(self) -> np.ndarray:
        return unpack_symmetric(self.hess, self.n)

    @classmethod
    def constant(cls, c, batch_shape, n):
        m = n * (n + 1) // 2
        return cls(np.full(batch_shape, float(c)), np.zeros(batch_shape + (n,)), np.zeros(batch_shape + (m,)))

    @classmethod
    def variable(cls, x, k, n):
        """Coordinate function ``x_k`` sampled at values ``x``."""
        x = np.asarray(x, dtype=float)
        grad = np.zeros(x.shape + (n,))
        grad[..., k] = 1.0
        return cls(x, grad, np.zeros(x.shape + (n * (n + 1) // 2,)))

    def _chain(self, f0, f1, f2):
        n = self.n
        return Jet2(
            f0,
            f1[..., None] * self.grad,
            f1[..., None] * self.hess + f2[..., None] * _self_outer(self.grad, n),
        )

    def __add__(self, other):
        if isinstance(other, Jet2):
            return Jet2(self.value + other.value, self.grad + other.grad, self.hess + other.hess)
        return Jet2(self.value + other, self.grad, self.hess)

    __radd__ = __add__

    def __neg__(self):
        return Jet2(-self.value, -self.grad, -self.hess)

    def __sub__(self, other):
        if isinstance(other, Jet2):
            return Jet2(self.value - other.value, self.grad - other.grad, self.hess - other.hess)
        return Jet2(self.value - other, self.grad, self.hess)

    def __rsub__(self, other):
        return Jet2(other - self.value, -self.grad, -self.hess)

    def __mul__(self, other):
        if isinstance(other, Jet2):
            u, v = self, other
            return Jet2(
                u.value * v.value,
                u.value[..., None] * v.grad + v.value[..., None] * u.grad,
                u.value[..., None] * v.hess + v.value[..., None] * u.hess + _sym_outer(u.grad, v.grad, u.n),
            )
        return Jet2(self.value * other, self.grad * other, self.hess * other)

    __rmul__ = __mul__

    def reciprocal(self):
        v = self.value
        if np.any(v == 0.0):
            raise DomainError("division by zero")
        r = 1.0 / v
        return self._chain(r, -r * r, 2.0 * r * r * r)

    def __truediv__(self, other):
        if isinstance(other, Jet2):
            return self * other.reciprocal()
        if other == 0:
            raise DomainError("division by zero")
        return self * (1.0 / other)

    def __rtruediv__(self, other):
        return self.reciprocal() * other

    def __pow__(self, c):
        c = float(c)
        u = self.value
        if c == 0.0:
            return Jet2.constant(1.0, u.shape, self.n)
        if c == 1.0:
            return self
        if c.is_integer():
            if c < 0 and np.any(u == 0.0):
                raise DomainError("negative power of zero")
            k = int(c)
            f1 = k * u ** (k - 1)
            f2 = k * (k - 1) * u ** (k - 2) if k != 2 else np.full_like(u, 2.0)
            return self._chain(u**k, f1, f2)
        if np.any(u <= 0.0):
            raise DomainError(f"non-integer power {c} of non-positive base")
        p = u**c
        return self._chain(p, c * p / u, c * (c - 1.0) * p / (u * u))

    def sin(self):
        s, co = np.sin(self.value), np.cos(self.value)
        return self._chain(s, co, -s)

    def cos(self):
        s, co = np.sin(self.value), np.cos(self.value)
        return self._chain(co, -s, -co)

    def exp(self):
        e = np.exp(self.value)
        return self._chain(e, e, e)

    def log(self):
        u = self.value
        if np.any(u <= 0.0):
            raise DomainError("log of non-positive argument")
        r = 1.0 / u
        return self._chain(np.log(u), r, -r * r)

    def sqrt(self):
        u = self.value
        if np.any(u <= 0.0):
            raise DomainError("sqrt of non-positive argument")
        r = np.sqrt(u)
        return self._chain(r, 0.5 / r, -0.25 / (r * u))

    def tanh(self):
        th = np.tanh(self.value)
        d = 1.0 - th * th
        return self._chain(th, d, -2.0 * th * d)

    def __repr__(self):
        return f"Jet2(value={self.value!r}, grad={self.grad!r}, hessian={self.hessian!r})"


# ---------------------------------------------------------------------------
# first-order jet arrays

class JetArray:
    """Tensor-valued first-order jet: ``val[b..., *shape]``, ``der[b..., *shape, n]``.

    The batch rank is fixed to one leading axis (sample points).
    """

    __slots__ = ("val", "der")

    def __init__(self, val, der):
        self.val = np.asarray(val, dtype=float)
        self.der = np.asarray(der, dtype=float)

    @property
    def shape(self):
        return self.val.shape[1:]

    @property
    def n(self):
        return self.der.shape[-1]

    @classmethod
    def constant(cls, val, n):
        val = np.asarray(val, dtype=float)
        return cls(val, np.zeros(val.shape + (n,)))

    def __add__(self, other):
        if isinstance(other, JetArray):
            return JetArray(self.val + other.val, self.der + other.der)
        return JetArray(self.val + other, self.der)

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, JetArray):
            return JetArray(self.val - other.val, self.der - other.der)
        return JetArray(self.val - other, self.der)

    def __neg__(self):
        return JetArray(-self.val, -self.der)

    def __mul__(self, other):
        # scalar-field or constant scaling; a JetArray factor must be batch-scalar
        if isinstance(other, JetArray):
            if other.shape != ():
                raise ValueError("elementwise product only with a scalar JetArray")
            extra = (None,) * len(self.shape)
            s = other.val[(...,) + extra]
            ds = other.der[(slice(None),) + extra + (slice(None),)]
            return JetArray(self.val * s, self.der * s[..., None] + self.val[..., None] * ds)
        other = np.asarray(other, dtype=float)
        if other.ndim == 1 and other.shape[0] == self.val.shape[0] and self.val.ndim > 1:
            other = other.reshape((-1,) + (1,) * (self.val.ndim - 1))
        return JetArray(self.val * other, self.der * other[..., None])

    __rmul__ = __mul__

    def transpose(self):
        """Swap the two tensor axes of a matrix-valued jet."""
        return JetArray(np.swapaxes(self.val, 1, 2), np.swapaxes(self.der, 1, 2))

    def inv(self):
        inv = np.linalg.inv(self.val)
        dinv = -np.einsum("bij,bjkl,bkm->biml", inv, self.der, inv)
        return JetArray(inv, dinv)

    def exp(self):
        e = np.exp(self.val)
        return JetArray(e, e[..., None] * self.der)

    def __getitem__(self, key):
        if not isinstance(key, tuple):
            key = (key,)
        key = (slice(None),) + key
        return JetArray(self.val[key], self.der[key + (slice(None),)])


def jeinsum(subscripts: str, *operands):
    """Einstein summation over per-point tensors with the product rule.

    ``subscripts`` omit the batch axis, e.g. ``"ij,j->i"``.  Operands may be
    ``JetArray`` or plain arrays with a leading batch axis (treated as
    constants along the chart).
    """
    lhs, out = subscripts.replace(" ", "").split("->")
    terms = lhs.split(",")
    if len(terms) != len(operands):
        raise ValueError("operand count does not match subscripts")
    used = set(subscripts)
    free = [c for c in string.ascii_letters if c not in used]
    b, d = free[0], free[1]
    vals = [op.val if isinstance(op, JetArray) else np.asarray(op, dtype=float) for op in operands]
    in_terms = [b + t for t in terms]
    val = np.einsum(",".join(in_terms) + "->" + b + out, *vals, optimize=len(vals) > 2)
    n = next((op.n for op in operands if isinstance(op, JetArray)), None)
    if n is None:
        raise ValueError("jeinsum needs at least one JetArray operand")
    der = np.zeros(val.shape + (n,))
    for k, op in enumerate(operands):
        if not isinstance(op, JetArray):
            continue
        spec = list(in_terms)
        spec[k] = spec[k] + d
        args = list(vals)
        args[k] = op.der
        der = der + np.einsum(",".join(spec) + "->" + b + out + d, *args, optimize=len(vals) > 2)
    return JetArray(val, der)
