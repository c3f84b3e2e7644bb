"""Vectorized forward-mode dual numbers.

A ``Dual`` carries a value array of shape ``s`` and a derivative array of
shape ``s + (m,)`` holding partials with respect to ``m`` seed directions.
Property correlations and residual assembly are written against the small
generic API here (``exp``, ``where``, ...) so that a single code path
yields values, and exact derivatives whenever seeded inputs are passed.
Plain ndarrays flow through unchanged, which keeps the residual-only path
cheap.
"""

import numpy as np

__all__ = [
    "Dual", "seed", "value", "deriv", "exp", "log", "sqrt", "power",
    "where", "maximum", "minimum", "clip", "absolute", "stack_sum",
]


class Dual:
    __slots__ = ("val", "der")
    __array_priority__ = 100  # beat ndarray in mixed binary ops

    def __init__(self, val, der):
        self.val = np.asarray(val, dtype=float)
        self.der = np.asarray(der, dtype=float)

    @property
    def nseed(self):
        return self.der.shape[-1]

    # -- arithmetic ----------------------------------------------------
    def __add__(self, other):
        if isinstance(other, Dual):
            return Dual(self.val + other.val, self.der + other.der)
        return Dual(self.val + other, _bcast(self.der, np.shape(self.val + other)))

    __radd__ = __add__

    def __neg__(self):
        return Dual(-self.val, -self.der)

    def __sub__(self, other):
        return self + (-other if isinstance(other, Dual) else -np.asarray(other))

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, Dual):
            return Dual(self.val * other.val,
                        self.der * other.val[..., None] + other.der * self.val[..., None])
        other = np.asarray(other, dtype=float)
        return Dual(self.val * other, self.der * other[..., None])

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Dual):
            inv = 1.0 / other.val
            v = self.val * inv
            return Dual(v, (self.der - other.der * v[..., None]) * inv[..., None])
        other = np.asarray(other, dtype=float)
        return Dual(self.val / other, self.der / other[..., None])

    def __rtruediv__(self, other):
        other = np.asarray(other, dtype=float)
        inv = 1.0 / self.val
        v = other * inv
        return Dual(v, -self.der * (v * inv)[..., None])

    def __pow__(self, n):
        if isinstance(n, Dual):
            raise TypeError("dual exponent unsupported")
        v = self.val ** n
        return Dual(v, self.der * (n * self.val ** (n - 1))[..., None])

    # -- comparisons act on values -------------------------------------
    def __lt__(self, other):
        return self.val < value(other)

    def __le__(self, other):
        return self.val <= value(other)

    def __gt__(self, other):
        return self.val > value(other)

    def __ge__(self, other):
        return self.val >= value(other)

    # -- indexing / shaping --------------------------------------------
    def __getitem__(self, idx):
        return Dual(self.val[idx], self.der[idx])

    @property
    def shape(self):
        return self.val.shape

    def sum(self, axis=None):
        if axis is None:
            return Dual(self.val.sum(), self.der.reshape(-1, self.nseed).sum(axis=0))
        return Dual(self.val.sum(axis=axis), self.der.sum(axis=axis))

    def lift(self, m, offset):
        """Embed this dual's seeds into a wider seed space of size m."""
        der = np.zeros(self.val.shape + (m,))
        der[..., offset:offset + self.nseed] = self.der
        return Dual(self.val, der)

    def __repr__(self):
        return f"Dual(val={self.val!r})"


def _bcast(der, shape):
    return np.broadcast_to(der, shape + der.shape[-1:]).copy() \
        if der.shape[:-1] != shape else der


def seed(val, m, index):
    """Make a Dual seeded with d/d(direction index) = 1."""
    val = np.asarray(val, dtype=float)
    der = np.zeros(val.shape + (m,))
    der[..., index] = 1.0
    return Dual(val, der)


def value(x):
    return x.val if isinstance(x, Dual) else np.asarray(x, dtype=float)


def deriv(x, m=None):
    if isinstance(x, Dual):
        return x.der
    x = np.asarray(x, dtype=float)
    return np.zeros(x.shape + (m,))


def _unary(x, f, df):
    if isinstance(x, Dual):
        return Dual(f(x.val), x.der * df(x.val)[..., None])
    return f(np.asarray(x, dtype=float))


def exp(x):
    return _unary(x, np.exp, np.exp)


def log(x):
    return _unary(x, np.log, lambda v: 1.0 / v)


def sqrt(x):
    return _unary(x, np.sqrt, lambda v: 0.5 / np.sqrt(v))


def power(x, n):
    if isinstance(x, Dual):
        return x ** n
    return np.asarray(x, dtype=float) ** n


def where(cond, a, b):
    """Branch on a boolean array; derivative follows the selected branch."""
    cond = np.asarray(cond)
    if not (isinstance(a, Dual) or isinstance(b, Dual)):
        return np.where(cond, a, b)
    m = a.nseed if isinstance(a, Dual) else b.nseed
    av, bv = value(a), value(b)
    v = np.where(cond, av, bv)
    ad = deriv(a, m) if isinstance(a, Dual) else np.zeros(np.shape(av) + (m,))
    bd = deriv(b, m) if isinstance(b, Dual) else np.zeros(np.shape(bv) + (m,))
    ad, bd = np.broadcast_arrays(ad, bd)
    d = np.where(cond[..., None], ad, bd)
    return Dual(v, d)


def maximum(a, b):
    return where(value(a) >= value(b), a, b)


def minimum(a, b):
    return where(value(a) <= value(b), a, b)


def clip(x, lo, hi):
    return minimum(maximum(x, lo), hi)


def absolute(x):
    return where(value(x) >= 0.0, x, -x if isinstance(x, Dual) else -np.asarray(x))


def stack_sum(terms):
    """Sum a list of Dual/ndarray terms."""
    out = terms[0]
    for t in terms[1:]:
        out = out + t
    return out
