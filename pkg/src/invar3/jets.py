"""Truncated two-variable Taylor jets with exact series arithmetic.

A jet of order K at a point stores the scaled Taylor coefficients
``c[i,j] = d^{i+j} f / dx^i dy^j / (i! j!)`` for all ``i + j <= K``.
Scaled coefficients make multiplication a plain truncated convolution and
keep the linear-solve recurrences free of binomial bookkeeping; raw partial
derivatives are recovered at the boundary via :meth:`Jet2.partial`.

Coefficients are packed into a flat array in graded order (total degree,
then increasing y-power), so truncation to a lower order is a prefix slice.
Elementary functions are applied through their univariate Taylor series
around the jet's constant term (Horner in ``u - u0``).
"""

from __future__ import annotations

import math
from functools import lru_cache

import numpy as np

from .errors import DomainEvalError, OrderMismatchError

__all__ = [
    "Jet2", "ncoef", "pack_index",
    "exp", "ln", "sin", "cos", "sqrt", "cbrt", "jabs", "asinh", "real_power",
    "compose", "as_jet",
]


def ncoef(order: int) -> int:
    """Number of coefficients of an order-``order`` jet."""
    return (order + 1) * (order + 2) // 2


def pack_index(i: int, j: int) -> int:
    """Flat position of the coefficient of x^i y^j."""
    t = i + j
    return t * (t + 1) // 2 + j


@lru_cache(maxsize=None)
def _grading(order: int) -> tuple[np.ndarray, np.ndarray]:
    """Arrays of (i, j) exponents in packed order."""
    ii, jj = [], []
    for t in range(order + 1):
        for j in range(t + 1):
            ii.append(t - j)
            jj.append(j)
    return np.array(ii), np.array(jj)


@lru_cache(maxsize=None)
def _conv_table(ka: int, kb: int, kout: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Index triples (out, a, b) realizing truncated 2D convolution."""
    out_idx, a_idx, b_idx = [], [], []
    for p in range(min(ka, kout) + 1):
        for q in range(min(ka, kout) - p + 1):
            base = pack_index(p, q)
            rmax = min(kb, kout - p - q)
            for r in range(rmax + 1):
                for s in range(rmax - r + 1):
                    out_idx.append(pack_index(p + r, q + s))
                    a_idx.append(base)
                    b_idx.append(pack_index(r, s))
    return np.array(out_idx), np.array(a_idx), np.array(b_idx)


@lru_cache(maxsize=None)
def _diff_table(order: int, axis: int) -> tuple[np.ndarray, np.ndarray]:
    """Gather indices and multipliers for d/dx (axis 0) or d/dy (axis 1)."""
    src, mult = [], []
    for t in range(order):
        for j in range(t + 1):
            i = t - j
            if axis == 0:
                src.append(pack_index(i + 1, j))
                mult.append(i + 1.0)
            else:
                src.append(pack_index(i, j + 1))
                mult.append(j + 1.0)
    return np.array(src), np.array(mult)


class Jet2:
    """Order-K truncated Taylor expansion of a scalar field of (x, y)."""

    __slots__ = ("order", "c")

    def __init__(self, order: int, coeffs):
        if order < 0:
            raise OrderMismatchError("jet order must be non-negative")
        c = np.asarray(coeffs, dtype=float)
        if c.shape != (ncoef(order),):
            raise OrderMismatchError(
                f"order-{order} jet needs {ncoef(order)} coefficients, got shape {c.shape}")
        self.order = order
        self.c = c

    @classmethod
    def _new(cls, order: int, c: np.ndarray) -> "Jet2":
        """Internal fast path: trusted coefficients, no validation."""
        self = object.__new__(cls)
        self.order = order
        self.c = c
        return self

    # -- constructors -----------------------------------------------------

    @classmethod
    def constant(cls, value: float, order: int) -> "Jet2":
        c = np.zeros(ncoef(order))
        c[0] = value
        return cls(order, c)

    @classmethod
    def variable(cls, value: float, axis: int, order: int) -> "Jet2":
        """Jet of the coordinate function x (axis 0) or y (axis 1)."""
        c = np.zeros(ncoef(order))
        c[0] = value
        if order >= 1:
            c[pack_index(1 - axis, axis)] = 1.0
        return cls(order, c)

    # -- inspection --------------------------------------------------------

    @property
    def value(self) -> float:
        return float(self.c[0])

    def partial(self, i: int, j: int) -> float:
        """Raw partial derivative d^{i+j} f / dx^i dy^j at the base point."""
        if i + j > self.order:
            raise OrderMismatchError(f"jet of order {self.order} has no ({i},{j}) derivative")
        return float(self.c[pack_index(i, j)]) * math.factorial(i) * math.factorial(j)

    def coeff(self, i: int, j: int) -> float:
        """Scaled Taylor coefficient c_{ij}."""
        if i + j > self.order:
            raise OrderMismatchError(f"jet of order {self.order} has no ({i},{j}) coefficient")
        return float(self.c[pack_index(i, j)])

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.c)))

    def norm(self) -> float:
        return float(np.max(np.abs(self.c)))

    def truncated(self, order: int) -> "Jet2":
        if order > self.order:
            raise OrderMismatchError(f"cannot extend order {self.order} jet to order {order}")
        return Jet2._new(order, self.c[:ncoef(order)])

    def __repr__(self) -> str:
        return f"Jet2(order={self.order}, value={self.value:.6g})"

    # -- derivatives -------------------------------------------------------

    def dx(self) -> "Jet2":
        if self.order < 1:
            raise OrderMismatchError("cannot differentiate an order-0 jet")
        src, mult = _diff_table(self.order, 0)
        return Jet2._new(self.order - 1, self.c[src] * mult)

    def dy(self) -> "Jet2":
        if self.order < 1:
            raise OrderMismatchError("cannot differentiate an order-0 jet")
        src, mult = _diff_table(self.order, 1)
        return Jet2._new(self.order - 1, self.c[src] * mult)

    # -- ring operations ---------------------------------------------------

    def __add__(self, other):
        if isinstance(other, Jet2):
            k = min(self.order, other.order)
            n = ncoef(k)
            return Jet2._new(k, self.c[:n] + other.c[:n])
        if isinstance(other, (int, float)):
            c = self.c.copy()
            c[0] += other
            return Jet2._new(self.order, c)
        return NotImplemented

    __radd__ = __add__

    def __neg__(self):
        return Jet2._new(self.order, -self.c)

    def __sub__(self, other):
        if isinstance(other, Jet2):
            k = min(self.order, other.order)
            n = ncoef(k)
            return Jet2._new(k, self.c[:n] - other.c[:n])
        if isinstance(other, (int, float)):
            c = self.c.copy()
            c[0] -= other
            return Jet2._new(self.order, c)
        return NotImplemented

    def __rsub__(self, other):
        return (-self).__add__(other)

    def __mul__(self, other):
        if isinstance(other, Jet2):
            k = min(self.order, other.order)
            oi, ai, bi = _conv_table(self.order, other.order, k)
            prod = self.c[ai] * other.c[bi]
            return Jet2._new(k, np.bincount(oi, weights=prod, minlength=ncoef(k)))
        if isinstance(other, (int, float)):
            return Jet2._new(self.order, self.c * other)
        return NotImplemented

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Jet2):
            return self * _reciprocal(other)
        if isinstance(other, (int, float)):
            if other == 0.0:
                raise DomainEvalError("division by zero")
            return Jet2._new(self.order, self.c / other)
        return NotImplemented

    def __rtruediv__(self, other):
        if isinstance(other, (int, float)):
            return _reciprocal(self) * other
        return NotImplemented

    def __pow__(self, n):
        if not isinstance(n, int):
            return NotImplemented
        if n < 0:
            return _reciprocal(self) ** (-n)
        result = Jet2.constant(1.0, self.order)
        base = self
        k = n
        while k:
            if k & 1:
                result = result * base
            base = base * base if k > 1 else base
            k >>= 1
        return result


def as_jet(v, order: int) -> Jet2:
    """Lift numbers to constant jets; pass jets through (truncating)."""
    if isinstance(v, Jet2):
        return v if v.order <= order else v.truncated(order)
    return Jet2.constant(float(v), order)


# -- univariate series composition ------------------------------------------

def _series_apply(u: Jet2, coeffs: np.ndarray) -> Jet2:
    """Evaluate sum coeffs[k] (u - u0)^k by Horner; coeffs has length order+1."""
    du = Jet2._new(u.order, u.c.copy())
    du.c[0] = 0.0
    acc = Jet2.constant(float(coeffs[u.order]), u.order)
    for k in range(u.order - 1, -1, -1):
        acc = acc * du + float(coeffs[k])
    return acc


def _reciprocal(u: Jet2) -> Jet2:
    u0 = u.value
    if u0 == 0.0:
        raise DomainEvalError("division by a jet with zero constant term")
    k = np.arange(u.order + 1)
    coeffs = (-1.0) ** k / u0 ** (k + 1)
    return _series_apply(u, coeffs)


def exp(u):
    if isinstance(u, (int, float)):
        return math.exp(u)
    e0 = math.exp(u.value)
    coeffs = np.array([e0 / math.factorial(k) for k in range(u.order + 1)])
    return _series_apply(u, coeffs)


def ln(u):
    if isinstance(u, (int, float)):
        if u <= 0.0:
            raise DomainEvalError(f"log of non-positive value {u}")
        return math.log(u)
    u0 = u.value
    if u0 <= 0.0:
        raise DomainEvalError(f"log of non-positive value {u0}")
    coeffs = np.empty(u.order + 1)
    coeffs[0] = math.log(u0)
    for k in range(1, u.order + 1):
        coeffs[k] = (-1.0) ** (k + 1) / (k * u0 ** k)
    return _series_apply(u, coeffs)


def sin(u):
    if isinstance(u, (int, float)):
        return math.sin(u)
    s0, c0 = math.sin(u.value), math.cos(u.value)
    cycle = [s0, c0, -s0, -c0]
    coeffs = np.array([cycle[k % 4] / math.factorial(k) for k in range(u.order + 1)])
    return _series_apply(u, coeffs)


def cos(u):
    if isinstance(u, (int, float)):
        return math.cos(u)
    s0, c0 = math.sin(u.value), math.cos(u.value)
    cycle = [c0, -s0, -c0, s0]
    coeffs = np.array([cycle[k % 4] / math.factorial(k) for k in range(u.order + 1)])
    return _series_apply(u, coeffs)


def _binomial_series(u: Jet2, r: float) -> Jet2:
    """u^r for u with positive constant term, via the binomial series."""
    u0 = u.value
    coeffs = np.empty(u.order + 1)
    acc = u0 ** r
    coeffs[0] = acc
    for k in range(1, u.order + 1):
        acc *= (r - (k - 1)) / k / u0
        coeffs[k] = acc
    return _series_apply(u, coeffs)


def sqrt(u):
    if isinstance(u, (int, float)):
        if u <= 0.0:
            raise DomainEvalError(f"even root of non-positive value {u}")
        return math.sqrt(u)
    if u.value <= 0.0:
        raise DomainEvalError(f"even root of non-positive value {u.value}")
    return _binomial_series(u, 0.5)


def cbrt(u):
    """Real, sign-preserving cube root: cbrt(-8) = -2."""
    if isinstance(u, (int, float)):
        if u == 0.0:
            return 0.0
        return math.copysign(abs(u) ** (1.0 / 3.0), u)
    if u.value == 0.0:
        raise DomainEvalError("cube root at a zero constant term is not smooth")
    if u.value < 0.0:
        return -_binomial_series(-u, 1.0 / 3.0)
    return _binomial_series(u, 1.0 / 3.0)


def jabs(u):
    """|u| for a value bounded away from zero (sign taken from the constant term)."""
    if isinstance(u, (int, float)):
        return abs(u)
    if u.value == 0.0:
        raise DomainEvalError("absolute value at a zero constant term is not smooth")
    return -u if u.value < 0.0 else u


def asinh(u):
    """Inverse hyperbolic sine, ln(u + sqrt(1 + u^2)); smooth on all of R."""
    if isinstance(u, (int, float)):
        return math.asinh(u)
    return ln(u + _binomial_series(1.0 + u * u, 0.5))


def real_power(u, r: float):
    """u^r with real-cube-root semantics when 3r is an integer.

    For other exponents the constant term must be positive.
    """
    three_r = 3.0 * r
    if isinstance(u, (int, float)):
        u = Jet2.constant(float(u), 0)
        return real_power(u, r).value
    if abs(three_r - round(three_r)) < 1e-12:
        m = int(round(three_r))
        return cbrt(u) ** m
    if u.value <= 0.0:
        raise DomainEvalError(f"non-integer power {r} of non-positive value {u.value}")
    return _binomial_series(u, r)


# -- two-variable composition ------------------------------------------------

def compose(f: Jet2, phi1: Jet2, phi2: Jet2) -> Jet2:
    """Jet of f(phi1, phi2) at the base point of phi1, phi2.

    ``f`` must be the jet of the outer field at the point
    ``(phi1.value, phi2.value)``; the caller guarantees that relation.
    The component jets must carry at least ``f.order`` derivatives.
    """
    k = f.order
    if phi1.order < k or phi2.order < k:
        raise OrderMismatchError(
            f"outer jet of order {k} needs inner jets of order >= {k}, "
            f"got {phi1.order} and {phi2.order}")
    u = Jet2._new(k, phi1.c[:ncoef(k)].copy())
    u.c[0] = 0.0
    v = Jet2._new(k, phi2.c[:ncoef(k)].copy())
    v.c[0] = 0.0
    # Horner over x-powers of rows that are Horner over y-powers.
    acc = _compose_row(f, k, k, v)
    for i in range(k - 1, -1, -1):
        acc = acc * u + _compose_row(f, i, k, v)
    return acc


def _compose_row(f: Jet2, i: int, k: int, v: Jet2) -> Jet2:
    """Horner evaluation of sum_j c_{ij} v^j."""
    jmax = k - i
    acc = Jet2.constant(f.c[pack_index(i, jmax)], k)
    for j in range(jmax - 1, -1, -1):
        acc = acc * v + float(f.c[pack_index(i, j)])
    return acc
