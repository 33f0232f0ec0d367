"""Shared fixture builders: random symbols, operators, diffeomorphisms."""

from __future__ import annotations

import numpy as np
import pytest

from invar3.connection import chern_connection
from invar3.expr import Expr, var
from invar3.expr import cos as ecos
from invar3.expr import exp as eexp
from invar3.expr import sin as esin
from invar3.jets import Jet2
from invar3.quantize import RAW_SLOTS, Operator3, quantize
from invar3.symbol import Symbol3, scaled_hessian

X, Y = var("x"), var("y")


def rng_for(seed: int) -> np.random.Generator:
    return np.random.default_rng(seed)


def small_poly(rng, scale: float = 0.5, trig: bool = True) -> Expr:
    """A tame random bivariate expression with bounded derivatives on [0,1]^2."""
    c = rng.uniform(-scale, scale, size=6)
    e: Expr = c[0] * X + c[1] * Y + c[2] * X * Y + c[3] * X * X + c[4] * Y * Y
    if trig and rng.random() < 0.5:
        e = e + c[5] * esin(X + Y)
    return e


def random_three_root_symbol(rng, spread: float = 0.5) -> Symbol3:
    """Random symbol with three real roots, regular on [0,1]^2.

    Built as (a dx + b dy).dx.dy with positive a, b, so the discriminant
    a^2 b^2 / 27 stays bounded away from zero.
    """
    alpha = small_poly(rng, spread)
    beta = small_poly(rng, spread)
    a = eexp(alpha)
    b = eexp(beta)
    return Symbol3(0.0, a / 3.0, b / 3.0, 0.0)


def random_one_root_symbol(rng, spread: float = 0.4) -> Symbol3:
    """Random symbol with one real root: (sin h dx + cos h dy)(dx^2 + dy^2)."""
    h = small_poly(rng, spread) + 0.6 * X + 0.6 * Y
    a = esin(h)
    b = ecos(h)
    return Symbol3(a, b / 3.0, a / 3.0, b)


def random_regular_symbol(rng) -> Symbol3:
    return (random_three_root_symbol(rng) if rng.random() < 0.5
            else random_one_root_symbol(rng))


def random_operator(rng, sym: Symbol3 | None = None) -> Operator3:
    """Random operator over a tame three-root principal symbol."""
    if sym is None:
        sym = random_three_root_symbol(rng)
    return Operator3(
        a1=sym.a1, a2=sym.a2, a3=sym.a3, a4=sym.a4,
        b1=0.5 + small_poly(rng, 0.3), b2=small_poly(rng, 0.3),
        b3=1.0 + small_poly(rng, 0.2), c1=small_poly(rng, 0.4),
        c2=0.2 + small_poly(rng, 0.3), a0=0.3 + small_poly(rng, 0.4),
    )


def random_diffeo(rng, strength: float = 0.15):
    """Orientation-preserving diffeomorphism with an exact expression inverse.

    Composition of two triangular shears: (x, y) -> (x + p(y), y), then
    (x, y) -> (x, y + q(x)).  The derivative stays within ``strength`` of
    the identity on the unit window for the default polynomial scales.
    """
    c = rng.uniform(-strength, strength, size=4)
    p = c[0] * Y + c[1] * Y * Y * 0.5
    phi1 = X + p
    q = c[2] * X + c[3] * esin(X)
    # q evaluated at the first component of the sheared point
    q_of = c[2] * phi1 + c[3] * esin(phi1)
    phi2 = Y + q_of
    inv2 = Y - (c[2] * X + c[3] * esin(X))
    inv1 = X - (c[0] * inv2 + c[1] * inv2 * inv2 * 0.5)
    return (phi1, phi2), (inv1, inv2)


def random_gauge(rng, strength: float = 0.3) -> Expr:
    """A nowhere-vanishing multiplier, exp of a tame exponent."""
    return eexp(small_poly(rng, strength, trig=False))


def quantized_operator_field(sym_field: Symbol3, theta=None, mult=None) -> Operator3:
    """Operator field assembled by quantizing the symbol (plus, optionally,
    ``mult`` times the weight--1/3 rescaled Hessian) against its Chern
    connection; used to construct exactly-solvable inverse problems."""

    def component(name):
        alpha, weight = RAW_SLOTS[name]

        def f(px, py, order):
            sp = sym_field.at(px, py, order + 3)
            gamma, _ = chern_connection(sp)
            raw = dict(quantize(sp, gamma, theta).coeffs)
            if mult is not None:
                g = scaled_hessian(sp, -1.0 / 3.0)
                sub = (g.g11, g.g12 * 0.5, g.g22)
                for k, v in quantize(sub, gamma, theta).coeffs.items():
                    raw[k] = raw.get(k, 0.0) + mult * v
            v = raw.get(alpha, 0.0)
            v = v if isinstance(v, Jet2) else Jet2.constant(float(v), order)
            return v.truncated(order) * (1.0 / weight)

        return f

    return Operator3(**{name: component(name) for name in RAW_SLOTS})


def image_box(phi, grid, pad: float = 0.04):
    """Bounding rectangle of the grid's image under the map, lightly padded.

    Natural-model comparisons expect the two windows to describe roughly
    the same region; the second operator of a constructed pair is sampled
    over the image of the first window.
    """
    from invar3.equivalence import DomainGrid
    from invar3.expr import coefficient_field
    f = [coefficient_field(c) for c in phi]
    xs, ys = [], []
    for (x, y) in grid.points():
        xs.append(f[0](x, y, 0).value)
        ys.append(f[1](x, y, 0).value)
    dx = (max(xs) - min(xs)) * pad
    dy = (max(ys) - min(ys)) * pad
    return DomainGrid(min(xs) - dx, max(xs) + dx, min(ys) - dy, max(ys) + dy,
                      grid.nx, grid.ny)


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
