"""Coframes, scalar invariants, Tresse derivatives, operator invariants."""

import numpy as np
import pytest

from conftest import (X, Y, random_diffeo, random_gauge, random_operator,
                      random_regular_symbol, random_three_root_symbol,
                      rng_for)
from invar3.connection import OneForm, exterior_derivative
from invar3.equivalence import (DomainGrid, gauge_transform,
                                pushforward_operator, pushforward_symbol)
from invar3.errors import RegularityError
from invar3.expr import coefficient_field, cos as ecos
from invar3.expr import diff, eval_jet
from invar3.expr import exp as eexp
from invar3.expr import sin as esin
from invar3.invariants import (Coframe, basic_invariants, conformal_coframe,
                               conformal_frame_data, conformal_invariants,
                               decompose_cubic, operator_invariants,
                               symbol_coframe, tresse_derivative)
from invar3.jets import Jet2
from invar3.symbol import Symbol3, value_of

WIN = DomainGrid(0.0, 1.0, 0.0, 1.0, 8, 8)


def image_of(phi, pt):
    return (coefficient_field(phi[0])(pt[0], pt[1], 0).value,
            coefficient_field(phi[1])(pt[0], pt[1], 0).value)


# -- torsion coframe -----------------------------------------------------------------

def test_coframe_duality_and_orthogonality(rng):
    for _ in range(10):
        sym = random_regular_symbol(rng)
        pt = tuple(rng.uniform(0.1, 0.9, size=2))
        frame = symbol_coframe(sym, *pt)
        th, tp = frame.theta, frame.theta_prime
        d1, d2 = frame.d1, frame.d2
        pair = lambda f, v: value_of(f.t1) * value_of(v[0]) + value_of(f.t2) * value_of(v[1])
        assert pair(th, d1) == pytest.approx(1.0, abs=1e-12)
        assert pair(th, d2) == pytest.approx(0.0, abs=1e-12)
        assert pair(tp, d1) == pytest.approx(0.0, abs=1e-12)
        assert pair(tp, d2) == pytest.approx(1.0, abs=1e-12)
        B = frame.metric
        b_tt = value_of(B.pair(th.components, tp.components))
        b_11 = value_of(B.pair(th.components, th.components))
        b_22 = value_of(B.pair(tp.components, tp.components))
        scale = max(abs(b_11), abs(b_22), 1e-30)
        assert abs(b_tt) <= 1e-12 * scale
        # equal pairing magnitude; the sign flips when the pairing is indefinite
        assert abs(b_11) == pytest.approx(abs(b_22), rel=1e-12)
        assert np.sign(b_11 * b_22) == frame.metric_det_sign
        # positive orientation
        area = (value_of(th.t1) * value_of(tp.t2)
                - value_of(th.t2) * value_of(tp.t1))
        assert area > 0


def test_coframe_constant_symbol_not_regular():
    sym = Symbol3(0.3 + 0.0 * X, 0.5 + 0.0 * X, -0.2 + 0.0 * X, 1.0 + 0.0 * X)
    with pytest.raises(RegularityError) as err:
        symbol_coframe(sym, 0.5, 0.5)
    assert any("vanishes" in c for c in err.value.conditions)


def test_coframe_three_root_example():
    # a = e^y, b = 1: the torsion covector is (0, -2/3) under the package sign
    sym = Symbol3(0.0, eexp(Y) / 3.0, 1.0 / 3.0 + 0.0 * X, 0.0)
    frame = symbol_coframe(sym, 0.2, 0.7)
    assert value_of(frame.theta.t1) == pytest.approx(0.0, abs=1e-12)
    assert value_of(frame.theta.t2) == pytest.approx(-2.0 / 3.0, abs=1e-12)
    b_tt = value_of(frame.metric.pair(frame.theta.components, frame.theta.components))
    assert abs(b_tt) > 1e-6


# -- basic invariants ----------------------------------------------------------------

def test_basic_invariants_identity_frame():
    one = Jet2.constant(1.0, 1)
    zero = Jet2.constant(0.0, 1)
    from invar3.symbol import Sym2Form
    frame = Coframe(theta=OneForm(one, zero), theta_prime=OneForm(zero, one),
                    d1=(one, zero), d2=(zero, one),
                    metric=Sym2Form(1.0, 0.0, 1.0, "contra"),
                    pair_sign=1.0, metric_det_sign=1.0)
    sym = Symbol3(0.4 + 0.0 * X, -0.2 + 0.0 * X, 0.9 + 0.0 * X, 1.3 + 0.0 * X)
    iv = basic_invariants(sym, 0.3, 0.3, frame=frame)
    assert iv.values() == pytest.approx((0.4, -0.2, 0.9, 1.3))


def test_basic_invariants_frame_scaling_homogeneity(rng):
    # scaling d1 -> lam d1 (theta -> theta/lam) scales I1 by lam^3, I2 by lam^2
    sym = random_three_root_symbol(rng)
    pt = (0.4, 0.6)
    frame = symbol_coframe(sym, *pt)
    lam = 1.7
    from invar3.symbol import Sym2Form
    scaled = Coframe(
        theta=OneForm(frame.theta.t1 * (1 / lam), frame.theta.t2 * (1 / lam)),
        theta_prime=frame.theta_prime,
        d1=(frame.d1[0] * lam, frame.d1[1] * lam), d2=frame.d2,
        metric=frame.metric, pair_sign=frame.pair_sign,
        metric_det_sign=frame.metric_det_sign)
    iv = basic_invariants(sym, *pt, frame=frame).values()
    iv2 = basic_invariants(sym, *pt, frame=scaled).values()
    # enlarging d1 shrinks the coefficients that pair against its cube
    assert iv2[0] == pytest.approx(iv[0] / lam ** 3, rel=1e-10)
    assert iv2[1] == pytest.approx(iv[1] / lam ** 2, rel=1e-10)
    assert iv2[2] == pytest.approx(iv[2] / lam, rel=1e-10)
    assert iv2[3] == pytest.approx(iv[3], rel=1e-10)


def test_basic_invariants_recompose(rng):
    # re-assembling the invariants against the frame returns the symbol
    from invar3.invariants import cubic_in_basis
    for _ in range(5):
        sym = random_regular_symbol(rng)
        pt = tuple(rng.uniform(0.1, 0.9, size=2))
        frame = symbol_coframe(sym, *pt)
        iv = basic_invariants(sym, *pt, frame=frame)
        # sigma(p) = Xi(q(p)) with q_i = <delta_i, p>: substitute the columns
        d1 = (value_of(frame.d1[0]), value_of(frame.d1[1]))
        d2 = (value_of(frame.d2[0]), value_of(frame.d2[1]))
        back = cubic_in_basis(iv.values(), (d1[0], d2[0]), (d1[1], d2[1]))
        sp = sym.at(*pt, 1)
        # exact linear algebra up to roundoff amplified by frame conditioning
        scale = max(abs(v) for v in iv.values()) + 1.0
        for got, want in zip(back, sp.components):
            assert got == pytest.approx(value_of(want), rel=1e-9, abs=1e-10 * scale)


def test_basic_invariants_diffeo_invariance(rng):
    for seed in range(8):
        local = rng_for(seed + 40)
        sym = random_regular_symbol(local)
        phi, phinv = random_diffeo(local)
        moved = pushforward_symbol(sym, phi, phinv, WIN)
        pt = tuple(local.uniform(0.25, 0.75, size=2))
        img = image_of(phi, pt)
        iv = basic_invariants(sym, *pt).values()
        ivm = basic_invariants(moved, *img).values()
        for a, b in zip(iv, ivm):
            assert a == pytest.approx(b, rel=1e-7, abs=1e-9)


# -- Tresse derivatives ----------------------------------------------------------------

def test_tresse_constant_and_coordinate_pipelines():
    sym = Symbol3(0.0, eexp(Y) / 3.0, 1.0 / 3.0 + 0.0 * X, 0.0)
    frame_fn = lambda x, y: symbol_coframe(sym, x, y)
    const_pipe = lambda x, y, order: Jet2.constant(4.2, order)
    assert tresse_derivative(const_pipe, frame_fn, 0.3, 0.6) == pytest.approx((0.0, 0.0))
    from invar3.symbol import Sym2Form
    one = Jet2.constant(1.0, 1)
    zero = Jet2.constant(0.0, 1)
    id_frame = Coframe(theta=OneForm(one, zero), theta_prime=OneForm(zero, one),
                       d1=(one, zero), d2=(zero, one),
                       metric=Sym2Form(1.0, 0.0, 1.0, "contra"),
                       pair_sign=1.0, metric_det_sign=1.0)
    x_pipe = lambda x, y, order: Jet2.variable(x, 0, order)
    got = tresse_derivative(x_pipe, lambda x, y: id_frame, 0.3, 0.6)
    assert got == pytest.approx((1.0, 0.0))


def test_tresse_leibniz_rule(rng):
    sym = random_three_root_symbol(rng)
    frame_fn = lambda x, y: symbol_coframe(sym, x, y)

    def inv_pipe(x, y, order):
        return basic_invariants(sym, x, y, extra_order=order).components[0]

    def inv_sq(x, y, order):
        v = inv_pipe(x, y, order)
        return v * v

    pt = (0.35, 0.55)
    base = inv_pipe(*pt, 0)
    d = tresse_derivative(inv_pipe, frame_fn, *pt)
    dsq = tresse_derivative(inv_sq, frame_fn, *pt)
    assert dsq[0] == pytest.approx(2 * value_of(base) * d[0], rel=1e-9, abs=1e-9)
    assert dsq[1] == pytest.approx(2 * value_of(base) * d[1], rel=1e-9, abs=1e-9)


def test_tresse_invariance(rng):
    for seed in range(5):
        local = rng_for(seed + 70)
        sym = random_three_root_symbol(local)
        phi, phinv = random_diffeo(local)
        moved = pushforward_symbol(sym, phi, phinv, WIN)
        pt = tuple(local.uniform(0.3, 0.7, size=2))
        img = image_of(phi, pt)

        def pipe_for(field):
            return lambda x, y, order: basic_invariants(
                field, x, y, extra_order=order).components[1]

        d = tresse_derivative(pipe_for(sym), lambda x, y: symbol_coframe(sym, x, y), *pt)
        dm = tresse_derivative(pipe_for(moved),
                               lambda x, y: symbol_coframe(moved, x, y), *img)
        assert d[0] == pytest.approx(dm[0], rel=1e-5, abs=1e-7)
        assert d[1] == pytest.approx(dm[1], rel=1e-5, abs=1e-7)


# -- conformal coframe ------------------------------------------------------------------

def test_conformal_frame_three_root_closed_forms(rng):
    # sigma = (dx + e^h dy).dx.dy: theta = dln(h_xy) - h_x dx + h_y dy,
    # G11 = P_x - P h_x, G12 = P_y + Q_x, G22 = Q_y + Q h_y
    # with P = h_xxy/h_xy - h_x, Q = h_xyy/h_xy + h_y
    h = X * Y + 0.3 * X * X * Y + 0.1 * Y * Y
    sym = Symbol3(0.0, 1.0 / 3.0 + 0.0 * X, eexp(h) / 3.0, 0.0)
    pt = (0.4, 0.6)
    data = conformal_frame_data(sym, *pt)
    hj = eval_jet(h, pt, 5)
    hx, hy, hxy = hj.partial(1, 0), hj.partial(0, 1), hj.partial(1, 1)
    hxxy, hxyy = hj.partial(2, 1), hj.partial(1, 2)
    assert value_of(data.theta.t1) == pytest.approx(hxxy / hxy - hx, rel=1e-10)
    assert value_of(data.theta.t2) == pytest.approx(hxyy / hxy + hy, rel=1e-10)
    assert value_of(data.curvature_form.r) == pytest.approx(-3.0 * hxy, rel=1e-10)
    # quadratic form from jets of P and Q
    hj5 = eval_jet(h, pt, 5)
    hxyj = hj5.dx().dy()
    Pj = hj5.dx().dx().dy() / hxyj - hj5.dx()
    Qj = hj5.dx().dy().dy() / hxyj + hj5.dy()
    G11 = Pj.dx() - Pj * hj5.dx()
    G12 = Pj.dy() + Qj.dx()
    G22 = Qj.dy() + Qj * hj5.dy()
    assert value_of(data.quadratic.g11) == pytest.approx(G11.value, rel=1e-9, abs=1e-10)
    assert value_of(data.quadratic.g12) == pytest.approx(G12.value, rel=1e-9, abs=1e-10)
    assert value_of(data.quadratic.g22) == pytest.approx(G22.value, rel=1e-9, abs=1e-10)


def test_conformal_frame_one_root_closed_forms():
    # sigma = (sin h dx + cos h dy)(dx^2+dy^2):
    # theta = dln(h_xx + h_yy) - 2 h_y dx + 2 h_x dy
    h = 0.5 * X * X + 0.3 * Y * Y + 0.2 * X * Y + 0.1 * X
    sym = Symbol3(esin(h), ecos(h) / 3.0, esin(h) / 3.0, ecos(h))
    pt = (0.3, 0.5)
    data = conformal_frame_data(sym, *pt)
    hj = eval_jet(h, pt, 3)
    hx, hy = hj.partial(1, 0), hj.partial(0, 1)
    lap = hj.partial(2, 0) + hj.partial(0, 2)
    dlap_x = hj.partial(3, 0) + hj.partial(1, 2)
    dlap_y = hj.partial(2, 1) + hj.partial(0, 3)
    assert value_of(data.theta.t1) == pytest.approx(dlap_x / lap - 2 * hy, rel=1e-9)
    assert value_of(data.theta.t2) == pytest.approx(dlap_y / lap + 2 * hx, rel=1e-9)
    assert value_of(data.curvature_form.r) == pytest.approx(-3.0 * lap, rel=1e-10)


def test_conformal_frame_harmonic_failure():
    # h harmonic: the curvature form vanishes and the frame does not exist
    h = X * X - Y * Y
    sym = Symbol3(esin(h), ecos(h) / 3.0, esin(h) / 3.0, ecos(h))
    with pytest.raises(RegularityError) as err:
        conformal_coframe(sym, 0.4, 0.3)
    assert any("curvature" in c for c in err.value.conditions)


def test_conformal_skew_part_proportional_to_curvature(rng):
    # d(theta) = -(2/3) Omega: the skew part of the covariant derivative is
    # pinned to the curvature form with a universal factor
    for _ in range(5):
        sym = random_regular_symbol(rng)
        pt = tuple(rng.uniform(0.2, 0.8, size=2))
        try:
            data = conformal_frame_data(sym, *pt, extra_order=1)
        except RegularityError:
            continue
        dth = exterior_derivative(data.theta)
        want = value_of(data.curvature_form.r) * (-2.0 / 3.0)
        assert value_of(dth.r) == pytest.approx(want, rel=1e-8, abs=1e-8)


def test_conformal_invariants_conformal_rescaling(rng):
    for seed in range(5):
        local = rng_for(seed + 90)
        sym = random_regular_symbol(local)
        pt = tuple(local.uniform(0.2, 0.8, size=2))
        f = 1.0 + 0.4 * esin(X + 2.0 * Y)
        symf = Symbol3(*(c * f for c in
                         (sym.a1, sym.a2, sym.a3, sym.a4)))
        try:
            base = conformal_invariants(sym, *pt)
        except RegularityError:
            continue
        scaled = conformal_invariants(symf, *pt)
        for a, b in zip(base.ratios, scaled.ratios):
            assert a == pytest.approx(b, rel=1e-7, abs=1e-9)


def test_conformal_invariants_diffeo_invariance(rng):
    for seed in range(5):
        local = rng_for(seed + 110)
        sym = random_regular_symbol(local)
        phi, phinv = random_diffeo(local)
        moved = pushforward_symbol(sym, phi, phinv, WIN)
        pt = tuple(local.uniform(0.3, 0.7, size=2))
        img = image_of(phi, pt)
        try:
            base = conformal_invariants(sym, *pt)
        except RegularityError:
            continue
        movedi = conformal_invariants(moved, *img)
        assert base.pivot == movedi.pivot
        for a, b in zip(base.ratios, movedi.ratios):
            assert a == pytest.approx(b, rel=1e-6, abs=1e-8)


def test_conformal_pivot_stability(rng):
    sym = random_three_root_symbol(rng)
    iv = conformal_invariants(sym, 0.5, 0.4)
    vals = [value_of(c) for c in iv.components]
    # re-normalizing by any sufficiently large component preserves ratios
    for alt in range(4):
        if abs(vals[alt]) < 1e-6 * max(abs(v) for v in vals):
            continue
        alt_ratios = [v / vals[alt] for v in vals]
        recon = [r * alt_ratios[iv.pivot] for r in iv.ratios]
        for a, b in zip(recon, alt_ratios):
            assert a == pytest.approx(b, rel=1e-9, abs=1e-12)


# -- operator invariants -------------------------------------------------------------

def test_operator_invariants_of_bare_quantization(rng):
    from conftest import quantized_operator_field
    sym = random_three_root_symbol(rng)
    opf = quantized_operator_field(sym)
    pt = (0.4, 0.55)
    inv = operator_invariants(opf, *pt, mode="scalar")
    flat = inv.flat()
    for name in ("J2_1", "J2_2", "J2_3", "J1_1", "J1_2", "J0"):
        assert abs(flat[name]) <= 1e-9
    # the order-3 components coincide with the conformal-frame decomposition
    data = conformal_frame_data(sym, *pt)
    comps = decompose_cubic(sym.at(*pt, 4), data.coframe)
    for got, want in zip(inv.sigma3, comps):
        assert value_of(got) == pytest.approx(value_of(want), rel=1e-10)


def test_operator_invariants_gauge_and_diffeo(rng):
    for seed in range(4):
        local = rng_for(seed + 130)
        op = random_operator(local)
        phi, phinv = random_diffeo(local)
        h = random_gauge(local)
        pt = tuple(local.uniform(0.3, 0.7, size=2))
        img = image_of(phi, pt)
        moved = gauge_transform(pushforward_operator(op, phi, phinv, WIN), h, WIN)
        base = operator_invariants(op, *pt, mode="bundle").flat()
        after = operator_invariants(moved, *img, mode="bundle").flat()
        for k in base:
            assert base[k] == pytest.approx(after[k], rel=1e-6, abs=1e-7), k


def test_operator_invariants_scalar_diffeo(rng):
    for seed in range(4):
        local = rng_for(seed + 150)
        op = random_operator(local)
        phi, phinv = random_diffeo(local)
        pt = tuple(local.uniform(0.3, 0.7, size=2))
        img = image_of(phi, pt)
        moved = pushforward_operator(op, phi, phinv, WIN)
        base = operator_invariants(op, *pt, mode="scalar").flat()
        after = operator_invariants(moved, *img, mode="scalar").flat()
        for k in base:
            assert base[k] == pytest.approx(after[k], rel=1e-6, abs=1e-7), k
