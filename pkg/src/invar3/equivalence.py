"""Equivalence of operators via natural coordinates, plus the group actions.

The pairwise tests follow one mechanism: two functionally independent
scalar invariants serve as coordinates; every remaining invariant field,
re-expressed in those coordinates, must agree between the two operators.
Field agreement is decided at exactly matched coordinate values (a Newton
inversion of each chart, seeded from the sampled scatter), so the reported
discrepancy reflects pipeline precision rather than interpolation error;
the triangulated scatter is still used for image regions, overlap
fractions and seeding.

The module also houses the group actions used to construct test pairs:
pushforward along a diffeomorphism given with its exact inverse, and
conjugation by a nonvanishing function.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np
from scipy.spatial import Delaunay, cKDTree

from .connection import OneForm, exterior_derivative
from .errors import (GeneralPositionError, Invar3Error, InverseMismatchError,
                     NonPositiveScaleError, RegularityError, ZeroCrossingError)
from .expr import coefficient_field
from .invariants import (conformal_frame_data, cubic_in_basis,
                         decompose_cubic, symbol_coframe_point)
from .jets import Jet2, compose, real_power
from .jets import asinh as jet_asinh
from .linalg import solve_jet_system
from .quantize import RAW_SLOTS, Operator3, quantize, subsymbol
from .symbol import Symbol3, value_of

__all__ = [
    "DomainGrid", "NaturalChart", "NaturalModel", "Verdict", "EquivConfig",
    "pushforward_operator", "pushforward_symbol", "gauge_transform",
    "scale_operator", "line_bundle_connection", "build_natural_model",
    "equivalent_scalar", "equivalent_bundle", "normalize",
    "equation_equivalent", "MONOMIALS",
]

MONOMIALS = [(0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2),
             (3, 0), (2, 1), (1, 2), (0, 3)]

_SCALAR_FIELDS = [f"J_{a}{b}" for (a, b) in MONOMIALS]
_BUNDLE_FIELDS = ["J3_1", "J3_2", "J3_3", "J3_4", "J2_1", "J2_2", "J2_3",
                  "J1_1", "J1_2", "J0", "K"]


@dataclass(frozen=True)
class DomainGrid:
    """Rectangular sampling window; the chart is simply connected by
    construction."""

    x0: float
    x1: float
    y0: float
    y1: float
    nx: int = 8
    ny: int = 8

    def __post_init__(self):
        if self.nx < 8 or self.ny < 8:
            raise ValueError("grid resolution must be at least 8 x 8")
        if not (self.x1 > self.x0 and self.y1 > self.y0):
            raise ValueError("degenerate rectangle")

    def points(self) -> list[tuple[float, float]]:
        xs = np.linspace(self.x0, self.x1, self.nx)
        ys = np.linspace(self.y0, self.y1, self.ny)
        return [(float(x), float(y)) for x in xs for y in ys]

    def contains(self, x: float, y: float, pad: float = 0.0) -> bool:
        px = pad * (self.x1 - self.x0)
        py = pad * (self.y1 - self.y0)
        return (self.x0 - px <= x <= self.x1 + px) and (self.y0 - py <= y <= self.y1 + py)


@dataclass
class EquivConfig:
    """Knobs of the natural-model comparison, echoed into every verdict."""

    jacobian_floor: float = 1e-6
    min_overlap: float = 0.5
    min_regular_fraction: float = 0.5
    min_matched_points: int = 12
    max_matched_points: int = 36
    compare_resolution: int = 16
    obstruction_resolution: int = 5
    newton_tol: float = 1e-12
    newton_max_iter: int = 40
    domain_pad: float = 0.2
    closedness_tol: float = 1e-3
    coordinate_cap: float = 30.0
    robust_quantile: float = 0.1
    signature_tol: float = 1e-4

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


@dataclass(frozen=True)
class NaturalChart:
    """Selected invariant pair with its sampled values and Jacobians."""

    selection: tuple[int, int]
    values: np.ndarray        # (npts, 2), nan where masked
    jacobians: np.ndarray     # (npts, 2, 2)
    mask: np.ndarray          # True where the point is usable


@dataclass
class NaturalModel:
    """An operator's invariant fields in natural coordinates."""

    mode: str
    grid: DomainGrid
    chart: NaturalChart
    field_names: list[str]
    field_values: np.ndarray  # (npts, nfields)
    points: np.ndarray        # (npts, 2) sample points in the chart domain
    coords_jac: Callable      # (x, y) -> ((I1, I2), 2x2 Jacobian)
    fields_at: Callable       # (x, y) -> dict of field values (+ chart coords)
    connection_at: Callable | None = None  # (x, y) -> bundle connection form values
    signature_at: Callable | None = None   # (x, y) -> branch-matching invariants
    _tree: Any = None
    _tri: Any = None

    @property
    def values_masked(self) -> np.ndarray:
        return self.chart.values[self.chart.mask]

    def tree(self):
        if self._tree is None:
            self._tree = cKDTree(self.values_masked)
        return self._tree

    def triangulation(self):
        if self._tri is None:
            self._tri = Delaunay(self.values_masked)
        return self._tri

    def hull_vertices(self) -> np.ndarray:
        tri = self.triangulation()
        return self.values_masked[np.unique(tri.convex_hull.ravel())]

    def contains_coord(self, pts: np.ndarray) -> np.ndarray:
        return self.triangulation().find_simplex(pts) >= 0



@dataclass
class Verdict:
    """Outcome of a pairwise equivalence test."""

    equivalent: str                    # "yes" | "no" | "inconclusive"
    max_discrepancy: float
    overlap_fraction: float
    field_diagnostics: dict
    matched_points: int
    selection: tuple[int, int] | None
    config: dict
    obstruction: dict | None = None
    notes: list[str] = field(default_factory=list)


# -- parallel grid map --------------------------------------------------------------

def _map_points(fn, pts):
    workers = int(os.environ.get("INVAR3_THREADS", "1") or "1")
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, pts))
    return [fn(p) for p in pts]


# -- group actions -------------------------------------------------------------------

def _check_mutual_inverse(phi, phi_inv, window: DomainGrid, tol: float = 1e-10):
    fwd = [coefficient_field(c) for c in phi]
    bwd = [coefficient_field(c) for c in phi_inv]
    xs = np.linspace(window.x0, window.x1, 5)
    ys = np.linspace(window.y0, window.y1, 5)
    scale = max(abs(window.x0), abs(window.x1), abs(window.y0), abs(window.y1), 1.0)
    for x in xs:
        for y in ys:
            px = bwd[0](x, y, 0).value
            py = bwd[1](x, y, 0).value
            rx = fwd[0](px, py, 0).value - x
            ry = fwd[1](px, py, 0).value - y
            if max(abs(rx), abs(ry)) > tol * scale:
                raise InverseMismatchError(
                    f"maps are not mutually inverse at ({x:.3g}, {y:.3g}): "
                    f"residual {max(abs(rx), abs(ry)):.3g}")


def _chain_rule_trackers(phi_jets: tuple[Jet2, Jet2], depth: int) -> dict:
    """Expansion coefficients of iterated derivatives through a map.

    Returns ``{alpha: {beta: jet}}`` such that
    d^alpha (g o phi) = sum_beta coeff[beta] * (d^beta g) o phi,
    for all |alpha| <= depth.  Coefficient jets live at the base point of
    ``phi_jets`` and lose one order per differentiation step.
    """
    j11 = phi_jets[0].dx()
    j12 = phi_jets[0].dy()
    j21 = phi_jets[1].dx()
    j22 = phi_jets[1].dy()

    def derive(tracker: dict, axis: int) -> dict:
        out: dict = {}

        def acc(beta, v):
            out[beta] = out[beta] + v if beta in out else v

        ja, jb = (j11, j21) if axis == 0 else (j12, j22)
        for beta, c in tracker.items():
            if isinstance(c, Jet2):
                acc(beta, c.dx() if axis == 0 else c.dy())
            shift_a = (beta[0] + 1, beta[1])
            shift_b = (beta[0], beta[1] + 1)
            acc(shift_a, c * ja)
            acc(shift_b, c * jb)
        return out

    trackers = {(0, 0): {(0, 0): 1.0}}
    for t in range(1, depth + 1):
        for j in range(t + 1):
            i = t - j
            if i > 0:
                trackers[(i, j)] = derive(trackers[(i - 1, j)], 0)
            else:
                trackers[(i, j)] = derive(trackers[(i, j - 1)], 1)
    return trackers


def pushforward_operator(op: Operator3, phi, phi_inv,
                         window: DomainGrid | None = None) -> Operator3:
    """Transport an operator field along a diffeomorphism.

    ``phi`` and ``phi_inv`` are pairs of expressions (or field callables)
    that must be mutually inverse; when ``window`` is given the inverse
    relation is verified on a sample of it.  Coefficients of the result
    are transformed exactly on jets by the two-variable chain rule and
    re-expressed at the image point through the inverse map.
    """
    if window is not None:
        _check_mutual_inverse(phi, phi_inv, window)
    fwd = [coefficient_field(c) for c in phi]
    bwd = [coefficient_field(c) for c in phi_inv]
    op_fields = [coefficient_field(c) for c in op.components]
    cache: dict = {}

    def raw_at(x: float, y: float, order: int) -> dict:
        key = (x, y, order)
        hit = cache.get(key)
        if hit is not None:
            return hit
        inv1 = bwd[0](x, y, order)
        inv2 = bwd[1](x, y, order)
        px, py = inv1.value, inv2.value
        # chain-rule coefficients lose three orders through the depth-3
        # trackers; the operator coefficients are never differentiated
        phi_jets = (fwd[0](px, py, order + 3), fwd[1](px, py, order + 3))
        trackers = _chain_rule_trackers(phi_jets, 3)
        coeff_jets = {name: f(px, py, order)
                      for name, f in zip(RAW_SLOTS, op_fields)}
        raw_p: dict = {}
        for name, (alpha, weight) in RAW_SLOTS.items():
            a_jet = coeff_jets[name] * weight
            for beta, c in trackers[alpha].items():
                term = a_jet * c
                raw_p[beta] = raw_p.get(beta, 0.0) + term
        raw_y = {}
        for beta, v in raw_p.items():
            j = v if isinstance(v, Jet2) else Jet2.constant(v, order)
            raw_y[beta] = compose(j.truncated(min(j.order, order)), inv1, inv2)
        if len(cache) > 4096:
            cache.clear()
        cache[key] = raw_y
        return raw_y

    def component(name: str):
        alpha, weight = RAW_SLOTS[name]

        def f(x, y, order, _alpha=alpha, _w=weight):
            return raw_at(x, y, order)[_alpha] * (1.0 / _w)
        return f

    return Operator3(**{name: component(name) for name in RAW_SLOTS})


def pushforward_symbol(sym: Symbol3, phi, phi_inv,
                       window: DomainGrid | None = None) -> Symbol3:
    """Transport a cubic symbol field along a diffeomorphism (tensor law)."""
    if window is not None:
        _check_mutual_inverse(phi, phi_inv, window)
    fwd = [coefficient_field(c) for c in phi]
    bwd = [coefficient_field(c) for c in phi_inv]
    comp_fields = [coefficient_field(c) for c in sym.components]

    def component(idx: int):
        def f(x, y, order):
            inv1 = bwd[0](x, y, order)
            inv2 = bwd[1](x, y, order)
            px, py = inv1.value, inv2.value
            f1 = fwd[0](px, py, order + 1)
            f2 = fwd[1](px, py, order + 1)
            u = (f1.dx(), f2.dx())   # first rows of the Jacobian columns
            v = (f1.dy(), f2.dy())
            comps = tuple(cf(px, py, order) for cf in comp_fields)
            new = cubic_in_basis(comps, (u[0], v[0]), (u[1], v[1]))
            j = new[idx]
            j = j if isinstance(j, Jet2) else Jet2.constant(j, order)
            return compose(j.truncated(min(j.order, order)), inv1, inv2)
        return f

    return Symbol3(component(0), component(1), component(2), component(3))


def gauge_transform(op: Operator3, h, window: DomainGrid | None = None,
                    floor: float = 1e-9) -> Operator3:
    """Conjugate the operator by a nonvanishing multiplier: h o A o h^{-1}.

    The principal symbol is untouched; lower-order coefficients pick up
    Leibniz corrections computed exactly on jets.
    """
    hf = coefficient_field(h)
    if window is not None:
        signs = set()
        for (x, y) in DomainGrid(window.x0, window.x1, window.y0, window.y1, 8, 8).points():
            v = hf(x, y, 0).value
            if abs(v) < floor:
                raise ZeroCrossingError(f"multiplier vanishes near ({x:.3g}, {y:.3g})")
            signs.add(v > 0)
        if len(signs) > 1:
            raise ZeroCrossingError("multiplier changes sign on the window")
    op_fields = {name: coefficient_field(c) for name, c in zip(RAW_SLOTS, op.components)}
    cache: dict = {}

    def raw_at(x: float, y: float, order: int) -> dict:
        key = (x, y, order)
        hit = cache.get(key)
        if hit is not None:
            return hit
        hj = hf(x, y, order + 3)
        if hj.value == 0.0 or abs(hj.value) < floor:
            raise ZeroCrossingError(f"multiplier vanishes at ({x:.3g}, {y:.3g})")
        hinv = 1.0 / hj
        # raw partial jets of 1/h up to total order 3
        dparts = {(0, 0): hinv}
        for t in range(1, 4):
            for j in range(t + 1):
                i = t - j
                src = dparts[(i - 1, j)] if i > 0 else dparts[(i, j - 1)]
                dparts[(i, j)] = src.dx() if i > 0 else src.dy()
        out: dict = {}
        for name, (alpha, weight) in RAW_SLOTS.items():
            a_jet = op_fields[name](x, y, order) * weight
            a1, a2 = alpha
            for b1 in range(a1 + 1):
                for b2 in range(a2 + 1):
                    cmb = math.comb(a1, b1) * math.comb(a2, b2)
                    term = hj * a_jet * dparts[(a1 - b1, a2 - b2)] * cmb
                    slot = (b1, b2)
                    out[slot] = out.get(slot, 0.0) + term
        if len(cache) > 4096:
            cache.clear()
        cache[key] = out
        return out

    def component(name: str):
        alpha, weight = RAW_SLOTS[name]

        def f(x, y, order, _alpha=alpha, _w=weight):
            return raw_at(x, y, order)[_alpha] * (1.0 / _w)
        return f

    return Operator3(**{name: component(name) for name in RAW_SLOTS})


def scale_operator(op: Operator3, factor) -> Operator3:
    """Multiply all ten coefficients by a number or a scalar field."""
    if isinstance(factor, (int, float)):
        ff = lambda x, y, order: Jet2.constant(float(factor), order)
    else:
        ff = coefficient_field(factor)

    def component(c):
        cf = coefficient_field(c)
        return lambda x, y, order: cf(x, y, order) * ff(x, y, order)

    return op.map(component)


# -- the canonical line-bundle connection ----------------------------------------

def line_bundle_connection(op_field: Operator3, p: tuple[float, float], *,
                           extra_order: int = 0) -> tuple[OneForm, Any]:
    """Connection form and multiplier pinned by the operator's subsymbol.

    Solves the 3x3 linear system expressing that the order-2 part of the
    operator minus its quantized principal symbol is proportional to the
    weight--1/3 rescaled Hessian of the cubic.  Returns (theta, lambda)
    as jets carrying ``extra_order`` derivatives.
    """
    from .symbol import scaled_hessian

    m = max(2, extra_order + 1)
    opp = op_field.at(p[0], p[1], m)
    sigma3 = opp.principal_symbol()
    sub0 = subsymbol(opp, None)
    g = scaled_hessian(sigma3, -1.0 / 3.0)
    a1, a2, a3, a4 = sigma3.components
    M = [
        [3 * a1, 3 * a2, g.g11],
        [6 * a2, 6 * a3, g.g12],
        [3 * a3, 3 * a4, g.g22],
    ]
    rhs = [sub0[0], 2 * sub0[1], sub0[2]]
    x, report = solve_jet_system(M, rhs, singular_message="line-bundle connection: singular symbol")
    theta = OneForm(x[0], x[1])
    lam = x[2]
    # substitution check against the defining relation
    res = 0.0
    for row, b in zip(M, rhs):
        lhs = row[0] * x[0] + row[1] * x[1] + row[2] * x[2] - b
        res = max(res, abs(value_of(lhs)))
    scale = max(1.0, opp.norm())
    if res > 1e-10 * scale * max(1.0, report.cond):
        raise RegularityError("line-bundle connection residual too large",
                              [f"residual {res:.3g}"])
    return theta, lam


# -- normalization ------------------------------------------------------------------

def normalize(op_field: Operator3) -> Operator3:
    """Rescale the operator by lambda^(-3/2), where lambda is the squared
    length of the conformal coframe covector in the companion metric.

    The multiplier is a conformal invariant of weight 2/3, so
    ``normalize(f * A)`` equals ``sign(f) * normalize(A)`` for any
    nonvanishing smooth f.  Raises :class:`NonPositiveScaleError` where
    lambda is not positive.
    """
    from .symbol import scaled_hessian

    sym_field = Symbol3(*op_field.components[:4])
    op_fields = [coefficient_field(c) for c in op_field.components]
    cache: dict = {}

    def factor_at(x: float, y: float, order: int) -> Jet2:
        key = (x, y, order)
        hit = cache.get(key)
        if hit is not None:
            return hit
        data = conformal_frame_data(sym_field, x, y, extra_order=max(order - 1, 0))
        sp = sym_field.at(x, y, order + 1)
        g = scaled_hessian(sp, -1.0 / 3.0)
        lam = g.pair(data.theta.components, data.theta.components)
        lam_value = value_of(lam)
        if lam_value <= 0.0:
            raise NonPositiveScaleError(
                f"normalization multiplier {lam_value:.3g} is not positive at "
                f"({x:.3g}, {y:.3g})")
        lam_jet = lam if isinstance(lam, Jet2) else Jet2.constant(lam, order)
        factor = real_power(lam_jet.truncated(min(lam_jet.order, order)), -1.5)
        if len(cache) > 4096:
            cache.clear()
        cache[key] = factor
        return factor

    def component(idx: int):
        def f(x, y, order):
            return op_fields[idx](x, y, order) * factor_at(x, y, order)
        return f

    return Operator3(*(component(i) for i in range(10)))


# -- natural models -------------------------------------------------------------------

def _candidate_invariants(sym_field: Symbol3, x: float, y: float, extra: int,
                          with_frame: bool = False):
    """Natural-coordinate candidates: the basic scalar invariants compressed
    through asinh.  A fixed smooth reparameterization of an invariant is
    again an invariant with the same independence locus, and the
    compression keeps Newton chart inversion workable where the raw
    invariants traverse orders of magnitude."""
    sp = sym_field.at(x, y, extra + 1)
    frame = symbol_coframe_point(sp)
    cands = tuple(jet_asinh(c) for c in decompose_cubic(sp, frame))
    if with_frame:
        return cands, frame
    return cands


_PAIRS = [(i, j) for i in range(4) for j in range(i + 1, 4)]


def _stage_one(op_field: Operator3, grid: DomainGrid):
    """Candidate invariant values and gradients at every grid point."""
    sym_field = Symbol3(*op_field.components[:4])
    pts = grid.points()

    def one(pt):
        x, y = pt
        try:
            cands = _candidate_invariants(sym_field, x, y, 1)
        except (Invar3Error, ZeroDivisionError, FloatingPointError):
            return None
        vals = np.array([value_of(c) for c in cands])
        grads = np.array([[c.partial(1, 0), c.partial(0, 1)] for c in cands])
        if not (np.all(np.isfinite(vals)) and np.all(np.isfinite(grads))):
            return None
        return (vals, grads)

    return pts, _map_points(one, pts)


def _pair_quality(stage, pair, floor: float):
    """Fraction of usable points where the pair's Jacobian clears the floor."""
    i, j = pair
    ok = 0
    total = 0
    for rec in stage:
        if rec is None:
            continue
        total += 1
        vals, grads = rec
        det = grads[i, 0] * grads[j, 1] - grads[i, 1] * grads[j, 0]
        scale = (np.hypot(*grads[i]) * np.hypot(*grads[j])) + 1e-300
        if abs(det) >= floor * scale:
            ok += 1
    return (ok / max(total, 1)), total, ok


def _select_pair(stages: list, n_points: list, cfg: EquivConfig) -> tuple[int, int]:
    """First candidate pair in lexicographic order that is in general
    position for every supplied stage-one scan."""
    for pair in _PAIRS:
        good = True
        for stage, npts in zip(stages, n_points):
            frac, total, ok = _pair_quality(stage, pair, cfg.jacobian_floor)
            if total < cfg.min_regular_fraction * npts or frac < cfg.min_regular_fraction:
                good = False
                break
        if good:
            return pair
    raise GeneralPositionError(
        "no candidate invariant pair is functionally independent on enough of the grid")


def build_natural_model(op_field: Operator3, grid: DomainGrid, mode: str = "scalar",
                        selection: tuple[int, int] | None = None,
                        config: EquivConfig | None = None) -> NaturalModel:
    """Sample the operator's invariant fields over the grid and organize
    them by the selected pair of natural coordinates."""
    cfg = config or EquivConfig()
    if mode not in ("scalar", "bundle"):
        raise ValueError(f"unknown mode {mode!r}")
    pts, stage = _stage_one(op_field, grid)
    if selection is None:
        selection = _select_pair([stage], [len(pts)], cfg)
    return _assemble_model(op_field, grid, mode, selection, cfg, pts, stage)


def _assemble_model(op_field, grid, mode, selection, cfg, pts, stage) -> NaturalModel:
    sym_field = Symbol3(*op_field.components[:4])
    i_sel, j_sel = selection
    coords_cache: dict = {}

    def point_data(x: float, y: float):
        key = (x, y)
        hit = coords_cache.get(key)
        if hit is not None:
            return hit
        cands, frame = _candidate_invariants(sym_field, x, y, 1, with_frame=True)
        ci, cj = cands[i_sel], cands[j_sel]
        vals = (ci.value, cj.value)
        J = ((ci.partial(1, 0), ci.partial(0, 1)),
             (cj.partial(1, 0), cj.partial(0, 1)))
        d1 = (value_of(frame.d1[0]), value_of(frame.d1[1]))
        d2 = (value_of(frame.d2[0]), value_of(frame.d2[1]))
        # frame derivatives of the selected invariants: order-two scalar
        # invariants of the principal symbol, used as a branch signature
        sig = (d1[0] * J[0][0] + d1[1] * J[0][1],
               d2[0] * J[0][0] + d2[1] * J[0][1],
               d1[0] * J[1][0] + d1[1] * J[1][1],
               d2[0] * J[1][0] + d2[1] * J[1][1])
        out = (vals, J, sig)
        if len(coords_cache) > 8192:
            coords_cache.clear()
        coords_cache[key] = out
        return out

    def coords_jac(x: float, y: float):
        vals, J, _ = point_data(x, y)
        return (vals, J)

    def signature_at(x: float, y: float):
        return point_data(x, y)[2]

    if mode == "scalar":
        field_names = list(_SCALAR_FIELDS)

        def fields_at(x: float, y: float) -> dict:
            cands = _candidate_invariants(sym_field, x, y, 3)
            I1, I2 = cands[i_sel], cands[j_sel]
            opp = op_field.at(x, y, 0)
            out = {}
            for (a, b) in MONOMIALS:
                mono = (I1 ** a) * (I2 ** b)
                total = 0.0
                for name, (alpha, weight) in RAW_SLOTS.items():
                    total += value_of(getattr(opp, name)) * weight * mono.partial(*alpha)
                out[f"J_{a}{b}"] = total
            return out

        connection_at = None
    else:
        from .invariants import operator_invariants

        field_names = list(_BUNDLE_FIELDS)

        def fields_at(x: float, y: float) -> dict:
            inv = operator_invariants(op_field, x, y, mode="bundle")
            return inv.flat()

        def connection_at(x: float, y: float) -> tuple[float, float, float]:
            theta_xi, _ = line_bundle_connection(op_field, (x, y), extra_order=1)
            curv = exterior_derivative(theta_xi)
            return (value_of(theta_xi.t1), value_of(theta_xi.t2), value_of(curv.r))

    npts = len(pts)
    values = np.full((npts, 2), np.nan)
    jacobians = np.full((npts, 2, 2), np.nan)
    mask = np.zeros(npts, dtype=bool)
    fvals = np.full((npts, len(field_names)), np.nan)

    def one(k_pt):
        k, pt = k_pt
        rec = stage[k]
        if rec is None:
            return None
        vals, grads = rec
        if max(abs(vals[i_sel]), abs(vals[j_sel])) > cfg.coordinate_cap:
            return None
        det = grads[i_sel, 0] * grads[j_sel, 1] - grads[i_sel, 1] * grads[j_sel, 0]
        scale = (np.hypot(*grads[i_sel]) * np.hypot(*grads[j_sel])) + 1e-300
        if abs(det) < cfg.jacobian_floor * scale:
            return None
        try:
            f = fields_at(pt[0], pt[1])
        except (Invar3Error, ZeroDivisionError, FloatingPointError):
            return None
        row = np.array([f[n] for n in field_names])
        if not np.all(np.isfinite(row)):
            return None
        return (vals[[i_sel, j_sel]], grads[[i_sel, j_sel]], row)

    results = _map_points(one, list(enumerate(pts)))
    for k, res in enumerate(results):
        if res is None:
            continue
        values[k] = res[0]
        jacobians[k] = res[1]
        fvals[k] = res[2]
        mask[k] = True

    if mask.sum() < max(4, cfg.min_regular_fraction * npts):
        raise GeneralPositionError(
            f"only {int(mask.sum())}/{npts} grid points are regular for pair {selection}")

    chart = NaturalChart(selection=selection, values=values, jacobians=jacobians, mask=mask)
    return NaturalModel(mode=mode, grid=grid, chart=chart, field_names=field_names,
                        field_values=fvals, points=np.array(pts),
                        coords_jac=coords_jac, fields_at=fields_at,
                        connection_at=connection_at, signature_at=signature_at)


# -- chart inversion and comparison ---------------------------------------------------

def _bracketing_cells(model: NaturalModel, target: np.ndarray):
    """Sample cells whose corner values bracket the target, with bounds.

    Every fold branch of the chart lies in some sample cell whose value box
    (with margin) contains the target; Newton clamped to such a cell finds
    the branch living there without sliding into another basin.
    """
    grid = model.grid
    vals = model.chart.values.reshape(grid.nx, grid.ny, 2)
    mask = model.chart.mask.reshape(grid.nx, grid.ny)
    pts = model.points.reshape(grid.nx, grid.ny, 2)
    scored = []
    for ix in range(grid.nx - 1):
        for iy in range(grid.ny - 1):
            if not (mask[ix, iy] and mask[ix + 1, iy] and mask[ix, iy + 1]
                    and mask[ix + 1, iy + 1]):
                continue
            corners = vals[ix:ix + 2, iy:iy + 2].reshape(4, 2)
            lo = corners.min(axis=0)
            hi = corners.max(axis=0)
            pad = 0.35 * (hi - lo) + 1e-12
            if np.all(target >= lo - pad) and np.all(target <= hi + pad):
                x0 = pts[ix, iy, 0]
                y0 = pts[ix, iy, 1]
                x1 = pts[ix + 1, iy + 1, 0]
                y1 = pts[ix + 1, iy + 1, 1]
                mx, my = 0.6 * (x1 - x0), 0.6 * (y1 - y0)
                center = (0.5 * (x0 + x1), 0.5 * (y0 + y1))
                bounds = (x0 - mx, x1 + mx, y0 - my, y1 + my)
                # taut boxes first: cells swallowed by a blowup bracket
                # everything and should not crowd out genuine candidates
                diag = float(np.hypot(*(hi - lo))) + 1e-12
                score = float(np.hypot(*(target - corners.mean(axis=0)))) / diag + diag * 1e-6
                scored.append((score, center, bounds))
    scored.sort(key=lambda s: s[0])
    return [(center, bounds) for (_, center, bounds) in scored[:12]]


def _newton_solve(model: NaturalModel, target: np.ndarray, seed, bounds,
                  cfg: EquivConfig, max_iter: int):
    """Damped, clamped Newton for one seed; returns the solution or None."""
    coord_scale = max(1.0, float(np.max(np.abs(model.values_masked))))
    span = max(model.grid.x1 - model.grid.x0, model.grid.y1 - model.grid.y0)

    def inside(x, y):
        if bounds is None:
            return model.grid.contains(x, y, pad=cfg.domain_pad)
        return bounds[0] <= x <= bounds[1] and bounds[2] <= y <= bounds[3]

    def residual(x, y):
        (v1, v2), J = model.coords_jac(x, y)
        return (v1 - target[0], v2 - target[1]), J

    x, y = seed
    try:
        (r1, r2), J = residual(x, y)
    except (Invar3Error, ZeroDivisionError, FloatingPointError):
        return None
    err = math.hypot(r1, r2)
    for _ in range(max_iter):
        if err <= cfg.newton_tol * coord_scale:
            return (x, y)
        det = J[0][0] * J[1][1] - J[0][1] * J[1][0]
        if abs(det) < 1e-300:
            return None
        dx = (J[1][1] * r1 - J[0][1] * r2) / det
        dy = (-J[1][0] * r1 + J[0][0] * r2) / det
        step_len = math.hypot(dx, dy)
        if step_len > 0.5 * span:
            shrink = 0.5 * span / step_len
            dx *= shrink
            dy *= shrink
        lam = 1.0
        improved = False
        for _ in range(8):
            xn, yn = x - lam * dx, y - lam * dy
            if inside(xn, yn):
                try:
                    (n1, n2), Jn = residual(xn, yn)
                    nerr = math.hypot(n1, n2)
                except (Invar3Error, ZeroDivisionError, FloatingPointError):
                    nerr = math.inf
                    Jn = None
                if nerr < err:
                    x, y, r1, r2, J, err = xn, yn, n1, n2, Jn, nerr
                    improved = True
                    break
            lam *= 0.5
        if not improved:
            return None
    return (x, y) if err <= cfg.newton_tol * coord_scale else None


def _invert_chart(model: NaturalModel, target: np.ndarray, cfg: EquivConfig,
                  n_seeds: int = 3):
    """Yield distinct chart preimages of the target (fold branches).

    Natural coordinates are only local coordinates, so a target value may
    have several preimages on the window.  Branches are searched from every
    bracketing sample cell (Newton clamped to the cell) and from the nearest
    samples in coordinate space (Newton clamped to the padded window).
    """
    span = max(model.grid.x1 - model.grid.x0, model.grid.y1 - model.grid.y0)
    found: list[tuple[float, float]] = []

    def register(sol):
        if sol is None:
            return None
        if any(math.hypot(sol[0] - fx, sol[1] - fy) < 1e-7 * span for (fx, fy) in found):
            return None
        found.append(sol)
        return sol

    for (center, bounds) in _bracketing_cells(model, target):
        sol = register(_newton_solve(model, target, center, bounds, cfg, 15))
        if sol is not None:
            yield sol
    tree = model.tree()
    samples = model.points[model.chart.mask]
    k = min(n_seeds, len(samples))
    _, idxs = tree.query(target, k=k)
    for i in np.atleast_1d(idxs):
        sol = register(_newton_solve(model, target, tuple(samples[i]), None,
                                     cfg, cfg.newton_max_iter))
        if sol is not None:
            yield sol


def _compare_models(model_a: NaturalModel, model_b: NaturalModel, tol: float,
                    cfg: EquivConfig, with_obstruction: bool) -> Verdict:
    if model_a.field_names != model_b.field_names:
        raise ValueError("models carry different field sets")
    pa, pb = model_a.values_masked, model_b.values_masked
    # robust per-model coordinate boxes: a pole of an invariant inside the
    # window must not be allowed to dwarf the comparable region
    q = cfg.robust_quantile
    boxes = []
    for pts_i in (pa, pb):
        lo_q = np.quantile(pts_i, q, axis=0)
        hi_q = np.quantile(pts_i, 1.0 - q, axis=0)
        mid = 0.5 * (lo_q + hi_q)
        half = 0.5 * (hi_q - lo_q) * 1.6 + 1e-12
        boxes.append((mid - half, mid + half))
    lo = np.minimum(boxes[0][0], boxes[1][0])
    hi = np.maximum(boxes[0][1], boxes[1][1])
    n = cfg.compare_resolution
    gx = np.linspace(lo[0], hi[0], n)
    gy = np.linspace(lo[1], hi[1], n)
    gpts = np.array([(u, v) for u in gx for v in gy])
    in_a = model_a.contains_coord(gpts)
    in_b = model_b.contains_coord(gpts)
    union = int(np.sum(in_a | in_b))
    inter = int(np.sum(in_a & in_b))
    # intersection over the smaller image: windows of different sizes give
    # nested images for equivalent operators, which must not read as a
    # mismatch, while genuinely shifted invariant ranges still score ~0
    smaller = min(int(np.sum(in_a)), int(np.sum(in_b)))
    overlap = inter / smaller if smaller else 0.0
    notes: list[str] = []
    cfgd = cfg.as_dict()
    cfgd["tolerance"] = tol
    sel = model_a.chart.selection

    if union == 0:
        return Verdict("inconclusive", math.inf, 0.0, {}, 0, sel, cfgd,
                       notes=["no usable image region on either side"])
    if overlap < cfg.min_overlap:
        return Verdict("no", math.inf, overlap, {}, 0, sel, cfgd,
                       notes=["image mismatch: natural-coordinate ranges do not overlap enough"])

    # Matching targets are taken from each model's own sampled coordinate
    # values (the convex hull can overcover a curvilinear image, so free
    # grid targets may have no preimage); the owning chart needs no
    # inversion there.  The partner chart is inverted by damped Newton;
    # among the partner's fold branches the best-matching one is scored,
    # which tests mutual coverage of the two multivalued graphs.
    field_names = model_a.field_names
    diag = {name: 0.0 for name in field_names}
    matched: list[tuple[np.ndarray, tuple, tuple]] = []
    considered = 0

    def rel(a: float, b: float) -> float:
        # pointwise relative discrepancy with a unit floor; a global field
        # scale would let near-pole magnitudes mask genuine differences
        return abs(a - b) / max(1.0, abs(a), abs(b))

    def sig_mismatch(sa, sb) -> float:
        scale = max(1.0, max(abs(v) for v in sa), max(abs(v) for v in sb))
        return max(abs(a - b) for a, b in zip(sa, sb)) / scale

    def gather(owner: NaturalModel, partner: NaturalModel, budget: int, flip: bool):
        nonlocal considered
        vals = owner.values_masked
        pts = owner.points[owner.chart.mask]
        rows = owner.field_values[owner.chart.mask]
        inside = partner.contains_coord(vals)
        # the convex hull overcovers a curvilinear image: also require the
        # target to sit close to the partner's own sampled values, so that
        # a counterpart plausibly exists in the partner's window
        ptree = partner.tree()
        pvals = partner.values_masked
        own_spacing, _ = ptree.query(pvals, k=min(2, len(pvals)))
        spacing = float(np.median(own_spacing[:, -1])) if len(pvals) > 1 else np.inf
        dist_t, _ = ptree.query(vals)
        inside &= dist_t <= 3.0 * spacing + 1e-12
        idxs = np.nonzero(inside)[0]
        if len(idxs) > budget:
            stride = int(np.ceil(len(idxs) / budget))
            idxs = idxs[::stride]
        jacs = owner.chart.jacobians[owner.chart.mask]
        for k in idxs:
            t = vals[k]
            x_own = (float(pts[k][0]), float(pts[k][1]))
            ja = jacs[k]
            own_sign = np.sign(ja[0, 0] * ja[1, 1] - ja[0, 1] * ja[1, 0])
            f_own = dict(zip(field_names, rows[k]))
            try:
                sig_own = owner.signature_at(*x_own)
            except (Invar3Error, ZeroDivisionError, FloatingPointError):
                continue
            considered += 1
            best = None
            for x_other in _invert_chart(partner, t, cfg):
                # compare only against branches the partner actually models:
                # a preimage far outside its window is extrapolation
                if not partner.grid.contains(*x_other, pad=0.05):
                    continue
                try:
                    # the hidden chart map preserves orientation, so the
                    # matching branch must carry the owner's Jacobian sign;
                    # fold branches across a fold line have the opposite one
                    _, jb = partner.coords_jac(*x_other)
                    det_b = jb[0][0] * jb[1][1] - jb[0][1] * jb[1][0]
                    if np.sign(det_b) != own_sign:
                        continue
                    # a structural counterpart must reproduce the extended
                    # signature (frame derivatives of the chart invariants,
                    # themselves invariants of the principal symbol); fold
                    # impostors and perturbed-symbol partners fail here
                    if sig_mismatch(sig_own, partner.signature_at(*x_other)) > cfg.signature_tol:
                        continue
                    f_other = partner.fields_at(*x_other)
                except (Invar3Error, ZeroDivisionError, FloatingPointError):
                    continue
                diffs = {n: rel(f_own[n], f_other[n]) for n in field_names}
                worst = max(diffs.values())
                if best is None or worst < best[0]:
                    best = (worst, diffs, x_other)
                if best[0] <= 0.3 * tol:
                    break  # this branch already matches; skip the rest
            if best is None:
                continue
            _, diffs, x_other = best
            for n in field_names:
                diag[n] = max(diag[n], diffs[n])
            matched.append((t, x_other, x_own) if flip else (t, x_own, x_other))

    half = max(cfg.max_matched_points // 2, 1)
    gather(model_a, model_b, half, flip=False)
    gather(model_b, model_a, half, flip=True)
    if len(matched) < cfg.min_matched_points:
        if considered >= cfg.min_matched_points and len(matched) < max(3, considered // 4):
            # the images overlap but the extended invariant signatures of one
            # model are (almost) nowhere realized by the other: inequivalent
            return Verdict("no", math.inf, overlap, diag, len(matched), sel, cfgd,
                           notes=["invariant signature mismatch: the models share "
                                  "coordinates but not the derived invariants"])
        return Verdict("inconclusive", math.inf, overlap, {}, len(matched), sel, cfgd,
                       notes=[f"only {len(matched)} matched comparison points"])

    max_disc = max(diag.values()) if diag else math.inf
    fields_ok = max_disc <= tol

    obstruction = None
    obstruction_ok = True
    if with_obstruction and fields_ok:
        obstruction = _obstruction_report(model_a, model_b, matched, cfg)
        obstruction_ok = obstruction["closed"]
        if not obstruction_ok:
            notes.append("internal inconsistency: fields match but the connection-form "
                         "difference is not closed")

    verdict = "yes" if (fields_ok and obstruction_ok) else "no"
    return Verdict(verdict, max_disc, overlap, diag, len(matched), sel, cfgd,
                   obstruction=obstruction, notes=notes)


def _obstruction_report(model_a: NaturalModel, model_b: NaturalModel,
                        matched: list, cfg: EquivConfig) -> dict:
    """Closedness of the connection-form difference in natural coordinates.

    The exterior derivative of the difference is evaluated pointwise and
    jet-exactly at the matched points: in natural coordinates it equals the
    difference of the two bundle curvature densities divided by the chart
    Jacobian determinants.  A loop-integral guard (triangle circulations of
    the difference over the matched scatter) is reported redundantly;
    it carries quadrature error of the order of the triangle size, so its
    threshold is loose and it only catches gross non-exactness.
    """
    coords = []
    diffs = []
    curvature_residual = 0.0
    for (t, xa, xb) in matched:
        ua = _connection_in_chart(model_a, xa)
        ub = _connection_in_chart(model_b, xb)
        if ua is None or ub is None:
            continue
        coords.append(t)
        diffs.append((ua[0] - ub[0], ua[1] - ub[1]))
        curvature_residual = max(
            curvature_residual,
            abs(ua[2] - ub[2]) / max(1.0, abs(ua[2]), abs(ub[2])))
    report = {
        "closed": bool(coords and curvature_residual <= cfg.closedness_tol),
        "residual": curvature_residual,
        "points": len(coords),
        "loop_residual": 0.0,
        "theta_scale": 0.0,
    }
    if not coords:
        report["closed"] = True
        report["note"] = "no usable connection samples"
        return report
    coords_arr = np.array(coords)
    diffs_arr = np.array(diffs)
    uscale = float(np.max(np.abs(diffs_arr)))
    report["theta_scale"] = uscale
    if len(coords) >= 6:
        try:
            tri = Delaunay(coords_arr)
        except Exception:
            return report
        worst = 0.0
        edge_scale = 1e-300
        for simplex in tri.simplices:
            p = coords_arr[simplex]
            u = diffs_arr[simplex]
            circ = 0.0
            per = 0.0
            for e in range(3):
                a, b = e, (e + 1) % 3
                seg = p[b] - p[a]
                per += float(np.hypot(*seg))
                circ += 0.5 * float((u[a] + u[b]) @ seg)
            worst = max(worst, abs(circ))
            edge_scale = max(edge_scale, per * max(uscale, 1.0))
        loop_residual = worst / edge_scale
        report["loop_residual"] = loop_residual
        if loop_residual > 0.5:
            report["closed"] = False
    return report


def _connection_in_chart(model: NaturalModel, xy) -> tuple[float, float, float] | None:
    """Connection-form components in the dI basis plus the exterior
    derivative's density in natural coordinates, at one point."""
    if model.connection_at is None:
        return None
    try:
        t1, t2, curv = model.connection_at(*xy)
        _, J = model.coords_jac(*xy)
    except (Invar3Error, ZeroDivisionError, FloatingPointError):
        return None
    det = J[0][0] * J[1][1] - J[0][1] * J[1][0]
    if abs(det) < 1e-300:
        return None
    # solve J^T u = theta for the components of theta in the dI basis;
    # a 2-form density divides by the Jacobian determinant
    u1 = (J[1][1] * t1 - J[1][0] * t2) / det
    u2 = (-J[0][1] * t1 + J[0][0] * t2) / det
    return (u1, u2, curv / det)


# -- public pairwise tests --------------------------------------------------------------

def _as_grid_list(grid) -> list[DomainGrid]:
    return list(grid) if isinstance(grid, (list, tuple)) else [grid]


def _pairwise(op_a: Operator3, op_b: Operator3, grid_a, grid_b, tol: float,
              cfg: EquivConfig, mode: str) -> Verdict:
    grids_a = _as_grid_list(grid_a)
    grids_b = _as_grid_list(grid_b)
    if len(grids_a) != len(grids_b):
        raise ValueError("both operators need the same number of chart rectangles")
    try:
        stages = []
        counts = []
        per_grid = []
        for ga, gb in zip(grids_a, grids_b):
            pts_a, st_a = _stage_one(op_a, ga)
            pts_b, st_b = _stage_one(op_b, gb)
            stages.extend([st_a, st_b])
            counts.extend([len(pts_a), len(pts_b)])
            per_grid.append((ga, gb, pts_a, st_a, pts_b, st_b))
        selection = _select_pair(stages, counts, cfg)
        verdicts = []
        for (ga, gb, pts_a, st_a, pts_b, st_b) in per_grid:
            ma = _assemble_model(op_a, ga, mode, selection, cfg, pts_a, st_a)
            mb = _assemble_model(op_b, gb, mode, selection, cfg, pts_b, st_b)
            verdicts.append(_compare_models(ma, mb, tol, cfg,
                                            with_obstruction=(mode == "bundle")))
    except GeneralPositionError as err:
        return Verdict("inconclusive", math.inf, 0.0, {}, 0, None,
                       cfg.as_dict() | {"tolerance": tol},
                       notes=[f"general position failure: {err}"])
    if len(verdicts) == 1:
        return verdicts[0]
    return _combine_verdicts(verdicts)


def _combine_verdicts(verdicts: list[Verdict]) -> Verdict:
    worst = max(v.max_discrepancy for v in verdicts)
    overlap = min(v.overlap_fraction for v in verdicts)
    kinds = [v.equivalent for v in verdicts]
    kind = "yes"
    if "inconclusive" in kinds:
        kind = "inconclusive"
    if "no" in kinds:
        kind = "no"
    diag = {}
    for v in verdicts:
        for k2, d in v.field_diagnostics.items():
            diag[k2] = max(diag.get(k2, 0.0), d)
    notes = [n for v in verdicts for n in v.notes]
    return Verdict(kind, worst, overlap, diag,
                   min(v.matched_points for v in verdicts),
                   verdicts[0].selection, verdicts[0].config,
                   obstruction=verdicts[0].obstruction, notes=notes)


def equivalent_scalar(op_a: Operator3, op_b: Operator3, grid_a, grid_b,
                      tol: float = 1e-6, config: EquivConfig | None = None) -> Verdict:
    """Are two scalar operators related by a chart diffeomorphism?"""
    return _pairwise(op_a, op_b, grid_a, grid_b, tol, config or EquivConfig(), "scalar")


def equivalent_bundle(op_a: Operator3, op_b: Operator3, grid_a, grid_b,
                      tol: float = 1e-6, config: EquivConfig | None = None) -> Verdict:
    """Are two operators related by a diffeomorphism plus a gauge?

    Step one compares the natural models of the total symbols and the
    bundle curvature invariant; step two, on success, checks that the
    difference of the canonical connection forms (in natural coordinates)
    is closed -- on a simply connected chart that difference is then exact
    and realized by an explicit gauge.
    """
    return _pairwise(op_a, op_b, grid_a, grid_b, tol, config or EquivConfig(), "bundle")


def equation_equivalent(op_a: Operator3, op_b: Operator3, grid_a, grid_b,
                        tol: float = 1e-6, config: EquivConfig | None = None) -> Verdict:
    """Equivalence of the conformal classes (the underlying equations).

    Both operators are normalized first; the classes are equivalent exactly
    when the normalizations are equivalent up to overall sign.
    """
    a0 = normalize(op_a)
    b0 = normalize(op_b)
    v_plus = equivalent_bundle(a0, b0, grid_a, grid_b, tol, config)
    if v_plus.equivalent == "yes":
        v_plus.notes.append("matched against +normalization")
        return v_plus
    v_minus = equivalent_bundle(a0, scale_operator(b0, -1.0), grid_a, grid_b, tol, config)
    if v_minus.equivalent == "yes":
        v_minus.notes.append("matched against -normalization")
        return v_minus
    # prefer the more informative failure
    if v_plus.equivalent == "no" and v_minus.equivalent == "no":
        best = v_plus if v_plus.max_discrepancy <= v_minus.max_discrepancy else v_minus
        best.notes.append("neither sign of the normalization matches")
        return best
    return v_plus if v_plus.equivalent != "inconclusive" else v_minus


# quantize/split round-trips want this convenience in tests and the CLI
def quantize_sum(total, gamma, theta: OneForm | None = None) -> Operator3:
    """Assemble an operator from a total symbol against a connection."""
    raw: dict = {}
    for part in (total.sigma3, total.sigma2, total.sigma1, total.sigma0):
        for alpha, c in quantize(part, gamma, theta).coeffs.items():
            raw[alpha] = raw.get(alpha, 0.0) + c
    return Operator3.from_raw(raw)
