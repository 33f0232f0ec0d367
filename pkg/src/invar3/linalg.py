"""Dense linear solves over the truncated-jet ring.

A system ``M x = b`` whose entries are jets at a common point is solved
order by order: the constant-term matrix is LU-factorized once (partial
pivoting via scipy), and every higher Taylor coefficient of the solution
follows from one triangular solve against a convolution of the already
known coefficients.  This is exact truncated-series arithmetic, not an
approximation.
"""

from __future__ import annotations

import warnings

import numpy as np
from scipy.linalg import lu_factor, lu_solve

from .errors import ConditioningWarning, SingularSymbolError
from .jets import Jet2, ncoef

__all__ = ["solve_jet_system", "JetSolveReport"]


class JetSolveReport:
    """Diagnostics of a jet-ring solve: determinant, condition number, residual."""

    __slots__ = ("det", "cond", "residual")

    def __init__(self, det: float, cond: float, residual: float):
        self.det = det
        self.cond = cond
        self.residual = residual


def _common_order(entries) -> int:
    orders = [e.order for e in entries if isinstance(e, Jet2)]
    return min(orders) if orders else 0


def solve_jet_system(M, b, *, cond_warn: float = 1e12,
                     singular_message: str = "system matrix is singular"):
    """Solve M x = b with jet (or float) entries.

    Returns ``(x, report)`` where ``x`` is a list of jets at the common
    truncation order of the inputs.  Emits :class:`ConditioningWarning`
    when the constant-term matrix has condition number above
    ``cond_warn``; raises :class:`SingularSymbolError` when it is
    numerically singular.
    """
    n = len(b)
    order = min(_common_order([e for row in M for e in row]), _common_order(b))
    nc = ncoef(order)

    Mc = np.zeros((n, n, nc))
    for r in range(n):
        for c in range(n):
            e = M[r][c]
            if isinstance(e, Jet2):
                Mc[r, c, :] = e.c[:nc]
            else:
                Mc[r, c, 0] = float(e)
    bc = np.zeros((n, nc))
    for r in range(n):
        e = b[r]
        if isinstance(e, Jet2):
            bc[r, :] = e.c[:nc]
        else:
            bc[r, 0] = float(e)

    M0 = Mc[:, :, 0]
    det = float(np.linalg.det(M0))
    try:
        with warnings.catch_warnings():
            # exact singularity surfaces as our own error, not a scipy warning
            warnings.simplefilter("ignore")
            lu = lu_factor(M0)
    except Exception as err:  # scipy raises LinAlgError on exact singularity
        raise SingularSymbolError(singular_message) from err
    if not np.all(np.isfinite(lu[0])):
        raise SingularSymbolError(singular_message)
    cond = float(np.linalg.cond(M0))
    if not np.isfinite(cond) or cond > 1e15:
        raise SingularSymbolError(singular_message)
    if cond > cond_warn:
        warnings.warn(f"condition number {cond:.3g} exceeds {cond_warn:.1g}",
                      ConditioningWarning, stacklevel=2)

    # Pairs (flat index, (i, j)) in graded order; truncation is a prefix.
    pairs = []
    for t in range(order + 1):
        for j in range(t + 1):
            pairs.append((t - j, j))
    index = {ij: k for k, ij in enumerate(pairs)}

    X = np.zeros((n, nc))
    for (i, j) in pairs:
        acc = bc[:, index[(i, j)]].copy()
        for p in range(i + 1):
            for q in range(j + 1):
                if p == 0 and q == 0:
                    continue
                acc -= Mc[:, :, index[(p, q)]] @ X[:, index[(i - p, j - q)]]
        X[:, index[(i, j)]] = lu_solve(lu, acc)

    residual = float(np.max(np.abs(M0 @ X[:, 0] - bc[:, 0])))
    scale = max(1.0, float(np.max(np.abs(bc))), float(np.max(np.abs(Mc))))
    if residual > 1e-8 * scale:
        warnings.warn(f"solve residual {residual:.3g} above 1e-8 of scale {scale:.3g}",
                      ConditioningWarning, stacklevel=2)

    x = [Jet2(order, X[r].copy()) for r in range(n)]
    return x, JetSolveReport(det=det, cond=cond, residual=residual)
