"""Differential-geometric toolkit for third-order linear operators on a 2D chart.

Pointwise pipelines over exact truncated Taylor jets: principal symbols and
their discriminants, the parallel and Chern connections of a regular cubic
symbol, connection-based quantization and splitting of operators, scalar
differential invariants, and pairwise equivalence of operators through
natural coordinates.
"""

from . import errors
from .connection import (AffineConnection, GroupType, OneForm, TorsionTensor,
                         TwoForm, chern_connection, covariant_derivative_sym3,
                         curvature, exterior_derivative, group_type_test,
                         torsion, torsion_form, wagner_connection)
from .equivalence import (DomainGrid, EquivConfig, NaturalModel, Verdict,
                          build_natural_model, equation_equivalent,
                          equivalent_bundle, equivalent_scalar,
                          gauge_transform, line_bundle_connection, normalize,
                          pushforward_operator, pushforward_symbol,
                          scale_operator)
from .expr import Expr, diff, eval_jet, parse
from .invariants import (Coframe, InvariantVector, OperatorInvariants,
                         basic_invariants, conformal_coframe,
                         conformal_invariants, operator_invariants,
                         symbol_coframe, tresse_derivative)
from .jets import Jet2, compose
from .quantize import (FormalOperator, Operator3, TotalSymbol, apply_operator,
                       quantize, split, subsymbol, sym_derivation)
from .symbol import (Classification, Sym2Form, Symbol3, SymbolKind, classify,
                     discriminant, hessian, hessian2, scaled_hessian,
                     wagner_metric)

__version__ = "0.1.0"

__all__ = [
    "errors", "__version__",
    "Jet2", "compose", "Expr", "parse", "eval_jet", "diff",
    "Symbol3", "Sym2Form", "Classification", "SymbolKind",
    "discriminant", "classify", "hessian", "hessian2", "wagner_metric",
    "scaled_hessian",
    "AffineConnection", "OneForm", "TwoForm", "TorsionTensor", "GroupType",
    "covariant_derivative_sym3", "wagner_connection", "chern_connection",
    "torsion", "torsion_form", "curvature", "exterior_derivative",
    "group_type_test",
    "Operator3", "TotalSymbol", "FormalOperator",
    "sym_derivation", "quantize", "split", "subsymbol", "apply_operator",
    "Coframe", "InvariantVector", "OperatorInvariants",
    "symbol_coframe", "basic_invariants", "tresse_derivative",
    "conformal_coframe", "conformal_invariants", "operator_invariants",
    "DomainGrid", "EquivConfig", "NaturalModel", "Verdict",
    "pushforward_operator", "pushforward_symbol", "gauge_transform",
    "scale_operator", "line_bundle_connection", "build_natural_model",
    "equivalent_scalar", "equivalent_bundle", "normalize",
    "equation_equivalent",
]
