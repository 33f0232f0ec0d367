"""Coefficient expressions in two variables: parsing, jet evaluation, derivatives.

The grammar is deliberately tiny: numbers, the variables x and y, the four
arithmetic operations, integer powers, and the functions exp, ln, sin, cos,
sqrt, cbrt.  Precedence is ``^`` above unary minus above ``*``/``/`` above
``+``/``-``; binary ``-`` and ``/`` associate to the left.  Domain conditions
(log of a non-positive value and friends) surface at evaluation time, never
at parse time.

AST nodes support the Python arithmetic operators, so derived coefficient
fields can be assembled programmatically::

    x, y = var("x"), var("y")
    field = exp(x * y) / (1 + y**2)
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from . import jets
from .errors import DomainEvalError, ParseError, UnknownIdentifierError
from .jets import Jet2

__all__ = [
    "Expr", "Const", "Var", "Neg", "Add", "Sub", "Mul", "Div", "Pow", "Call",
    "parse", "eval_jet", "diff", "var", "const",
    "exp", "ln", "sin", "cos", "sqrt", "cbrt",
    "coefficient_field",
]

_FUNCTIONS = {
    "exp": jets.exp,
    "ln": jets.ln,
    "sin": jets.sin,
    "cos": jets.cos,
    "sqrt": jets.sqrt,
    "cbrt": jets.cbrt,
}


class Expr:
    """Abstract syntax tree over the variables x and y."""

    def __add__(self, other):
        return Add(self, _lift(other))

    def __radd__(self, other):
        return Add(_lift(other), self)

    def __sub__(self, other):
        return Sub(self, _lift(other))

    def __rsub__(self, other):
        return Sub(_lift(other), self)

    def __mul__(self, other):
        return Mul(self, _lift(other))

    def __rmul__(self, other):
        return Mul(_lift(other), self)

    def __truediv__(self, other):
        return Div(self, _lift(other))

    def __rtruediv__(self, other):
        return Div(_lift(other), self)

    def __neg__(self):
        return Neg(self)

    def __pow__(self, n):
        if not isinstance(n, int):
            raise TypeError("only integer powers are part of the expression language")
        return Pow(self, n)


def _lift(v) -> Expr:
    if isinstance(v, Expr):
        return v
    if isinstance(v, (int, float)):
        return Const(float(v))
    raise TypeError(f"cannot use {type(v).__name__} in an expression")


@dataclass(frozen=True)
class Const(Expr):
    value: float

    def __str__(self):
        return repr(self.value)


@dataclass(frozen=True)
class Var(Expr):
    name: str  # "x" or "y"

    def __str__(self):
        return self.name


@dataclass(frozen=True)
class Neg(Expr):
    arg: Expr

    def __str__(self):
        return f"(-{self.arg})"


@dataclass(frozen=True)
class Add(Expr):
    left: Expr
    right: Expr

    def __str__(self):
        return f"({self.left} + {self.right})"


@dataclass(frozen=True)
class Sub(Expr):
    left: Expr
    right: Expr

    def __str__(self):
        return f"({self.left} - {self.right})"


@dataclass(frozen=True)
class Mul(Expr):
    left: Expr
    right: Expr

    def __str__(self):
        return f"({self.left} * {self.right})"


@dataclass(frozen=True)
class Div(Expr):
    left: Expr
    right: Expr

    def __str__(self):
        return f"({self.left} / {self.right})"


@dataclass(frozen=True)
class Pow(Expr):
    base: Expr
    exponent: int

    def __str__(self):
        return f"({self.base}^{self.exponent})"


@dataclass(frozen=True)
class Call(Expr):
    func: str
    arg: Expr

    def __str__(self):
        return f"{self.func}({self.arg})"


def var(name: str) -> Var:
    if name not in ("x", "y"):
        raise ValueError("only 'x' and 'y' are variables")
    return Var(name)


def const(v: float) -> Const:
    return Const(float(v))


def exp(e) -> Call:
    return Call("exp", _lift(e))


def ln(e) -> Call:
    return Call("ln", _lift(e))


def sin(e) -> Call:
    return Call("sin", _lift(e))


def cos(e) -> Call:
    return Call("cos", _lift(e))


def sqrt(e) -> Call:
    return Call("sqrt", _lift(e))


def cbrt(e) -> Call:
    return Call("cbrt", _lift(e))


# -- parser -------------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<num>\d+\.\d*(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?|\d+(?:[eE][+-]?\d+)?)"
    r"|(?P<ident>[A-Za-z_]\w*)"
    r"|(?P<op>[-+*/^()]))"
)


def _tokenize(text: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None or m.end() == pos:
            stripped = text[pos:].lstrip()
            if not stripped:
                break
            offset = len(text) - len(stripped)
            raise ParseError(f"unexpected character {stripped[0]!r}", offset,
                             {"number", "identifier", "operator"})
        if m.lastgroup == "num":
            tokens.append(("num", m.group("num"), m.start("num")))
        elif m.lastgroup == "ident":
            tokens.append(("ident", m.group("ident"), m.start("ident")))
        else:
            tokens.append(("op", m.group("op"), m.start("op")))
        pos = m.end()
    tokens.append(("end", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.tokens = _tokenize(text)
        self.pos = 0

    def peek(self):
        return self.tokens[self.pos]

    def advance(self):
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def expect_op(self, op: str):
        kind, val, off = self.peek()
        if kind != "op" or val != op:
            raise ParseError(f"got {val!r}" if val else "unexpected end of input",
                             off, {op})
        return self.advance()

    def parse(self) -> Expr:
        e = self.expr()
        kind, val, off = self.peek()
        if kind != "end":
            raise ParseError(f"trailing input {val!r}", off, {"+", "-", "*", "/", "^", "end"})
        return e

    def expr(self) -> Expr:
        e = self.term()
        while True:
            kind, val, _ = self.peek()
            if kind == "op" and val in "+-":
                self.advance()
                rhs = self.term()
                e = Add(e, rhs) if val == "+" else Sub(e, rhs)
            else:
                return e

    def term(self) -> Expr:
        e = self.factor()
        while True:
            kind, val, _ = self.peek()
            if kind == "op" and val in "*/":
                self.advance()
                rhs = self.factor()
                e = Mul(e, rhs) if val == "*" else Div(e, rhs)
            else:
                return e

    def factor(self) -> Expr:
        # Unary minus binds below '^': -x^2 parses as -(x^2).
        kind, val, _ = self.peek()
        if kind == "op" and val == "-":
            self.advance()
            return Neg(self.factor())
        e = self.base()
        kind, val, _ = self.peek()
        if kind == "op" and val == "^":
            self.advance()
            e = Pow(e, self.integer())
        return e

    def integer(self) -> int:
        sign = 1
        kind, val, off = self.peek()
        if kind == "op" and val == "-":
            self.advance()
            sign = -1
            kind, val, off = self.peek()
        if kind != "num" or not re.fullmatch(r"\d+", val):
            raise ParseError(f"exponent must be an integer, got {val!r}", off, {"integer"})
        self.advance()
        return sign * int(val)

    def base(self) -> Expr:
        kind, val, off = self.advance()
        if kind == "num":
            return Const(float(val))
        if kind == "ident":
            if val in ("x", "y"):
                return Var(val)
            if val in _FUNCTIONS:
                self.expect_op("(")
                arg = self.expr()
                self.expect_op(")")
                return Call(val, arg)
            raise UnknownIdentifierError(val, off)
        if kind == "op" and val == "(":
            e = self.expr()
            self.expect_op(")")
            return e
        if kind == "op" and val == "-":
            return Neg(self.base())
        raise ParseError(f"got {val!r}" if val else "unexpected end of input",
                         off, {"number", "x", "y", "(", "-", "function"})


def parse(text: str) -> Expr:
    """Parse an expression in the two-variable coefficient language."""
    return _Parser(text).parse()


# -- evaluation ----------------------------------------------------------------

def eval_jet(e: Expr, p: tuple[float, float], order: int = 5) -> Jet2:
    """Exact order-``order`` Taylor expansion of ``e`` at the point ``p``.

    The engine-wide default depth of 5 covers the deepest standard
    pipeline (a frame derivative of a conformal invariant); pass exactly
    what a computation needs to avoid paying for unused orders.
    """
    result = _eval(e, Jet2.variable(p[0], 0, order), Jet2.variable(p[1], 1, order))
    if isinstance(result, (int, float)):
        result = Jet2.constant(result, order)
    if not result.is_finite():
        raise DomainEvalError(f"evaluation of {e} at {p} produced non-finite coefficients")
    return result


def _eval(e: Expr, xj: Jet2, yj: Jet2):
    if isinstance(e, Const):
        return e.value
    if isinstance(e, Var):
        return xj if e.name == "x" else yj
    if isinstance(e, Neg):
        return -_eval(e.arg, xj, yj)
    if isinstance(e, Add):
        return _eval(e.left, xj, yj) + _eval(e.right, xj, yj)
    if isinstance(e, Sub):
        return _eval(e.left, xj, yj) - _eval(e.right, xj, yj)
    if isinstance(e, Mul):
        return _eval(e.left, xj, yj) * _eval(e.right, xj, yj)
    if isinstance(e, Div):
        num = _eval(e.left, xj, yj)
        den = _eval(e.right, xj, yj)
        if isinstance(den, (int, float)):
            if den == 0.0:
                raise DomainEvalError("division by zero")
            return num * (1.0 / den)
        return jets.as_jet(num, den.order) / den
    if isinstance(e, Pow):
        base = _eval(e.base, xj, yj)
        if isinstance(base, (int, float)):
            if e.exponent < 0 and base == 0.0:
                raise DomainEvalError("zero raised to a negative power")
            return float(base) ** e.exponent
        return base ** e.exponent
    if isinstance(e, Call):
        arg = _eval(e.arg, xj, yj)
        if isinstance(arg, (int, float)):
            arg = Jet2.constant(arg, xj.order)
        return _FUNCTIONS[e.func](arg)
    raise TypeError(f"not an expression node: {e!r}")


# -- symbolic differentiation ---------------------------------------------------

def diff(e: Expr, name: str) -> Expr:
    """Symbolic partial derivative, without simplification."""
    if name not in ("x", "y"):
        raise ValueError("differentiation variable must be 'x' or 'y'")
    if isinstance(e, Const):
        return Const(0.0)
    if isinstance(e, Var):
        return Const(1.0 if e.name == name else 0.0)
    if isinstance(e, Neg):
        return Neg(diff(e.arg, name))
    if isinstance(e, Add):
        return Add(diff(e.left, name), diff(e.right, name))
    if isinstance(e, Sub):
        return Sub(diff(e.left, name), diff(e.right, name))
    if isinstance(e, Mul):
        return Add(Mul(diff(e.left, name), e.right), Mul(e.left, diff(e.right, name)))
    if isinstance(e, Div):
        num = Sub(Mul(diff(e.left, name), e.right), Mul(e.left, diff(e.right, name)))
        return Div(num, Mul(e.right, e.right))
    if isinstance(e, Pow):
        if e.exponent == 0:
            return Const(0.0)
        return Mul(Mul(Const(float(e.exponent)), Pow(e.base, e.exponent - 1)),
                   diff(e.base, name))
    if isinstance(e, Call):
        du = diff(e.arg, name)
        u = e.arg
        if e.func == "exp":
            return Mul(Call("exp", u), du)
        if e.func == "ln":
            return Div(du, u)
        if e.func == "sin":
            return Mul(Call("cos", u), du)
        if e.func == "cos":
            return Neg(Mul(Call("sin", u), du))
        if e.func == "sqrt":
            return Div(du, Mul(Const(2.0), Call("sqrt", u)))
        if e.func == "cbrt":
            return Div(du, Mul(Const(3.0), Pow(Call("cbrt", u), 2)))
    raise TypeError(f"not an expression node: {e!r}")


# -- coefficient fields -----------------------------------------------------------

def coefficient_field(component):
    """Normalize a coefficient component to a callable (x, y, order) -> Jet2.

    Accepts an :class:`Expr`, a string (parsed once), a plain number
    (constant field) or an already-callable field.
    """
    if isinstance(component, str):
        component = parse(component)
    if isinstance(component, Expr):
        e = component
        return lambda x, y, order: eval_jet(e, (x, y), order)
    if isinstance(component, (int, float)):
        v = float(component)
        return lambda x, y, order: Jet2.constant(v, order)
    if callable(component):
        return component
    raise TypeError(f"cannot interpret {type(component).__name__} as a coefficient field")
