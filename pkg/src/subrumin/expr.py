"""Arithmetic expressions in x, y, z: parsing, printing and evaluation.

Grammar (whitespace is insignificant)::

    expr    := term (('+' | '-') term)*
    term    := unary (('*' | '/') unary)*
    unary   := '-' unary | power
    power   := atom ('^' '-'? INTEGER)?
    atom    := NUMBER | 'pi' | 'x' | 'y' | 'z'
             | FUNC '(' expr ')' | '(' expr ')'
    FUNC    := 'sin' | 'cos' | 'exp' | 'neg'

``neg(e)`` is sugar for ``-e`` and parses to the same node.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Union

import numpy as np

from . import dual as D


class FieldParseError(ValueError):
    """Base class for expression errors; ``offset`` is a byte offset into the input."""

    def __init__(self, message: str, offset: int):
        super().__init__(message)
        self.offset = offset


class FieldSyntaxError(FieldParseError):
    def __init__(self, offset: int, expected, found: str):
        self.expected = frozenset(expected)
        self.found = found
        exp = ", ".join(sorted(self.expected))
        super().__init__(f"syntax error at offset {offset}: expected one of {{{exp}}}, found {found}", offset)


class UnknownIdentifierError(FieldParseError):
    def __init__(self, name: str, offset: int):
        self.name = name
        super().__init__(f"unknown identifier {name!r} at offset {offset}", offset)


class FieldDomainError(ArithmeticError):
    """Raised when an expression is evaluated outside its domain."""


# --- AST -----------------------------------------------------------------

@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Pi:
    pass


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Neg:
    arg: "Expr"


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Pow:
    base: "Expr"
    exponent: int


@dataclass(frozen=True)
class Call:
    func: str
    arg: "Expr"


Expr = Union[Num, Pi, Var, Neg, BinOp, Pow, Call]

VARIABLES = ("x", "y", "z")
FUNCTIONS = ("sin", "cos", "exp")


# --- tokenizer -----------------------------------------------------------

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|(?P<ident>[A-Za-z_][A-Za-z_0-9]*)|(?P<op>[-+*/^()]))"
)


@dataclass(frozen=True)
class _Tok:
    kind: str  # 'num', 'ident', 'op', 'end'
    text: str
    offset: int  # byte offset


def _tokenize(text: str) -> list[_Tok]:
    toks: list[_Tok] = []
    pos = 0
    n = len(text)

    def boff(i: int) -> int:
        return len(text[:i].encode("utf-8"))

    while True:
        while pos < n and text[pos].isspace():
            pos += 1
        if pos >= n:
            break
        m = _TOKEN_RE.match(text, pos)
        if m is None or m.end() == pos:
            raise FieldSyntaxError(boff(pos), {"number", "identifier", "operator"}, repr(text[pos]))
        kind = m.lastgroup
        start = m.start(kind)
        toks.append(_Tok(kind, m.group(kind), boff(start)))
        pos = m.end()
    toks.append(_Tok("end", "", boff(n)))
    return toks


# --- parser --------------------------------------------------------------

_ATOM_START = frozenset({"number", "pi", "x", "y", "z", "sin", "cos", "exp", "neg", "(", "-"})


class _Parser:
    def __init__(self, text: str):
        self.toks = _tokenize(text)
        self.i = 0

    @property
    def cur(self) -> _Tok:
        return self.toks[self.i]

    def _fail(self, expected):
        t = self.cur
        found = "end of input" if t.kind == "end" else repr(t.text)
        raise FieldSyntaxError(t.offset, expected, found)

    def _expect_op(self, op: str):
        if self.cur.kind == "op" and self.cur.text == op:
            self.i += 1
            return
        self._fail({op})

    def parse(self) -> Expr:
        e = self.expr()
        if self.cur.kind != "end":
            self._fail({"+", "-", "*", "/", "^", "end of input"})
        return e

    def expr(self) -> Expr:
        e = self.term()
        while self.cur.kind == "op" and self.cur.text in "+-":
            op = self.cur.text
            self.i += 1
            e = BinOp(op, e, self.term())
        return e

    def term(self) -> Expr:
        e = self.unary()
        while self.cur.kind == "op" and self.cur.text in "*/":
            op = self.cur.text
            self.i += 1
            e = BinOp(op, e, self.unary())
        return e

    def unary(self) -> Expr:
        if self.cur.kind == "op" and self.cur.text == "-":
            self.i += 1
            return Neg(self.unary())
        return self.power()

    def power(self) -> Expr:
        base = self.atom()
        if self.cur.kind == "op" and self.cur.text == "^":
            self.i += 1
            sign = 1
            if self.cur.kind == "op" and self.cur.text == "-":
                sign = -1
                self.i += 1
            t = self.cur
            if t.kind != "num" or not t.text.isdigit():
                self._fail({"integer"})
            self.i += 1
            return Pow(base, sign * int(t.text))
        return base

    def atom(self) -> Expr:
        t = self.cur
        if t.kind == "num":
            self.i += 1
            return Num(float(t.text))
        if t.kind == "ident":
            self.i += 1
            if t.text == "pi":
                return Pi()
            if t.text in VARIABLES:
                return Var(t.text)
            if t.text in FUNCTIONS or t.text == "neg":
                self._expect_op("(")
                arg = self.expr()
                self._expect_op(")")
                return Neg(arg) if t.text == "neg" else Call(t.text, arg)
            raise UnknownIdentifierError(t.text, t.offset)
        if t.kind == "op" and t.text == "(":
            self.i += 1
            e = self.expr()
            self._expect_op(")")
            return e
        self._fail(_ATOM_START - {"-"})


def parse(text: str) -> Expr:
    if not isinstance(text, str) or not text.strip():
        raise FieldSyntaxError(0, _ATOM_START, "end of input")
    return _Parser(text).parse()


# --- printer -------------------------------------------------------------

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2}


def _prec(e: Expr) -> int:
    if isinstance(e, BinOp):
        return _PREC[e.op]
    if isinstance(e, Neg):
        return 3
    if isinstance(e, Pow):
        return 4
    return 5


def _fmt_num(v: float) -> str:
    if v < 0 or not math.isfinite(v):
        raise ValueError(f"literal {v!r} is not printable")
    s = repr(float(v))
    return s


def to_string(e: Expr) -> str:
    """Canonical text with minimal parentheses; ``parse(to_string(e)) == e``."""
    if isinstance(e, Num):
        return _fmt_num(e.value)
    if isinstance(e, Pi):
        return "pi"
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Call):
        return f"{e.func}({to_string(e.arg)})"
    if isinstance(e, Neg):
        inner = to_string(e.arg)
        if _prec(e.arg) < 3:
            inner = f"({inner})"
        return "-" + inner
    if isinstance(e, Pow):
        base = to_string(e.base)
        if _prec(e.base) < 5:
            base = f"({base})"
        return f"{base}^{e.exponent}"
    if isinstance(e, BinOp):
        p = _PREC[e.op]
        left = to_string(e.left)
        if _prec(e.left) < p:
            left = f"({left})"
        right = to_string(e.right)
        # left associative: an equal-precedence right operand needs brackets
        if _prec(e.right) <= p:
            right = f"({right})"
        return f"{left} {e.op} {right}"
    raise TypeError(f"not an expression node: {e!r}")


# --- evaluation ----------------------------------------------------------

def _check_nonzero(v, what: str):
    leaf = np.asarray(D.primal(v))
    if np.any(leaf == 0):
        raise FieldDomainError(what)


def evaluate(e: Expr, x, y, z):
    """Evaluate over floats, arrays or tagged duals."""
    env = {"x": x, "y": y, "z": z}

    def ev(n: Expr):
        if isinstance(n, Num):
            return n.value
        if isinstance(n, Pi):
            return math.pi
        if isinstance(n, Var):
            return env[n.name]
        if isinstance(n, Neg):
            return D.neg(ev(n.arg))
        if isinstance(n, BinOp):
            a, b = ev(n.left), ev(n.right)
            if n.op == "+":
                return D.add(a, b)
            if n.op == "-":
                return D.sub(a, b)
            if n.op == "*":
                return D.mul(a, b)
            _check_nonzero(b, "division by zero")
            return D.div(a, b)
        if isinstance(n, Pow):
            b = ev(n.base)
            if n.exponent < 0:
                _check_nonzero(b, "zero raised to a negative power")
            return D.ipow(b, n.exponent)
        if isinstance(n, Call):
            return getattr(D, n.func)(ev(n.arg))
        raise TypeError(f"not an expression node: {n!r}")

    return ev(e)


def free_variables(e: Expr) -> frozenset:
    if isinstance(e, Var):
        return frozenset({e.name})
    if isinstance(e, (Neg, Call)):
        return free_variables(e.arg)
    if isinstance(e, Pow):
        return free_variables(e.base)
    if isinstance(e, BinOp):
        return free_variables(e.left) | free_variables(e.right)
    return frozenset()


@dataclass(frozen=True)
class Derivatives:
    value: float
    grad: np.ndarray  # (d/dx, d/dy, d/dz)
    hessian: np.ndarray  # 3x3, symmetric

    @property
    def dx(self) -> float:
        return float(self.grad[0])

    @property
    def dy(self) -> float:
        return float(self.grad[1])

    @property
    def dz(self) -> float:
        return float(self.grad[2])


def eval_with_derivatives(e: Expr, point) -> Derivatives:
    """Value, gradient and Hessian at a point via nested dual numbers."""
    p = [float(c) for c in point]
    if not all(math.isfinite(c) for c in p):
        raise ValueError("point must be finite")
    grad = np.zeros(3)
    hess = np.zeros((3, 3))
    value = float(evaluate(e, *p))
    for i in range(3):
        for j in range(i, 3):
            ti, tj = D.new_tag(), D.new_tag()
            args = list(p)
            args[i] = D.Dual(args[i], 1.0, ti)
            args[j] = D.add(args[j], D.Dual(0.0, 1.0, tj))
            r = evaluate(e, *args)
            di = D.tangent(r, ti)
            grad[i] = float(D.primal(di))
            hess[i, j] = hess[j, i] = float(D.primal(D.tangent(di, tj)))
    return Derivatives(value, grad, hess)
