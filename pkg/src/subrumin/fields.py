"""Scalar fields on the charts and their frame derivatives.

Every field is a callable ``f(x, y, z)`` that accepts floats, numpy arrays or
tagged duals.  Frame derivatives are themselves fields, so second-order
operators compose without symbolic manipulation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import dual as D
from .expr import Expr, evaluate, free_variables, parse, to_string


class ScalarField:
    """Base class; subclasses implement ``__call__`` and ``label``."""

    #: True when the field is known not to depend on z.
    basic: bool = False

    def __call__(self, x, y, z):  # pragma: no cover - abstract
        raise NotImplementedError

    def label(self) -> str:  # pragma: no cover - abstract
        raise NotImplementedError

    def __repr__(self) -> str:
        return f"{type(self).__name__}({self.label()})"

    def __add__(self, other):
        return _Combo("+", self, as_field(other))

    def __radd__(self, other):
        return _Combo("+", as_field(other), self)

    def __sub__(self, other):
        return _Combo("-", self, as_field(other))

    def __rsub__(self, other):
        return _Combo("-", as_field(other), self)

    def __mul__(self, other):
        return _Combo("*", self, as_field(other))

    def __rmul__(self, other):
        return _Combo("*", as_field(other), self)

    def __neg__(self):
        return _Combo("*", ConstantField(-1.0), self)

    def is_constant(self) -> bool:
        return False

    def sample(self, x, y, z) -> np.ndarray:
        """Evaluate on arrays, always returning a float array of the broadcast shape."""
        x, y, z = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float), np.asarray(z, float))
        return np.broadcast_to(np.asarray(self(x, y, z), dtype=float), x.shape).copy()


class ExprField(ScalarField):
    def __init__(self, expr: Expr | str):
        self.expr = parse(expr) if isinstance(expr, str) else expr
        self.basic = "z" not in free_variables(self.expr)
        self._const = not free_variables(self.expr)

    def __call__(self, x, y, z):
        return evaluate(self.expr, x, y, z)

    def label(self) -> str:
        return to_string(self.expr)

    def is_constant(self) -> bool:
        return self._const


class ConstantField(ScalarField):
    basic = True

    def __init__(self, value: float):
        self.value = float(value)

    def __call__(self, x, y, z):
        return self.value

    def label(self) -> str:
        return repr(self.value)

    def is_constant(self) -> bool:
        return True


class _Combo(ScalarField):
    _ops: dict[str, Callable] = {"+": D.add, "-": D.sub, "*": D.mul}

    def __init__(self, op: str, left: ScalarField, right: ScalarField):
        self.op, self.left, self.right = op, left, right
        self.basic = left.basic and right.basic

    def __call__(self, x, y, z):
        return self._ops[self.op](self.left(x, y, z), self.right(x, y, z))

    def label(self) -> str:
        return f"({self.left.label()} {self.op} {self.right.label()})"

    def is_constant(self) -> bool:
        return self.left.is_constant() and self.right.is_constant()


# Directions of the left-invariant frame at (x, y, z), in coordinates.
def _frame_vector(frame: str, y):
    if frame == "X":
        return (1.0, 0.0, y)
    if frame == "Y":
        return (0.0, 1.0, 0.0)
    if frame == "Z":
        return (0.0, 0.0, 1.0)
    if frame in ("dx", "dy", "dz"):
        return tuple(1.0 if c == frame[1] else 0.0 for c in "xyz")
    raise ValueError(f"unknown direction {frame!r}")


class DerivativeField(ScalarField):
    """Directional derivative of a field along X, Y, Z or a coordinate axis."""

    def __init__(self, field: ScalarField, frame: str):
        _frame_vector(frame, 0.0)
        self.field, self.frame = field, frame
        self.basic = field.basic

    def __call__(self, x, y, z):
        tag = D.new_tag()
        vx, vy, vz = _frame_vector(self.frame, y)
        r = self.field(D.add(x, D.Dual(0.0, vx, tag)), D.add(y, D.Dual(0.0, vy, tag)), D.add(z, D.Dual(0.0, vz, tag)))
        return D.tangent(r, tag)

    def label(self) -> str:
        return f"{self.frame}[{self.field.label()}]"

    def is_constant(self) -> bool:
        return self.field.is_constant()


def as_field(v) -> ScalarField:
    if isinstance(v, ScalarField):
        return v
    if isinstance(v, str):
        f = ExprField(v)
        return f
    if isinstance(v, (int, float, np.floating, np.integer)):
        return ConstantField(float(v))
    raise TypeError(f"cannot interpret {v!r} as a scalar field")


def X(f: ScalarField) -> ScalarField:
    return DerivativeField(f, "X")


def Y(f: ScalarField) -> ScalarField:
    return DerivativeField(f, "Y")


def Z(f: ScalarField) -> ScalarField:
    return DerivativeField(f, "Z")


def partial(f: ScalarField, axis: str) -> ScalarField:
    return DerivativeField(f, "d" + axis)


# --- quotient periodicity --------------------------------------------------

def wrap_images(x, y, z, k: int):
    """Images of (x, y, z) under the three generating identifications of the quotient."""
    return [
        (x + k, y, z),
        (x, y + 1.0, z + x),
        (x, y, z + 1.0),
    ]


@dataclass(frozen=True)
class PeriodicityReport:
    periodic: bool
    max_defect: float
    worst_point: tuple | None


def check_periodic(f: ScalarField, k: int, samples: int = 64, seed: int = 0, tol: float = 1e-9) -> PeriodicityReport:
    """Sample wrap pairs and compare values; the field descends iff every defect is small."""
    rng = np.random.default_rng(seed)
    pts = rng.uniform(0.0, 1.0, size=(samples, 3)) * np.array([k, 1.0, 1.0])
    worst, where = 0.0, None
    for x, y, z in pts:
        base = float(f(x, y, z))
        for img in wrap_images(x, y, z, k):
            d = abs(float(f(*img)) - base)
            if not math.isfinite(d):
                d = math.inf
            if d > worst:
                worst, where = d, (float(x), float(y), float(z))
    return PeriodicityReport(worst <= tol, worst, where)
