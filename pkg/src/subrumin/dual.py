"""Tagged forward-mode dual numbers.

A ``Dual`` carries a primal part, a tangent part and an integer tag.  Duals with
different tags nest: the layer with the highest tag is outermost, and its parts
may themselves be duals of lower tags.  Mixing tags lets one differentiate
through functions that already differentiate internally (nested frame
derivatives, Hessians) without perturbation confusion.  Leaves may be Python
floats or numpy arrays, so whole grids are pushed through in one pass.
"""

from __future__ import annotations

import itertools

import numpy as np

_tag_counter = itertools.count(1)


def new_tag() -> int:
    return next(_tag_counter)


class Dual:
    __slots__ = ("re", "eps", "tag")

    def __init__(self, re, eps, tag: int):
        self.re = re
        self.eps = eps
        self.tag = tag

    def __repr__(self) -> str:
        return f"Dual({self.re!r}, {self.eps!r}, tag={self.tag})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return Dual(-self.re, -self.eps, self.tag)

    def __pow__(self, n):
        return ipow(self, n)


def _top(u, v) -> int:
    tu = u.tag if isinstance(u, Dual) else 0
    tv = v.tag if isinstance(v, Dual) else 0
    return max(tu, tv)


def _split(u, tag):
    if isinstance(u, Dual) and u.tag == tag:
        return u.re, u.eps
    return u, 0.0


def add(u, v):
    t = _top(u, v)
    if t == 0:
        return u + v
    a, b = _split(u, t)
    c, d = _split(v, t)
    return Dual(add(a, c), add(b, d), t)


def sub(u, v):
    t = _top(u, v)
    if t == 0:
        return u - v
    a, b = _split(u, t)
    c, d = _split(v, t)
    return Dual(sub(a, c), sub(b, d), t)


def mul(u, v):
    t = _top(u, v)
    if t == 0:
        return u * v
    a, b = _split(u, t)
    c, d = _split(v, t)
    return Dual(mul(a, c), add(mul(a, d), mul(b, c)), t)


def div(u, v):
    t = _top(u, v)
    if t == 0:
        return u / v
    a, b = _split(u, t)
    c, d = _split(v, t)
    q = div(a, c)
    return Dual(q, div(sub(b, mul(q, d)), c), t)


def ipow(u, n: int):
    """Integer power; n may be negative (caller guards against 0**negative)."""
    if not isinstance(u, Dual):
        return u ** n if n >= 0 else 1.0 / (u ** (-n))
    if n == 0:
        return 1.0
    a, b = u.re, u.eps
    return Dual(ipow(a, n), mul(mul(float(n), ipow(a, n - 1)), b), u.tag)


def sin(u):
    if not isinstance(u, Dual):
        return np.sin(u)
    return Dual(sin(u.re), mul(cos(u.re), u.eps), u.tag)


def cos(u):
    if not isinstance(u, Dual):
        return np.cos(u)
    return Dual(cos(u.re), mul(neg(sin(u.re)), u.eps), u.tag)


def exp(u):
    if not isinstance(u, Dual):
        return np.exp(u)
    e = exp(u.re)
    return Dual(e, mul(e, u.eps), u.tag)


def neg(u):
    return -u


def primal(u):
    """Strip every dual layer and return the underlying leaf value."""
    while isinstance(u, Dual):
        u = u.re
    return u


def tangent(u, tag: int):
    """Tangent part of ``u`` with respect to ``tag`` (zero if u does not depend on it)."""
    if isinstance(u, Dual):
        if u.tag == tag:
            return u.eps
        if u.tag > tag:
            return Dual(tangent(u.re, tag), tangent(u.eps, tag), u.tag)
    return 0.0
