"""Charts, quotient grids and horizontal loops.

The Heisenberg group carries the law (x,y,z)(x',y',z') = (x+x', y+y', z+z'+x'y),
the contact form dz - y dx and the left-invariant frame X = d/dx + y d/dz,
Y = d/dy, Z = d/dz.  The lattice quotient identifies (x,y,z) with (x+k,y,z),
(x,y+1,z+x) and (x,y,z+1).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np


@dataclass(frozen=True)
class CircleChart:
    circumference: float = 2.0 * math.pi

    def __post_init__(self):
        if not (self.circumference > 0 and math.isfinite(self.circumference)):
            raise ValueError("circumference must be a positive real")


def _check_k(k) -> int:
    if isinstance(k, bool) or int(k) != k or k < 1:
        raise ValueError(f"k must be a positive integer, got {k!r}")
    return int(k)


@dataclass(frozen=True)
class TorusChart:
    """The torus R/kZ x R/Z with coordinates (v, w)."""

    k: int

    def __post_init__(self):
        object.__setattr__(self, "k", _check_k(self.k))

    @property
    def volume(self) -> float:
        return float(self.k)


@dataclass(frozen=True)
class NilmanifoldChart:
    k: int
    reeb_period: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "k", _check_k(self.k))
        if self.reeb_period != 1.0:
            raise ValueError("the Reeb fiber period is fixed to 1")

    @property
    def volume(self) -> float:
        return float(self.k)

    @property
    def base(self) -> TorusChart:
        return TorusChart(self.k)


# --- group operations ------------------------------------------------------

def group_mul(p, q):
    return (p[0] + q[0], p[1] + q[1], p[2] + q[2] + q[0] * p[1])


def group_inv(p):
    return (-p[0], -p[1], -p[2] + p[0] * p[1])


def reduce_point(p, k: int):
    """Representative of p in the fundamental domain [0,k) x [0,1) x [0,1)."""
    x, y, z = (float(c) for c in p)
    x -= k * math.floor(x / k)
    n = math.floor(y)
    y -= n
    z -= n * x
    z -= math.floor(z)
    # floor can land exactly on the upper edge through rounding
    if x >= k:
        x -= k
    if y >= 1.0:
        y, z = y - 1.0, z - x
        z -= math.floor(z)
    if z >= 1.0:
        z -= 1.0
    return (x, y, z)


def lattice_offset(p, q, k: int):
    """(n1, n2, n3) real offsets such that q = gamma . p for gamma in Gamma_k when integral.

    The lattice consists of (k n1, n2, n3); left multiplication by it realizes the
    identifications.  Returns the real triple; it is integral iff p ~ q.
    """
    g = group_mul(q, group_inv(p))
    return (g[0] / k, g[1], g[2])


def same_point(p, q, k: int, tol: float) -> bool:
    n = lattice_offset(p, q, k)
    return all(abs(c - round(c)) <= tol for c in n)


# --- loops -----------------------------------------------------------------

@dataclass(frozen=True)
class HorizontalLoop:
    segments: tuple = ()
    base_point: tuple = (0.0, 0.0, 0.0)

    def __post_init__(self):
        segs = tuple((str(f), float(t)) for f, t in self.segments)
        for f, t in segs:
            if f not in ("X", "Y"):
                raise ValueError(f"horizontal segments use frames X or Y, got {f!r}")
        object.__setattr__(self, "segments", segs)
        object.__setattr__(self, "base_point", tuple(float(c) for c in self.base_point))

    def __add__(self, other: "HorizontalLoop") -> "HorizontalLoop":
        return HorizontalLoop(self.segments + other.segments, self.base_point)


def flow(frame: str, t: float, p):
    x, y, z = p
    if frame == "X":
        return (x + t, y, z + t * y)
    if frame == "Y":
        return (x, y + t, z)
    raise ValueError(f"unknown frame {frame!r}")


def flow_endpoint(loop: HorizontalLoop, chart: NilmanifoldChart | None = None):
    p = loop.base_point
    for f, t in loop.segments:
        if not math.isfinite(t):
            raise ValueError("segment durations must be finite")
        p = flow(f, t, p)
    return p


def is_closed(loop: HorizontalLoop, chart: NilmanifoldChart, tol: float = 1e-12) -> bool:
    if not tol > 0:
        raise ValueError("tol must be positive")
    return same_point(loop.base_point, flow_endpoint(loop), chart.k, tol)


def standard_generators(chart: NilmanifoldChart):
    return [HorizontalLoop((("X", float(chart.k)),)), HorizontalLoop((("Y", 1.0),))]


def commutator_loop(t: float, base_point=(0.0, 0.0, 0.0)) -> HorizontalLoop:
    return HorizontalLoop((("X", t), ("Y", t), ("X", -t), ("Y", -t)), base_point)


# --- grids -----------------------------------------------------------------

@dataclass(frozen=True)
class FundamentalDomainGrid:
    """Uniform samples of [0,k) x [0,1) x [0,1) with the quotient wrap rule.

    Index (i, j, l) sits at (i k/nx, j/ny, l/nz).  Crossing the y = 1 seam
    moves z by -x, which must be a whole number of z cells: nx | k nz.
    """

    k: int
    nx: int
    ny: int
    nz: int = 1

    def __post_init__(self):
        object.__setattr__(self, "k", _check_k(self.k))
        for n in (self.nx, self.ny, self.nz):
            if int(n) != n or n < 1:
                raise ValueError("grid sizes must be positive integers")
        if self.nz > 1 and (self.k * self.nz) % self.nx:
            raise ValueError(
                f"wrap inconsistency: nx={self.nx} must divide k*nz={self.k * self.nz} "
                "so the y-seam z shift is a whole number of cells"
            )

    @property
    def hx(self) -> float:
        return self.k / self.nx

    @property
    def hy(self) -> float:
        return 1.0 / self.ny

    @property
    def hz(self) -> float:
        return 1.0 / self.nz

    @property
    def size(self) -> int:
        return self.nx * self.ny * self.nz

    def coords(self):
        return (
            np.arange(self.nx) * self.hx,
            np.arange(self.ny) * self.hy,
            np.arange(self.nz) * self.hz,
        )

    def index(self, i, j, l=0):
        return (np.asarray(i) * self.ny + np.asarray(j)) * self.nz + np.asarray(l)

    def seam_shift_cells(self, i):
        """z-cell shift -x_i nz applied when stepping from row ny-1 to row 0."""
        return -(np.asarray(i) * self.k * self.nz) // self.nx

    def wrap_y(self, i, j, l):
        """Grid neighbour of (i, j, l) one step in +y, with the quotient identification."""
        i, j, l = (np.asarray(v) for v in (i, j, l))
        jn = j + 1
        crossed = jn >= self.ny
        ln = np.where(crossed, (l + self.seam_shift_cells(i)) % self.nz, l)
        return i, np.where(crossed, 0, jn), ln

    def unwrap_y(self, i, j, l):
        """Inverse of ``wrap_y``."""
        i, j, l = (np.asarray(v) for v in (i, j, l))
        jp = j - 1
        crossed = jp < 0
        lp = np.where(crossed, (l - self.seam_shift_cells(i)) % self.nz, l)
        return i, np.where(crossed, self.ny - 1, jp), lp
