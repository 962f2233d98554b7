"""Magnetic Laplacians on the circle and on the scaled flat torus R/kZ x R/Z."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .eigensolve import ConvergenceError, SparseHermitian, smallest_eigenpair
from .fields import ScalarField, as_field
from .geometry import CircleChart, TorusChart
from .lattice import hop_matrix, laplacian_from_hops, link_integral, magnetic_laplacian_2d

TWO_PI = 2.0 * math.pi


@dataclass
class Lambda1Result:
    value: float
    method: str
    grid: tuple | None = None
    residual: float = 0.0
    converged: bool = True
    iterations: int = 0
    tol: float | None = None
    seed: int | None = None
    per_sector: dict | None = None
    extra: dict = field(default_factory=dict)
    runtime_ms: float = 0.0

    def to_dict(self) -> dict:
        d = {
            "lambda1": self.value,
            "method": self.method,
            "grid": list(self.grid) if self.grid is not None else None,
            "residual": self.residual,
            "converged": self.converged,
            "iterations": self.iterations,
            "tol": self.tol,
            "seed": self.seed,
        }
        if self.per_sector is not None:
            d["per_sector"] = {str(m): v for m, v in sorted(self.per_sector.items())}
        d.update(self.extra)
        return d


def _solve(H: SparseHermitian, method: str, grid, tol: float, seed: int, max_iter: int = 20000) -> Lambda1Result:
    t0 = time.perf_counter()
    r = smallest_eigenpair(H, tol=tol, seed=seed, max_iter=max_iter)
    res = Lambda1Result(
        value=r.value,
        method=method,
        grid=tuple(grid),
        residual=r.residual,
        converged=r.converged,
        iterations=r.iterations,
        tol=tol,
        seed=seed,
        runtime_ms=1e3 * (time.perf_counter() - t0),
    )
    if not r.converged:
        raise ConvergenceError(
            f"eigensolver stopped at residual {r.residual:.3e} after {r.iterations} iterations", r
        )
    return res


# --- circle ----------------------------------------------------------------

def circle_lambda1_exact(alpha: float, chart: CircleChart = CircleChart()) -> float:
    """Smallest eigenvalue of (-i d/dtheta + alpha)^2 on a circle of the given length."""
    step = TWO_PI / chart.circumference
    return _dist(alpha, step) ** 2


def assemble_circle(alpha: float, n: int, chart: CircleChart = CircleChart()) -> SparseHermitian:
    h = chart.circumference / n
    T = hop_matrix(n, (np.arange(n) + 1) % n, np.full(n, alpha * h))
    return laplacian_from_hops(n, [(T, h)])


def circle_lambda1_fd(alpha: float, n: int, chart: CircleChart = CircleChart(), tol: float = 1e-8, seed: int = 0,
                      max_iter: int = 20000) -> Lambda1Result:
    if n < 3:
        raise ValueError("need at least 3 grid points")
    return _solve(assemble_circle(alpha, n, chart), "fd", (n,), tol, seed, max_iter)


# --- harmonic lattice ------------------------------------------------------

def _dist(v: float, step: float) -> float:
    return abs(v - step * round(v / step))


@dataclass(frozen=True)
class HarmonicLattice:
    """The lattice {2 pi n1/k dv + 2 pi n2 dw} of flux-quantized harmonic forms."""

    k: int

    @property
    def generators(self):
        return ((TWO_PI / self.k, 0.0), (0.0, TWO_PI))

    def point(self, n1: int, n2: int):
        return (TWO_PI * n1 / self.k, TWO_PI * n2)

    def contains(self, a: float, b: float, tol: float = 1e-9) -> bool:
        return _dist(a, TWO_PI / self.k) <= tol and _dist(b, TWO_PI) <= tol

    def nearest(self, a: float, b: float):
        """All nearest lattice indices (n1, n2), lexicographically sorted; the first is canonical."""
        cands = []
        for step, v in ((TWO_PI / self.k, a), (TWO_PI, b)):
            f = math.floor(v / step)
            d0, d1 = v - step * f, step * (f + 1) - v
            if math.isclose(d0, d1, rel_tol=1e-12, abs_tol=1e-12):
                cands.append([f, f + 1])
            else:
                cands.append([f] if d0 < d1 else [f + 1])
        return sorted((int(n1), int(n2)) for n1 in cands[0] for n2 in cands[1])

    def distance_sq(self, a: float, b: float) -> float:
        return _dist(a, TWO_PI / self.k) ** 2 + _dist(b, TWO_PI) ** 2


def lattice_distance_sq(a: float, b: float, k: int) -> float:
    return HarmonicLattice(int(k)).distance_sq(a, b)


@dataclass(frozen=True)
class ExactLambda1:
    value: float
    nearest: tuple  # canonical (n1, n2)
    nearest_point: tuple  # (a*, b*)
    ties: tuple  # every minimizing (n1, n2)


def torus_lambda1_exact(a: float, b: float, k: int) -> ExactLambda1:
    lat = HarmonicLattice(int(k))
    ties = lat.nearest(a, b)
    n1, n2 = ties[0]
    return ExactLambda1(lat.distance_sq(a, b), (n1, n2), lat.point(n1, n2), tuple(ties))


def landau_mu(k: int, omega_scale: float = 1.0) -> float:
    """|integral of c dv^dw| / area of the torus; equals |c| for every k."""
    chart = TorusChart(k)
    return abs(omega_scale * chart.volume) / chart.volume


# --- finite differences ----------------------------------------------------

@dataclass(frozen=True)
class TorusPotential:
    """A dv + B dw with A, B constants or fields of (v, w) (given as x, y in expressions)."""

    a: ScalarField
    b: ScalarField

    @classmethod
    def of(cls, a, b) -> "TorusPotential":
        return cls(as_field(a), as_field(b))

    @property
    def is_constant(self) -> bool:
        return self.a.is_constant() and self.b.is_constant()

    def constants(self):
        if not self.is_constant:
            raise ValueError("potential is not constant")
        return float(self.a(0.0, 0.0, 0.0)), float(self.b(0.0, 0.0, 0.0))


def torus_link_phases(pot: TorusPotential, k: int, nx: int, ny: int, order: int = 2):
    hx, hy = k / nx, 1.0 / ny
    v = (np.arange(nx) * hx)[:, None]
    w = (np.arange(ny) * hy)[None, :]
    shape = (nx, ny)
    if pot.is_constant:
        a, b = pot.constants()
        return np.full(shape, a * hx), np.full(shape, b * hy)
    tx = np.broadcast_to(link_integral(pot.a, (v, w, 0.0), (1.0, 0.0, 0.0), hx, order), shape).copy()
    ty = np.broadcast_to(link_integral(pot.b, (v, w, 0.0), (0.0, 1.0, 0.0), hy, order), shape).copy()
    return tx, ty


def assemble_torus(pot: TorusPotential, k: int, nx: int, ny: int) -> SparseHermitian:
    if nx < 8 or ny < 8:
        raise ValueError("grid sizes must be at least 8")
    tx, ty = torus_link_phases(pot, k, nx, ny)
    return magnetic_laplacian_2d(nx, ny, k / nx, 1.0 / ny, tx, ty)


def torus_lambda1_fd(pot: TorusPotential, k: int, nx: int, ny: int, tol: float = 1e-8, seed: int = 0,
                     max_iter: int = 20000) -> Lambda1Result:
    return _solve(assemble_torus(pot, k, nx, ny), "fd", (nx, ny), tol, seed, max_iter)


def torus_lambda1_fd_constant_formula(a: float, b: float, k: int, nx: int, ny: int) -> float:
    """Closed-form spectrum minimum of the constant-potential stencil (used for diagnostics)."""
    hx, hy = k / nx, 1.0 / ny
    nxs = np.arange(nx)
    nys = np.arange(ny)
    ex = (2 - 2 * np.cos(TWO_PI * nxs / k * hx + a * hx)) / hx**2
    ey = (2 - 2 * np.cos(TWO_PI * nys * hy + b * hy)) / hy**2
    return float(ex.min() + ey.min())
