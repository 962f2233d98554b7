"""Rumin calculus in degree one on the Heisenberg frame.

One-forms are written p dx + q dy + h alpha in the coframe {dx, dy, alpha}
dual to {X, Y, Z}; two-forms use the basis {dx^dy, dx^alpha, dy^alpha}.
Since d alpha = dx^dy and [X, Y] = -Z,

    d(p dx + q dy + h alpha) = (Xq - Yp + h) dx^dy
                             + (Xh - Zp)     dx^alpha
                             + (Yh - Zq)     dy^alpha.

The Rumin differential of a horizontal form adds the unique multiple of alpha
that kills the dx^dy part: d_Rm w = d(w - (Xq - Yp) alpha).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .fields import ConstantField, ScalarField, X, Y, Z, as_field, check_periodic
from .geometry import HorizontalLoop, NilmanifoldChart, flow, is_closed, standard_generators, commutator_loop
from .lattice import gauss_nodes, link_integral

TWO_PI = 2.0 * math.pi
ZERO = ConstantField(0.0)


class UnsupportedPotentialError(ValueError):
    pass


class NonPeriodicError(ValueError):
    pass


@dataclass(frozen=True)
class OneForm:
    p: ScalarField
    q: ScalarField
    h: ScalarField = ZERO

    @classmethod
    def of(cls, p=0.0, q=0.0, h=0.0) -> "OneForm":
        return cls(as_field(p), as_field(q), as_field(h))

    def at(self, x, y, z) -> np.ndarray:
        return np.array([float(c(x, y, z)) for c in (self.p, self.q, self.h)])

    @property
    def is_horizontal(self) -> bool:
        return self.h.is_constant() and float(self.h(0.0, 0.0, 0.0)) == 0.0

    @property
    def is_basic(self) -> bool:
        """Horizontal coefficients independent of z."""
        return self.p.basic and self.q.basic

    @property
    def is_constant(self) -> bool:
        return self.p.is_constant() and self.q.is_constant()

    def constants(self):
        return float(self.p(0.0, 0.0, 0.0)), float(self.q(0.0, 0.0, 0.0))


@dataclass(frozen=True)
class TwoForm:
    c_xy: ScalarField
    c_xa: ScalarField
    c_ya: ScalarField

    def at(self, x, y, z) -> np.ndarray:
        return np.array([float(c(x, y, z)) for c in (self.c_xy, self.c_xa, self.c_ya)])


def horizontal_projection(w: OneForm) -> OneForm:
    return OneForm(w.p, w.q, ZERO)


def d_H(g) -> OneForm:
    """Horizontal differential of a function: Xg dx + Yg dy."""
    g = as_field(g)
    return OneForm(X(g), Y(g), ZERO)


def delta_J_field(w: OneForm) -> ScalarField:
    return X(w.q) - Y(w.p)


def delta_J(w: OneForm, point) -> float:
    """The alpha-correction Xq - Yp of a horizontal form, at a point."""
    return float(delta_J_field(w)(*point))


def exterior_d_field(w: OneForm) -> TwoForm:
    return TwoForm(
        X(w.q) - Y(w.p) + w.h,
        X(w.h) - Z(w.p),
        Y(w.h) - Z(w.q),
    )


def exterior_d(w: OneForm, point) -> np.ndarray:
    return exterior_d_field(w).at(*point)


def rumin_d_field(w: OneForm) -> TwoForm:
    """d(w_H - (Xq - Yp) alpha); the alpha part of ``w`` is irrelevant and dropped."""
    wh = horizontal_projection(w)
    return exterior_d_field(OneForm(wh.p, wh.q, -delta_J_field(wh)))


def rumin_d(w: OneForm, point) -> np.ndarray:
    c = rumin_d_field(w).at(*point)
    if abs(c[0]) > 1e-9 * max(1.0, abs(c[1]), abs(c[2])):
        raise AssertionError(f"Rumin differential has a dx^dy component {c[0]!r}")
    return c


# --- fluxes ----------------------------------------------------------------

def flux_integral(A: OneForm, loop: HorizontalLoop, chart: NilmanifoldChart, quad_order: int = 8, tol: float = 1e-12) -> float:
    """Line integral of A along the piecewise frame flow; only p and q see a horizontal velocity."""
    if not is_closed(loop, chart, tol):
        raise ValueError("flux_integral requires a closed loop")
    nodes, weights = gauss_nodes(quad_order)
    total = 0.0
    p = loop.base_point
    for frame, t in loop.segments:
        coef = A.p if frame == "X" else A.q
        if coef.is_constant():
            total += float(coef(0.0, 0.0, 0.0)) * t
        else:
            # composite rule: panels of length at most 1/4
            panels = max(1, math.ceil(4.0 * abs(t)))
            dt = t / panels
            for j in range(panels):
                start = flow(frame, j * dt, p)
                vals = np.array([float(coef(*flow(frame, s * dt, start))) for s in nodes])
                total += float(np.dot(weights, vals)) * dt
        p = flow(frame, t, p)
    return total


def dist_2pi_z(v: float) -> float:
    return abs(v - TWO_PI * round(v / TWO_PI))


@dataclass
class FluxReport:
    quantized: bool
    fluxes: dict  # loop name -> flux
    distances: dict  # loop name -> distance to 2 pi Z
    witness: str | None  # first generator whose flux is not in 2 pi Z
    reason: str
    rumin_residual: float
    loops_tested: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "flux_quantized": self.quantized,
            "fluxes": self.fluxes,
            "distances": self.distances,
            "witness": self.witness,
            "reason": self.reason,
            "rumin_residual": self.rumin_residual,
            "loops_tested": self.loops_tested,
        }


def rumin_residual(A: OneForm, chart: NilmanifoldChart, samples: int = 32, seed: int = 0) -> float:
    if A.is_constant:
        return 0.0
    rng = np.random.default_rng(seed)
    pts = rng.uniform(0.0, 1.0, size=(samples, 3)) * np.array([chart.k, 1.0, 1.0])
    dr = rumin_d_field(A)
    return float(max(np.abs(dr.at(*p)).max() for p in pts))


def flux_quantized(A: OneForm, chart: NilmanifoldChart, tol: float = 1e-9) -> FluxReport:
    """Decide flux quantization on the generators of the fundamental group.

    For Rumin-closed potentials the flux is a homotopy invariant, so the two
    generators decide; the commutator loop is evaluated as a consistency probe.
    """
    res = rumin_residual(A, chart)
    gens = dict(zip(("gamma1", "gamma2"), standard_generators(chart)))
    fluxes = {name: flux_integral(A, loop, chart) for name, loop in gens.items()}
    fluxes["commutator(t=1)"] = flux_integral(A, commutator_loop(1.0), chart)
    dists = {name: dist_2pi_z(f) for name, f in fluxes.items()}
    tested = [
        {"name": name, "segments": [list(s) for s in loop.segments], "base_point": list(loop.base_point)}
        for name, loop in list(gens.items()) + [("commutator(t=1)", commutator_loop(1.0))]
    ]
    if res > tol:
        return FluxReport(False, fluxes, dists, None, f"d_Rm residual {res:.3e} exceeds tolerance; flux is not homotopy invariant", res, tested)
    witness = next((n for n in ("gamma1", "gamma2") if dists[n] > tol), None)
    if witness is None:
        reason = "generator fluxes lie in 2*pi*Z"
    else:
        reason = f"flux along {witness} is {fluxes[witness]!r}, at distance {dists[witness]:.6g} from 2*pi*Z"
    return FluxReport(witness is None, fluxes, dists, witness, reason, res, tested)


# --- harmonic + exact decomposition ----------------------------------------

@dataclass
class DecompositionResult:
    a: float
    b: float
    exact_part_norm: float
    coexact_residual_norm: float
    f_grid: np.ndarray
    grid: tuple
    iterations: int
    reconstruction_error: float
    orthogonality: float  # |<xi, d_H f>| / (|xi| |d_H f|), 0 when either vanishes


def conjugate_gradient(apply, rhs, project=None, rtol: float = 1e-8, max_iter: int = 10000):
    """Plain CG for a symmetric positive semidefinite operator; ``project`` removes the kernel."""
    proj = project or (lambda v: v)
    b = proj(rhs)
    bnorm = np.linalg.norm(b)
    x = np.zeros_like(b)
    if bnorm == 0.0:
        return x, 0, True
    r = b.copy()
    p = r.copy()
    rr = float(np.vdot(r, r).real)
    for it in range(1, max_iter + 1):
        Ap = proj(apply(p))
        alpha = rr / float(np.vdot(p, Ap).real)
        x = proj(x + alpha * p)
        r = r - alpha * Ap
        rr_new = float(np.vdot(r, r).real)
        if math.sqrt(rr_new) <= rtol * bnorm:
            # confirm with the true residual
            r_true = b - proj(apply(x))
            if np.linalg.norm(r_true) <= rtol * bnorm:
                return x, it, True
            r = r_true
            rr_new = float(np.vdot(r, r).real)
            p = r.copy()
            rr = rr_new
            continue
        p = r + (rr_new / rr) * p
        rr = rr_new
    return x, max_iter, False


def _cochains(w: OneForm, k: int, nx: int, ny: int, order: int):
    hx, hy = k / nx, 1.0 / ny
    xs = (np.arange(nx) * hx)[:, None]
    ys = (np.arange(ny) * hy)[None, :]
    shape = (nx, ny)
    cx = np.broadcast_to(link_integral(w.p, (xs, ys, 0.0), (1.0, 0.0, 0.0), hx, order), shape).copy()
    cy = np.broadcast_to(link_integral(w.q, (xs, ys, 0.0), (0.0, 1.0, 0.0), hy, order), shape).copy()
    return cx, cy


def decompose(w: OneForm, chart: NilmanifoldChart, grid=(64, 64), tol: float = 1e-8, quad_order: int = 4) -> DecompositionResult:
    """Split a basic horizontal form into a dx + b dy + d_H f + remainder on the quotient."""
    from .nilmanifold import SectorSpec, assemble_sector

    nx, ny = (int(g) for g in grid[:2])
    if len(grid) > 2 and int(grid[2]) != 1:
        raise UnsupportedPotentialError("decompose works on the base grid (nz = 1)")
    if not w.is_basic:
        raise UnsupportedPotentialError("decompose needs z-independent horizontal coefficients")
    k = chart.k
    for name, c in (("p", w.p), ("q", w.q)):
        rep = check_periodic(c, k)
        if not rep.periodic:
            raise NonPeriodicError(f"coefficient {name} does not descend to the quotient (defect {rep.max_defect:.3e} at {rep.worst_point})")

    hx, hy = k / nx, 1.0 / ny
    cx, cy = _cochains(w, k, nx, ny, quad_order)
    a = float(np.sum(cx)) / (nx * ny * hx)
    b = float(np.sum(cy)) / (nx * ny * hy)
    rx, ry = cx - a * hx, cy - b * hy

    # the sector-0 operator at zero potential is (D_x^T D_x/hx^2 + D_y^T D_y/hy^2)
    L = assemble_sector(SectorSpec(m=0, k=k, a=0.0, b=0.0, nx=nx, ny=ny)).csr.real.tocsr()

    def Dx(f):
        return np.roll(f, -1, axis=0) - f

    def Dy(f):
        return np.roll(f, -1, axis=1) - f

    def DxT(r):
        return np.roll(r, 1, axis=0) - r

    def DyT(r):
        return np.roll(r, 1, axis=1) - r

    rhs = (DxT(rx) / hx**2 + DyT(ry) / hy**2).ravel()
    f, iters, ok = conjugate_gradient(lambda v: L @ v, rhs, project=lambda v: v - v.mean(), rtol=tol)
    if not ok:
        from .eigensolve import ConvergenceError

        raise ConvergenceError(f"Poisson solve did not reach relative residual {tol:g}")
    f = f.reshape(nx, ny)
    ex, ey = Dx(f), Dy(f)
    cell = hx * hy

    def l2(ux, uy):
        return math.sqrt(cell * (float(np.sum((ux / hx) ** 2)) + float(np.sum((uy / hy) ** 2))))

    def inner(ux, uy, vx, vy):
        return cell * (float(np.sum(ux * vx)) / hx**2 + float(np.sum(uy * vy)) / hy**2)

    exact_norm = l2(ex, ey)
    resx, resy = rx - ex, ry - ey
    resid = l2(resx, resy)
    xix, xiy = np.full_like(cx, a * hx), np.full_like(cy, b * hy)
    recon = l2(cx - xix - ex - resx, cy - xiy - ey - resy)
    xi_norm = l2(xix, xiy)
    ortho = 0.0
    if xi_norm > 0 and exact_norm > 0:
        ortho = abs(inner(xix, xiy, ex, ey)) / (xi_norm * exact_norm)
    return DecompositionResult(a, b, exact_norm, resid, f, (nx, ny), iters, recon, ortho)
