"""Recovering the lattice parameter k from the probes l -> lambda_1(2 pi / l dx)."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .nilmanifold import landau_constant, nil_lambda1_closed, nil_lambda1_sector

TWO_PI = 2.0 * math.pi


class AmbiguousRecoveryError(RuntimeError):
    def __init__(self, message: str, result: "RecoveryResult"):
        super().__init__(message)
        self.result = result


class SingularSystemError(ValueError):
    pass


@dataclass
class SpectralOracle:
    """ell -> first eigenvalue for the potential (2 pi / ell) dx.

    kind is "closed_form", "numeric" or "table".
    """

    kind: str
    k_true: int | None = None
    landau: float | None = None
    grid: tuple = (64, 64)
    tol: float = 1e-8
    m_max: int = 2
    seed: int = 0
    table: dict | None = None

    def __post_init__(self):
        if self.kind not in ("closed_form", "numeric", "table"):
            raise ValueError(f"unknown oracle kind {self.kind!r}")
        if self.kind == "table":
            if not self.table:
                raise ValueError("table oracle needs values")
            tab = {int(l): float(v) for l, v in self.table.items()}
            if sorted(tab) != list(range(1, len(tab) + 1)):
                raise ValueError("table oracle needs contiguous l = 1..L")
            if any(v < 0 for v in tab.values()):
                raise ValueError("table values must be non-negative")
            self.table = tab
        elif self.k_true is None or int(self.k_true) < 1:
            raise ValueError("closed_form and numeric oracles need k_true >= 1")
        if self.kind == "closed_form" and self.landau is None:
            raise ValueError("closed_form oracle needs a Landau constant")

    @property
    def max_l(self) -> int | None:
        return len(self.table) if self.kind == "table" else None

    def __call__(self, l: int) -> float:
        a = TWO_PI / l
        if self.kind == "closed_form":
            return nil_lambda1_closed(self.k_true, a, 0.0, self.landau)
        if self.kind == "numeric":
            return max(0.0, nil_lambda1_sector(self.k_true, (a, 0.0), m_max=self.m_max, grid=self.grid,
                                               tol=self.tol, seed=self.seed).value)
        return self.table[l]


def divisors(n: int) -> list:
    return [d for d in range(1, n + 1) if n % d == 0]


def predicted(l: int, k: int, landau: float) -> float:
    return nil_lambda1_closed(k, TWO_PI / l, 0.0, landau)


@dataclass
class RecoveryResult:
    k_hat: int
    zero_set: list
    consistency_score: float
    L_used: int
    accepted: bool
    diagnostics: list = field(default_factory=list)
    values: dict = field(default_factory=dict)
    landau: float | None = None
    landau_source: str = ""

    def to_dict(self) -> dict:
        return {
            "k_hat": self.k_hat,
            "zero_set": self.zero_set,
            "consistency_score": self.consistency_score,
            "L_used": self.L_used,
            "accepted": self.accepted,
            "diagnostics": self.diagnostics,
            "values": {str(l): v for l, v in sorted(self.values.items())},
            "landau_constant": self.landau,
            "landau_source": self.landau_source,
        }


def recover_chern(oracle: SpectralOracle, L_max: int, zero_tol: float = 1e-6, accept_tol: float = 1e-2,
                  landau: float | None = None) -> RecoveryResult:
    """Scan l = 1..L_max; k is the largest l with a vanishing probe, cross-checked against the closed form.

    Raises ``AmbiguousRecoveryError`` when the zero set is not the divisor set of
    its maximum, when a nonzero probe disagrees with the closed form, or when
    L_max < 2 k_hat.
    """
    if int(L_max) < 2:
        raise ValueError("L_max must be at least 2")
    L_max = int(L_max)
    if oracle.max_l is not None and L_max > oracle.max_l:
        raise ValueError(f"table covers l <= {oracle.max_l}, asked for L_max = {L_max}")
    values = {l: float(oracle(l)) for l in range(1, L_max + 1)}
    zero_set = [l for l, v in values.items() if v < zero_tol]
    diagnostics: list = []
    if not zero_set:
        res = RecoveryResult(0, [], math.inf, L_max, False, ["no vanishing probe (l = 1 must vanish)"], values)
        raise AmbiguousRecoveryError(res.diagnostics[0], res)
    k_hat = max(zero_set)

    source = "argument"
    if landau is None:
        landau = oracle.landau
        source = "oracle"
    plateau = None
    if landau is None and oracle.kind == "table":
        nonzero = [v for v in values.values() if v >= zero_tol]
        plateau = max(nonzero) if nonzero else None
        landau = plateau if plateau is not None else math.inf
        source = "table plateau"
    elif landau is None:
        landau, _ = landau_constant()
        source = "calibration cache"

    divs = divisors(k_hat)
    if zero_set != divs:
        extra = sorted(set(zero_set) - set(divs))
        missing = sorted(set(divs) - set(zero_set))
        diagnostics.append(f"zero set {zero_set} differs from divisors of {k_hat}: extra {extra}, missing {missing}")

    score = 0.0
    for l, v in values.items():
        if l in zero_set:
            continue
        pred = predicted(l, k_hat, landau)
        if pred <= 0.0:
            diagnostics.append(f"probe l={l}: value {v!r} is nonzero but l divides k_hat={k_hat}")
            score = math.inf
            continue
        dev = abs(v - pred) / pred
        score = max(score, dev)
        if dev > accept_tol:
            diagnostics.append(f"probe l={l}: value {v!r} deviates from closed form {pred!r} by {dev:.3g} (> {accept_tol})")

    if L_max < 2 * k_hat:
        diagnostics.append(f"L_max={L_max} is smaller than 2*k_hat={2 * k_hat}; larger multiples cannot be ruled out")

    res = RecoveryResult(k_hat, zero_set, score, L_max, not diagnostics, diagnostics, values, landau, source)
    if diagnostics:
        raise AmbiguousRecoveryError("; ".join(diagnostics), res)
    return res


def normalize_potentials(xi1, xi2, tol: float = 1e-12):
    """(g1, g2) with g1*xi1 + g2*xi2 = (2 pi, 0)."""
    a1, b1 = (float(c) for c in xi1)
    a2, b2 = (float(c) for c in xi2)
    det = a1 * b2 - a2 * b1
    scale = math.hypot(a1, b1) * math.hypot(a2, b2)
    if scale == 0.0 or abs(det) <= tol * scale:
        raise SingularSystemError("the two harmonic parts are linearly dependent")
    g1 = TWO_PI * b2 / det
    g2 = -TWO_PI * b1 / det
    return g1, g2
