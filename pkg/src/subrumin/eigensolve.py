"""Sparse Hermitian matrices and a smallest-eigenpair solver.

The iterative path is a block LOBPCG preconditioned by a sparse LU solve with
the slightly shifted matrix (or by its diagonal, on request).  Small problems
(n <= 512 by default) go straight to dense diagonalization.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spl

log = logging.getLogger(__name__)


class HermitianError(ValueError):
    pass


class ConvergenceError(RuntimeError):
    """Raised by high-level solvers when the eigensolver did not converge."""

    def __init__(self, message: str, result: "EigResult | None" = None):
        super().__init__(message)
        self.result = result


class SparseHermitian:
    """CSR storage of a Hermitian matrix with both triangles stored explicitly."""

    def __init__(self, matrix, check: bool = True):
        m = sp.csr_matrix(matrix, dtype=np.complex128)
        if m.shape[0] != m.shape[1]:
            raise HermitianError(f"matrix must be square, got {m.shape}")
        m.sum_duplicates()
        m.eliminate_zeros()
        m.sort_indices()
        if not np.all(np.isfinite(m.data)):
            raise HermitianError("matrix has non-finite entries")
        self.csr = m
        self.hermitian = True
        if check and not self.is_exactly_hermitian():
            raise HermitianError("matrix differs from its conjugate transpose")

    @classmethod
    def symmetrized(cls, matrix) -> "SparseHermitian":
        """(M + M^H)/2; bitwise Hermitian because fp addition commutes."""
        m = sp.csr_matrix(matrix, dtype=np.complex128)
        return cls((m + m.conj().T) * 0.5, check=True)

    @property
    def n(self) -> int:
        return self.csr.shape[0]

    @property
    def nnz(self) -> int:
        return self.csr.nnz

    @property
    def indptr(self) -> np.ndarray:
        return self.csr.indptr

    @property
    def indices(self) -> np.ndarray:
        return self.csr.indices

    @property
    def data(self) -> np.ndarray:
        return self.csr.data

    def diagonal(self) -> np.ndarray:
        return self.csr.diagonal()

    def is_exactly_hermitian(self) -> bool:
        h = self.csr.conj().T.tocsr()
        h.sort_indices()
        m = self.csr
        return (
            np.array_equal(m.indptr, h.indptr)
            and np.array_equal(m.indices, h.indices)
            and np.array_equal(m.data, h.data)
        )

    def toarray(self) -> np.ndarray:
        return self.csr.toarray()

    def dump(self, path) -> None:
        """Coordinate text format: header ``n nnz``, then ``row col re im`` per entry."""
        coo = self.csr.tocoo()
        with open(path, "w", encoding="ascii") as fh:
            fh.write(f"{self.n} {coo.nnz}\n")
            for r, c, v in zip(coo.row, coo.col, coo.data):
                fh.write(f"{int(r)} {int(c)} {float(v.real)!r} {float(v.imag)!r}\n")

    @classmethod
    def load(cls, path) -> "SparseHermitian":
        lines = Path(path).read_text(encoding="ascii").split("\n")
        n, nnz = (int(t) for t in lines[0].split())
        rows = np.empty(nnz, dtype=np.int64)
        cols = np.empty(nnz, dtype=np.int64)
        vals = np.empty(nnz, dtype=np.complex128)
        for e, line in enumerate(lines[1 : nnz + 1]):
            r, c, re_, im_ = line.split()
            rows[e], cols[e] = int(r), int(c)
            vals[e] = complex(float(re_), float(im_))
        return cls(sp.coo_matrix((vals, (rows, cols)), shape=(n, n)))


def matvec(H: SparseHermitian, v) -> np.ndarray:
    v = np.asarray(v)
    if v.shape[0] != H.n:
        raise ValueError(f"dimension mismatch: matrix is {H.n}x{H.n}, vector has length {v.shape[0]}")
    return H.csr @ v


@dataclass
class EigResult:
    value: float
    vector: np.ndarray  # unit Euclidean norm
    residual: float
    iterations: int
    converged: bool
    method: str = "lobpcg"
    history: list = field(default_factory=list, repr=False)
    restarts: list = field(default_factory=list, repr=False)


def _residual(H: SparseHermitian, v, lam) -> float:
    return float(np.linalg.norm(H.csr @ v - lam * v))


def dense_smallest(H: SparseHermitian) -> EigResult:
    w, V = np.linalg.eigh(H.toarray())
    v = V[:, 0]
    lam = float(w[0])
    return EigResult(lam, v, _residual(H, v, lam), 0, True, method="dense", history=[lam])


def _orthonormal_basis(S, drop=1e-12):
    """Orthonormal basis of span(S) by two passes of SVQB; near-dependent directions are dropped."""
    dropped = 0
    for _ in range(2):
        norms = np.linalg.norm(S, axis=0)
        keep = norms > 0
        dropped += int(np.count_nonzero(~keep))
        S = S[:, keep] / norms[keep]
        G = S.conj().T @ S
        sig, U = np.linalg.eigh(0.5 * (G + G.conj().T))
        ok = sig > drop * sig[-1]
        dropped += int(np.count_nonzero(~ok))
        S = S @ (U[:, ok] / np.sqrt(sig[ok]))
    return S, dropped


def smallest_eigenpair(
    H: SparseHermitian,
    tol: float = 1e-8,
    max_iter: int = 10000,
    seed: int = 0,
    block_size: int = 2,
    dense_threshold: int = 512,
    preconditioner: str = "lu",
) -> EigResult:
    """Smallest eigenpair with ||Hv - lambda v|| <= tol * max(1, |lambda|) when converged."""
    if not tol > 0:
        raise ValueError("tol must be positive")
    n = H.n
    if n <= dense_threshold:
        return dense_smallest(H)

    A = H.csr
    b = min(block_size, n)
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, b)) + 1j * rng.standard_normal((n, b))
    diag = H.diagonal().real
    if preconditioner == "lu":
        # shifted so that singular (gauge-trivial) matrices factor too
        shift = 1e-4 * max(float(np.abs(diag).mean()), 1e-300)
        lu = spl.splu((A + shift * sp.identity(n, format="csr")).tocsc())
        apply_pre = lu.solve
    elif preconditioner == "jacobi":
        inv_diag = 1.0 / np.where(diag > 0, diag, 1.0)
        apply_pre = lambda R: inv_diag[:, None] * R
    else:
        raise ValueError(f"unknown preconditioner {preconditioner!r}")

    X, _ = np.linalg.qr(X)
    AX = A @ X
    T = X.conj().T @ AX
    theta, C = np.linalg.eigh(0.5 * (T + T.conj().T))
    X, AX = X @ C, AX @ C
    P = None
    history = [float(theta[0])]
    restarts: list = []
    best = (np.inf, X[:, 0].copy(), float(theta[0]))

    it = 0
    for it in range(1, max_iter + 1):
        R = AX - X * theta
        rnorm = float(np.linalg.norm(R[:, 0]))
        thr = tol * max(1.0, abs(theta[0]))
        if rnorm < best[0]:
            best = (rnorm, X[:, 0].copy(), float(theta[0]))
        if rnorm <= thr:
            v = X[:, 0] / np.linalg.norm(X[:, 0])
            lam = float(np.real(np.vdot(v, A @ v)))
            res = _residual(H, v, lam)
            if res <= thr:
                return EigResult(lam, v, res, it, True, history=history, restarts=restarts)
            restarts.append((it, "residual check failed"))

        W = apply_pre(np.ascontiguousarray(R))
        blocks = [X, W] if P is None else [X, W, P]
        Q, dropped = _orthonormal_basis(np.hstack(blocks))
        if dropped and P is not None:
            restarts.append((it, f"dropped {dropped}"))
        AQ = A @ Q
        T = Q.conj().T @ AQ
        th, Y = np.linalg.eigh(0.5 * (T + T.conj().T))
        C = Y[:, :b]
        Xn = Q @ C
        P = Xn - X @ (X.conj().T @ Xn)
        X, AX, theta = Xn, AQ @ C, th[:b]
        history.append(float(theta[0]))

    rnorm, v, lam = best
    v = v / np.linalg.norm(v)
    lam = float(np.real(np.vdot(v, A @ v)))
    log.warning("LOBPCG did not converge in %d iterations (residual %.3e)", max_iter, rnorm)
    return EigResult(lam, v, _residual(H, v, lam), it, False, history=history, restarts=restarts)
