"""Peierls-phased hopping operators shared by the torus, sector and 3D solvers.

A hop operator T acts by (T psi)(p) = exp(i theta_p) psi(next(p)), where
theta_p is the line integral of the potential from p to its neighbour.  The
discrete magnetic Laplacian in one direction is (2 - T - T^H)/h^2, the Gram
matrix of the forward difference (T - 1)/h.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .eigensolve import SparseHermitian
from .fields import ScalarField

_GAUSS_CACHE: dict[int, tuple] = {}


def gauss_nodes(order: int):
    if order not in _GAUSS_CACHE:
        s, w = np.polynomial.legendre.leggauss(order)
        _GAUSS_CACHE[order] = ((s + 1.0) / 2.0, w / 2.0)
    return _GAUSS_CACHE[order]


def link_integral(f: ScalarField, start, direction, length: float, order: int = 2):
    """Integral of f along start + t*direction, t in [0, length], by Gauss-Legendre.

    ``start`` and ``direction`` are coordinate triples of broadcastable arrays.
    Constant fields are integrated exactly.
    """
    x0, y0, z0 = (np.asarray(c, dtype=float) for c in start)
    shape = np.broadcast_shapes(x0.shape, y0.shape, z0.shape)
    if f.is_constant():
        return np.full(shape, float(f(0.0, 0.0, 0.0)) * length)
    vx, vy, vz = direction
    nodes, weights = gauss_nodes(order)
    acc = np.zeros(shape)
    for s, w in zip(nodes, weights):
        t = s * length
        acc += w * f.sample(x0 + t * vx, y0 + t * vy, z0 + t * vz)
    return acc * length


def hop_matrix(n: int, targets, phases) -> sp.csr_matrix:
    """Sparse T with T[p, targets[p]] = exp(i phases[p])."""
    rows = np.arange(n)
    return sp.csr_matrix((np.exp(1j * np.asarray(phases).ravel()), (rows, np.asarray(targets).ravel())), shape=(n, n))


def laplacian_from_hops(n: int, hops) -> SparseHermitian:
    """Sum over directions of (2 - T - T^H)/h^2 for (T, h) in ``hops``.

    Each T must be unitary; the result is then the Gram matrix of the phased
    forward differences and is positive semidefinite.
    """
    diag = sum(2.0 / h**2 for _, h in hops)
    H = sp.identity(n, dtype=np.complex128, format="csr") * diag
    for T, h in hops:
        T = sp.csr_matrix(T, dtype=np.complex128)
        H = H - (T + T.conj().T) * (1.0 / h**2)
    return SparseHermitian(H, check=True)


def grid_hops_2d(nx: int, ny: int, theta_x, theta_y):
    """Hop operators for the periodic nx x ny grid, node (i, j) -> i*ny + j.

    ``theta_x[i, j]`` is the phase of the link (i,j)->(i+1,j) and ``theta_y[i, j]``
    the phase of (i,j)->(i,j+1), indices taken mod the grid size.
    """
    idx = np.arange(nx * ny).reshape(nx, ny)
    right = np.roll(idx, -1, axis=0)
    up = np.roll(idx, -1, axis=1)
    n = nx * ny
    return hop_matrix(n, right, theta_x), hop_matrix(n, up, theta_y)


def magnetic_laplacian_2d(nx: int, ny: int, hx: float, hy: float, theta_x, theta_y) -> SparseHermitian:
    Tx, Ty = grid_hops_2d(nx, ny, theta_x, theta_y)
    return laplacian_from_hops(nx * ny, [(Tx, hx), (Ty, hy)])


def plaquette_phases(nx: int, ny: int, theta_x, theta_y) -> np.ndarray:
    """Circulation theta around every elementary cell, counter-clockwise."""
    tx = np.asarray(theta_x)
    ty = np.asarray(theta_y)
    return tx + np.roll(ty, -1, axis=0) - np.roll(tx, -1, axis=1) - ty
