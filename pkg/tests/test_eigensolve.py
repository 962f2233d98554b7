import numpy as np
import pytest
import scipy.sparse as sp
from numpy.testing import assert_allclose

from subrumin.eigensolve import (
    HermitianError,
    SparseHermitian,
    dense_smallest,
    matvec,
    smallest_eigenpair,
)
from subrumin.lattice import magnetic_laplacian_2d
from subrumin.torus import circle_lambda1_fd


def random_psd(n, seed):
    """Magnetic Laplacian with random link phases plus a random potential, on an (n/25) x 25 grid."""
    rng = np.random.default_rng(seed)
    nx, ny = n // 25, 25
    tx, ty = rng.uniform(-3, 3, (2, nx, ny))
    L = magnetic_laplacian_2d(nx, ny, 1.0, 1.0, tx, ty).csr
    return SparseHermitian.symmetrized(L + sp.diags(rng.uniform(0.0, 1.0, nx * ny)))


def test_identity_matvec():
    H = SparseHermitian(sp.identity(3))
    assert_allclose(matvec(H, [1, 2, 3]), [1, 2, 3])


def test_diag_smallest():
    H = SparseHermitian(sp.diags([2.0, 1.0]))
    r = smallest_eigenpair(H)
    assert r.value == pytest.approx(1.0)
    assert abs(abs(r.vector[1]) - 1.0) < 1e-12


def test_dimension_mismatch():
    with pytest.raises(ValueError, match="dimension"):
        matvec(SparseHermitian(sp.identity(3)), np.ones(4))


def test_non_hermitian_rejected():
    with pytest.raises(HermitianError):
        SparseHermitian(sp.csr_matrix(np.array([[1.0, 1j], [1j, 1.0]])))
    with pytest.raises(HermitianError):
        SparseHermitian(sp.csr_matrix(np.ones((2, 3))))


def test_hermiticity_probe_on_magnetic_laplacian():
    rng = np.random.default_rng(0)
    tx, ty = rng.uniform(-3, 3, (2, 12, 10))
    H = magnetic_laplacian_2d(12, 10, 0.3, 0.1, tx, ty)
    assert H.is_exactly_hermitian()
    u = rng.standard_normal(H.n) + 1j * rng.standard_normal(H.n)
    v = rng.standard_normal(H.n) + 1j * rng.standard_normal(H.n)
    lhs = np.vdot(u, matvec(H, v))
    rhs = np.vdot(matvec(H, u), v)
    assert abs(lhs - rhs) <= 1e-12 * abs(lhs)


def test_magnetic_laplacian_nonnegative():
    rng = np.random.default_rng(1)
    tx, ty = rng.uniform(-3, 3, (2, 8, 8))
    H = magnetic_laplacian_2d(8, 8, 0.125, 0.125, tx, ty)
    assert np.linalg.eigvalsh(H.toarray()).min() >= -1e-10


@pytest.mark.parametrize("preconditioner", ["lu", "jacobi"])
@pytest.mark.parametrize("n, seed", [(600, 0), (900, 1), (1200, 2)])
def test_iterative_agrees_with_dense(n, seed, preconditioner):
    H = random_psd(n, seed)
    ref = np.linalg.eigvalsh(H.toarray())[0]
    r = smallest_eigenpair(H, tol=1e-10, dense_threshold=0, preconditioner=preconditioner)
    assert r.converged and r.method == "lobpcg"
    assert abs(r.value - ref) <= 1e-8 * max(1.0, abs(ref))
    assert abs(dense_smallest(H).value - ref) <= 1e-12 * max(1.0, abs(ref))


def test_rayleigh_quotients_decrease():
    H = random_psd(800, 4)
    r = smallest_eigenpair(H, tol=1e-9, dense_threshold=0)
    h = np.array(r.history)
    assert np.all(np.diff(h) <= 1e-10 * max(1.0, abs(h[0])))


def test_residual_certificate():
    H = random_psd(700, 5)
    r = smallest_eigenpair(H, tol=1e-9, dense_threshold=0)
    res = np.linalg.norm(matvec(H, r.vector) - r.value * r.vector)
    assert res <= 1e-9 * max(1.0, r.value)
    assert np.linalg.norm(r.vector) == pytest.approx(1.0)


def test_nonconvergence_is_reported():
    H = random_psd(700, 6)
    r = smallest_eigenpair(H, tol=1e-14, max_iter=3, dense_threshold=0)
    assert not r.converged
    assert r.iterations == 3


def test_deterministic_given_seed():
    H = random_psd(700, 7)
    a = smallest_eigenpair(H, seed=3, dense_threshold=0)
    b = smallest_eigenpair(H, seed=3, dense_threshold=0)
    assert a.value == b.value and a.iterations == b.iterations


def test_dump_load_round_trip(tmp_path):
    rng = np.random.default_rng(2)
    tx, ty = rng.uniform(-3, 3, (2, 8, 9))
    H = magnetic_laplacian_2d(8, 9, 0.25, 1 / 9, tx, ty)
    path = tmp_path / "h.txt"
    H.dump(path)
    G = SparseHermitian.load(path)
    assert np.array_equal(G.toarray(), H.toarray())
    assert path.read_text().split("\n")[0] == f"{H.n} {H.nnz}"


def test_circle_solver():
    assert circle_lambda1_fd(0.0, 1024).value <= 1e-10
    r = circle_lambda1_fd(0.25, 1024)
    assert abs(r.value - 0.0625) / 0.0625 <= 1e-4
    assert r.converged


def test_argument_validation():
    with pytest.raises(ValueError):
        smallest_eigenpair(SparseHermitian(sp.identity(2)), tol=0.0)
    with pytest.raises(ValueError):
        smallest_eigenpair(random_psd(600, 0), dense_threshold=0, preconditioner="ilu")
