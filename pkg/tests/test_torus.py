import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from subrumin.geometry import CircleChart
from subrumin.torus import (
    HarmonicLattice,
    TorusPotential,
    assemble_torus,
    circle_lambda1_exact,
    circle_lambda1_fd,
    landau_mu,
    lattice_distance_sq,
    torus_lambda1_exact,
    torus_lambda1_fd,
    torus_lambda1_fd_constant_formula,
)

PI = math.pi


def fd(a, b, k, nx=128, ny=64):
    return torus_lambda1_fd(TorusPotential.of(a, b), k, nx, ny).value


def test_circle_exact():
    assert circle_lambda1_exact(0.25) == pytest.approx(0.0625)
    assert circle_lambda1_exact(0.75) == pytest.approx(0.0625)
    assert circle_lambda1_exact(1.0) == 0.0
    # a circle of length 1 has lattice 2 pi Z
    assert circle_lambda1_exact(PI, CircleChart(1.0)) == pytest.approx(PI**2)


def test_circle_fd_rejects_tiny_grid():
    with pytest.raises(ValueError):
        circle_lambda1_fd(0.1, 2)


@pytest.mark.parametrize(
    "a, b, k, expected",
    [(0, 0, 1, 0.0), (PI, 0, 1, PI**2), (PI, 0, 2, 0.0), (PI / 2, 0, 2, PI**2 / 4), (PI, PI, 1, 2 * PI**2)],
)
def test_lattice_distance(a, b, k, expected):
    assert lattice_distance_sq(a, b, k) == pytest.approx(expected, abs=1e-12)


def test_lattice_points():
    lat = HarmonicLattice(3)
    assert lat.generators[0][0] == pytest.approx(2 * PI / 3)
    assert lat.contains(4 * PI / 3, -2 * PI)
    assert not lat.contains(PI, 0)
    assert lat.point(1, -1) == pytest.approx((2 * PI / 3, -2 * PI))


def test_ties_are_reported_and_broken_lexicographically():
    ex = torus_lambda1_exact(PI, PI, 1)
    assert ex.value == pytest.approx(2 * PI**2)
    assert ex.ties == ((0, 0), (0, 1), (1, 0), (1, 1))
    assert ex.nearest == (0, 0)
    ex = torus_lambda1_exact(PI / 2, 0.2, 2)
    assert ex.ties == ((0, 0), (1, 0))


def test_exact_nearest_point():
    ex = torus_lambda1_exact(2 * PI / 3 + 0.1, 2 * PI - 0.2, 3)
    assert ex.nearest == (1, 1)
    assert ex.value == pytest.approx(0.01 + 0.04)


def test_fd_trivial_potential():
    assert fd(0, 0, 1, 32, 32) <= 1e-10


@pytest.mark.parametrize("k", [1, 2, 3])
def test_fd_matches_exact(k):
    rng = np.random.default_rng(100 + k)
    for a, b in rng.uniform(-2 * PI, 2 * PI, (2, 2)):
        exact = torus_lambda1_exact(a, b, k).value
        assert abs(fd(a, b, k) - exact) <= 1e-3 * max(exact, 1.0)


def test_fd_matches_stencil_formula():
    a, b, k = 0.7, -1.3, 2
    assert fd(a, b, k, 32, 16) == pytest.approx(torus_lambda1_fd_constant_formula(a, b, k, 32, 16), abs=1e-9)


def test_second_order_convergence():
    a, b, k = 1.1, 0.4, 2
    exact = torus_lambda1_exact(a, b, k).value
    errs = [abs(fd(a, b, k, k * n, n) - exact) for n in (16, 32, 64)]
    for e0, e1 in zip(errs, errs[1:]):
        assert 3.5 <= e0 / e1 <= 4.5


@pytest.mark.parametrize("k", [1, 2, 3])
def test_lattice_periodicity(k):
    a, b = 0.9, 0.3
    base = fd(a, b, k, 16 * k, 16)
    assert fd(a + 2 * PI / k, b, k, 16 * k, 16) == pytest.approx(base, abs=1e-10)
    assert fd(a, b - 2 * PI, k, 16 * k, 16) == pytest.approx(base, abs=1e-10)


def test_conjugation_symmetry():
    assert fd(0.9, 0.3, 2, 32, 16) == pytest.approx(fd(-0.9, -0.3, 2, 32, 16), abs=1e-10)


def test_continuum_gauge():
    k, a, b = 2, 0.8, 0.5
    # d_H of g = sin(2 pi y) + cos(2 pi x / k)
    pot = TorusPotential.of(f"{a} - 2*pi/{k}*sin(2*pi*x/{k})", f"{b} + 2*pi*cos(2*pi*y)")
    gauged = torus_lambda1_fd(pot, k, 128, 64).value
    assert abs(gauged - fd(a, b, k)) <= 1e-3


def test_matrix_is_hermitian_and_sized():
    H = assemble_torus(TorusPotential.of(0.3, "sin(2*pi*x)"), 1, 8, 8)
    assert H.n == 64
    assert H.is_exactly_hermitian()
    with pytest.raises(ValueError):
        assemble_torus(TorusPotential.of(0, 0), 1, 4, 8)


def test_landau_mu():
    for k in (1, 2, 5):
        assert landau_mu(k) == pytest.approx(1.0)
    assert landau_mu(3, 2.5) == pytest.approx(2.5)


def test_result_record():
    r = torus_lambda1_fd(TorusPotential.of(0.2, 0.1), 1, 16, 16, seed=4)
    d = r.to_dict()
    assert d["method"] == "fd" and d["grid"] == [16, 16] and d["seed"] == 4
    assert_allclose(d["lambda1"], r.value)
