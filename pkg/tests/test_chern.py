import math

import numpy as np
import pytest

from subrumin.chern import (
    AmbiguousRecoveryError,
    SingularSystemError,
    SpectralOracle,
    divisors,
    normalize_potentials,
    predicted,
    recover_chern,
)

TWO_PI = 2 * math.pi


def test_divisors():
    assert divisors(12) == [1, 2, 3, 4, 6, 12]
    assert divisors(1) == [1]


def test_closed_form_k6():
    res = recover_chern(SpectralOracle("closed_form", k_true=6, landau=TWO_PI), 12)
    assert res.k_hat == 6
    assert res.zero_set == [1, 2, 3, 6]
    assert res.accepted and res.consistency_score <= 1e-12


@pytest.mark.parametrize("k", range(1, 9))
def test_round_trip(k):
    res = recover_chern(SpectralOracle("closed_form", k_true=k, landau=TWO_PI), 2 * k + 1)
    assert res.k_hat == k
    assert res.zero_set == divisors(k)


@pytest.mark.parametrize("k", [2, 5, 7])
def test_noise_robustness(k):
    rng = np.random.default_rng(k)
    clean = SpectralOracle("closed_form", k_true=k, landau=TWO_PI)
    L = 2 * k + 1
    table = {l: clean(l) + 1e-4 * rng.uniform(0, 1) * (clean(l) > 0) for l in range(1, L + 1)}
    res = recover_chern(SpectralOracle("table", table=table, landau=TWO_PI), L, zero_tol=1e-3)
    assert res.k_hat == k


def test_numeric_oracle_small_grid(landau):
    oracle = SpectralOracle("numeric", k_true=2, grid=(32, 32), m_max=1)
    res = recover_chern(oracle, 5, zero_tol=1e-2, accept_tol=0.05, landau=landau)
    assert res.k_hat == 2
    assert res.zero_set == [1, 2]


def test_zero_set_not_divisor_closed():
    table = {1: 0.0, 2: 1.0, 3: 0.0, 4: 0.0, 5: 2.0, 6: 3.0, 7: 3.0, 8: 3.0}
    with pytest.raises(AmbiguousRecoveryError) as ei:
        recover_chern(SpectralOracle("table", table=table, landau=TWO_PI), 8)
    assert "divisors" in str(ei.value)
    assert ei.value.result.k_hat == 4


def test_lmax_too_small():
    with pytest.raises(AmbiguousRecoveryError, match="L_max"):
        recover_chern(SpectralOracle("closed_form", k_true=4, landau=TWO_PI), 5)


def test_inconsistent_nonzero_probe():
    oracle = SpectralOracle("closed_form", k_true=3, landau=TWO_PI)
    table = {l: oracle(l) for l in range(1, 8)}
    table[5] *= 1.5
    with pytest.raises(AmbiguousRecoveryError, match="deviates"):
        recover_chern(SpectralOracle("table", table=table, landau=TWO_PI), 7)


def test_no_vanishing_probe():
    table = {l: 1.0 for l in range(1, 5)}
    with pytest.raises(AmbiguousRecoveryError, match="no vanishing"):
        recover_chern(SpectralOracle("table", table=table), 4)


def test_table_without_landau_uses_plateau():
    oracle = SpectralOracle("closed_form", k_true=2, landau=TWO_PI)
    table = {l: oracle(l) for l in range(1, 6)}
    res = recover_chern(SpectralOracle("table", table=table), 5)
    assert res.k_hat == 2 and res.landau_source == "table plateau"


def test_oracle_validation():
    with pytest.raises(ValueError):
        SpectralOracle("magic", k_true=1)
    with pytest.raises(ValueError):
        SpectralOracle("table", table={1: 0.0, 3: 1.0})
    with pytest.raises(ValueError):
        SpectralOracle("closed_form", k_true=2)
    with pytest.raises(ValueError):
        recover_chern(SpectralOracle("table", table={1: 0.0, 2: 1.0}), 3)


def test_predicted():
    # l = 4 on k = 2: distance from pi/2 to the step-pi lattice
    assert predicted(4, 2, TWO_PI) == pytest.approx((math.pi / 2) ** 2)
    assert predicted(2, 2, TWO_PI) == 0.0
    assert predicted(5, 1, 0.5) == 0.5


def test_normalize():
    g1, g2 = normalize_potentials((1.0, 0.0), (0.0, 1.0))
    assert (g1, g2) == pytest.approx((TWO_PI, 0.0))
    xi1, xi2 = (1.0, 2.0), (3.0, -1.0)
    g1, g2 = normalize_potentials(xi1, xi2)
    assert g1 * xi1[0] + g2 * xi2[0] == pytest.approx(TWO_PI)
    assert g1 * xi1[1] + g2 * xi2[1] == pytest.approx(0.0, abs=1e-12)
    with pytest.raises(SingularSystemError):
        normalize_potentials((1.0, 2.0), (2.0, 4.0))
