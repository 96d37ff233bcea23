import numpy as np
import pytest

from helpers import grid_minimax_segment
from nlacc.chebyshev import (CROUZEIX_CONSTANT, NormalizationInsideRegion,
                             chebyshev_value, complex_chebyshev,
                             constrained_minmax, crouzeix_check,
                             ellipse_minmax, fischer_applicable,
                             matrix_polynomial, segment_boundary,
                             segment_minmax)
from nlacc.numrange import (boundary_points, ellipse_region, segment_region)


# ---------------------------------------------------------------------------
# segment values


def test_segment_collapses_at_unit_kappa():
    assert segment_minmax(1.0, 1) == 0.0
    assert segment_minmax(1.0, 0) == 1.0


def test_segment_known_values():
    assert segment_minmax(0.25, 1) == pytest.approx(0.6, abs=1e-12)
    assert segment_minmax(1.0 / 9.0, 2) == pytest.approx(8.0 / 17.0, abs=1e-12)


def test_segment_matches_grid_minimax_oracle():
    assert abs(segment_minmax(0.25, 1) - grid_minimax_segment(0.25, 1)) <= 1e-10
    assert abs(segment_minmax(1.0 / 9.0, 2)
               - grid_minimax_segment(1.0 / 9.0, 2)) <= 1e-10


@pytest.mark.parametrize("kappa", [0.9, 0.5, 0.1, 0.01])
def test_segment_equals_rho_formula(kappa):
    rho = (1.0 - np.sqrt(kappa)) / (1.0 + np.sqrt(kappa))
    for k in range(1, 11):
        expect = 2.0 * rho**k / (1.0 + rho ** (2 * k))
        assert segment_minmax(kappa, k) == pytest.approx(expect, abs=1e-12)
        assert segment_minmax(kappa, k) <= 2.0 * rho**k + 1e-15


# ---------------------------------------------------------------------------
# complex Chebyshev evaluation


def test_complex_chebyshev_at_one():
    for k in range(6):
        assert complex_chebyshev(1.0, k) == pytest.approx(1.0, abs=1e-12)


def test_complex_chebyshev_degree_one_is_identity():
    assert complex_chebyshev(5.0 / 3.0, 1) == pytest.approx(5.0 / 3.0)


def test_complex_chebyshev_degree_two_recurrence():
    assert complex_chebyshev(5.0 / 4.0, 2) == pytest.approx(17.0 / 8.0)


def test_complex_chebyshev_matches_real_recurrence():
    for t in (1.1, 2.0, 3.7):
        for k in (1, 2, 3, 5, 8):
            assert complex_chebyshev(t, k).real == pytest.approx(
                chebyshev_value(t, k), rel=1e-12)


def test_complex_chebyshev_bounded_on_interval():
    for t in np.linspace(-1.0, 1.0, 21):
        assert abs(complex_chebyshev(t, 7)) <= 1.0 + 1e-10


# ---------------------------------------------------------------------------
# ellipse values


@pytest.mark.parametrize("kappa", [0.5, 0.25, 0.1])
def test_ellipse_consistent_with_segment(kappa):
    region = segment_region(0.0, 1.0 - kappa)
    for k in (1, 2, 4, 7):
        assert ellipse_minmax(region, k) == pytest.approx(
            segment_minmax(kappa, k), abs=1e-8)


def test_ellipse_degree_zero_is_one():
    region = ellipse_region(0.0, 0.5, 0.2)
    assert ellipse_minmax(region, 0) == 1.0


def test_ellipse_value_nonincreasing_in_eccentricity():
    a = 0.8
    prev = np.inf
    for d in np.linspace(1e-6, a - 1e-9, 10):
        b = np.sqrt(a * a - d * d)
        val = ellipse_minmax(ellipse_region(0.0, a, b), 5)
        assert val <= prev + 1e-12
        prev = val


def test_ellipse_rejects_normalization_inside():
    region = ellipse_region(0.5, 0.7, 0.3)
    with pytest.raises(NormalizationInsideRegion):
        ellipse_minmax(region, 3)


def test_fischer_conditions_report():
    # tiny ellipse far from the normalization point: conditions hold
    small = ellipse_region(0.0, 0.1, 0.05)
    assert fischer_applicable(small, 5)
    assert not fischer_applicable(small, 3)  # low-degree regime excluded
    # fat ellipse close to the normalization point: both conditions fail
    fat = ellipse_region(0.0, 0.9, 0.7)
    assert not fischer_applicable(fat, 5)


# ---------------------------------------------------------------------------
# constrained minimax on sampled ranges


def test_constrained_tau_zero_is_uniform_polynomial():
    bd = segment_boundary(0.25, 128)
    value, coeffs = constrained_minmax(bd, 3, 0.0)
    assert np.allclose(coeffs, 0.25)
    z = 0.75
    expect = abs(sum(z**i for i in range(4))) / 4.0
    assert value == pytest.approx(expect, rel=1e-12)


def test_constrained_large_tau_recovers_segment_value():
    bd = segment_boundary(0.25, 256)
    value, _ = constrained_minmax(bd, 3, 1e9)
    assert abs(value - segment_minmax(0.25, 3)) <= 1e-3


def test_constrained_value_nonincreasing_in_tau():
    bd = segment_boundary(0.1, 128)
    taus = [0.0, 0.25, 0.5, 1.0, 4.0]
    vals = [constrained_minmax(bd, 3, t)[0] for t in taus]
    for a, b in zip(vals, vals[1:]):
        assert b <= a + 1e-6


def test_constrained_value_stable_under_refined_sampling():
    bd1 = segment_boundary(0.2, 128)
    bd2 = segment_boundary(0.2, 256)
    v1, _ = constrained_minmax(bd1, 4, 0.8)
    v2, _ = constrained_minmax(bd2, 4, 0.8)
    assert abs(v1 - v2) <= 1e-3


def test_constrained_respects_norm_ball():
    bd = segment_boundary(0.3, 128)
    for tau in (0.1, 0.6, 2.0):
        _, coeffs = constrained_minmax(bd, 3, tau)
        assert np.linalg.norm(coeffs) <= (1.0 + tau) / 2.0 + 1e-9
        assert coeffs.sum() == pytest.approx(1.0, abs=1e-9)


# ---------------------------------------------------------------------------
# matrix polynomial bound


def test_minimax_surface_csv(tmp_path):
    from nlacc.chebyshev import write_minimax_surface_csv

    path = tmp_path / "surface.csv"
    write_minimax_surface_csv(np.array([0.5, 0.5]), path, grid=11)
    rows = np.loadtxt(path, delimiter=",", skiprows=1)
    assert rows.shape == (121, 3)
    z = rows[:, 0] + 1j * rows[:, 1]
    assert np.allclose(rows[:, 2], np.abs(0.5 + 0.5 * z), atol=1e-12)


def test_matrix_polynomial_horner_matches_powers():
    rng = np.random.default_rng(0)
    G = rng.standard_normal((4, 4))
    coeffs = rng.standard_normal(4)
    direct = sum(c * np.linalg.matrix_power(G, i) for i, c in enumerate(coeffs))
    assert np.allclose(matrix_polynomial(G, coeffs), direct, atol=1e-12)


def test_crouzeix_constant_polynomial():
    G = np.random.default_rng(1).standard_normal((3, 3))
    b = boundary_points(G, 64)
    lhs, rhs, holds = crouzeix_check(G, np.array([1.0]), b)
    assert lhs == pytest.approx(1.0, rel=1e-10)
    assert rhs == pytest.approx(CROUZEIX_CONSTANT, rel=1e-12)
    assert holds


def test_crouzeix_identity_polynomial_on_normal_matrix():
    G = np.diag([0.3, -0.6, 0.9])
    b = boundary_points(G, 128)
    lhs, rhs, holds = crouzeix_check(G, np.array([0.0, 1.0]), b)
    assert lhs == pytest.approx(0.9, rel=1e-8)   # spectral radius
    assert lhs <= rhs / CROUZEIX_CONSTANT + 1e-8  # holds with constant one
    assert holds


def test_crouzeix_monte_carlo():
    rng = np.random.default_rng(2)
    for _ in range(20):
        d = int(rng.integers(2, 9))
        k = int(rng.integers(1, 6))
        G = rng.standard_normal((d, d))
        coeffs = rng.standard_normal(k + 1)
        b = boundary_points(G, 256)
        _, _, holds = crouzeix_check(G, coeffs, b)
        assert holds
