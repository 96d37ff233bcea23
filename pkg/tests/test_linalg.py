import numpy as np
import pytest

from helpers import det_extreme_eigs
from nlacc.linalg import (ConvergenceFailure, NotPositiveDefinite,
                          spectral_norm, sym_eig_extreme, sym_solve_shifted)


def test_solve_identity():
    v = sym_solve_shifted(np.eye(2), 0.0, np.array([1.0, 2.0]))
    assert np.allclose(v, [1.0, 2.0], atol=1e-14)


def test_solve_shifted_diagonal():
    v = sym_solve_shifted(np.diag([1.0, 4.0]), 1.0, np.array([2.0, 10.0]))
    assert np.allclose(v, [1.0, 2.0], atol=1e-14)


@pytest.mark.parametrize("seed", range(5))
def test_solve_residual_random_spd(seed):
    rng = np.random.default_rng(seed)
    B = rng.standard_normal((5, 5))
    M = B @ B.T + 0.1 * np.eye(5)
    rhs = rng.standard_normal(5)
    shift = rng.uniform(0.0, 2.0)
    v = sym_solve_shifted(M, shift, rhs)
    resid = np.linalg.norm((M + shift * np.eye(5)) @ v - rhs)
    assert resid <= 1e-10 * np.linalg.norm(rhs)


def test_solve_rejects_indefinite():
    with pytest.raises(NotPositiveDefinite):
        sym_solve_shifted(np.diag([1.0, -2.0]), 0.0, np.ones(2))


def test_solve_rejects_asymmetric():
    with pytest.raises(ValueError):
        sym_solve_shifted(np.array([[1.0, 0.5], [0.0, 1.0]]), 0.0, np.ones(2))


def test_eig_diagonal():
    lo, hi, vec = sym_eig_extreme(np.diag([1.0, 3.0]))
    assert lo == pytest.approx(1.0)
    assert hi == pytest.approx(3.0)
    assert np.allclose(np.abs(vec), [0.0, 1.0], atol=1e-12)


def test_eig_offdiagonal():
    lo, hi, vec = sym_eig_extreme(np.array([[0.0, 0.5], [0.5, 0.0]]))
    assert lo == pytest.approx(-0.5)
    assert hi == pytest.approx(0.5)
    assert np.allclose(np.abs(vec), [1.0 / np.sqrt(2.0)] * 2, atol=1e-12)


@pytest.mark.parametrize("seed", range(4))
def test_eig_against_char_poly_bracketing(seed):
    rng = np.random.default_rng(10 + seed)
    B = rng.standard_normal((6, 6))
    M = (B + B.T) / 2.0
    lo, hi, vec = sym_eig_extreme(M)
    lo_ref, hi_ref = det_extreme_eigs(M)
    assert lo == pytest.approx(lo_ref, abs=1e-8)
    assert hi == pytest.approx(hi_ref, abs=1e-8)
    # Rayleigh quotient of the returned vector matches the top eigenvalue
    assert abs(vec @ (M @ vec) - hi) <= 1e-10
    assert np.linalg.norm(vec) == pytest.approx(1.0, abs=1e-12)


def test_eig_antisymmetry():
    rng = np.random.default_rng(3)
    M = rng.standard_normal((5, 5))
    M = (M + M.T) / 2.0
    lo, hi, _ = sym_eig_extreme(M)
    lo_neg, hi_neg, _ = sym_eig_extreme(-M)
    assert lo_neg == pytest.approx(-hi, abs=1e-12)
    assert hi_neg == pytest.approx(-lo, abs=1e-12)


def test_spectral_norm_zero():
    assert spectral_norm(np.zeros((3, 3))) == 0.0


def test_spectral_norm_diagonal():
    assert spectral_norm(np.diag([2.0, -5.0])) == pytest.approx(5.0, rel=1e-10)


@pytest.mark.parametrize("seed", range(4))
def test_spectral_norm_matches_gram_eig(seed):
    rng = np.random.default_rng(20 + seed)
    M = rng.standard_normal((4, 3))
    _, top, _ = sym_eig_extreme(M.T @ M)
    assert spectral_norm(M) == pytest.approx(np.sqrt(top), rel=1e-8)


def test_spectral_norm_transpose_invariant():
    rng = np.random.default_rng(8)
    M = rng.standard_normal((6, 4))
    assert abs(spectral_norm(M) - spectral_norm(M.T)) <= 1e-10 * spectral_norm(M)


def test_spectral_norm_clustered_singular_values():
    # equal top singular values must not stall the Rayleigh estimate
    M = np.diag([3.0, 3.0, 1.0])
    assert spectral_norm(M) == pytest.approx(3.0, rel=1e-8)
