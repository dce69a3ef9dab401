"""Test the eigensolver and matrix norms."""

from __future__ import annotations

import math

import numpy as np
import pytest

from skcov.disorder import SymMatrix, interaction_matrix, sample_couplings
from skcov.errors import ConvergenceError, DimensionMismatchError, NotSymmetricError
from skcov.spectral import (
    extreme_eigenvalues,
    frobenius_norm,
    frobenius_norm_sq,
    jacobi_eigen,
    operator_norm,
)


def _random_symmetric(n: int, seed: int) -> np.ndarray:
    return interaction_matrix(sample_couplings(n, seed)).entries


def test_two_by_two() -> None:
    """Test a hand-checkable spectrum."""
    spectrum = jacobi_eigen([[2.0, 1.0], [1.0, 2.0]], want_vectors=True)
    assert spectrum.eigenvalues == pytest.approx([3.0, 1.0])
    assert spectrum.largest == pytest.approx(3.0)
    assert spectrum.smallest == pytest.approx(1.0)
    assert np.abs(spectrum.eigenvectors[:, 0]) == pytest.approx([math.sqrt(0.5)] * 2)


def test_diagonal_needs_no_sweeps() -> None:
    """Test a diagonal matrix is returned sorted and untouched."""
    spectrum = jacobi_eigen(np.diag([1.0, -4.0, 2.5]))
    assert spectrum.sweeps == 0
    assert spectrum.eigenvalues.tolist() == [2.5, 1.0, -4.0]
    assert spectrum.spectral_radius == 4.0
    assert spectrum.eigenvectors is None


@pytest.mark.parametrize("n", [3, 8, 30])
def test_decomposition(n: int) -> None:
    """Test A V = V diag(lambda), orthonormality, trace and Frobenius identities."""
    a = _random_symmetric(n, n)
    spectrum = jacobi_eigen(SymMatrix(a), want_vectors=True)
    vectors = spectrum.eigenvectors
    assert np.allclose(a @ vectors, vectors * spectrum.eigenvalues, atol=1e-9)
    assert np.allclose(vectors.T @ vectors, np.eye(n), atol=1e-9)
    assert np.all(np.diff(spectrum.eigenvalues) <= 0)
    assert math.fsum(spectrum.eigenvalues) == pytest.approx(np.trace(a), rel=1e-9, abs=1e-9)
    assert math.fsum(spectrum.eigenvalues**2) == pytest.approx(frobenius_norm_sq(a), rel=1e-9)


def test_jacobi_rejects() -> None:
    """Test input validation and the sweep cap."""
    with pytest.raises(NotSymmetricError):
        jacobi_eigen([[1.0, 2.0], [0.0, 1.0]])
    with pytest.raises(DimensionMismatchError):
        jacobi_eigen(np.zeros((2, 3)))
    with pytest.raises(ConvergenceError) as err:
        jacobi_eigen(_random_symmetric(6, 1), max_sweeps=0)
    assert err.value.off_diagonal_mass > 0


def test_extreme_eigenvalues() -> None:
    """Test the (smallest, largest) pair."""
    assert extreme_eigenvalues([[0.0, 2.0], [2.0, 0.0]]) == pytest.approx((-2.0, 2.0))


@pytest.mark.parametrize("index", range(20))
def test_operator_norm_matches_spectrum(index: int) -> None:
    """Test power iteration against the Jacobi spectral radius on 20 instances."""
    a = _random_symmetric(2 + 2 * index, 100 + index)
    assert operator_norm(a) == pytest.approx(jacobi_eigen(a).spectral_radius, rel=1e-8)


def test_operator_norm_edge_cases() -> None:
    """Test a zero matrix and opposite eigenvalues of equal size."""
    assert operator_norm(np.zeros((3, 3))) == 0.0
    assert operator_norm([[0.0, 1.0], [1.0, 0.0]]) == pytest.approx(1.0)
    assert operator_norm(np.eye(4)) == pytest.approx(1.0)


def test_frobenius_norm() -> None:
    """Test the compensated Frobenius norm."""
    assert frobenius_norm([[3.0, 0.0], [0.0, 4.0]]) == 5.0
    assert frobenius_norm_sq(SymMatrix(np.eye(10))) == 10.0
