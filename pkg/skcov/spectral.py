"""Dense symmetric eigen-decomposition and matrix norms."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Union

import numpy as np
from numba import njit
from numpy.typing import ArrayLike, NDArray

from .const import (
    JACOBI_MAX_SWEEPS,
    JACOBI_TOLERANCE,
    POWER_MIN_ITERATIONS,
    POWER_TOLERANCE,
)
from .disorder import SymMatrix
from .errors import ConvergenceError, DimensionMismatchError, NotSymmetricError

_LOGGER = logging.getLogger(__name__)

MatrixLike = Union[SymMatrix, ArrayLike]


@dataclass(frozen=True, eq=False)
class Spectrum:
    """Eigenvalues in descending order, with optional orthonormal eigenvectors."""

    eigenvalues: NDArray[np.float64]
    eigenvectors: NDArray[np.float64] | None = None
    sweeps: int = 0

    @property
    def largest(self) -> float:
        """Return the largest eigenvalue."""
        return float(self.eigenvalues[0])

    @property
    def smallest(self) -> float:
        """Return the smallest eigenvalue."""
        return float(self.eigenvalues[-1])

    @property
    def spectral_radius(self) -> float:
        """Return the largest absolute eigenvalue."""
        return float(np.max(np.abs(self.eigenvalues)))


def _symmetric_array(m: MatrixLike) -> NDArray[np.float64]:
    if isinstance(m, SymMatrix):
        return m.entries
    array = np.asarray(m, dtype=np.float64)
    if array.ndim != 2 or array.shape[0] != array.shape[1]:
        raise DimensionMismatchError(f"Expected a square matrix, got {array.shape}")
    if not np.array_equal(array, array.T):
        raise NotSymmetricError("Eigen-decomposition needs a symmetric matrix")
    return array


@njit(cache=True, nogil=True)
def _off_diagonal_mass(a: NDArray[np.float64]) -> float:  # pragma: no cover
    n = a.shape[0]
    total = 0.0
    for p in range(n):
        for q in range(n):
            if p != q:
                total += a[p, q] * a[p, q]
    return math.sqrt(total)


@njit(cache=True, nogil=True)
def _jacobi_sweeps(
    a: NDArray[np.float64],
    v: NDArray[np.float64],
    want_vectors: bool,
    threshold: float,
    max_sweeps: int,
) -> tuple[int, float]:  # pragma: no cover
    n = a.shape[0]
    off = _off_diagonal_mass(a)
    sweep = 0
    while off > threshold and sweep < max_sweeps:
        sweep += 1
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                if abs(theta) > 1e150:
                    t = 0.5 / theta
                else:
                    t = 1.0 / (abs(theta) + math.sqrt(theta * theta + 1.0))
                    if theta < 0.0:
                        t = -t
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                for k in range(n):
                    akp = a[k, p]
                    akq = a[k, q]
                    a[k, p] = c * akp - s * akq
                    a[k, q] = s * akp + c * akq
                for k in range(n):
                    apk = a[p, k]
                    aqk = a[q, k]
                    a[p, k] = c * apk - s * aqk
                    a[q, k] = s * apk + c * aqk
                a[p, q] = 0.0
                a[q, p] = 0.0
                if want_vectors:
                    for k in range(n):
                        vkp = v[k, p]
                        vkq = v[k, q]
                        v[k, p] = c * vkp - s * vkq
                        v[k, q] = s * vkp + c * vkq
        off = _off_diagonal_mass(a)
    return sweep, off


def jacobi_eigen(
    m: MatrixLike,
    tol: float = JACOBI_TOLERANCE,
    *,
    want_vectors: bool = False,
    max_sweeps: int = JACOBI_MAX_SWEEPS,
) -> Spectrum:
    """Diagonalize a symmetric matrix with cyclic Jacobi rotations.

    Sweeps continue until the off-diagonal Frobenius mass is at most
    `tol * ||M||_F`; hitting `max_sweeps` first raises `ConvergenceError`.
    """
    work = np.array(_symmetric_array(m), dtype=np.float64, order="C")
    n = work.shape[0]
    vectors = np.eye(n)
    threshold = tol * frobenius_norm(work)
    sweeps, off = _jacobi_sweeps(work, vectors, want_vectors, threshold, max_sweeps)
    if off > threshold:
        raise ConvergenceError(
            f"Jacobi stopped after {sweeps} sweeps with off-diagonal mass {off:.3e}",
            off,
        )
    diagonal = np.diag(work).copy()
    order = np.argsort(diagonal, kind="stable")[::-1]
    _LOGGER.debug("Jacobi converged in %s sweeps (n=%s)", sweeps, n)
    return Spectrum(
        eigenvalues=diagonal[order],
        eigenvectors=vectors[:, order] if want_vectors else None,
        sweeps=sweeps,
    )


def extreme_eigenvalues(m: MatrixLike) -> tuple[float, float]:
    """Return (smallest, largest) eigenvalue."""
    spectrum = jacobi_eigen(m)
    return spectrum.smallest, spectrum.largest


def _power_iteration_cap(n: int) -> int:
    return max(POWER_MIN_ITERATIONS, math.ceil(10 * n * math.log(max(n, 2))))


def operator_norm(m: MatrixLike) -> float:
    """Return the largest absolute eigenvalue of a symmetric matrix.

    Power iteration runs on M^2 from a fixed seed vector; the Rayleigh quotient
    is accepted once both its relative change and the relative residual drop
    below the tolerance. Otherwise the Jacobi spectrum is used.
    """
    array = _symmetric_array(m)
    n = array.shape[0]
    if not np.any(array):
        return 0.0
    vector = np.random.default_rng(0).standard_normal(n)
    vector /= np.linalg.norm(vector)
    estimate = 0.0
    for _ in range(_power_iteration_cap(n)):
        image = array @ (array @ vector)
        quotient = float(vector @ image)
        residual = float(np.linalg.norm(image - quotient * vector))
        norm = float(np.linalg.norm(image))
        if norm == 0.0:
            break
        converged = (
            abs(quotient - estimate) <= POWER_TOLERANCE * quotient
            and residual <= POWER_TOLERANCE * quotient
        )
        estimate = quotient
        if converged:
            return math.sqrt(estimate)
        vector = image / norm
    _LOGGER.warning("Power iteration did not converge for n=%s, using Jacobi", n)
    return jacobi_eigen(array).spectral_radius


def frobenius_norm_sq(m: MatrixLike) -> float:
    """Return the entrywise sum of squares with compensated summation."""
    array = m.entries if isinstance(m, SymMatrix) else np.asarray(m, dtype=np.float64)
    return math.fsum(np.square(array).ravel().tolist())


def frobenius_norm(m: MatrixLike) -> float:
    """Return the entrywise l2 norm with compensated summation."""
    return math.sqrt(frobenius_norm_sq(m))
