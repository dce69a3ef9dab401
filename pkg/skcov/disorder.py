"""Quenched SK disorder and the matrices derived from it."""

from __future__ import annotations

import csv
import logging
import math
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Union

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .errors import DimensionMismatchError, DisorderError, NotSymmetricError

BINARY_MAGIC = b"SKCP"
BINARY_VERSION = 1
BINARY_HEADER = struct.Struct("<4sIQQ")
CSV_HEADER = ("i", "j", "g")
SEED_LIMIT = 1 << 64

_LOGGER = logging.getLogger(__name__)

PathLike = Union[str, Path]


def _frozen(array: NDArray[np.float64]) -> NDArray[np.float64]:
    array.setflags(write=False)
    return array


class SymMatrix:
    """Dense symmetric matrix with both triangles stored."""

    __slots__ = ("_entries",)

    def __init__(self, entries: ArrayLike) -> None:
        """Initialize a symmetric matrix, rejecting any asymmetry."""
        matrix = np.array(entries, dtype=np.float64)
        if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
            raise DimensionMismatchError(f"Expected a square matrix, got {matrix.shape}")
        if not np.array_equal(matrix, matrix.T):
            raise NotSymmetricError("Matrix is not exactly symmetric")
        self._entries = _frozen(matrix)

    @classmethod
    def symmetrized(cls, entries: ArrayLike) -> SymMatrix:
        """Return the symmetric part of a nearly symmetric matrix."""
        matrix = np.asarray(entries, dtype=np.float64)
        return cls(0.5 * (matrix + matrix.T))

    @property
    def entries(self) -> NDArray[np.float64]:
        """Return the read-only entries."""
        return self._entries

    @property
    def n(self) -> int:
        """Return the dimension."""
        return int(self._entries.shape[0])

    def __array__(self, dtype: np.dtype | None = None) -> NDArray[np.float64]:
        """Return the entries for numpy consumers."""
        return self._entries if dtype is None else self._entries.astype(dtype)

    def __repr__(self) -> str:  # pragma: no cover
        """Return repr(self)."""
        return f"SymMatrix<n={self.n}>"


@dataclass(frozen=True, eq=False)
class Couplings:
    """Couplings g_ij of one SK disorder instance."""

    n: int
    g: NDArray[np.float64]
    seed: int | None = None

    def __post_init__(self) -> None:
        """Validate shape and symmetry."""
        if self.n < 1:
            raise DisorderError(f"System size must be positive, got {self.n}")
        if self.g.shape != (self.n, self.n):
            raise DimensionMismatchError(
                f"Couplings of shape {self.g.shape} do not match n={self.n}"
            )
        if not np.array_equal(self.g, self.g.T):
            raise NotSymmetricError("Couplings are not exactly symmetric")
        if self.g.flags.writeable:
            object.__setattr__(self, "g", _frozen(self.g.copy()))

    @property
    def upper(self) -> NDArray[np.float64]:
        """Return the row-major upper triangle, diagonal included."""
        return self.g[np.triu_indices(self.n)]

    def with_zero_diagonal(self) -> Couplings:
        """Return the same instance with g_ii = 0."""
        g = self.g.copy()
        np.fill_diagonal(g, 0.0)
        return Couplings(n=self.n, g=g, seed=self.seed)

    def perturbed(self, k: int, l: int, delta: float) -> Couplings:  # noqa: E741
        """Return the instance with the unordered coupling {k, l} shifted by delta."""
        g = self.g.copy()
        g[k, l] += delta
        if k != l:
            g[l, k] = g[k, l]
        return Couplings(n=self.n, g=g, seed=self.seed)

    def __repr__(self) -> str:  # pragma: no cover
        """Return repr(self)."""
        return f"Couplings<n={self.n}, seed={self.seed}>"


def box_muller(uniforms: NDArray[np.float64]) -> NDArray[np.float64]:
    """Turn an even-length stream of uniforms in [0, 1) into standard normals."""
    radius = np.sqrt(-2.0 * np.log1p(-uniforms[0::2]))
    angle = 2.0 * math.pi * uniforms[1::2]
    normals = np.empty(uniforms.shape[0], dtype=np.float64)
    normals[0::2] = radius * np.cos(angle)
    normals[1::2] = radius * np.sin(angle)
    return normals


def sample_couplings(n: int, seed: int) -> Couplings:
    """Sample an SK instance deterministically from (n, seed)."""
    if n < 1:
        raise DisorderError(f"System size must be positive, got {n}")
    if not 0 <= seed < SEED_LIMIT:
        raise DisorderError(f"Seed must be an unsigned 64-bit integer, got {seed}")
    count = n * (n + 1) // 2
    rng = np.random.Generator(np.random.PCG64(seed))
    normals = box_muller(rng.random(count + count % 2))[:count]
    g = np.zeros((n, n), dtype=np.float64)
    rows, cols = np.triu_indices(n)
    g[rows, cols] = normals
    g[cols, rows] = normals
    _LOGGER.debug("Sampled couplings n=%s seed=%s", n, seed)
    return Couplings(n=n, g=g, seed=seed)


def interaction_matrix(c: Couplings) -> SymMatrix:
    """Return A = g / sqrt(n)."""
    return SymMatrix(c.g / math.sqrt(c.n))


def tap_shift_operator(beta: float, a: SymMatrix) -> SymMatrix:
    """Return (1 + beta^2) I - beta A."""
    return SymMatrix((1.0 + beta * beta) * np.eye(a.n) - beta * a.entries)


def hamiltonian_couplings(c: Couplings) -> NDArray[np.float64]:
    """Return g / sqrt(n) with a zero diagonal, the matrix the Gibbs measure sees."""
    a_off = c.g / math.sqrt(c.n)
    np.fill_diagonal(a_off, 0.0)
    return a_off


def dump_couplings(c: Couplings, path: PathLike) -> Path:
    """Write couplings as a binary (.bin) or CSV (.csv) upper-triangle dump."""
    target = Path(path)
    upper = c.upper
    if target.suffix == ".csv":
        rows, cols = np.triu_indices(c.n)
        with target.open("w", newline="", encoding="utf-8") as handle:
            writer = csv.writer(handle)
            writer.writerow(CSV_HEADER)
            for i, j, value in zip(rows.tolist(), cols.tolist(), upper.tolist()):
                writer.writerow((i, j, repr(value)))
    else:
        header = BINARY_HEADER.pack(
            BINARY_MAGIC, BINARY_VERSION, c.n, 0 if c.seed is None else c.seed
        )
        target.write_bytes(header + upper.astype("<f8").tobytes())
    _LOGGER.debug("Wrote couplings n=%s to %s", c.n, target)
    return target


def load_couplings(path: PathLike) -> Couplings:
    """Read couplings written by `dump_couplings`."""
    source = Path(path)
    if source.suffix == ".csv":
        with source.open(newline="", encoding="utf-8") as handle:
            reader = csv.reader(handle)
            if tuple(next(reader, ())) != CSV_HEADER:
                raise DisorderError(f"{source} is not a couplings CSV dump")
            try:
                entries = [(int(i), int(j), float(value)) for i, j, value in reader]
            except ValueError as ex:
                raise DisorderError(f"{source} holds a malformed row") from ex
        if not entries:
            raise DisorderError(f"{source} holds no couplings")
        n = max(i for i, _, _ in entries) + 1
        g = np.zeros((n, n), dtype=np.float64)
        for i, j, value in entries:
            g[i, j] = g[j, i] = value
        return Couplings(n=n, g=g)

    raw = source.read_bytes()
    if len(raw) < BINARY_HEADER.size:
        raise DisorderError(f"{source} is too short for a couplings dump")
    magic, version, n, seed = BINARY_HEADER.unpack_from(raw)
    if magic != BINARY_MAGIC or version != BINARY_VERSION:
        raise DisorderError(f"{source} is not a version {BINARY_VERSION} dump")
    body = raw[BINARY_HEADER.size :]
    if len(body) != 8 * (n * (n + 1) // 2):
        raise DisorderError(f"{source} does not hold {n} x {n} couplings")
    upper = np.frombuffer(body, dtype="<f8")
    g = np.zeros((n, n), dtype=np.float64)
    rows, cols = np.triu_indices(n)
    g[rows, cols] = upper
    g[cols, rows] = upper
    return Couplings(n=n, g=g, seed=seed)
