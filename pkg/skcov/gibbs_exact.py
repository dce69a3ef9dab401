"""Exact Gibbs averages of the SK measure by enumeration of {-1, +1}^n."""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass
from functools import lru_cache
from itertools import combinations
from typing import Any, Optional

import numpy as np
from numba import njit
from numpy.typing import ArrayLike, NDArray

from .const import (
    BRUTEFORCE_CAP,
    EXACT_CAP,
    EXACT_FOUR_POINT_CAP,
    GRAY_BLOCK_SIZE,
    OVERLAP_PMF_CAP,
)
from .disorder import Couplings, SymMatrix, hamiltonian_couplings
from .errors import (
    ConfigError,
    EngineCapError,
    InvalidSpinsError,
    MissingMomentError,
    NonFiniteWeightError,
)
from .helpers import nvl

_LOGGER = logging.getLogger(__name__)


@dataclass(frozen=True)
class OverlapMoments:
    """Replica-overlap moments of one disorder instance.

    Moments an engine could not produce are `None`.
    """

    m2: float
    m3: Optional[float] = None
    m4: Optional[float] = None
    m22: Optional[float] = None
    m_cycle: Optional[float] = None
    m_multi: Optional[float] = None

    def to_dict(self) -> dict[str, Optional[float]]:
        """Return a JSON-ready representation."""
        return asdict(self)


def _check_beta(beta: float) -> None:
    if not math.isfinite(beta) or beta < 0:
        raise ConfigError(f"Inverse temperature must be finite and >= 0, got {beta}")


def _check_cap(n: int, cap: int, what: str) -> None:
    if n > cap:
        raise EngineCapError(f"{what} is capped at n={cap}, got n={n}")


def log_weight(c: Couplings, beta: float, sigma: ArrayLike) -> float:
    """Return (beta / sqrt(n)) * sum_{i<j} g_ij sigma_i sigma_j."""
    spins = np.asarray(sigma)
    if spins.shape != (c.n,):
        raise InvalidSpinsError(f"Expected {c.n} spins, got shape {spins.shape}")
    if not np.all((spins == 1) | (spins == -1)):
        raise InvalidSpinsError("Spins must be -1 or +1")
    spins = spins.astype(np.float64)
    return float(beta * (spins @ np.triu(c.g, 1) @ spins) / math.sqrt(c.n))


# Gray-code enumeration


@njit(cache=True, nogil=True)
def _gray_block(
    a_off: NDArray[np.float64],
    beta: float,
    start: int,
    spins_out: NDArray[np.float64],
    log_weights_out: NDArray[np.float64],
) -> None:  # pragma: no cover
    """Walk Gray codes start..start+len-1, seeding the local fields from the first."""
    n = a_off.shape[0]
    record = spins_out.shape[0] > 0
    code = start ^ (start >> 1)
    sigma = np.empty(n, dtype=np.float64)
    for i in range(n):
        sigma[i] = -1.0 if (code >> i) & 1 else 1.0
    field = np.zeros(n, dtype=np.float64)
    lw = 0.0
    for i in range(n):
        for j in range(n):
            field[i] += a_off[i, j] * sigma[j]
        lw += 0.5 * beta * sigma[i] * field[i]
    for t in range(log_weights_out.shape[0]):
        if t > 0:
            k = start + t
            bit = 0
            while not (k >> bit) & 1:
                bit += 1
            lw -= 2.0 * beta * sigma[bit] * field[bit]
            sigma[bit] = -sigma[bit]
            shift = 2.0 * sigma[bit]
            for j in range(n):
                field[j] += shift * a_off[j, bit]
        log_weights_out[t] = lw
        if record:
            for j in range(n):
                spins_out[t, j] = sigma[j]


def gray_codes(n: int) -> NDArray[np.int64]:
    """Return the Gray codes in walk order; bit i set means sigma_i = -1."""
    index = np.arange(1 << n, dtype=np.int64)
    return index ^ (index >> 1)


def spins_from_codes(codes: NDArray[np.int64], n: int) -> NDArray[np.float64]:
    """Expand state codes into a (len(codes), n) matrix of +-1 spins."""
    bits = (codes[:, None] >> np.arange(n, dtype=np.int64)) & 1
    return 1.0 - 2.0 * bits.astype(np.float64)


def gray_log_weights(
    c: Couplings, beta: float
) -> tuple[NDArray[np.int64], NDArray[np.float64]]:
    """Return (codes, log-weights) of every state in Gray-code walk order."""
    _check_beta(beta)
    _check_cap(c.n, EXACT_CAP, "Exact enumeration")
    log_weights = np.empty(1 << c.n, dtype=np.float64)
    _gray_block(hamiltonian_couplings(c), beta, 0, np.empty((0, c.n)), log_weights)
    return gray_codes(c.n), log_weights


class _CompensatedSum:
    """Kahan accumulator over scalars or arrays."""

    __slots__ = ("total", "_compensation")

    def __init__(self, shape: tuple[int, ...] = ()) -> None:
        self.total = np.zeros(shape, dtype=np.float64)
        self._compensation = np.zeros(shape, dtype=np.float64)

    def add(self, value: NDArray[np.float64] | float) -> None:
        adjusted = value - self._compensation
        total = self.total + adjusted
        self._compensation = (total - self.total) - adjusted
        self.total = total

    def scale(self, factor: float) -> None:
        self.total = self.total * factor
        self._compensation = self._compensation * factor


# Four-point tensor storage


@lru_cache(maxsize=None)
def _pair_layout(n: int) -> tuple[NDArray[np.int64], NDArray[np.int64], NDArray[np.int64]]:
    rows, cols = np.triu_indices(n, 1)
    rank = np.full((n, n), -1, dtype=np.int64)
    rank[rows, cols] = np.arange(rows.shape[0])
    rank[cols, rows] = rank[rows, cols]
    for array in (rows, cols, rank):
        array.setflags(write=False)
    return rows, cols, rank


@lru_cache(maxsize=None)
def _quadruples(n: int) -> NDArray[np.int64]:
    quads = np.array(list(combinations(range(n), 4)), dtype=np.int64).reshape(-1, 4)
    quads.setflags(write=False)
    return quads


@lru_cache(maxsize=None)
def _dense_lookup(n: int) -> NDArray[np.int64]:
    """Map each of the n^4 index tuples into [1, C.ravel(), packed].

    Repeated indices cancel in pairs (sigma_i^2 = 1): no survivor reads 1, two
    survivors read C, four distinct indices read the packed entry.
    """
    quads = _quadruples(n)
    rank = np.full((n,) * 4, -1, dtype=np.int64)
    if quads.shape[0]:
        rank[tuple(quads.T)] = np.arange(quads.shape[0])
    a, b, c, d = np.sort(np.indices((n,) * 4).reshape(4, -1), axis=0)
    ab, bc, cd = a == b, b == c, c == d
    lookup = np.where(
        ab & cd,
        0,
        np.where(
            ab,
            1 + c * n + d,
            np.where(
                cd,
                1 + a * n + b,
                np.where(bc, 1 + a * n + d, 1 + n * n + rank[a, b, c, d]),
            ),
        ),
    )
    lookup.setflags(write=False)
    return lookup


class FourPointTensor:
    """Fully symmetric four-point function stored over sorted distinct quadruples."""

    __slots__ = ("_c", "_packed")

    def __init__(self, c: SymMatrix, packed: NDArray[np.float64]) -> None:
        """Initialize from the two-point matrix and the packed distinct entries."""
        if packed.shape != (_quadruples(c.n).shape[0],):
            raise ConfigError(f"Packed tensor of shape {packed.shape} does not fit n={c.n}")
        packed.setflags(write=False)
        self._c = c
        self._packed = packed

    @property
    def n(self) -> int:
        """Return the number of spins."""
        return self._c.n

    @property
    def packed(self) -> NDArray[np.float64]:
        """Return entries for i<j<k<l in lexicographic order."""
        return self._packed

    def _values(self) -> NDArray[np.float64]:
        return np.concatenate(([1.0], self._c.entries.ravel(), self._packed))

    def __getitem__(self, index: tuple[int, int, int, int]) -> float:
        """Return T_ijkl for any index tuple."""
        n = self.n
        i, j, k, l = index  # noqa: E741
        flat = ((i * n + j) * n + k) * n + l
        return float(self._values()[_dense_lookup(n)[flat]])

    def dense(self) -> NDArray[np.float64]:
        """Return the full n x n x n x n tensor."""
        n = self.n
        return self._values()[_dense_lookup(n)].reshape((n,) * 4)


@dataclass(frozen=True, eq=False)
class ExactSummary:
    """Exact Gibbs summary of one disorder instance."""

    n: int
    beta: float
    log_z: float
    c: SymMatrix
    magnetization: NDArray[np.float64]
    t: Optional[FourPointTensor] = None

    def to_dict(self) -> dict[str, Any]:
        """Return a JSON-ready representation."""
        return {
            "n": self.n,
            "beta": self.beta,
            "log_z": self.log_z,
            "c": self.c.entries.ravel().tolist(),
            "max_abs_magnetization": float(np.max(np.abs(self.magnetization))),
            "moments": overlap_moments_exact(self).to_dict(),
        }


def exact_summary(
    c: Couplings,
    beta: float,
    want_four_point: bool = False,
    *,
    cap: int | None = None,
    block_size: int = GRAY_BLOCK_SIZE,
) -> ExactSummary:
    """Enumerate all 2^n states and return log Z, C and optionally T.

    States are visited in Gray-code order in contiguous blocks; every block
    seeds its own local fields from its first state. Weights are taken relative
    to the running maximum log-weight and the accumulators are rescaled when it
    moves.
    """
    _check_beta(beta)
    n = c.n
    _check_cap(
        n,
        nvl(cap, EXACT_FOUR_POINT_CAP if want_four_point else EXACT_CAP),
        "Exact enumeration with four-point function" if want_four_point else "Exact enumeration",
    )
    a_off = hamiltonian_couplings(c)
    rows, cols, _ = _pair_layout(n)
    pairs = rows.shape[0]

    z_sum = _CompensatedSum()
    mag_sum = _CompensatedSum((n,))
    c_sum = _CompensatedSum((n, n))
    q_sum = _CompensatedSum((pairs, pairs)) if want_four_point else None
    reference = -math.inf

    total = 1 << n
    for start in range(0, total, block_size):
        count = min(block_size, total - start)
        spins = np.empty((count, n), dtype=np.float64)
        log_weights = np.empty(count, dtype=np.float64)
        _gray_block(a_off, beta, start, spins, log_weights)
        if not np.all(np.isfinite(log_weights)):
            raise NonFiniteWeightError(
                f"Non-finite log-weight in states {start}..{start + count - 1}"
            )
        block_max = float(log_weights.max())
        if block_max > reference:
            if math.isfinite(reference):
                factor = math.exp(reference - block_max)
                for acc in (z_sum, mag_sum, c_sum, q_sum):
                    if acc is not None:
                        acc.scale(factor)
            reference = block_max
        weights = np.exp(log_weights - reference)
        weighted = spins * weights[:, None]
        z_sum.add(float(weights.sum()))
        mag_sum.add(weighted.sum(axis=0))
        c_sum.add(weighted.T @ spins)
        if q_sum is not None:
            products = spins[:, rows] * spins[:, cols]
            q_sum.add(products.T @ (products * weights[:, None]))

    z = float(z_sum.total)
    two_point = c_sum.total / z
    two_point = 0.5 * (two_point + two_point.T)
    np.fill_diagonal(two_point, 1.0)
    c_matrix = SymMatrix(two_point)

    four_point = None
    if q_sum is not None:
        _, _, rank = _pair_layout(n)
        quads = _quadruples(n)
        q = q_sum.total / z
        packed = q[rank[quads[:, 0], quads[:, 1]], rank[quads[:, 2], quads[:, 3]]].copy()
        four_point = FourPointTensor(c_matrix, packed)

    _LOGGER.debug("Enumerated %s states for n=%s beta=%s", total, n, beta)
    return ExactSummary(
        n=n,
        beta=beta,
        log_z=reference + math.log(z),
        c=c_matrix,
        magnetization=mag_sum.total / z,
        t=four_point,
    )


def overlap_moments_exact(
    s: ExactSummary, require_four_point: bool = False
) -> OverlapMoments:
    """Evaluate the replica-overlap moments from C (and T when present)."""
    n = s.n
    c = s.c.entries
    c2 = c @ c
    m4 = m22 = None
    if s.t is not None:
        t = s.t.dense().reshape(n * n, n * n)
        flat = c.ravel()
        m4 = float(np.sum(t * t)) / n**4
        m22 = float(flat @ t @ flat) / n**4
    elif require_four_point:
        raise MissingMomentError("m4 and m22 need the four-point function")
    column_mass = np.sum(c * c, axis=0)
    return OverlapMoments(
        m2=float(np.sum(c * c)) / n**2,
        m3=float(np.sum(c2 * c)) / n**3,
        m4=m4,
        m22=m22,
        m_cycle=float(np.sum(c2 * c2)) / n**4,
        m_multi=float(np.sum(column_mass * column_mass)) / n**3,
    )


# Overlap distribution


@njit(cache=True, nogil=True)
def _distance_masses(
    codes: NDArray[np.int64], weights: NDArray[np.float64], n: int
) -> NDArray[np.float64]:  # pragma: no cover
    popcount = np.zeros(1 << n, dtype=np.int64)
    for x in range(1, 1 << n):
        popcount[x] = popcount[x >> 1] + (x & 1)
    masses = np.zeros(n + 1, dtype=np.float64)
    states = codes.shape[0]
    for a in range(states):
        wa = weights[a]
        xa = codes[a]
        row = np.zeros(n + 1, dtype=np.float64)
        for b in range(states):
            row[popcount[xa ^ codes[b]]] += weights[b]
        for d in range(n + 1):
            masses[d] += wa * row[d]
    return masses


@dataclass(frozen=True, eq=False)
class OverlapPmf:
    """Probability mass function of the overlap of two replicas."""

    n: int
    values: NDArray[np.float64]
    masses: NDArray[np.float64]

    def moment(self, power: int) -> float:
        """Return the Gibbs moment of R_12 of the given power."""
        return float(np.sum(self.masses * self.values**power))

    def mean_abs(self) -> float:
        """Return the Gibbs average of |R_12|."""
        return float(np.sum(self.masses * np.abs(self.values)))


def overlap_distribution_small(c: Couplings, beta: float) -> OverlapPmf:
    """Return the exact pmf of R_12 over {-1, -1 + 2/n, ..., 1}."""
    _check_cap(c.n, OVERLAP_PMF_CAP, "Overlap distribution")
    codes, log_weights = gray_log_weights(c, beta)
    weights = np.exp(log_weights - log_weights.max())
    weights /= weights.sum()
    n = c.n
    by_distance = _distance_masses(codes, weights, n)
    # distance d <-> overlap (n - 2d) / n, listed in ascending overlap
    masses = by_distance[::-1].copy()
    values = (2.0 * np.arange(n + 1) - n) / n
    return OverlapPmf(n=n, values=values, masses=masses)


def overlap_moments_bruteforce(c: Couplings, beta: float) -> OverlapMoments:
    """Evaluate all overlap moments by summing over replica tuples of states."""
    _check_beta(beta)
    _check_cap(c.n, BRUTEFORCE_CAP, "Brute-force replica enumeration")
    n = c.n
    spins = spins_from_codes(np.arange(1 << n, dtype=np.int64), n)
    log_weights = beta * np.sum((spins @ np.triu(c.g, 1)) * spins, axis=1) / math.sqrt(n)
    p = np.exp(log_weights - log_weights.max())
    p /= p.sum()
    r = spins @ spins.T / n
    r4 = np.einsum("ai,bi,ci,di->abcd", spins, spins, spins, spins) / n

    def expect(subscripts: str, *operands: NDArray[np.float64]) -> float:
        return float(np.einsum(subscripts, *operands, optimize=True))

    return OverlapMoments(
        m2=expect("a,b,ab->", p, p, r**2),
        m3=expect("a,b,c,ab,ac,bc->", p, p, p, r, r, r),
        m4=expect("a,b,ab->", p, p, r**4),
        m22=expect("a,b,c,ab,bc->", p, p, p, r**2, r**2),
        m_cycle=expect("a,b,c,d,ab,bc,cd,ad->", p, p, p, p, r, r, r, r),
        m_multi=expect("a,b,c,d,ab,cd,abcd->", p, p, p, p, r, r, r4),
    )
