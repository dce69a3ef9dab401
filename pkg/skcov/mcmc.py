"""Markov-chain estimates of the SK covariance and overlap moments."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from itertools import combinations
from pathlib import Path
from typing import Any, Optional, Sequence, Union

import numpy as np
from numba import njit
from numpy.typing import ArrayLike, NDArray

from .const import (
    BURN_IN_DRIFT_Z,
    CHUNK_PROPOSALS,
    DEFAULT_BATCH_COUNT,
    DEFAULT_BURN_IN_FRACTION,
    DEFAULT_REPLICAS,
    DEFAULT_SEED,
    DEFAULT_SWEEPS,
    DEFAULT_THIN,
    SWAP_RATE_BOUNDS,
)
from .disorder import Couplings, SymMatrix, hamiltonian_couplings
from .errors import ConfigError, NonFiniteWeightError, SeriesTooShortError
from .gibbs_exact import OverlapMoments
from .stats import derive_seed

_LOGGER = logging.getLogger(__name__)

MIN_BATCHES = 10


@dataclass(frozen=True)
class ChainConfig:
    """Sampler settings shared by plain and tempered runs."""

    sweeps: int = DEFAULT_SWEEPS
    burn_in_sweeps: Optional[int] = None
    thin: int = DEFAULT_THIN
    replicas: int = DEFAULT_REPLICAS
    ladder: Optional[tuple[float, ...]] = None
    seed: int = DEFAULT_SEED
    batch_count: int = DEFAULT_BATCH_COUNT
    keep_overlap_series: bool = False

    def __post_init__(self) -> None:
        """Fill defaults and validate."""
        if self.burn_in_sweeps is None:
            object.__setattr__(
                self, "burn_in_sweeps", int(self.sweeps * DEFAULT_BURN_IN_FRACTION)
            )
        if self.ladder is not None:
            object.__setattr__(self, "ladder", tuple(float(b) for b in self.ladder))
        if self.sweeps < 1:
            raise ConfigError(f"sweeps must be positive, got {self.sweeps}")
        if not 0 <= self.burn_in < self.sweeps:
            raise ConfigError(
                f"burn-in must lie in [0, sweeps), got {self.burn_in} of {self.sweeps}"
            )
        if self.thin < 1:
            raise ConfigError(f"thin must be positive, got {self.thin}")
        if self.replicas < 2:
            raise ConfigError(f"At least two replicas are needed, got {self.replicas}")
        if self.batch_count < MIN_BATCHES:
            raise ConfigError(
                f"batch_count must be at least {MIN_BATCHES}, got {self.batch_count}"
            )
        if self.records < MIN_BATCHES * self.batch_count:
            raise ConfigError(
                f"{self.records} recorded sweeps cannot fill {self.batch_count} batches"
            )
        if self.ladder is not None:
            if not self.ladder:
                raise ConfigError("Ladder must not be empty")
            if any(b < 0 or not math.isfinite(b) for b in self.ladder):
                raise ConfigError(f"Ladder entries must be finite and >= 0: {self.ladder}")
            if any(lo >= hi for lo, hi in zip(self.ladder, self.ladder[1:])):
                raise ConfigError(f"Ladder must be strictly ascending: {self.ladder}")

    @property
    def burn_in(self) -> int:
        """Return the burn-in sweep count."""
        return int(self.burn_in_sweeps or 0)

    @property
    def records(self) -> int:
        """Return the number of recorded sweeps per replica."""
        return (self.sweeps - self.burn_in) // self.thin

    def to_dict(self) -> dict[str, Any]:
        """Return a JSON-ready representation."""
        return {
            "sweeps": self.sweeps,
            "burn_in_sweeps": self.burn_in,
            "thin": self.thin,
            "replicas": self.replicas,
            "ladder": None if self.ladder is None else list(self.ladder),
            "seed": self.seed,
            "batch_count": self.batch_count,
            "keep_overlap_series": self.keep_overlap_series,
        }


@dataclass(frozen=True, eq=False)
class McmcEstimate:
    """Sampler estimates at the target inverse temperature."""

    beta: float
    c_hat: SymMatrix
    c_stderr: NDArray[np.float64]
    moments_hat: OverlapMoments
    stderr: dict[str, float]
    mean_abs_overlap: float
    acceptance_rate: float
    samples_used: int
    swap_acceptance: tuple[float, ...] = ()
    pair_labels: tuple[tuple[int, int], ...] = ()
    overlap_series: Optional[NDArray[np.float64]] = field(default=None, repr=False)

    def to_dict(self) -> dict[str, Any]:
        """Return a JSON-ready representation (without the raw series)."""
        return {
            "beta": self.beta,
            "c_hat": self.c_hat.entries.ravel().tolist(),
            "c_stderr": self.c_stderr.ravel().tolist(),
            "moments_hat": self.moments_hat.to_dict(),
            "stderr": dict(self.stderr),
            "mean_abs_overlap": self.mean_abs_overlap,
            "acceptance_rate": self.acceptance_rate,
            "samples_used": self.samples_used,
            "swap_acceptance": list(self.swap_acceptance),
        }


def batch_means_stderr(series: ArrayLike, batch_count: int) -> float:
    """Return the batch-means standard error of the mean of a correlated series.

    The series is cut into `batch_count` equal batches; the tail that does not
    fill a batch is dropped.
    """
    values = np.asarray(series, dtype=np.float64).ravel()
    if batch_count < MIN_BATCHES:
        raise ConfigError(f"batch_count must be at least {MIN_BATCHES}, got {batch_count}")
    if values.shape[0] < MIN_BATCHES * batch_count:
        raise SeriesTooShortError(
            f"Series of length {values.shape[0]} is too short for {batch_count} batches"
        )
    return _batch_stderr(_batch_means(values, batch_count))


def _batch_means(values: NDArray[np.float64], batch_count: int) -> NDArray[np.float64]:
    size = values.shape[0] // batch_count
    return values[: size * batch_count].reshape(batch_count, size).mean(axis=1)


def _batch_stderr(means: NDArray[np.float64]) -> float:
    return math.sqrt(float(np.var(means, axis=0, ddof=1)) / means.shape[0])


def burn_in_drift(series: ArrayLike) -> Optional[float]:
    """Return the z-score between the first and second half of a series.

    A large value means the chain was still relaxing after burn-in. Returns
    None when either half is too short for batch means.
    """
    values = np.asarray(series, dtype=np.float64).ravel()
    half = values.shape[0] // 2
    if half < MIN_BATCHES * MIN_BATCHES:
        return None
    first, second = values[:half], values[half : 2 * half]
    spread = math.hypot(
        _batch_stderr(_batch_means(first, MIN_BATCHES)),
        _batch_stderr(_batch_means(second, MIN_BATCHES)),
    )
    difference = float(first.mean() - second.mean())
    if spread == 0.0:
        return 0.0 if difference == 0.0 else math.copysign(math.inf, difference)
    return difference / spread


def geometric_ladder(beta_min: float, beta_max: float, rungs: int) -> tuple[float, ...]:
    """Return a geometric inverse-temperature ladder ending exactly at beta_max."""
    if rungs < 1 or not 0 < beta_min <= beta_max:
        raise ConfigError(f"Invalid ladder request {beta_min}..{beta_max} x {rungs}")
    ladder = np.geomspace(beta_min, beta_max, rungs)
    ladder[-1] = beta_max
    return tuple(float(b) for b in ladder)


@njit(cache=True, nogil=True)
def _ladder_sweeps(
    a_off: NDArray[np.float64],
    betas: NDArray[np.float64],
    spins: NDArray[np.float64],
    fields: NDArray[np.float64],
    energies: NDArray[np.float64],
    slots: NDArray[np.int64],
    sites: NDArray[np.int64],
    uniforms: NDArray[np.float64],
    swap_uniforms: NDArray[np.float64],
    record_mask: NDArray[np.bool_],
    target: int,
    records_out: NDArray[np.float64],
    accepted: NDArray[np.int64],
    swaps_accepted: NDArray[np.int64],
) -> int:  # pragma: no cover
    """Run Metropolis sweeps on every rung, then adjacent swaps, recording the target.

    Returns the number of recorded rows, or -1 on a non-finite proposal.
    """
    n = a_off.shape[0]
    rungs = betas.shape[0]
    written = 0
    for s in range(sites.shape[0]):
        for r in range(rungs):
            chain = slots[r]
            beta = betas[r]
            for step in range(n):
                k = sites[s, r, step]
                delta = -2.0 * beta * spins[chain, k] * fields[chain, k]
                if not math.isfinite(delta):
                    return -1
                if delta >= 0.0 or uniforms[s, r, step] < math.exp(delta):
                    energies[chain] -= 2.0 * spins[chain, k] * fields[chain, k]
                    spins[chain, k] = -spins[chain, k]
                    shift = 2.0 * spins[chain, k]
                    for j in range(n):
                        fields[chain, j] += shift * a_off[j, k]
                    accepted[r] += 1
        for r in range(rungs - 1):
            low = slots[r]
            high = slots[r + 1]
            log_ratio = (betas[r] - betas[r + 1]) * (energies[high] - energies[low])
            if log_ratio >= 0.0 or swap_uniforms[s, r] < math.exp(log_ratio):
                slots[r] = high
                slots[r + 1] = low
                swaps_accepted[r] += 1
        if record_mask[s]:
            chain = slots[target]
            for j in range(n):
                records_out[written, j] = spins[chain, j]
            written += 1
    return written


class MetropolisChain:
    """One replica: a ladder of single-spin-flip chains with its own random stream.

    A one-rung ladder is plain Metropolis sampling.
    """

    def __init__(self, c: Couplings, ladder: Sequence[float], seed: int) -> None:
        """Initialize the chain states from the seeded stream."""
        self._a_off = hamiltonian_couplings(c)
        self._betas = np.asarray(ladder, dtype=np.float64)
        self._rng = np.random.Generator(np.random.PCG64(seed))
        rungs, n = self._betas.shape[0], c.n
        self.spins = 1.0 - 2.0 * self._rng.integers(0, 2, size=(rungs, n)).astype(np.float64)
        self.fields = self.spins @ self._a_off
        self.energies = 0.5 * np.sum(self.spins * self.fields, axis=1)
        self.slots = np.arange(rungs, dtype=np.int64)
        self.accepted = np.zeros(rungs, dtype=np.int64)
        self.swaps_accepted = np.zeros(max(rungs - 1, 0), dtype=np.int64)

    @property
    def n(self) -> int:
        """Return the number of spins."""
        return int(self._a_off.shape[0])

    @property
    def rungs(self) -> int:
        """Return the number of ladder rungs."""
        return int(self._betas.shape[0])

    def advance(
        self, record_mask: NDArray[np.bool_], target: int = 0
    ) -> NDArray[np.float64]:
        """Run one sweep per mask entry and return the target-rung snapshots taken."""
        sweeps, rungs, n = record_mask.shape[0], self.rungs, self.n
        sites = self._rng.integers(0, n, size=(sweeps, rungs, n), dtype=np.int64)
        uniforms = self._rng.random((sweeps, rungs, n))
        swap_uniforms = self._rng.random((sweeps, rungs - 1))
        records = np.empty((int(record_mask.sum()), n), dtype=np.float64)
        written = _ladder_sweeps(
            self._a_off,
            self._betas,
            self.spins,
            self.fields,
            self.energies,
            self.slots,
            sites,
            uniforms,
            swap_uniforms,
            record_mask,
            target,
            records,
            self.accepted,
            self.swaps_accepted,
        )
        if written < 0:
            raise NonFiniteWeightError("Non-finite Metropolis log-acceptance")
        return records


def _pair_index(replicas: int) -> tuple[tuple[int, int], ...]:
    return tuple(combinations(range(replicas), 2))


def _overlap_series(
    snapshots: NDArray[np.float64],
) -> dict[str, NDArray[np.float64]]:
    """Per-record replica averages of the overlap products behind each moment."""
    records, replicas, n = snapshots.shape
    q = np.einsum("tai,tbi->tab", snapshots, snapshots) / n
    pairs = _pair_index(replicas)
    pair_q = np.stack([q[:, a, b] for a, b in pairs], axis=1)
    series = {
        "pairs": pair_q,
        "m2": np.mean(pair_q**2, axis=1),
        "m4": np.mean(pair_q**4, axis=1),
        "abs": np.mean(np.abs(pair_q), axis=1),
    }
    if replicas >= 3:
        triples = list(combinations(range(replicas), 3))
        series["m3"] = np.mean(
            [q[:, a, b] * q[:, a, c] * q[:, b, c] for a, b, c in triples], axis=0
        )
        series["m22"] = np.mean(
            [
                q[:, x, mid] ** 2 * q[:, mid, y] ** 2
                for a, b, c in triples
                for x, mid, y in ((a, b, c), (b, a, c), (a, c, b))
            ],
            axis=0,
        )
    if replicas >= 4:
        quads = list(combinations(range(replicas), 4))
        series["m_cycle"] = np.mean(
            [
                q[:, w, x] * q[:, x, y] * q[:, y, z] * q[:, z, w]
                for a, b, c, d in quads
                for w, x, y, z in ((a, b, c, d), (a, b, d, c), (a, c, b, d))
            ],
            axis=0,
        )
        multi = []
        for a, b, c, d in quads:
            joint = np.sum(
                snapshots[:, a] * snapshots[:, b] * snapshots[:, c] * snapshots[:, d],
                axis=1,
            ) / n
            for (w, x), (y, z) in (((a, b), (c, d)), ((a, c), (b, d)), ((a, d), (b, c))):
                multi.append(q[:, w, x] * q[:, y, z] * joint)
        series["m_multi"] = np.mean(multi, axis=0)
    return series


MOMENT_NAMES = ("m2", "m3", "m4", "m22", "m_cycle", "m_multi")


def _sample(
    c: Couplings, beta: float, ladder: tuple[float, ...], cfg: ChainConfig
) -> McmcEstimate:
    n = c.n
    if n < 2:
        raise ConfigError(f"Markov chains need n >= 2, got n={n}")
    target = next(
        (i for i, b in enumerate(ladder) if math.isclose(b, beta, abs_tol=1e-12)), None
    )
    if target is None:
        raise ConfigError(f"Ladder {ladder} does not contain the target beta={beta}")

    replicas = cfg.replicas
    chains = [
        MetropolisChain(c, ladder, derive_seed(cfg.seed, [("replica", r)]))
        for r in range(replicas)
    ]
    records = cfg.records
    batch_size = records // cfg.batch_count
    batched = batch_size * cfg.batch_count
    c_total = np.zeros((n, n))
    c_batches = np.zeros((cfg.batch_count, n, n))
    scalar_chunks: dict[str, list[NDArray[np.float64]]] = {}

    chunk = max(1, CHUNK_PROPOSALS // (len(ladder) * n))
    recorded = 0
    for first in range(0, cfg.sweeps, chunk):
        sweep = np.arange(first + 1, min(first + chunk, cfg.sweeps) + 1)
        mask = (sweep > cfg.burn_in) & ((sweep - cfg.burn_in) % cfg.thin == 0)
        snapshots = np.stack([chain.advance(mask, target) for chain in chains], axis=1)
        if snapshots.shape[0] == 0:
            continue
        flat = snapshots.reshape(-1, n)
        c_total += flat.T @ flat
        index = np.arange(recorded, recorded + snapshots.shape[0])
        for batch in np.unique(index[index < batched] // batch_size):
            rows = snapshots[(index // batch_size == batch) & (index < batched)]
            block = rows.reshape(-1, n)
            c_batches[batch] += block.T @ block
        for name, values in _overlap_series(snapshots).items():
            scalar_chunks.setdefault(name, []).append(values)
        recorded += snapshots.shape[0]

    series = {name: np.concatenate(parts) for name, parts in scalar_chunks.items()}
    c_hat = c_total / (recorded * replicas)
    np.fill_diagonal(c_hat, 1.0)
    batch_means = c_batches / (batch_size * replicas)
    c_stderr = np.sqrt(np.var(batch_means, axis=0, ddof=1) / cfg.batch_count)
    c_stderr = 0.5 * (c_stderr + c_stderr.T)
    np.fill_diagonal(c_stderr, 0.0)

    estimates = {name: float(series[name].mean()) for name in MOMENT_NAMES if name in series}
    stderr = {
        name: batch_means_stderr(series[name], cfg.batch_count) for name in estimates
    }
    stderr["abs"] = batch_means_stderr(series["abs"], cfg.batch_count)

    proposals = cfg.sweeps * n * replicas
    acceptance = float(sum(chain.accepted[target] for chain in chains)) / proposals
    swap_rates: tuple[float, ...] = ()
    if len(ladder) > 1:
        swaps = np.sum([chain.swaps_accepted for chain in chains], axis=0)
        swap_rates = tuple(float(x) / (cfg.sweeps * replicas) for x in swaps)
        low, high = SWAP_RATE_BOUNDS
        for pair, rate in enumerate(swap_rates):
            if not low < rate < high:
                _LOGGER.warning(
                    "Swap rate %.3f between beta=%s and beta=%s is outside (%s, %s); "
                    "consider adjusting the ladder",
                    rate,
                    ladder[pair],
                    ladder[pair + 1],
                    low,
                    high,
                )

    drift = burn_in_drift(series["m2"])
    if drift is not None and abs(drift) > BURN_IN_DRIFT_Z:
        _LOGGER.warning(
            "Overlap second moment drifts between halves of the run at n=%s beta=%s "
            "(z=%.1f); consider more burn-in sweeps than %s",
            n,
            beta,
            drift,
            cfg.burn_in,
        )

    _LOGGER.debug(
        "Sampled n=%s beta=%s: %s records x %s replicas, acceptance %.3f",
        n,
        beta,
        recorded,
        replicas,
        acceptance,
    )
    return McmcEstimate(
        beta=beta,
        c_hat=SymMatrix.symmetrized(c_hat),
        c_stderr=c_stderr,
        moments_hat=OverlapMoments(**estimates),
        stderr=stderr,
        mean_abs_overlap=float(series["abs"].mean()),
        acceptance_rate=acceptance,
        samples_used=recorded * replicas,
        swap_acceptance=swap_rates,
        pair_labels=_pair_index(replicas),
        overlap_series=series["pairs"] if cfg.keep_overlap_series else None,
    )


def run_chain(c: Couplings, beta: float, cfg: ChainConfig) -> McmcEstimate:
    """Estimate C and the overlap moments with single-spin-flip Metropolis."""
    if not math.isfinite(beta) or beta < 0:
        raise ConfigError(f"Inverse temperature must be finite and >= 0, got {beta}")
    return _sample(c, beta, (float(beta),), cfg)


def run_tempered(c: Couplings, beta: float, cfg: ChainConfig) -> McmcEstimate:
    """Estimate at `beta` with replica exchange along `cfg.ladder`."""
    if cfg.ladder is None:
        raise ConfigError("Parallel tempering needs a ladder")
    return _sample(c, beta, cfg.ladder, cfg)


PathLike = Union[str, Path]


def write_overlap_series(estimate: McmcEstimate, path: PathLike) -> Path:
    """Write the recorded overlap series as CSV, one column per replica pair."""
    if estimate.overlap_series is None:
        raise ConfigError("Estimate was produced without keep_overlap_series")
    target = Path(path)
    with target.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow([f"r_{a}_{b}" for a, b in estimate.pair_labels])
        writer.writerows(estimate.overlap_series.tolist())
    return target
