"""Seed derivation and disorder-ensemble statistics."""

from __future__ import annotations

import hashlib
import math
import struct
from dataclasses import dataclass
from typing import Any, Iterable, Sequence, Tuple

from .const import CI95_Z
from .errors import EmptyEnsembleError

SEED_MASK = (1 << 64) - 1

Label = Tuple[str, int]


def derive_seed(master: int, labels: Sequence[Label]) -> int:
    """Derive an independent 64-bit seed for a labelled stream.

    The digest is BLAKE2b with an 8-byte output over the little-endian master
    seed followed by each label as a length-prefixed UTF-8 name and a signed
    64-bit index, in order. Reordering labels changes the seed.
    """
    digest = hashlib.blake2b(digest_size=8, person=b"skcov-seed")
    digest.update(struct.pack("<Q", master & SEED_MASK))
    for name, index in labels:
        encoded = name.encode("utf-8")
        digest.update(struct.pack("<I", len(encoded)))
        digest.update(encoded)
        digest.update(struct.pack("<q", index))
    return int.from_bytes(digest.digest(), "little")


@dataclass(frozen=True)
class EnsembleStat:
    """Mean and unbiased variance of a quantity over disorder instances."""

    count: int
    mean: float
    variance: float = 0.0

    @property
    def stderr(self) -> float:
        """Return the standard error of the mean."""
        return math.sqrt(self.variance / self.count) if self.count else math.inf

    @property
    def ci95(self) -> tuple[float, float]:
        """Return the 95% normal confidence interval of the mean."""
        half = CI95_Z * self.stderr
        return self.mean - half, self.mean + half

    @property
    def _sum_sq(self) -> float:
        return self.variance * (self.count - 1) if self.count > 1 else 0.0

    def push(self, value: float) -> EnsembleStat:
        """Return the statistic with one more observation (Welford update)."""
        count = self.count + 1
        delta = value - self.mean
        mean = self.mean + delta / count
        sum_sq = self._sum_sq + delta * (value - mean)
        return EnsembleStat(count, mean, sum_sq / (count - 1) if count > 1 else 0.0)

    def merge(self, other: EnsembleStat) -> EnsembleStat:
        """Combine two disjoint ensembles (parallel variance formula)."""
        if other.count == 0:
            return self
        if self.count == 0:
            return other
        count = self.count + other.count
        delta = other.mean - self.mean
        mean = self.mean + delta * other.count / count
        sum_sq = (
            self._sum_sq
            + other._sum_sq
            + delta * delta * self.count * other.count / count
        )
        return EnsembleStat(count, mean, sum_sq / (count - 1) if count > 1 else 0.0)

    def to_dict(self) -> dict[str, Any]:
        """Return a JSON-ready representation."""
        return {
            "count": self.count,
            "mean": self.mean,
            "variance": self.variance,
            "stderr": self.stderr,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> EnsembleStat:
        """Rebuild a statistic from `to_dict` output."""
        return cls(int(data["count"]), float(data["mean"]), float(data["variance"]))


def accumulate(values: Iterable[float]) -> EnsembleStat:
    """Aggregate values in one Welford pass."""
    stat = EnsembleStat(0, 0.0)
    for value in values:
        stat = stat.push(float(value))
    if stat.count == 0:
        raise EmptyEnsembleError("Cannot aggregate an empty ensemble")
    return stat


def merge(*stats: EnsembleStat) -> EnsembleStat:
    """Merge ensemble statistics left to right."""
    if not stats:
        raise EmptyEnsembleError("Nothing to merge")
    result = stats[0]
    for stat in stats[1:]:
        result = result.merge(stat)
    return result


def combined_stderr(*stats: EnsembleStat) -> float:
    """Return the standard error of a difference or sum of independent means."""
    return math.sqrt(sum(stat.stderr**2 for stat in stats))
