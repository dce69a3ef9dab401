"""Progress events emitted by the experiment runner."""

from __future__ import annotations

from dataclasses import dataclass
from datetime import datetime

from pint import Quantity

from .const import UNIT_SECONDS
from .helpers import nvl, utc_timestamp_from_epoch

# pylint: disable=line-too-long


@dataclass
class Event:
    """Event base class."""

    _epoch: float

    @property
    def epoch(self) -> float:
        """Return epoch in seconds."""
        return self._epoch

    @property
    def timestamp(self) -> datetime | None:
        """Return the timestamp in UTC."""
        return utc_timestamp_from_epoch(self._epoch)

    def __repr__(self) -> str:  # pragma: no cover
        """Return repr(self)."""
        return f"Event<timestamp={self.timestamp}>"


@dataclass
class InstanceCompletedEvent(Event):
    """One disorder instance finished."""

    n: int
    beta: float
    index: int
    seed: int
    _elapsed: float | None = None

    @property
    def elapsed(self) -> Quantity[float]:
        """Return the instance wall-clock time in seconds."""
        return nvl(self._elapsed, 0.0) * UNIT_SECONDS

    def __repr__(self) -> str:  # pragma: no cover
        """Return repr(self)."""
        return (
            f"Instance Completed Event<n={self.n}, beta={self.beta}, "
            f"index={self.index}, elapsed={self.elapsed:.3f}>"
        )


@dataclass
class CellCompletedEvent(Event):
    """All statistics of one (n, beta) cell were aggregated."""

    n: int
    beta: float
    statistics: tuple[str, ...] = ()

    def __repr__(self) -> str:  # pragma: no cover
        """Return repr(self)."""
        return f"Cell Completed Event<n={self.n}, beta={self.beta}>"
