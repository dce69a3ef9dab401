"""Helper functions."""

from __future__ import annotations

import os
from datetime import datetime, timezone
from typing import Any, Callable, Sequence, TypeVar

from .const import ENV_THREADS
from .errors import ConfigError

T = TypeVar("T")  # pylint: disable=invalid-name
UTC = timezone.utc


def nvl(value: T | None, default: T) -> T:
    """Return default if value is None, else value."""
    return default if value is None else value


def utc_timestamp_from_epoch(epoch: float | None) -> datetime | None:
    """Return the UTC timestamp from an epoch value."""
    return None if epoch is None else datetime.fromtimestamp(epoch, UTC)


def parse_list(value: str | Sequence[Any], cast: Callable[[Any], T]) -> list[T]:
    """Parse a comma separated string (or a sequence) into a typed list."""
    items = value.split(",") if isinstance(value, str) else list(value)
    try:
        return [cast(item.strip() if isinstance(item, str) else item) for item in items]
    except ValueError as ex:
        raise ConfigError(f"Could not parse list {value!r}") from ex


def worker_count(default: int | None = None) -> int:
    """Return the worker pool size, capped by the SKCOV_THREADS environment variable."""
    cpus = nvl(default, os.cpu_count() or 1)
    if (raw := os.environ.get(ENV_THREADS)) is None or raw == "":
        return max(1, cpus)
    try:
        cap = int(raw)
    except ValueError as ex:
        raise ConfigError(f"{ENV_THREADS} must be an integer, got {raw!r}") from ex
    if cap < 1:
        raise ConfigError(f"{ENV_THREADS} must be positive, got {cap}")
    return max(1, min(cpus, cap))
