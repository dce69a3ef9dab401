"""Test helpers."""

from __future__ import annotations

from datetime import datetime, timezone

import pytest

from skcov.const import ENV_THREADS
from skcov.errors import ConfigError
from skcov.helpers import (
    nvl,
    parse_list,
    utc_timestamp_from_epoch,
    worker_count,
)


def test_nvl() -> None:
    """Test nvl."""
    assert nvl(None, 3) == 3
    assert nvl(0, 3) == 0


def test_utc_timestamp_from_epoch() -> None:
    """Test epoch conversion."""
    assert utc_timestamp_from_epoch(None) is None
    assert utc_timestamp_from_epoch(0) == datetime(1970, 1, 1, tzinfo=timezone.utc)


def test_parse_list() -> None:
    """Test parsing comma separated lists."""
    assert parse_list("8, 12,16", int) == [8, 12, 16]
    assert parse_list("0.5,1.5", float) == [0.5, 1.5]
    assert parse_list([1, "2"], int) == [1, 2]
    with pytest.raises(ConfigError):
        parse_list("8,twelve", int)


def test_worker_count(monkeypatch: pytest.MonkeyPatch) -> None:
    """Test the worker pool size honors the environment cap."""
    monkeypatch.delenv(ENV_THREADS, raising=False)
    assert worker_count(6) == 6

    monkeypatch.setenv(ENV_THREADS, "2")
    assert worker_count(6) == 2
    assert worker_count(1) == 1

    monkeypatch.setenv(ENV_THREADS, "")
    assert worker_count(3) == 3

    for bad in ("0", "many"):
        monkeypatch.setenv(ENV_THREADS, bad)
        with pytest.raises(ConfigError):
            worker_count(4)
