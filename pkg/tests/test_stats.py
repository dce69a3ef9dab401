"""Test seeds and ensemble statistics."""

from __future__ import annotations

import math

import numpy as np
import pytest

from skcov.errors import EmptyEnsembleError
from skcov.stats import EnsembleStat, accumulate, combined_stderr, derive_seed, merge


def test_derive_seed() -> None:
    """Test seeds are stable, labelled and order sensitive."""
    seed = derive_seed(42, [("n", 8), ("instance", 3)])
    assert seed == derive_seed(42, [("n", 8), ("instance", 3)])
    assert 0 <= seed < 1 << 64
    assert seed != derive_seed(42, [("instance", 3), ("n", 8)])
    assert seed != derive_seed(43, [("n", 8), ("instance", 3)])
    assert seed != derive_seed(42, [("n", 8), ("instance", 4)])
    assert derive_seed(42, []) != derive_seed(42, [("n", 0)])


def test_derive_seed_has_no_collisions() -> None:
    """Test 10^4 distinct label sets give 10^4 distinct seeds."""
    seeds = {
        derive_seed(42, [("n", n), ("instance", instance), ("chain", chain)])
        for n in range(4, 29)
        for instance in range(100)
        for chain in range(4)
    }
    assert len(seeds) == 25 * 100 * 4 == 10_000


def test_accumulate() -> None:
    """Test the Welford pass against numpy."""
    values = np.random.default_rng(1).normal(3.0, 2.0, 1000)
    stat = accumulate(values)
    assert stat.count == 1000
    assert stat.mean == pytest.approx(values.mean(), rel=1e-12)
    assert stat.variance == pytest.approx(values.var(ddof=1), rel=1e-10)
    assert stat.stderr == pytest.approx(values.std(ddof=1) / math.sqrt(1000), rel=1e-10)
    low, high = stat.ci95
    assert high - low == pytest.approx(2 * 1.96 * stat.stderr)


def test_single_value() -> None:
    """Test a one-value ensemble."""
    stat = accumulate([2.5])
    assert stat == EnsembleStat(1, 2.5, 0.0)
    assert stat.stderr == 0.0


def test_empty() -> None:
    """Test aggregations over nothing raise."""
    with pytest.raises(EmptyEnsembleError):
        accumulate([])
    with pytest.raises(EmptyEnsembleError):
        merge()
    assert math.isinf(EnsembleStat(0, 0.0).stderr)


def test_merge_matches_single_pass() -> None:
    """Test the parallel variance formula."""
    values = np.random.default_rng(2).exponential(1.0, 301)
    parts = [accumulate(values[:100]), accumulate(values[100:250]), accumulate(values[250:])]
    merged = merge(*parts)
    whole = accumulate(values)
    assert merged.count == whole.count
    assert merged.mean == pytest.approx(whole.mean, rel=1e-12)
    assert merged.variance == pytest.approx(whole.variance, rel=1e-10)
    assert parts[0].merge(EnsembleStat(0, 0.0)) == parts[0]
    assert EnsembleStat(0, 0.0).merge(parts[0]) == parts[0]


def test_push() -> None:
    """Test pushing returns a new statistic."""
    stat = EnsembleStat(0, 0.0)
    pushed = stat.push(1.0).push(3.0)
    assert stat.count == 0
    assert pushed == EnsembleStat(2, 2.0, 2.0)


def test_combined_stderr() -> None:
    """Test the standard error of a difference of independent means."""
    first = EnsembleStat(4, 0.0, 4.0)
    second = EnsembleStat(9, 0.0, 9.0)
    assert first.stderr == 1.0
    assert combined_stderr(first, second) == pytest.approx(math.sqrt(2.0))


def test_dict_round_trip() -> None:
    """Test serialization."""
    stat = accumulate([1.0, 2.0, 4.0])
    data = stat.to_dict()
    assert data["stderr"] == stat.stderr
    assert EnsembleStat.from_dict(data) == stat
