"""Test the Metropolis and parallel tempering samplers."""

from __future__ import annotations

import csv
import logging
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest
from _pytest.logging import LogCaptureFixture

from skcov import mcmc
from skcov.disorder import Couplings, sample_couplings
from skcov.errors import ConfigError, SeriesTooShortError
from skcov.gibbs_exact import exact_summary, overlap_moments_exact
from skcov.mcmc import (
    ChainConfig,
    MetropolisChain,
    batch_means_stderr,
    burn_in_drift,
    geometric_ladder,
    run_chain,
    run_tempered,
    write_overlap_series,
)


def test_chain_config_defaults() -> None:
    """Test derived defaults."""
    cfg = ChainConfig(sweeps=1000, batch_count=10)
    assert cfg.burn_in == 100
    assert cfg.records == 900
    assert cfg.to_dict()["burn_in_sweeps"] == 100
    assert ChainConfig(sweeps=1000, burn_in_sweeps=0, thin=2, batch_count=10).records == 500


@pytest.mark.parametrize(
    "kwargs",
    [
        {"sweeps": 0},
        {"sweeps": 1000, "burn_in_sweeps": 1000},
        {"thin": 0},
        {"replicas": 1},
        {"batch_count": 5},
        {"sweeps": 100, "batch_count": 10},
        {"ladder": ()},
        {"ladder": (0.5, 0.2)},
        {"ladder": (-0.1, 0.5)},
    ],
)
def test_chain_config_rejects(kwargs: dict) -> None:
    """Test invalid chain settings."""
    with pytest.raises(ConfigError):
        ChainConfig(**kwargs)


def test_batch_means_stderr() -> None:
    """Test batch means on independent and constant series."""
    white = np.random.default_rng(8).standard_normal(20000)
    assert 0.003 < batch_means_stderr(white, 20) < 0.0125
    assert batch_means_stderr(np.ones(400), 20) == 0.0
    with pytest.raises(SeriesTooShortError):
        batch_means_stderr(np.ones(199), 20)
    with pytest.raises(ConfigError):
        batch_means_stderr(np.ones(1000), 4)


def test_batch_means_sees_correlation() -> None:
    """Test a strongly correlated series gets a larger error than the naive one."""
    rng = np.random.default_rng(9)
    series = np.repeat(rng.standard_normal(400), 50)
    naive = series.std(ddof=1) / np.sqrt(series.shape[0])
    assert batch_means_stderr(series, 20) > 3 * naive


def test_geometric_ladder() -> None:
    """Test the ladder ends exactly at the target."""
    ladder = geometric_ladder(0.2, 1.5, 6)
    assert len(ladder) == 6
    assert ladder[0] == pytest.approx(0.2)
    assert ladder[-1] == 1.5
    assert all(lo < hi for lo, hi in zip(ladder, ladder[1:]))
    with pytest.raises(ConfigError):
        geometric_ladder(0.0, 1.0, 3)


def test_chain_fields_stay_consistent(couplings: Couplings) -> None:
    """Test the incremental local fields and energies after many flips."""
    chain = MetropolisChain(couplings, (0.4, 1.1), seed=3)
    chain.advance(np.zeros(200, dtype=bool))
    a_off = couplings.g / np.sqrt(couplings.n)
    np.fill_diagonal(a_off, 0.0)
    assert np.allclose(chain.fields, chain.spins @ a_off, atol=1e-10)
    assert np.allclose(chain.energies, 0.5 * np.sum(chain.spins * chain.fields, axis=1))
    assert chain.accepted.sum() > 0


def test_run_chain_is_deterministic(couplings: Couplings, chain_config: ChainConfig) -> None:
    """Test a fixed seed reproduces the estimate bit for bit."""
    first = run_chain(couplings, 0.7, chain_config)
    second = run_chain(couplings, 0.7, chain_config)
    assert np.array_equal(first.c_hat.entries, second.c_hat.entries)
    assert first.moments_hat == second.moments_hat
    other = run_chain(couplings, 0.7, replace(chain_config, seed=6))
    assert not np.array_equal(first.c_hat.entries, other.c_hat.entries)


def test_run_chain_infinite_temperature(couplings: Couplings, chain_config: ChainConfig) -> None:
    """Test beta=0 accepts every flip and decorrelates the spins."""
    estimate = run_chain(couplings, 0.0, chain_config)
    assert estimate.acceptance_rate == 1.0
    assert np.all(np.diag(estimate.c_hat.entries) == 1.0)
    assert np.max(np.abs(estimate.c_hat.entries - np.eye(6))) < 0.1
    assert abs(estimate.moments_hat.m2 - 1 / 6) < 5 * estimate.stderr["m2"]
    assert estimate.samples_used == chain_config.records * chain_config.replicas
    assert estimate.swap_acceptance == ()


def test_run_chain_moments(couplings: Couplings, chain_config: ChainConfig) -> None:
    """Test the sampled moments against the exact engine."""
    summary = exact_summary(couplings, 0.6, want_four_point=True)
    exact = overlap_moments_exact(summary)
    estimate = run_chain(couplings, 0.6, replace(chain_config, sweeps=20000, burn_in_sweeps=2000))
    for name in ("m2", "m3", "m4", "m22", "m_cycle", "m_multi"):
        sampled = getattr(estimate.moments_hat, name)
        assert abs(sampled - getattr(exact, name)) <= 5 * estimate.stderr[name] + 1e-3, name
    assert np.max(np.abs(estimate.c_hat.entries - summary.c.entries)) < 0.1
    assert estimate.c_stderr.shape == (6, 6)
    assert 0 < estimate.acceptance_rate < 1


def test_two_replicas_leave_higher_moments_out(
    couplings: Couplings, chain_config: ChainConfig
) -> None:
    """Test moments needing three or four replicas are absent with two."""
    estimate = run_chain(couplings, 0.5, replace(chain_config, replicas=2))
    assert estimate.moments_hat.m3 is None
    assert estimate.moments_hat.m_cycle is None
    assert estimate.moments_hat.m4 is not None
    assert "m3" not in estimate.stderr


def test_single_rung_tempering_is_plain_metropolis(
    couplings: Couplings, chain_config: ChainConfig
) -> None:
    """Test a one-rung ladder reproduces run_chain."""
    plain = run_chain(couplings, 0.8, chain_config)
    tempered = run_tempered(couplings, 0.8, replace(chain_config, ladder=(0.8,)))
    assert np.array_equal(plain.c_hat.entries, tempered.c_hat.entries)
    assert plain.moments_hat == tempered.moments_hat


def test_tempering(couplings: Couplings, chain_config: ChainConfig) -> None:
    """Test replica exchange on a real ladder."""
    cfg = replace(chain_config, ladder=geometric_ladder(0.3, 1.2, 4))
    estimate = run_tempered(couplings, 1.2, cfg)
    assert len(estimate.swap_acceptance) == 3
    assert all(0 <= rate <= 1 for rate in estimate.swap_acceptance)
    with pytest.raises(ConfigError):
        run_tempered(couplings, 0.9, cfg)
    with pytest.raises(ConfigError):
        run_tempered(couplings, 0.9, chain_config)


def test_tempering_matches_exact_engine(chain_config: ChainConfig) -> None:
    """Test a tempered low-temperature estimate against exact enumeration."""
    c = sample_couplings(12, 31)
    exact = overlap_moments_exact(exact_summary(c, 1.5))
    cfg = replace(
        chain_config,
        sweeps=20000,
        burn_in_sweeps=2000,
        batch_count=20,
        ladder=(0.6, 0.9, 1.2, 1.5),
    )
    estimate = run_tempered(c, 1.5, cfg)
    assert abs(estimate.moments_hat.m2 - exact.m2) <= 4 * estimate.stderr["m2"]
    assert all(0.0 < rate < 1.0 for rate in estimate.swap_acceptance)


def test_covariance_stderr_is_calibrated(chain_config: ChainConfig) -> None:
    """Test every sampled C entry lies within 4 standard errors of the exact one."""
    c = sample_couplings(8, 17)
    exact = exact_summary(c, 0.5).c.entries
    cfg = replace(chain_config, sweeps=200000, burn_in_sweeps=20000, batch_count=20)
    estimate = run_chain(c, 0.5, cfg)
    off = ~np.eye(8, dtype=bool)
    assert np.all(estimate.c_stderr[off] > 0)
    z = (estimate.c_hat.entries - exact)[off] / estimate.c_stderr[off]
    assert np.max(np.abs(z)) <= 4.0


def test_swap_rate_warning(
    caplog: LogCaptureFixture, couplings: Couplings, chain_config: ChainConfig
) -> None:
    """Test nearly equal rungs log a swap-rate warning."""
    caplog.set_level(logging.WARNING)
    run_tempered(couplings, 0.5, replace(chain_config, ladder=(0.5 - 1e-6, 0.5)))
    assert "Swap rate" in caplog.text


def test_burn_in_drift() -> None:
    """Test the half-against-half drift score."""
    assert burn_in_drift(np.ones(150)) is None
    assert burn_in_drift(np.ones(400)) == 0.0
    assert burn_in_drift(np.linspace(0.0, 1.0, 2000)) < -4.0
    noise = np.random.default_rng(8).standard_normal(20000)
    assert abs(burn_in_drift(noise)) < 6.0


def test_burn_in_warning(
    caplog: LogCaptureFixture,
    monkeypatch: pytest.MonkeyPatch,
    couplings: Couplings,
    chain_config: ChainConfig,
) -> None:
    """Test a drifting run logs a burn-in warning."""
    caplog.set_level(logging.WARNING)
    monkeypatch.setattr(mcmc, "burn_in_drift", lambda series: 9.0)
    run_chain(couplings, 0.5, chain_config)
    assert "consider more burn-in sweeps than 300" in caplog.text


def test_run_chain_rejects(chain_config: ChainConfig) -> None:
    """Test invalid inputs."""
    with pytest.raises(ConfigError):
        run_chain(sample_couplings(1, 1), 0.5, chain_config)
    with pytest.raises(ConfigError):
        run_chain(sample_couplings(4, 1), -1.0, chain_config)


def test_write_overlap_series(
    tmp_path: Path, couplings: Couplings, chain_config: ChainConfig
) -> None:
    """Test the overlap series CSV."""
    estimate = run_chain(couplings, 0.5, replace(chain_config, keep_overlap_series=True))
    path = write_overlap_series(estimate, tmp_path / "overlaps.csv")
    with path.open(newline="") as handle:
        rows = list(csv.reader(handle))
    assert rows[0] == ["r_0_1", "r_0_2", "r_0_3", "r_1_2", "r_1_3", "r_2_3"]
    assert len(rows) == 1 + chain_config.records
    assert {float(value) for value in rows[1]} <= {x / 6 for x in range(-6, 7, 2)} | {-1.0, 1.0}

    with pytest.raises(ConfigError):
        write_overlap_series(run_chain(couplings, 0.5, chain_config), tmp_path / "no.csv")


def test_detailed_balance(pair_couplings: Couplings) -> None:
    """Test the two-spin chain visits each state with its Gibbs probability."""
    beta = 0.5
    x = beta * pair_couplings.g[0, 1] / np.sqrt(2)
    chain = MetropolisChain(pair_couplings, (beta,), seed=21)
    mask = np.zeros(10**6, dtype=bool)
    mask[9::10] = True
    records = chain.advance(mask)
    assert records.shape == (10**5, 2)
    codes = 2 * (records[:, 0] > 0) + (records[:, 1] > 0)
    for code in range(4):
        aligned = code in (0, 3)
        expected = np.exp(x if aligned else -x) / (4 * np.cosh(x))
        indicator = (codes == code).astype(np.float64)
        stderr = batch_means_stderr(indicator, 20)
        assert abs(indicator.mean() - expected) <= 4 * stderr, code
