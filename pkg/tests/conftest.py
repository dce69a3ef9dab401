"""Provide common pytest fixtures."""

from __future__ import annotations

from typing import Any

import pytest

from skcov.disorder import Couplings, sample_couplings
from skcov.experiments import ExperimentConfig
from skcov.mcmc import ChainConfig

from . import load_fixture


@pytest.fixture(name="identities_config")
def identities_config_fixture() -> dict[str, Any]:
    """Load the identities_config fixture data."""
    return load_fixture("identities_config.json")


@pytest.fixture(name="residual_config")
def residual_config_fixture() -> dict[str, Any]:
    """Load the residual_config fixture data."""
    return load_fixture("residual_config.json")


@pytest.fixture(name="chain_config")
def chain_config_fixture() -> ChainConfig:
    """Return a short chain configuration."""
    return ChainConfig(**load_fixture("chain_config.json"))


@pytest.fixture(name="couplings")
def couplings_fixture() -> Couplings:
    """Return an n=6 instance."""
    return sample_couplings(6, 2024)


@pytest.fixture(name="pair_couplings")
def pair_couplings_fixture() -> Couplings:
    """Return an n=2 instance."""
    return sample_couplings(2, 99)


@pytest.fixture(name="experiment")
def experiment_fixture(identities_config: dict[str, Any]) -> ExperimentConfig:
    """Return a small identities experiment."""
    return ExperimentConfig.from_dict(identities_config)
