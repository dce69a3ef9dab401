"""Enums module."""

from __future__ import annotations

from enum import Enum, unique


@unique
class ExperimentKind(str, Enum):
    """Experiment kinds."""

    IDENTITIES = "identities"
    RESIDUAL_SWEEP = "residual-sweep"
    OPNORM_SWEEP = "opnorm-sweep"
    CRITICAL_SCAN = "critical-scan"
    LOWTEMP_SCAN = "lowtemp-scan"
    DERIV_CHECK = "deriv-check"
    MCMC_VALIDATE = "mcmc-validate"


@unique
class Engine(str, Enum):
    """Gibbs engines."""

    EXACT = "exact"
    MCMC = "mcmc"


@unique
class Phase(str, Enum):
    """Temperature regimes."""

    HIGH = "high"
    CRITICAL = "critical"
    LOW = "low"

    @classmethod
    def of(cls, beta: float) -> Phase:
        """Return the regime of an inverse temperature."""
        if beta < 1:
            return cls.HIGH
        if beta == 1:
            return cls.CRITICAL
        return cls.LOW
