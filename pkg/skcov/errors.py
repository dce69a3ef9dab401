"""Errors for skcov computations."""

from __future__ import annotations


class SkcovError(Exception):
    """Base skcov error."""


class ConfigError(SkcovError):
    """Error indicating an invalid configuration or argument."""


class DisorderError(ConfigError):
    """Error indicating an invalid disorder request."""


class EngineCapError(ConfigError):
    """Error indicating a system size beyond an exact-engine cap."""


class InvalidSpinsError(ConfigError):
    """Error indicating a malformed spin configuration."""


class DimensionMismatchError(ConfigError):
    """Error indicating matrices of incompatible shapes."""


class IndexRangeError(ConfigError):
    """Error indicating a spin index outside 0..n-1."""


class DomainError(ConfigError):
    """Error indicating a high-temperature predictor used at beta >= 1."""


class MissingMomentError(SkcovError):
    """Error indicating four-point quantities were not computed."""


class EmptyEnsembleError(SkcovError):
    """Error indicating an aggregation over no values."""


class SeriesTooShortError(SkcovError):
    """Error indicating a series too short for batch means."""


class NumericalError(SkcovError):
    """Base numerical failure."""


class NonFiniteWeightError(NumericalError):
    """Error indicating a non-finite Gibbs log-weight or proposal."""


class NotSymmetricError(NumericalError):
    """Error indicating a matrix that should be symmetric is not."""


class ConvergenceError(NumericalError):
    """Error indicating an iterative method hit its iteration cap."""

    def __init__(self, message: str, off_diagonal_mass: float) -> None:
        """Initialize a convergence error."""
        super().__init__(message)
        self.off_diagonal_mass = off_diagonal_mass


class InstanceFailedError(SkcovError):
    """Error indicating a disorder instance failed during an experiment."""

    def __init__(self, n: int, beta: float, index: int, seed: int) -> None:
        """Initialize an instance failure."""
        super().__init__(
            f"Instance {index} failed at n={n}, beta={beta} (replay with seed {seed})"
        )
        self.n = n
        self.beta = beta
        self.index = index
        self.seed = seed


class ReportIOError(SkcovError):
    """Error indicating a report could not be written."""

    def __init__(self, path: str) -> None:
        """Initialize a report I/O error."""
        super().__init__(f"Could not write report file {path}")
        self.path = path
