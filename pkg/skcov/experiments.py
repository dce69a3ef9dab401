"""Config-driven experiments over disorder ensembles."""

from __future__ import annotations

import asyncio
import csv
import json
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields, replace
from functools import partial
from pathlib import Path
from typing import Any, Callable, Optional, Union

import numpy as np
from pint import Quantity

from .const import (
    DEFAULT_DERIV_STEP,
    DEFAULT_LOWTEMP_RATIO,
    DEFAULT_OPNORM_VARIATION,
    DEFAULT_RESIDUAL_TOLERANCE,
    DEFAULT_SAMPLES,
    DEFAULT_SCHEDULE_EXPONENT,
    DEFAULT_SEED,
    DEFAULT_Z_THRESHOLD,
    DERIV_TOLERANCE,
    EVENT_CELL_COMPLETE,
    EVENT_INSTANCE_COMPLETE,
    EXACT_CAP,
    EXACT_FOUR_POINT_CAP,
    MIN_COVERAGE,
    MONOTONE_STDERRS,
    OVERLAP_PMF_CAP,
    REPORT_CSV,
    REPORT_CSV_COLUMNS,
    REPORT_JSON,
    UNIT_DIMENSIONLESS,
    UNIT_SECONDS,
)
from .disorder import Couplings, SymMatrix, interaction_matrix, sample_couplings
from .enums import Engine, ExperimentKind, Phase
from .errors import ConfigError, InstanceFailedError, ReportIOError, SkcovError
from .event import CellCompletedEvent, InstanceCompletedEvent
from .gibbs_exact import (
    OverlapMoments,
    exact_summary,
    overlap_distribution_small,
    overlap_moments_exact,
)
from .helpers import worker_count
from .mcmc import ChainConfig, McmcEstimate, run_chain, run_tempered
from .mixins import EventMixin
from .observables import (
    TapReport,
    hightemp_opnorm_lower,
    ibp_derivative_check,
    identity_frobenius_check,
    identity_trace_check,
    mean_row_residual,
    near_critical_beta,
    predicted_frobenius_norm_sq,
    predicted_moments,
    predicted_residual_constant,
    predicted_trace,
    tap_report,
)
from .spectral import frobenius_norm, operator_norm
from .stats import EnsembleStat, accumulate, combined_stderr, derive_seed

_LOGGER = logging.getLogger(__name__)

PathLike = Union[str, Path]

SEED_LIMIT = 1 << 64

# name -> description; every statistic is dimensionless
DEFINITIONS = {
    "abs_diff": "|finite difference - integration-by-parts formula| of d<s_i s_j>/dg_kl",
    "cov_frob_scaled": "||C||_F / sqrt(n)",
    "cov_opnorm": "||C||_op, largest eigenvalue of the covariance matrix",
    "cov_opnorm_sq": "||C||_op^2",
    "frobenius_identity": "||P||_F^2 minus its overlap-moment expression",
    "frobenius_lhs": "||P||_F^2 with P = ((1 + beta^2) I - beta A) C",
    "frobenius_rhs": "overlap-moment expression for E ||P||_F^2",
    "m2": "Gibbs average of R_12^2",
    "n2_m3": "n^2 <R_12 R_13 R_23>",
    "n_m2": "n <R_12^2>",
    "resid_frob_sq": "||P - I||_F^2",
    "row_resid_n2": "n^2 times the mean squared off-diagonal entry of P",
    "sqrt_n_mean_abs": "sqrt(n) <|R_12|>",
    "trace_identity": "Tr(P) - (n + n beta^2 <R_12^2>)",
    "trace_lhs": "Tr(P)",
    "trace_rhs": "n + n beta^2 <R_12^2>",
}
COVERAGE_DEFINITION = "fraction of trials with |mcmc - exact| <= z_threshold * stderr"
Z_DEFINITION = "(mcmc - exact) / batch-means stderr"


def definition_of(name: str) -> str:
    """Return the human readable definition of a report statistic."""
    if name.startswith("coverage_"):
        return f"{COVERAGE_DEFINITION} for {name[len('coverage_'):]}"
    if name.startswith("z_"):
        return f"{Z_DEFINITION} for {name[len('z_'):]}"
    return DEFINITIONS.get(name, name)


# Configuration


@dataclass
class ExperimentConfig:
    """Experiment configuration."""

    kind: ExperimentKind
    n_list: tuple[int, ...]
    beta_list: tuple[float, ...]
    samples: int = DEFAULT_SAMPLES
    engine: Engine = Engine.EXACT
    seed: int = DEFAULT_SEED
    chain: Optional[ChainConfig] = None
    out_dir: Optional[str] = None
    zero_diagonal: bool = False
    deriv_step: float = DEFAULT_DERIV_STEP
    z_threshold: float = DEFAULT_Z_THRESHOLD
    residual_tolerance: float = DEFAULT_RESIDUAL_TOLERANCE
    opnorm_variation: float = DEFAULT_OPNORM_VARIATION
    lowtemp_ratio: float = DEFAULT_LOWTEMP_RATIO
    schedule_exponent: float = DEFAULT_SCHEDULE_EXPONENT

    def __post_init__(self) -> None:
        """Normalize and validate the configuration."""
        try:
            self.kind = ExperimentKind(self.kind)
            self.engine = Engine(self.engine)
        except ValueError as ex:
            raise ConfigError(str(ex)) from ex
        self.n_list = tuple(int(n) for n in self.n_list)
        self.beta_list = tuple(float(beta) for beta in self.beta_list)
        if isinstance(self.chain, dict):
            chain = dict(self.chain)
            if chain.get("ladder") is not None:
                chain["ladder"] = tuple(chain["ladder"])
            self.chain = ChainConfig(**chain)
        self._validate()

    def _validate(self) -> None:
        if not self.n_list:
            raise ConfigError("n_list must not be empty")
        if not self.beta_list:
            raise ConfigError("beta_list must not be empty")
        if any(n < 1 for n in self.n_list):
            raise ConfigError(f"System sizes must be positive: {self.n_list}")
        if any(not math.isfinite(b) or b < 0 for b in self.beta_list):
            raise ConfigError(f"Inverse temperatures must be finite and >= 0: {self.beta_list}")
        if self.samples < 2:
            raise ConfigError(f"At least two samples are needed, got {self.samples}")
        if not 0 <= self.seed < SEED_LIMIT:
            raise ConfigError(f"Seed must be an unsigned 64-bit integer, got {self.seed}")
        for name in (
            "deriv_step",
            "z_threshold",
            "residual_tolerance",
            "opnorm_variation",
            "lowtemp_ratio",
        ):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        if not 0 < self.schedule_exponent < 1 / 3:
            raise ConfigError(
                f"schedule_exponent must lie in (0, 1/3), got {self.schedule_exponent}"
            )

        largest = max(self.n_list)
        if self.kind in (ExperimentKind.IDENTITIES, ExperimentKind.DERIV_CHECK):
            if self.engine is not Engine.EXACT:
                raise ConfigError(f"{self.kind.value} needs the exact engine")
            self._check_cap(largest, EXACT_FOUR_POINT_CAP)
        if self.kind is ExperimentKind.IDENTITIES and self.zero_diagonal:
            raise ConfigError("The identities hold only with the diagonal couplings kept")
        if self.kind is ExperimentKind.MCMC_VALIDATE or self.engine is Engine.MCMC:
            self._check_cap(largest, EXACT_CAP)
            if min(self.n_list) < 2:
                raise ConfigError("Markov chains need n >= 2")
        if self.engine is Engine.EXACT:
            self._check_cap(largest, EXACT_CAP)

    def _check_cap(self, n: int, cap: int) -> None:
        if n > cap:
            raise ConfigError(f"{self.kind.value} is capped at n={cap}, got n={n}")

    @property
    def chain_config(self) -> ChainConfig:
        """Return the chain settings, defaulted when absent."""
        return self.chain if self.chain is not None else ChainConfig()

    def to_dict(self) -> dict[str, Any]:
        """Return a JSON-ready representation."""
        data = {f.name: getattr(self, f.name) for f in fields(self)}
        data["kind"] = self.kind.value
        data["engine"] = self.engine.value
        data["n_list"] = list(self.n_list)
        data["beta_list"] = list(self.beta_list)
        data["chain"] = None if self.chain is None else self.chain.to_dict()
        return data

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> ExperimentConfig:
        """Build a configuration from a dict, such as a JSON config file."""
        known = {f.name for f in fields(cls)}
        if unknown := sorted(set(data) - known):
            raise ConfigError(f"Unknown configuration keys: {', '.join(unknown)}")
        try:
            return cls(**data)
        except TypeError as ex:
            raise ConfigError(f"Invalid configuration: {ex}") from ex


# Report


@dataclass(frozen=True)
class CellStatistic:
    """One named ensemble statistic of a report cell."""

    name: str
    stat: EnsembleStat
    predictor: Optional[float] = None
    z_or_flag: Union[float, bool, None] = None

    def to_dict(self) -> dict[str, Any]:
        """Return a JSON-ready representation."""
        return {
            "stat": self.stat.to_dict(),
            "predictor": self.predictor,
            "z_or_flag": self.z_or_flag,
        }

    @classmethod
    def from_dict(cls, name: str, data: dict[str, Any]) -> CellStatistic:
        """Rebuild a statistic from `to_dict` output."""
        return cls(
            name=name,
            stat=EnsembleStat.from_dict(data["stat"]),
            predictor=data.get("predictor"),
            z_or_flag=data.get("z_or_flag"),
        )


@dataclass
class ReportCell:
    """Statistics of one (n, beta) cell."""

    n: int
    beta: float
    statistics: dict[str, CellStatistic] = field(default_factory=dict)
    flags: dict[str, bool] = field(default_factory=dict)
    extras: dict[str, float] = field(default_factory=dict)
    scheduled: bool = False

    def add(
        self,
        name: str,
        stat: EnsembleStat,
        predictor: Optional[float] = None,
        z_or_flag: Union[float, bool, None] = None,
    ) -> None:
        """Add a statistic."""
        self.statistics[name] = CellStatistic(name, stat, predictor, z_or_flag)

    def mean(self, name: str) -> float:
        """Return the ensemble mean of a statistic."""
        return self.statistics[name].stat.mean

    @property
    def passed(self) -> bool:
        """Return `True` if every cell flag passes."""
        return all(self.flags.values())

    def to_dict(self) -> dict[str, Any]:
        """Return a JSON-ready representation."""
        return {
            "n": self.n,
            "beta": self.beta,
            "scheduled": self.scheduled,
            "statistics": {
                name: self.statistics[name].to_dict() for name in sorted(self.statistics)
            },
            "flags": dict(sorted(self.flags.items())),
            "extras": dict(sorted(self.extras.items())),
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> ReportCell:
        """Rebuild a cell from `to_dict` output."""
        return cls(
            n=int(data["n"]),
            beta=float(data["beta"]),
            statistics={
                name: CellStatistic.from_dict(name, value)
                for name, value in data["statistics"].items()
            },
            flags=dict(data["flags"]),
            extras=dict(data["extras"]),
            scheduled=bool(data.get("scheduled", False)),
        )


@dataclass
class ExperimentReport:
    """Outcome of one experiment."""

    config: ExperimentConfig
    cells: list[ReportCell]
    flags: dict[str, bool] = field(default_factory=dict)
    fits: dict[str, float] = field(default_factory=dict)
    wall_clock_seconds: float = 0.0

    @property
    def passed(self) -> bool:
        """Return `True` if every configured pass/fail flag passes."""
        return all(self.flags.values()) and all(cell.passed for cell in self.cells)

    @property
    def wall_clock(self) -> Quantity[float]:
        """Return the wall-clock time in seconds."""
        return self.wall_clock_seconds * UNIT_SECONDS

    @property
    def definitions(self) -> dict[str, dict[str, str]]:
        """Return the definition and unit of every reported statistic."""
        names = sorted({name for cell in self.cells for name in cell.statistics})
        definitions = {
            name: {"definition": definition_of(name), "unit": str(UNIT_DIMENSIONLESS)}
            for name in names
        }
        definitions["wall_clock"] = {
            "definition": "elapsed time of the experiment",
            "unit": str(UNIT_SECONDS),
        }
        return definitions

    def cell(self, n: int, beta: float) -> ReportCell:
        """Return the cell at (n, beta)."""
        for cell in self.cells:
            if cell.n == n and math.isclose(cell.beta, beta, abs_tol=1e-12):
                return cell
        raise KeyError((n, beta))

    def to_dict(self) -> dict[str, Any]:
        """Return a JSON-ready representation."""
        return {
            "config": self.config.to_dict(),
            "passed": self.passed,
            "flags": dict(sorted(self.flags.items())),
            "fits": dict(sorted(self.fits.items())),
            "cells": [cell.to_dict() for cell in self.cells],
            "definitions": self.definitions,
            "wall_clock": {"value": self.wall_clock_seconds, "unit": str(UNIT_SECONDS)},
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> ExperimentReport:
        """Rebuild a report from `to_dict` output."""
        return cls(
            config=ExperimentConfig.from_dict(data["config"]),
            cells=[ReportCell.from_dict(cell) for cell in data["cells"]],
            flags=dict(data["flags"]),
            fits=dict(data["fits"]),
            wall_clock_seconds=float(data["wall_clock"]["value"]),
        )


# Per-instance evaluation


@dataclass(frozen=True)
class _CellPlan:
    n: int
    beta: float
    beta_index: int
    scheduled: bool = False


@dataclass
class _InstanceResult:
    values: dict[str, float]
    pair: Optional[tuple[OverlapMoments, TapReport]] = None


def disorder_seed(master: int, n: int, index: int) -> int:
    """Return the seed of disorder instance `index` at size n (shared across beta)."""
    return derive_seed(master, [("n", n), ("instance", index)])


def _couplings(config: ExperimentConfig, n: int, index: int) -> Couplings:
    c = sample_couplings(n, disorder_seed(config.seed, n, index))
    return c.with_zero_diagonal() if config.zero_diagonal else c


def _chain_estimate(
    config: ExperimentConfig, c: Couplings, plan: _CellPlan, index: int
) -> McmcEstimate:
    cfg = replace(
        config.chain_config,
        seed=derive_seed(
            config.seed, [("n", plan.n), ("instance", index), ("chain", plan.beta_index)]
        ),
    )
    if cfg.ladder is None:
        return run_chain(c, plan.beta, cfg)
    ladder = tuple(sorted({*cfg.ladder, plan.beta}))
    return run_tempered(c, plan.beta, replace(cfg, ladder=ladder))


def _covariance(
    config: ExperimentConfig, c: Couplings, plan: _CellPlan, index: int
) -> tuple[SymMatrix, OverlapMoments, Optional[McmcEstimate]]:
    if config.engine is Engine.MCMC:
        estimate = _chain_estimate(config, c, plan, index)
        return estimate.c_hat, estimate.moments_hat, estimate
    summary = exact_summary(c, plan.beta)
    return summary.c, overlap_moments_exact(summary), None


def _identities(
    config: ExperimentConfig, c: Couplings, plan: _CellPlan, index: int
) -> _InstanceResult:
    summary = exact_summary(c, plan.beta, want_four_point=True)
    moments = overlap_moments_exact(summary, require_four_point=True)
    report = tap_report(summary.c, interaction_matrix(c), plan.beta)
    return _InstanceResult(
        values={"row_resid_n2": plan.n**2 * mean_row_residual(report)},
        pair=(moments, report),
    )


def _residual_sweep(
    config: ExperimentConfig, c: Couplings, plan: _CellPlan, index: int
) -> _InstanceResult:
    cov, moments, _ = _covariance(config, c, plan, index)
    report = tap_report(cov, interaction_matrix(c), plan.beta, want_rows=False)
    values = {"resid_frob_sq": report.resid_frob_sq, "n_m2": plan.n * moments.m2}
    if moments.m3 is not None:
        values["n2_m3"] = plan.n**2 * moments.m3
    return _InstanceResult(values)


def _opnorm_sweep(
    config: ExperimentConfig, c: Couplings, plan: _CellPlan, index: int
) -> _InstanceResult:
    cov, _, _ = _covariance(config, c, plan, index)
    opnorm = operator_norm(cov)
    return _InstanceResult(
        {
            "cov_opnorm": opnorm,
            "cov_opnorm_sq": opnorm * opnorm,
            "cov_frob_scaled": frobenius_norm(cov) / math.sqrt(plan.n),
        }
    )


def _critical_scan(
    config: ExperimentConfig, c: Couplings, plan: _CellPlan, index: int
) -> _InstanceResult:
    cov, moments, estimate = _covariance(config, c, plan, index)
    if estimate is None and plan.n <= OVERLAP_PMF_CAP:
        mean_abs = overlap_distribution_small(c, plan.beta).mean_abs()
    else:
        if estimate is None:
            estimate = _chain_estimate(config, c, plan, index)
        mean_abs = estimate.mean_abs_overlap
    opnorm = operator_norm(cov)
    return _InstanceResult(
        {
            "n_m2": plan.n * moments.m2,
            "sqrt_n_mean_abs": math.sqrt(plan.n) * mean_abs,
            "cov_frob_scaled": frobenius_norm(cov) / math.sqrt(plan.n),
            "cov_opnorm_sq": opnorm * opnorm,
        }
    )


def _lowtemp_scan(
    config: ExperimentConfig, c: Couplings, plan: _CellPlan, index: int
) -> _InstanceResult:
    cov, moments, _ = _covariance(config, c, plan, index)
    return _InstanceResult({"cov_opnorm": operator_norm(cov), "m2": moments.m2})


def _deriv_check(
    config: ExperimentConfig, c: Couplings, plan: _CellPlan, index: int
) -> _InstanceResult:
    rng = np.random.Generator(
        np.random.PCG64(
            derive_seed(
                config.seed,
                [("n", plan.n), ("instance", index), ("tuple", plan.beta_index)],
            )
        )
    )
    i, j, k, l = (int(x) for x in rng.integers(0, plan.n, size=4))  # noqa: E741
    summary = exact_summary(c, plan.beta, want_four_point=True)
    check = ibp_derivative_check(
        c, plan.beta, (i, j, k, l), config.deriv_step, summary=summary
    )
    return _InstanceResult({"abs_diff": check.abs_diff})


def _mcmc_validate(
    config: ExperimentConfig, c: Couplings, plan: _CellPlan, index: int
) -> _InstanceResult:
    summary = exact_summary(
        c, plan.beta, want_four_point=plan.n <= EXACT_FOUR_POINT_CAP
    )
    exact = overlap_moments_exact(summary).to_dict()
    estimate = _chain_estimate(config, c, plan, index)
    sampled = estimate.moments_hat.to_dict()
    pairs = [
        (name, sampled[name], exact[name], estimate.stderr[name])
        for name in sampled
        if sampled[name] is not None and exact[name] is not None
    ]
    if plan.n <= OVERLAP_PMF_CAP:
        pairs.append(
            (
                "abs",
                estimate.mean_abs_overlap,
                overlap_distribution_small(c, plan.beta).mean_abs(),
                estimate.stderr["abs"],
            )
        )
    values: dict[str, float] = {}
    for name, sampled_value, exact_value, stderr in pairs:
        gap = sampled_value - exact_value
        values[f"coverage_{name}"] = float(abs(gap) <= config.z_threshold * stderr)
        if stderr > 0:
            values[f"z_{name}"] = gap / stderr
    return _InstanceResult(values)


_Evaluator = Callable[[ExperimentConfig, Couplings, _CellPlan, int], _InstanceResult]

EVALUATORS: dict[ExperimentKind, _Evaluator] = {
    ExperimentKind.IDENTITIES: _identities,
    ExperimentKind.RESIDUAL_SWEEP: _residual_sweep,
    ExperimentKind.OPNORM_SWEEP: _opnorm_sweep,
    ExperimentKind.CRITICAL_SCAN: _critical_scan,
    ExperimentKind.LOWTEMP_SCAN: _lowtemp_scan,
    ExperimentKind.DERIV_CHECK: _deriv_check,
    ExperimentKind.MCMC_VALIDATE: _mcmc_validate,
}


def _evaluate(config: ExperimentConfig, plan: _CellPlan, index: int) -> _InstanceResult:
    c = _couplings(config, plan.n, index)
    return EVALUATORS[config.kind](config, c, plan, index)


# Cell assembly


def _below_critical(beta: float) -> bool:
    return Phase.of(beta) is Phase.HIGH


def _assemble_cell(
    config: ExperimentConfig, plan: _CellPlan, results: list[_InstanceResult]
) -> ReportCell:
    n, beta = plan.n, plan.beta
    cell = ReportCell(n=n, beta=beta, scheduled=plan.scheduled)
    raw: dict[str, list[float]] = {}
    for result in results:
        for name, value in result.values.items():
            raw.setdefault(name, []).append(value)
    stats = {name: accumulate(values) for name, values in raw.items()}
    high = _below_critical(beta)
    kind = config.kind

    if kind is ExperimentKind.IDENTITIES:
        pairs = [result.pair for result in results if result.pair is not None]
        for label, check, predictor in (
            ("trace", identity_trace_check(pairs, n, beta), predicted_trace),
            ("frobenius", identity_frobenius_check(pairs, n, beta), predicted_frobenius_norm_sq),
        ):
            passed = check.passes(config.z_threshold)
            cell.add(f"{label}_lhs", check.lhs, predictor(n, beta) if high else None)
            cell.add(f"{label}_rhs", check.rhs)
            cell.add(f"{label}_identity", check.diff, 0.0, check.z_score)
            cell.flags[f"{label}_identity"] = passed
        cell.add("row_resid_n2", stats["row_resid_n2"])

    elif kind is ExperimentKind.RESIDUAL_SWEEP:
        predicted = predicted_moments(n, beta) if high else None
        cell.add(
            "resid_frob_sq",
            stats["resid_frob_sq"],
            predicted_residual_constant(beta) if high else None,
        )
        cell.add("n_m2", stats["n_m2"], n * predicted.m2 if predicted else None)
        if "n2_m3" in stats:
            m3 = predicted.m3 if predicted else None
            cell.add("n2_m3", stats["n2_m3"], None if m3 is None else n * n * m3)

    elif kind is ExperimentKind.OPNORM_SWEEP:
        lower = hightemp_opnorm_lower(beta) if high else None
        above = None
        if lower is not None:
            above = stats["cov_opnorm"].mean >= lower
            cell.flags["above_lower_bound"] = above
        cell.add("cov_opnorm", stats["cov_opnorm"], lower, above)
        cell.add("cov_opnorm_sq", stats["cov_opnorm_sq"])
        cell.add("cov_frob_scaled", stats["cov_frob_scaled"])

    elif kind is ExperimentKind.DERIV_CHECK:
        worst = max(raw["abs_diff"])
        passed = worst <= DERIV_TOLERANCE
        cell.extras["max_abs_diff"] = worst
        cell.flags["derivative_match"] = passed
        cell.add("abs_diff", stats["abs_diff"], 0.0, passed)

    elif kind is ExperimentKind.MCMC_VALIDATE:
        for name, stat in stats.items():
            if name.startswith("coverage_"):
                covered = stat.mean >= MIN_COVERAGE
                cell.flags[name] = covered
                cell.add(name, stat, MIN_COVERAGE, covered)
            else:
                cell.add(name, stat, 0.0)

    else:
        for name, stat in stats.items():
            cell.add(name, stat)

    cell.statistics = dict(sorted(cell.statistics.items()))
    return cell


# Sweep-level checks


def _by_beta(cells: list[ReportCell]) -> dict[float, list[ReportCell]]:
    grouped: dict[float, list[ReportCell]] = {}
    for cell in cells:
        if not cell.scheduled:
            grouped.setdefault(cell.beta, []).append(cell)
    return {beta: sorted(group, key=lambda c: c.n) for beta, group in grouped.items()}


def _residual_flags(
    config: ExperimentConfig, cells: list[ReportCell], flags: dict[str, bool]
) -> None:
    for beta, group in _by_beta(cells).items():
        if not _below_critical(beta):
            continue
        target = predicted_residual_constant(beta)
        deviations = [abs(cell.mean("resid_frob_sq") - target) for cell in group]
        scale = target if target > 0 else 1.0
        flags[f"beta={beta}:residual_within_tolerance"] = (
            deviations[-1] <= config.residual_tolerance * scale
        )
        flags[f"beta={beta}:residual_deviation_nonincreasing"] = all(
            later <= earlier for earlier, later in zip(deviations, deviations[1:])
        )


def _opnorm_flags(
    config: ExperimentConfig, cells: list[ReportCell], flags: dict[str, bool]
) -> dict[str, float]:
    fits = {}
    for beta, group in _by_beta(cells).items():
        means = [cell.mean("cov_opnorm") for cell in group]
        variation = (max(means) - min(means)) / min(means)
        fits[f"beta={beta}:opnorm_variation"] = variation
        if _below_critical(beta):
            flags[f"beta={beta}:opnorm_bounded"] = variation < config.opnorm_variation
    return fits


def _critical_flags(cells: list[ReportCell], flags: dict[str, bool]) -> None:
    by_n: dict[int, list[ReportCell]] = {}
    for cell in cells:
        if not cell.scheduled:
            by_n.setdefault(cell.n, []).append(cell)
    for n, group in by_n.items():
        group.sort(key=lambda c: c.beta)
        if len(group) < 2:
            continue
        steps = []
        for lower, upper in zip(group, group[1:]):
            low = lower.statistics["cov_frob_scaled"].stat
            high = upper.statistics["cov_frob_scaled"].stat
            steps.append(high.mean - low.mean > MONOTONE_STDERRS * combined_stderr(low, high))
        flags[f"n={n}:frobenius_monotone"] = all(steps)


def _lowtemp_fits(
    config: ExperimentConfig, cells: list[ReportCell], flags: dict[str, bool]
) -> dict[str, float]:
    fits = {}
    for beta, group in _by_beta(cells).items():
        if len(group) < 2:
            continue
        sizes = np.log([cell.n for cell in group])
        means = [cell.mean("cov_opnorm") for cell in group]
        slope = float(np.polyfit(sizes, np.log(means), 1)[0])
        ratio = means[-1] / means[0]
        fits[f"beta={beta}:opnorm_loglog_slope"] = slope
        fits[f"beta={beta}:opnorm_ratio"] = ratio
        if Phase.of(beta) is Phase.LOW:
            flags[f"beta={beta}:opnorm_growth"] = ratio >= config.lowtemp_ratio
    return fits


def _sweep_checks(
    config: ExperimentConfig, cells: list[ReportCell]
) -> tuple[dict[str, bool], dict[str, float]]:
    flags: dict[str, bool] = {}
    fits: dict[str, float] = {}
    if config.kind is ExperimentKind.RESIDUAL_SWEEP:
        _residual_flags(config, cells, flags)
    elif config.kind is ExperimentKind.OPNORM_SWEEP:
        fits = _opnorm_flags(config, cells, flags)
    elif config.kind is ExperimentKind.CRITICAL_SCAN:
        _critical_flags(cells, flags)
    elif config.kind is ExperimentKind.LOWTEMP_SCAN:
        fits = _lowtemp_fits(config, cells, flags)
    return flags, fits


# Runner


class ExperimentRunner(EventMixin):
    """Asynchronous experiment runner backed by a thread pool."""

    def __init__(self, config: ExperimentConfig, max_workers: int | None = None) -> None:
        """Initialize an experiment runner."""
        self._config = config
        self._max_workers = worker_count(max_workers)
        self._executor: ThreadPoolExecutor | None = None

    @property
    def config(self) -> ExperimentConfig:
        """Return the experiment configuration."""
        return self._config

    @property
    def is_running(self) -> bool:
        """Return `True` if the worker pool is up."""
        return self._executor is not None

    @property
    def max_workers(self) -> int:
        """Return the worker pool size."""
        return self._max_workers

    async def start(self) -> None:
        """Start the worker pool."""
        if self.is_running:
            return
        self._executor = ThreadPoolExecutor(
            max_workers=self._max_workers, thread_name_prefix="skcov"
        )
        _LOGGER.debug("Started %s workers", self._max_workers)

    async def stop(self) -> None:
        """Shut the worker pool down."""
        if self._executor is None:
            return
        self._executor.shutdown(wait=True, cancel_futures=True)
        self._executor = None
        _LOGGER.debug("Stopped workers")

    def plan(self) -> list[_CellPlan]:
        """Return the (n, beta) cells the experiment visits."""
        config = self._config
        cells = [
            _CellPlan(n, beta, index)
            for n in config.n_list
            for index, beta in enumerate(config.beta_list)
        ]
        if config.kind is ExperimentKind.CRITICAL_SCAN:
            cells.extend(
                _CellPlan(
                    n,
                    near_critical_beta(n, config.schedule_exponent),
                    len(config.beta_list),
                    scheduled=True,
                )
                for n in config.n_list
            )
        return sorted(cells, key=lambda plan: (plan.n, plan.beta, plan.scheduled))

    async def _run_instance(self, plan: _CellPlan, index: int) -> _InstanceResult:
        loop = asyncio.get_running_loop()
        seed = disorder_seed(self._config.seed, plan.n, index)
        started = time.perf_counter()
        try:
            result = await loop.run_in_executor(
                self._executor, partial(_evaluate, self._config, plan, index)
            )
        except ConfigError:
            raise
        except (SkcovError, ArithmeticError, ValueError) as ex:
            _LOGGER.error(
                "Instance %s failed at n=%s beta=%s: %s", index, plan.n, plan.beta, ex
            )
            raise InstanceFailedError(plan.n, plan.beta, index, seed) from ex
        self.emit(
            EVENT_INSTANCE_COMPLETE,
            InstanceCompletedEvent(
                time.time(), plan.n, plan.beta, index, seed, time.perf_counter() - started
            ),
        )
        return result

    async def run(self) -> ExperimentReport:
        """Run every instance of every cell and assemble the report."""
        await self.start()
        started = time.perf_counter()
        config = self._config
        plans = self.plan()
        _LOGGER.info(
            "Running %s: %s cells x %s samples on %s workers",
            config.kind.value,
            len(plans),
            config.samples,
            self._max_workers,
        )
        results = await asyncio.gather(
            *(
                self._run_instance(plan, index)
                for plan in plans
                for index in range(config.samples)
            )
        )
        cells = []
        for position, plan in enumerate(plans):
            chunk = list(results[position * config.samples : (position + 1) * config.samples])
            cell = _assemble_cell(config, plan, chunk)
            cells.append(cell)
            self.emit(
                EVENT_CELL_COMPLETE,
                CellCompletedEvent(time.time(), plan.n, plan.beta, tuple(cell.statistics)),
            )
        flags, fits = _sweep_checks(config, cells)
        report = ExperimentReport(
            config=config,
            cells=cells,
            flags=flags,
            fits=fits,
            wall_clock_seconds=time.perf_counter() - started,
        )
        _LOGGER.info(
            "%s finished in %.1f s: %s",
            config.kind.value,
            report.wall_clock_seconds,
            "passed" if report.passed else "FAILED",
        )
        return report

    async def __aenter__(self) -> ExperimentRunner:
        """Start the worker pool."""
        await self.start()
        return self

    async def __aexit__(self, *exctype: Any) -> None:
        """Shut the worker pool down."""
        await self.stop()


async def run_async(config: ExperimentConfig) -> ExperimentReport:
    """Run an experiment and write its report when an output directory is set."""
    async with ExperimentRunner(config) as runner:
        report = await runner.run()
    if config.out_dir is not None:
        write_report(report, config.out_dir)
    return report


def run(config: ExperimentConfig) -> ExperimentReport:
    """Run an experiment synchronously."""
    return asyncio.run(run_async(config))


def _csv_cell(value: Union[float, bool, None]) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "pass" if value else "fail"
    return repr(float(value))


def write_report(report: ExperimentReport, directory: PathLike) -> tuple[Path, Path]:
    """Write `report.json` and `table.csv` into a directory."""
    target = Path(directory)
    json_path = target / REPORT_JSON
    csv_path = target / REPORT_CSV
    kind = report.config.kind.value
    try:
        target.mkdir(parents=True, exist_ok=True)
    except OSError as ex:
        raise ReportIOError(str(target)) from ex
    try:
        json_path.write_text(
            json.dumps(report.to_dict(), indent=2) + "\n", encoding="utf-8"
        )
    except OSError as ex:
        raise ReportIOError(str(json_path)) from ex
    try:
        with csv_path.open("w", newline="", encoding="utf-8") as handle:
            writer = csv.writer(handle)
            writer.writerow(REPORT_CSV_COLUMNS)
            for cell in report.cells:
                for name, statistic in cell.statistics.items():
                    writer.writerow(
                        (
                            kind,
                            cell.n,
                            repr(cell.beta),
                            name,
                            statistic.stat.count,
                            repr(statistic.stat.mean),
                            repr(statistic.stat.stderr),
                            _csv_cell(statistic.predictor),
                            _csv_cell(statistic.z_or_flag),
                        )
                    )
    except OSError as ex:
        raise ReportIOError(str(csv_path)) from ex
    _LOGGER.debug("Wrote %s and %s", json_path, csv_path)
    return json_path, csv_path
