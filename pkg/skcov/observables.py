"""TAP residual operator, exact finite-n identities and asymptotic predictors."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Iterable, Optional, Sequence, Tuple

import numpy as np
from numpy.typing import NDArray

from .const import DEFAULT_DERIV_STEP, DEFAULT_SCHEDULE_EXPONENT, EXACT_FOUR_POINT_CAP
from .disorder import Couplings, SymMatrix, tap_shift_operator
from .errors import (
    ConfigError,
    DimensionMismatchError,
    DomainError,
    EmptyEnsembleError,
    IndexRangeError,
    MissingMomentError,
)
from .gibbs_exact import ExactSummary, OverlapMoments, exact_summary
from .spectral import frobenius_norm, frobenius_norm_sq, operator_norm
from .stats import EnsembleStat, accumulate

_LOGGER = logging.getLogger(__name__)

Quadruple = Tuple[int, int, int, int]


@dataclass(frozen=True, eq=False)
class TapReport:
    """TAP residual P = ((1 + beta^2) I - beta A) C of one instance."""

    p: NDArray[np.float64]
    trace_p: float
    resid_frob_sq: float
    cov_opnorm: float
    cov_frob: float
    row_resid: Optional[NDArray[np.float64]] = field(default=None, repr=False)

    @property
    def n(self) -> int:
        """Return the number of spins."""
        return int(self.p.shape[0])

    @property
    def frob_sq(self) -> float:
        """Return ||P||_F^2."""
        return frobenius_norm_sq(self.p)

    def to_dict(self) -> dict[str, Any]:
        """Return the scalar part as a JSON-ready dict."""
        return {
            "trace_p": self.trace_p,
            "resid_frob_sq": self.resid_frob_sq,
            "cov_opnorm": self.cov_opnorm,
            "cov_frob": self.cov_frob,
        }


@dataclass(frozen=True)
class IdentityCheck:
    """Ensemble comparison of the two sides of an identity that holds on average."""

    lhs: EnsembleStat
    rhs: EnsembleStat
    diff: EnsembleStat

    @property
    def lhs_mean(self) -> float:
        """Return the mean left-hand side."""
        return self.lhs.mean

    @property
    def lhs_stderr(self) -> float:
        """Return the standard error of the left-hand side."""
        return self.lhs.stderr

    @property
    def rhs_mean(self) -> float:
        """Return the mean right-hand side."""
        return self.rhs.mean

    @property
    def rhs_stderr(self) -> float:
        """Return the standard error of the right-hand side."""
        return self.rhs.stderr

    @property
    def diff_mean(self) -> float:
        """Return the mean per-instance difference lhs - rhs."""
        return self.diff.mean

    @property
    def diff_stderr(self) -> float:
        """Return the standard error of the difference."""
        return self.diff.stderr

    @property
    def z_score(self) -> float:
        """Return diff_mean / diff_stderr.

        A difference that vanishes on every instance scores 0; a constant
        nonzero difference scores +-inf.
        """
        if self.diff_stderr > 0:
            return self.diff_mean / self.diff_stderr
        if self.diff_mean == 0:
            return 0.0
        return math.copysign(math.inf, self.diff_mean)

    def passes(self, threshold: float) -> bool:
        """Return True if |z| is within the threshold."""
        return abs(self.z_score) <= threshold

    def to_dict(self) -> dict[str, Any]:
        """Return a JSON-ready representation."""
        return {
            "lhs": self.lhs.to_dict(),
            "rhs": self.rhs.to_dict(),
            "diff": self.diff.to_dict(),
            "z_score": self.z_score,
        }


@dataclass(frozen=True)
class DerivativeCheck:
    """Finite difference of <s_i s_j> in g_kl against the integration-by-parts form."""

    indices: Quadruple
    finite_diff: float
    formula: float

    @property
    def abs_diff(self) -> float:
        """Return |finite_diff - formula|."""
        return abs(self.finite_diff - self.formula)

    def to_dict(self) -> dict[str, Any]:
        """Return a JSON-ready representation."""
        return {
            "indices": list(self.indices),
            "finite_diff": self.finite_diff,
            "formula": self.formula,
            "abs_diff": self.abs_diff,
        }


def tap_report(
    c_matrix: SymMatrix, a: SymMatrix, beta: float, *, want_rows: bool = True
) -> TapReport:
    """Evaluate the TAP residual operator and the covariance norms."""
    if c_matrix.n != a.n:
        raise DimensionMismatchError(
            f"Covariance is {c_matrix.n}x{c_matrix.n} but A is {a.n}x{a.n}"
        )
    n = c_matrix.n
    p = tap_shift_operator(beta, a).entries @ c_matrix.entries
    row_resid = None
    if want_rows:
        row_resid = p * p
        np.fill_diagonal(row_resid, 0.0)
    return TapReport(
        p=p,
        trace_p=math.fsum(np.diag(p).tolist()),
        resid_frob_sq=frobenius_norm_sq(p - np.eye(n)),
        cov_opnorm=operator_norm(c_matrix),
        cov_frob=frobenius_norm(c_matrix),
        row_resid=row_resid,
    )


def mean_row_residual(report: TapReport) -> float:
    """Return the mean squared off-diagonal residual entry."""
    n = report.n
    if report.row_resid is None:
        raise MissingMomentError("Report was computed without row residuals")
    if n < 2:
        return 0.0
    return float(np.sum(report.row_resid)) / (n * (n - 1))


def _checked_ensemble(
    ensemble: Iterable[tuple[OverlapMoments, TapReport]], n: int
) -> list[tuple[OverlapMoments, TapReport]]:
    members = list(ensemble)
    if not members:
        raise EmptyEnsembleError("Identity check needs at least one instance")
    for _, report in members:
        if report.n != n:
            raise DimensionMismatchError(f"Report for n={report.n} in an n={n} ensemble")
    return members


def _identity_check(lhs: Sequence[float], rhs: Sequence[float]) -> IdentityCheck:
    return IdentityCheck(
        lhs=accumulate(lhs),
        rhs=accumulate(rhs),
        diff=accumulate(left - right for left, right in zip(lhs, rhs)),
    )


def trace_identity_rhs(moments: OverlapMoments, n: int, beta: float) -> float:
    """Return n + n beta^2 m2."""
    return n + n * beta * beta * moments.m2


def frobenius_identity_rhs(moments: OverlapMoments, n: int, beta: float) -> float:
    """Return the overlap-moment expression whose mean equals E ||P||_F^2."""
    if moments.m3 is None or moments.m4 is None or moments.m22 is None:
        raise MissingMomentError("Frobenius identity needs m3, m4 and m22")
    if moments.m_cycle is None:
        raise MissingMomentError("Frobenius identity needs m_cycle")
    b2 = beta * beta
    b4 = b2 * b2
    n2 = n * n
    return n2 * (
        (1.0 - b2) * moments.m2
        + (4.0 * b2 * (1.0 + b2) - 6.0 * b4) * moments.m3
        + b4 * moments.m4
        - 4.0 * b4 * moments.m22
        + 6.0 * b4 * moments.m_cycle
    )


def identity_trace_check(
    ensemble: Iterable[tuple[OverlapMoments, TapReport]], n: int, beta: float
) -> IdentityCheck:
    """Compare Tr(P) with n + n beta^2 m2 over a disorder ensemble."""
    members = _checked_ensemble(ensemble, n)
    return _identity_check(
        [report.trace_p for _, report in members],
        [trace_identity_rhs(moments, n, beta) for moments, _ in members],
    )


def identity_frobenius_check(
    ensemble: Iterable[tuple[OverlapMoments, TapReport]], n: int, beta: float
) -> IdentityCheck:
    """Compare ||P||_F^2 with its overlap-moment expression over a disorder ensemble."""
    members = _checked_ensemble(ensemble, n)
    return _identity_check(
        [report.frob_sq for _, report in members],
        [frobenius_identity_rhs(moments, n, beta) for moments, _ in members],
    )


# Asymptotic predictors (high temperature only)


def _high_temperature(beta: float) -> float:
    """Return 1 - beta^2, rejecting beta outside [0, 1)."""
    if not 0 <= beta < 1:
        raise DomainError(f"Predictor is defined for 0 <= beta < 1, got {beta}")
    return 1.0 - beta * beta


@dataclass(frozen=True)
class _Expansion:
    """Coefficients of the moment expansions in powers of 1/n."""

    m2_first: float
    m2_second: float
    m3: float
    m4: float
    m22: float

    @classmethod
    def at(cls, beta: float) -> _Expansion:
        """Return the coefficients at beta."""
        d = _high_temperature(beta)
        x = beta * beta
        return cls(
            m2_first=1.0 / d,
            m2_second=-x * (1.0 + x) / d**4,
            m3=1.0 / d**3,
            m4=3.0 / d**2,
            m22=1.0 / d**2,
        )


def predicted_moments(n: int, beta: float) -> OverlapMoments:
    """Return the asymptotic overlap moments; m_cycle is 0, meaning no prediction."""
    if n < 1:
        raise ConfigError(f"System size must be positive, got {n}")
    coeff = _Expansion.at(beta)
    return OverlapMoments(
        m2=coeff.m2_first / n + coeff.m2_second / n**2,
        m3=coeff.m3 / n**2,
        m4=coeff.m4 / n**2,
        m22=coeff.m22 / n**2,
        m_cycle=0.0,
    )


def predicted_residual_constant(beta: float) -> float:
    """Return beta^2 (1 + beta^2) / (1 - beta^2)^2, the large-n E ||P - I||_F^2."""
    d = _high_temperature(beta)
    x = beta * beta
    return x * (1.0 + x) / (d * d)


def predicted_residual_limit(beta: float) -> float:
    """Return the constant term of E||P||_F^2 - 2 E Tr P + n built from the expansions.

    The terms linear in n cancel; the remainder must agree with
    `predicted_residual_constant`.
    """
    coeff = _Expansion.at(beta)
    x = beta * beta
    return (
        (1.0 - x) * coeff.m2_second
        + (4.0 * x * (1.0 + x) - 6.0 * x * x) * coeff.m3
        + x * x * coeff.m4
        - 4.0 * x * x * coeff.m22
        - 2.0 * x * coeff.m2_first
    )


def predicted_trace(n: int, beta: float) -> float:
    """Return n + beta^2 / (1 - beta^2)."""
    return n + beta * beta / _high_temperature(beta)


def predicted_frobenius_norm_sq(n: int, beta: float) -> float:
    """Return n + beta^2 (3 - beta^2) / (1 - beta^2)^2."""
    d = _high_temperature(beta)
    x = beta * beta
    return n + x * (3.0 - x) / (d * d)


def hightemp_opnorm_lower(beta: float) -> float:
    """Return sqrt(2 / (pi (1 - beta^2))), the lower bound on E ||C||_op."""
    return math.sqrt(2.0 / (math.pi * _high_temperature(beta)))


def near_critical_beta(n: int, exponent: float = DEFAULT_SCHEDULE_EXPONENT) -> float:
    """Return beta_n below 1 with 1 - beta_n^2 = n^-exponent."""
    if n < 1:
        raise ConfigError(f"System size must be positive, got {n}")
    if not 0 < exponent < 1 / 3:
        raise ConfigError(f"Schedule exponent must lie in (0, 1/3), got {exponent}")
    return math.sqrt(1.0 - n ** (-exponent))


# Integration by parts


def _check_indices(n: int, indices: Quadruple) -> None:
    if len(indices) != 4:
        raise IndexRangeError(f"Expected four indices, got {indices}")
    if any(not 0 <= index < n for index in indices):
        raise IndexRangeError(f"Indices {indices} out of range for n={n}")


def ibp_derivative_check(
    c: Couplings,
    beta: float,
    indices: Quadruple,
    step: float = DEFAULT_DERIV_STEP,
    *,
    summary: ExactSummary | None = None,
) -> DerivativeCheck:
    """Check d<s_i s_j>/dg_kl = (beta / sqrt(n)) (T_ijkl - C_ij C_kl).

    The coupling of the unordered pair {k, l} is moved by +-step and the
    two-point function is re-enumerated; both slots of g move together since
    the Hamiltonian reads the pair once. A precomputed `summary` with the
    four-point function saves one enumeration.
    """
    n = c.n
    _check_indices(n, indices)
    if not step > 0:
        raise ConfigError(f"Finite-difference step must be positive, got {step}")
    if n > EXACT_FOUR_POINT_CAP:
        raise ConfigError(f"Derivative check is capped at n={EXACT_FOUR_POINT_CAP}")
    i, j, k, l = indices  # noqa: E741
    if summary is None or summary.t is None:
        summary = exact_summary(c, beta, want_four_point=True)
    assert summary.t is not None
    two_point = summary.c.entries
    formula = (
        beta / math.sqrt(n) * (summary.t[i, j, k, l] - two_point[i, j] * two_point[k, l])
    )

    upper = exact_summary(c.perturbed(k, l, step), beta).c.entries[i, j]
    lower = exact_summary(c.perturbed(k, l, -step), beta).c.entries[i, j]
    finite_diff = (upper - lower) / (2.0 * step)
    _LOGGER.debug(
        "Derivative check %s: finite difference %.3e, formula %.3e",
        indices,
        finite_diff,
        formula,
    )
    return DerivativeCheck(
        indices=(i, j, k, l), finite_diff=float(finite_diff), formula=float(formula)
    )
