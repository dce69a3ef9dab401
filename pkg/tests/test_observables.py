"""Test the TAP residual, the finite-n identities and the predictors."""

from __future__ import annotations

import math

import numpy as np
import pytest

from skcov.disorder import Couplings, interaction_matrix, sample_couplings
from skcov.errors import (
    ConfigError,
    DimensionMismatchError,
    DomainError,
    EmptyEnsembleError,
    IndexRangeError,
    MissingMomentError,
)
from skcov.gibbs_exact import OverlapMoments, exact_summary, overlap_moments_exact
from skcov.observables import (
    IdentityCheck,
    TapReport,
    frobenius_identity_rhs,
    hightemp_opnorm_lower,
    ibp_derivative_check,
    identity_frobenius_check,
    identity_trace_check,
    mean_row_residual,
    near_critical_beta,
    predicted_frobenius_norm_sq,
    predicted_moments,
    predicted_residual_constant,
    predicted_residual_limit,
    predicted_trace,
    tap_report,
)
from skcov.stats import EnsembleStat


def _instance(c: Couplings, beta: float) -> tuple[OverlapMoments, TapReport]:
    summary = exact_summary(c, beta, want_four_point=True)
    report = tap_report(summary.c, interaction_matrix(c), beta)
    return overlap_moments_exact(summary), report


def _ensemble(n: int, beta: float, count: int) -> list[tuple[OverlapMoments, TapReport]]:
    return [_instance(sample_couplings(n, 500 + seed), beta) for seed in range(count)]


def test_tap_report_infinite_temperature(couplings: Couplings) -> None:
    """Test beta=0 leaves P = C."""
    summary = exact_summary(couplings, 0.0)
    report = tap_report(summary.c, interaction_matrix(couplings), 0.0)
    assert np.array_equal(report.p, summary.c.entries)
    assert report.n == 6
    assert report.trace_p == 6.0
    assert report.resid_frob_sq == 0.0
    assert report.cov_opnorm == pytest.approx(1.0)
    assert report.frob_sq == 6.0
    assert mean_row_residual(report) == 0.0


def test_tap_report_single_spin() -> None:
    """Test the scalar case P = 1 + beta^2 - beta g."""
    c = sample_couplings(1, 8)
    beta = 0.6
    summary = exact_summary(c, beta)
    report = tap_report(summary.c, interaction_matrix(c), beta)
    expected = 1 + beta * beta - beta * c.g[0, 0]
    assert report.trace_p == pytest.approx(expected)
    assert report.resid_frob_sq == pytest.approx((expected - 1) ** 2)
    assert mean_row_residual(report) == 0.0


def test_tap_report_two_spins(pair_couplings: Couplings) -> None:
    """Test the n=2 trace against the closed form of C."""
    beta = 0.7
    a = interaction_matrix(pair_couplings).entries
    t = math.tanh(beta * pair_couplings.g[0, 1] / math.sqrt(2))
    summary = exact_summary(pair_couplings, beta)
    report = tap_report(summary.c, interaction_matrix(pair_couplings), beta)
    expected = 2 * (1 + beta * beta) - beta * (a[0, 0] + a[1, 1] + 2 * a[0, 1] * t)
    assert report.trace_p == pytest.approx(expected, abs=1e-12)
    assert report.cov_opnorm == pytest.approx(1 + abs(t))
    assert report.cov_frob == pytest.approx(math.sqrt(2 + 2 * t * t))


def test_tap_report_norms(couplings: Couplings) -> None:
    """Test ||C||_op <= ||C||_F <= sqrt(n) ||C||_op and the row residuals."""
    summary = exact_summary(couplings, 0.9)
    report = tap_report(summary.c, interaction_matrix(couplings), 0.9)
    assert 1.0 - 1e-9 <= report.cov_opnorm <= report.cov_frob + 1e-12
    assert report.cov_frob <= math.sqrt(6) * report.cov_opnorm + 1e-12
    off = report.p - np.diag(np.diag(report.p))
    assert mean_row_residual(report) == pytest.approx(np.sum(off * off) / 30)
    assert set(report.to_dict()) == {"trace_p", "resid_frob_sq", "cov_opnorm", "cov_frob"}

    bare = tap_report(summary.c, interaction_matrix(couplings), 0.9, want_rows=False)
    with pytest.raises(MissingMomentError):
        mean_row_residual(bare)
    with pytest.raises(DimensionMismatchError):
        tap_report(summary.c, interaction_matrix(sample_couplings(5, 1)), 0.9)


def test_identities_at_infinite_temperature() -> None:
    """Test both identities hold instance by instance at beta=0."""
    ensemble = _ensemble(5, 0.0, 4)
    trace = identity_trace_check(ensemble, 5, 0.0)
    frobenius = identity_frobenius_check(ensemble, 5, 0.0)
    assert trace.lhs_mean == pytest.approx(5.0)
    assert abs(trace.diff_mean) <= 1e-12
    assert abs(frobenius.diff_mean) <= 1e-12
    assert frobenius.rhs_mean == pytest.approx(5.0)


def test_identities_hold_on_average() -> None:
    """Test a small ensemble stays within four standard errors."""
    ensemble = _ensemble(6, 0.5, 40)
    for check in (
        identity_trace_check(ensemble, 6, 0.5),
        identity_frobenius_check(ensemble, 6, 0.5),
    ):
        assert check.diff.count == 40
        assert check.diff_stderr > 0
        assert check.passes(4.0), check.to_dict()


def test_identity_check_errors(couplings: Couplings) -> None:
    """Test empty ensembles, mixed sizes and missing moments."""
    with pytest.raises(EmptyEnsembleError):
        identity_trace_check([], 6, 0.5)
    with pytest.raises(DimensionMismatchError):
        identity_trace_check([_instance(couplings, 0.5)], 5, 0.5)
    with pytest.raises(MissingMomentError):
        frobenius_identity_rhs(OverlapMoments(m2=0.2, m3=0.1), 6, 0.5)


def test_z_score() -> None:
    """Test the z-score including a zero standard error."""
    zero = EnsembleStat(3, 0.0, 0.0)
    check = IdentityCheck(zero, zero, EnsembleStat(4, 1.0, 4.0))
    assert check.z_score == 1.0
    assert check.passes(1.0)
    assert IdentityCheck(zero, zero, zero).z_score == 0.0
    assert IdentityCheck(zero, zero, EnsembleStat(3, -0.5, 0.0)).z_score == -math.inf
    assert not IdentityCheck(zero, zero, EnsembleStat(3, 0.5, 0.0)).passes(4.0)


def test_predictor_constants() -> None:
    """Test the predictors at reference temperatures."""
    assert predicted_residual_constant(0.0) == 0.0
    assert predicted_residual_constant(0.5) == pytest.approx(0.55556, abs=1e-5)
    assert predicted_residual_constant(0.8) == pytest.approx(8.0988, abs=1e-4)
    assert hightemp_opnorm_lower(0.0) == pytest.approx(0.79788, abs=1e-5)
    assert hightemp_opnorm_lower(0.8) == pytest.approx(1.3298, abs=1e-4)
    assert predicted_trace(10, 0.5) == pytest.approx(10 + 1 / 3)
    assert predicted_frobenius_norm_sq(10, 0.5) == pytest.approx(10 + 0.6875 / 0.5625)


def test_predicted_moments() -> None:
    """Test the leading and subleading overlap coefficients."""
    n = 10**6
    moments = predicted_moments(n, 0.5)
    assert n * moments.m2 == pytest.approx(4 / 3, abs=1e-5)
    second = (moments.m2 - 4 / (3 * n)) * n * n
    assert second == pytest.approx(-0.98765, abs=1e-4)
    assert moments.m_cycle == 0.0
    assert moments.m_multi is None
    assert predicted_moments(4, 0.0).m2 == 0.25
    with pytest.raises(ConfigError):
        predicted_moments(0, 0.5)


@pytest.mark.parametrize("beta", [0.0, 0.3, 0.5, 0.7])
def test_residual_limit_matches_constant(beta: float) -> None:
    """Test the moment expansions reproduce the residual constant."""
    constant = predicted_residual_constant(beta)
    assert predicted_residual_limit(beta) == pytest.approx(constant, abs=1e-9)
    n = 50
    combined = predicted_frobenius_norm_sq(n, beta) - 2 * predicted_trace(n, beta) + n
    assert combined == pytest.approx(constant, abs=1e-9)


@pytest.mark.parametrize("beta", [1.0, 1.5, -0.1])
def test_predictors_reject_low_temperature(beta: float) -> None:
    """Test predictors outside 0 <= beta < 1."""
    for predictor in (
        predicted_residual_constant,
        predicted_residual_limit,
        hightemp_opnorm_lower,
    ):
        with pytest.raises(DomainError):
            predictor(beta)
    with pytest.raises(DomainError):
        predicted_moments(10, beta)


def test_near_critical_beta() -> None:
    """Test the schedule 1 - beta_n^2 = n^-exponent."""
    assert near_critical_beta(16) == pytest.approx(math.sqrt(0.5))
    assert near_critical_beta(1) == 0.0
    assert near_critical_beta(100) < near_critical_beta(1000) < 1.0
    with pytest.raises(ConfigError):
        near_critical_beta(16, 0.5)
    with pytest.raises(ConfigError):
        near_critical_beta(0)


def test_ibp_diagonal_coupling(couplings: Couplings) -> None:
    """Test moving a diagonal coupling changes nothing."""
    check = ibp_derivative_check(couplings, 0.7, (0, 1, 3, 3))
    assert check.finite_diff == 0.0
    assert check.formula == 0.0
    assert check.abs_diff == 0.0


def test_ibp_own_pair(couplings: Couplings) -> None:
    """Test d<s_i s_j>/dg_ij = (beta / sqrt(n)) (1 - C_ij^2)."""
    beta = 0.7
    check = ibp_derivative_check(couplings, beta, (1, 4, 1, 4))
    c14 = exact_summary(couplings, beta).c.entries[1, 4]
    assert check.formula == pytest.approx(beta / math.sqrt(6) * (1 - c14 * c14), abs=1e-12)
    assert check.abs_diff <= 1e-6
    assert check.to_dict()["indices"] == [1, 4, 1, 4]


def test_ibp_random_tuples(couplings: Couplings) -> None:
    """Test random index tuples against the finite difference."""
    summary = exact_summary(couplings, 0.7, want_four_point=True)
    rng = np.random.default_rng(12)
    for _ in range(10):
        i, j, k, l = (int(x) for x in rng.integers(0, 6, size=4))  # noqa: E741
        check = ibp_derivative_check(couplings, 0.7, (i, j, k, l), summary=summary)
        assert check.abs_diff <= 1e-6, check.to_dict()


def test_ibp_rejects(couplings: Couplings) -> None:
    """Test invalid indices and settings."""
    with pytest.raises(IndexRangeError):
        ibp_derivative_check(couplings, 0.7, (0, 1, 2, 6))
    with pytest.raises(IndexRangeError):
        ibp_derivative_check(couplings, 0.7, (0, 1, 2))  # type: ignore[arg-type]
    with pytest.raises(ConfigError):
        ibp_derivative_check(couplings, 0.7, (0, 1, 2, 3), step=0.0)
    with pytest.raises(ConfigError):
        ibp_derivative_check(sample_couplings(15, 1), 0.7, (0, 1, 2, 3))
