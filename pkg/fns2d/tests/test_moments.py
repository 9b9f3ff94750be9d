from __future__ import annotations

import math
from collections import Counter

import numpy as np
import pytest

from core.errors import BudgetError, DomainError, HurstMismatchError, PreconditionError
from field.spectral import mode_set
from core.math_utils import mean_stderr
from noise.fou import c_h_constant, sample_z_field, z_family
from nonlinear.moments import (
    GibbsSpec,
    bzz_fourth_moment,
    bzz_mode_variance,
    bzz_moment_threshold,
    bzz_second_moment,
    bzz_second_series,
    gibbs_spec,
    sample_mu,
    sample_mu_coeffs,
    series_verdict_bzz,
    time_average_bzz,
)
from nonlinear.wick import (
    CASE_LABELS,
    case_table,
    enumerate_pairings,
    generic_second_moments,
    generic_table,
    mode_variance,
)


# ====================
# Measure
# ====================
def test_mode_variance_vanishes_at_zero():
    np.testing.assert_allclose(mode_variance(0.5, 0.5, np.array([0, 1, 4])), [0.0, 1.0, 0.25])


def test_gibbs_spec_checks():
    with pytest.raises(HurstMismatchError):
        GibbsSpec(0.6, c_h_constant(0.5), 4)
    with pytest.raises(PreconditionError):
        gibbs_spec(0.6, 0)


def test_sample_mu_reproducible():
    spec = gibbs_spec(0.75, 3)
    assert sample_mu(spec, 5).equals(sample_mu(spec, 5))


def test_sample_mu_mode_variances():
    spec = gibbs_spec(0.6, 3)
    v = sample_mu_coeffs(spec, np.random.default_rng(17), 20000)
    m, se = mean_stderr(np.abs(v) ** 2)
    assert np.all(np.abs(m - spec.variances()) <= 4.5 * se)
    one = sample_mu(spec, np.random.default_rng(2)).coeffs
    np.testing.assert_array_equal(one, sample_mu_coeffs(spec, np.random.default_rng(2)))


@pytest.mark.parametrize("H, rho", [(0.4, -1.4), (0.75, -0.5), (0.9, -0.2)])
def test_threshold(H, rho):
    assert bzz_moment_threshold(H) == pytest.approx(rho)


@pytest.mark.parametrize("H", [0.1, 0.25])
def test_rough_noise_is_rejected(H):
    with pytest.raises(DomainError, match="1/4"):
        bzz_moment_threshold(H)
    with pytest.raises(DomainError):
        bzz_second_moment(gibbs_spec(H, 4), -1.0)


# ====================
# Second moment
# ====================
@pytest.mark.parametrize("H", [0.4, 0.75])
def test_mode_variance_matches_quadratic_forms(H):
    spec = gibbs_spec(H, 3)
    dense = generic_second_moments(3, spec.c_h.value, H)
    np.testing.assert_allclose(bzz_mode_variance(spec), dense, rtol=1e-10, atol=1e-16)


def test_second_series_is_weighted_sum():
    spec = gibbs_spec(0.75, 4)
    w = mode_set(4).mag2.astype(float) ** -0.5
    assert bzz_second_series(spec, -0.5) == pytest.approx(2.0 * np.sum(w * bzz_mode_variance(spec)))


def test_series_verdicts_at_smooth_noise():
    assert series_verdict_bzz(0.75, -1.5) == "converged"
    assert series_verdict_bzz(0.75, 0.5) == "diverged"


def test_second_moment_report_details():
    rep = bzz_second_moment(gibbs_spec(0.75, 8), -1.5, cutoffs=(8, 16, 32))
    assert rep.verdict == "converged"
    assert rep.details["cutoffs"] == (8, 16, 32)
    assert math.isnan(rep.mc_value)


@pytest.mark.parametrize("rho, want", [(-1.3, "converged"), (-1.0, "diverged")])
def test_verdicts_straddle_rough_threshold(rho, want):
    # rho < 4H - 3 = -1.2 is the finite side at H = 0.45
    assert series_verdict_bzz(0.45, rho) == want


def test_verdict_reference_is_threshold_series():
    spec = gibbs_spec(0.45, 8)
    rep = bzz_second_moment(spec, -1.3, cutoffs=(8, 16, 32))
    assert rep.details["reference_rho"] == pytest.approx(-1.2)
    assert rep.details["values"][0] == pytest.approx(bzz_second_series(spec, -1.3), rel=1e-12)
    assert rep.details["increment_ratio"] < rep.details["reference_ratio"]


@pytest.mark.slow
@pytest.mark.parametrize("H, rho", [(0.75, -0.75), (0.4, -1.5)])
def test_second_moment_monte_carlo(H, rho):
    rep = bzz_second_moment(gibbs_spec(H, 4), rho, replicas=4000, seed=3)
    assert abs(rep.mc_value - rep.series_value) <= 4.0 * rep.mc_stderr


# ====================
# Fourth moment
# ====================
def test_pairing_enumeration():
    pairings = enumerate_pairings()
    assert len(pairings) == 60
    assert sum(p.disconnected for p in pairings) == 4
    assert Counter(p.case for p in pairings) == {c: 10 for c in CASE_LABELS}


@pytest.mark.parametrize("H", [0.4, 0.75])
def test_engines_agree(H):
    c = c_h_constant(H).value
    dense = generic_table(2, c, H)
    cases = case_table(2, c, H)
    np.testing.assert_allclose(cases.total, dense, rtol=1e-9, atol=1e-14 * np.abs(dense).max())


def test_disconnected_pairings_factor():
    spec = gibbs_spec(0.75, 3)
    ct = case_table(3, spec.c_h.value, spec.H)
    v = bzz_mode_variance(spec)
    np.testing.assert_allclose(ct.disconnected, np.outer(v, v), rtol=1e-10, atol=1e-18)


def test_fourth_moment_diagonal_is_squared_second():
    rep = bzz_fourth_moment(gibbs_spec(0.75, 3), -0.75)
    assert rep.details["diagonal"] == pytest.approx(rep.details["second_moment_sq"], rel=1e-10)
    assert rep.series_value >= rep.details["diagonal"]
    assert sum(rep.details["cases"].values()) == pytest.approx(rep.series_value, rel=1e-10)


def test_generic_engine_budget():
    with pytest.raises(BudgetError):
        generic_table(6, 0.5, 0.75)


def test_unknown_engine():
    with pytest.raises(PreconditionError, match="engine"):
        bzz_fourth_moment(gibbs_spec(0.75, 2), -0.75, engine="other")


@pytest.mark.slow
def test_fourth_moment_monte_carlo():
    rep = bzz_fourth_moment(gibbs_spec(0.75, 3), -0.75, replicas=20000, seed=4)
    assert abs(rep.mc_value - rep.series_value) <= 4.0 * rep.mc_stderr


# ====================
# Stationarity link
# ====================
@pytest.mark.slow
def test_time_average_along_z_matches_static_series():
    H, N, rho = 0.6, 3, -0.5
    t = np.arange(101) * 0.1
    means = []
    for seed in range(10):
        fam = z_family(H, N, t[-1], 0.1, seed=seed)
        mean, _ = time_average_bzz(sample_z_field(H, N, fam, t), rho)
        means.append(mean)
    # independent seeds; the paths themselves carry long memory
    m, se = mean_stderr(np.array(means))
    assert abs(m - bzz_second_series(gibbs_spec(H, N), rho)) <= 4.0 * se
