from __future__ import annotations

import itertools

import pytest

from core.errors import BudgetError, DomainError, PreconditionError
from field.spectral import WaveIndex
from nonlinear.series import (
    Lemma3Report,
    lemma1_expected_exponent,
    lemma1_sum,
    lemma2_expected_exponent,
    lemma2_sum,
    lemma3_factorized_bound,
    lemma3_report,
    lemma3_sum,
    lemma3_term,
    lemma3_window,
    lemma_scaling_fit,
    radial_tail,
)


def test_radial_tail_domain():
    with pytest.raises(DomainError):
        radial_tail(2.0, 10.0)
    with pytest.raises(PreconditionError):
        radial_tail(4.0, 1.0)
    assert radial_tail(6.0, 20.0) < radial_tail(6.0, 10.0)


# ====================
# Single sums
# ====================
@pytest.mark.parametrize("H", [0.4, 0.5, 0.75])
def test_lemma1_tail_bounds_the_remainder(H):
    k = WaveIndex(3, 1)
    small = lemma1_sum(k, H)
    big = lemma1_sum(k, H, R=80)
    assert small.R == 4 * 4 + 2
    assert small.value < big.value <= small.value + small.tail_bound


def test_lemma1_rejects_rough_noise_and_short_boxes():
    with pytest.raises(DomainError, match="1/4"):
        lemma1_sum(WaveIndex(1, 0), 0.25)
    with pytest.raises(PreconditionError, match="R"):
        lemma1_sum(WaveIndex(10, 0), 0.75, R=5)
    with pytest.raises(PreconditionError):
        lemma1_sum(WaveIndex(0, 0), 0.75)


def test_lemma1_exponents():
    assert lemma1_expected_exponent(0.4) == (pytest.approx(-1.2), 0)
    assert lemma1_expected_exponent(0.5) == (-2.0, 1)
    assert lemma1_expected_exponent(0.75) == (-3.0, 0)


@pytest.mark.parametrize("H, tol", [(0.4, 0.15), (0.75, 0.2)])
def test_lemma1_scaling(H, tol):
    # k in [8, 64]; the slope at H = 0.4 sits near -1.07 against -1.2
    fit = lemma_scaling_fit("lemma1", H)
    assert fit.within(tol)
    assert fit.bound_constant > 0.0


def test_lemma1_borderline_scaling():
    fit = lemma_scaling_fit("lemma1", 0.5)
    assert fit.expected == -2.0
    assert fit.within(0.2)


def test_lemma2_window_and_value():
    with pytest.raises(DomainError):
        lemma2_sum(WaveIndex(2, 0), 0.4, -0.5)
    with pytest.raises(DomainError):
        lemma2_sum(WaveIndex(2, 0), 0.75, -0.25)
    k = WaveIndex(2, 0)
    small = lemma2_sum(k, 0.75, -0.75)
    big = lemma2_sum(k, 0.75, -0.75, R=60)
    assert small.value < big.value <= small.value + small.tail_bound
    assert lemma2_expected_exponent(0.75, -0.75) == pytest.approx(-2.5)


def test_lemma2_scaling():
    assert lemma_scaling_fit("lemma2", 0.75, rho=-0.75).within(0.2)


def test_unknown_series():
    with pytest.raises(PreconditionError):
        lemma_scaling_fit("lemma4", 0.75)


# ====================
# Triple sum
# ====================
def test_lemma3_window():
    lemma3_window(0.4, -1.5)
    lemma3_window(0.75, -0.75)
    with pytest.raises(DomainError):
        lemma3_window(0.4, -1.0)
    with pytest.raises(DomainError):
        lemma3_window(0.2, -3.0)


def test_lemma3_term_symmetry():
    j, h, l = WaveIndex(1, 2), WaveIndex(-1, 1), WaveIndex(2, -3)
    assert lemma3_term(j, h, l, 0.75, -0.8) == lemma3_term(j, l, h, 0.75, -0.8)
    assert lemma3_term(j, j, l, 0.75, -0.8) == 0.0


@pytest.mark.parametrize("rho", [-0.8, -1.2])
def test_lemma3_fft_matches_loops(rho):
    H, R = 0.75, 2
    pts = [WaveIndex(a, b) for a in range(-R, R + 1) for b in range(-R, R + 1)]
    brute = sum(lemma3_term(j, h, l, H, rho) for j, h, l in itertools.product(pts, repeat=3))
    assert lemma3_sum(H, rho, R) == pytest.approx(brute, rel=1e-10)


def test_lemma3_budget():
    with pytest.raises(BudgetError):
        lemma3_sum(0.75, -1.0, 30, max_R=24)


def test_factorized_bound_dominates_for_negative_kernel():
    # 2 rho + 2 < 0: |h-l|^{2 rho+2} <= 1
    assert lemma3_factorized_bound(0.75, -1.2, 4) >= lemma3_sum(0.75, -1.2, 4)


def test_lemma3_report_converges_inside_window():
    rep = lemma3_report(0.75, -1.5, Rs=(4, 8, 16))
    assert rep.verdict == "converged"
    assert rep.values[0] < rep.values[-1]


@pytest.mark.parametrize("change, ok", [(0.0021, True), (0.049, True), (0.05, False), (0.3, False)])
def test_lemma3_stability_rule(change, ok):
    rep = Lemma3Report(0.75, -0.75, (6, 12, 24), (1.0, 1.1, 1.1), change, "converged")
    assert rep.stable() == ok
