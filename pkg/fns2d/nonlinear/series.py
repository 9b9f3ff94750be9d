from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from config import CFG
from core.errors import BudgetError, DomainError, PreconditionError
from core.math_utils import fitted_bound, loglog_slope, rel_change, series_verdict
from core.parallel import pmap
from field.spectral import WaveIndex
from noise.fbm import hurst

log = logging.getLogger(__name__)

_C = math.sqrt(2.0) / 2.0


@dataclass(frozen=True)
class SeriesValue:
    value: float
    tail_bound: float
    R: int


def radial_tail(a: float, rho: float) -> float:
    """Upper bound of sum_{|h| >= rho} |h|^{-a} by a shifted radial integral (a > 2)."""
    if a <= 2.0:
        raise DomainError(f"tail exponent {a} does not give a convergent lattice sum")
    t = rho - 2.0 * _C
    if t <= 0:
        raise PreconditionError(f"tail radius {rho} too small")
    return 2.0 * math.pi * (t ** (2.0 - a) / (a - 2.0) + _C * t ** (1.0 - a) / (a - 1.0))


def _square(R: int) -> tuple[np.ndarray, np.ndarray]:
    r = np.arange(-R, R + 1)
    a, b = np.meshgrid(r, r, indexing="ij")
    return a.ravel(), b.ravel()


def _default_R(k: WaveIndex) -> int:
    return 4 * math.ceil(k.mag) + 2


def _check_R(k: WaveIndex, R: int):
    if R + 1 < 2 * k.mag:
        raise PreconditionError(f"truncation R={R} must satisfy R + 1 >= 2|k| = {2 * k.mag:.2f}")


# ====================
# Single sums
# ====================
def lemma1_sum(k: WaveIndex, H, R: int | None = None) -> SeriesValue:
    """sum_{h != 0, k} |h|^{-4H} |k-h|^{-4H} over the square of side R, plus a tail bound."""
    h = hurst(H)
    if h <= 0.25:
        raise DomainError("the sum converges only for H > 1/4")
    if k.is_zero:
        raise PreconditionError("k must be nonzero")
    R = _default_R(k) if R is None else int(R)
    _check_R(k, R)
    h1, h2 = _square(R)
    a2 = (h1 * h1 + h2 * h2).astype(float)
    d1, d2 = k.k1 - h1, k.k2 - h2
    b2 = (d1 * d1 + d2 * d2).astype(float)
    ok = (a2 > 0) & (b2 > 0)
    terms = np.where(ok, np.where(ok, a2, 1.0) ** (-2.0 * h) * np.where(ok, b2, 1.0) ** (-2.0 * h), 0.0)
    tail = 2.0 ** (4.0 * h) * radial_tail(8.0 * h, R + 1)
    return SeriesValue(float(terms.sum()), tail, R)


def lemma1_expected_exponent(H) -> tuple[float, int]:
    """(exponent, power of ln|k|) of the decay of the single sum."""
    h = hurst(H)
    if h <= 0.25:
        raise DomainError("the sum converges only for H > 1/4")
    if h < 0.5:
        return -(8.0 * h - 2.0), 0
    if h == 0.5:
        return -2.0, 1
    return -4.0 * h, 0


def lemma2_window(h: float, rho: float):
    if not (0.5 < h < 1.0 and -1.0 < rho < 2.0 * (h - 1.0)):
        raise DomainError(f"(H, rho) = ({h}, {rho}) outside 1/2 < H < 1, -1 < rho < 2(H-1)")


def lemma2_sum(k: WaveIndex, H, rho: float, R: int | None = None) -> SeriesValue:
    """sum_{h != 0, k} |h|^{2 rho + 2 - 4H} |k-h|^{-4H}, plus a tail bound."""
    h = hurst(H)
    lemma2_window(h, rho)
    if k.is_zero:
        raise PreconditionError("k must be nonzero")
    R = _default_R(k) if R is None else int(R)
    _check_R(k, R)
    a = 4.0 * h - 2.0 * rho - 2.0
    h1, h2 = _square(R)
    a2 = (h1 * h1 + h2 * h2).astype(float)
    d1, d2 = k.k1 - h1, k.k2 - h2
    b2 = (d1 * d1 + d2 * d2).astype(float)
    ok = (a2 > 0) & (b2 > 0)
    terms = np.where(ok, np.where(ok, a2, 1.0) ** (-a / 2.0) * np.where(ok, b2, 1.0) ** (-2.0 * h), 0.0)
    tail = 2.0 ** (4.0 * h) * radial_tail(a + 4.0 * h, R + 1)
    return SeriesValue(float(terms.sum()), tail, R)


def lemma2_expected_exponent(H, rho: float) -> float:
    return -(4.0 * hurst(H) - 2.0 * rho - 2.0)


@dataclass(frozen=True)
class ScalingFit:
    slope: float
    expected: float
    bound_constant: float
    ks: tuple[float, ...]
    values: tuple[float, ...]

    def within(self, tol: float = 0.15) -> bool:
        return abs(self.slope - self.expected) <= tol


def lemma_scaling_fit(which: str, H, rho: float = 0.0, k_grid: Sequence[int] = CFG.LEMMA_K_GRID,
                      threads: int = 1) -> ScalingFit:
    """Log-log slope of the single sums along k = (n, 0) and the fitted bound constant."""
    h = hurst(H)
    ks = [WaveIndex(int(n), 0) for n in k_grid]
    if which == "lemma1":
        vals = pmap(lambda k: lemma1_sum(k, h).value, ks, threads)
        expected, logpow = lemma1_expected_exponent(h)
    elif which == "lemma2":
        vals = pmap(lambda k: lemma2_sum(k, h, rho).value, ks, threads)
        expected, logpow = lemma2_expected_exponent(h, rho), 0
    else:
        raise PreconditionError(f"unknown series {which!r}")
    x = np.asarray([k.mag for k in ks])
    y = np.asarray(vals)
    if logpow:
        # borderline case: fit S(k) |k|^2 / ln|k| against a flat profile
        slope, _ = loglog_slope(x, y * x ** 2 / np.log(x))
        slope += expected
        bound = fitted_bound(x, y / np.log(x), expected)
    else:
        slope, _ = loglog_slope(x, y)
        bound = fitted_bound(x, y, expected)
    return ScalingFit(slope, expected, bound, tuple(x.tolist()), tuple(y.tolist()))


# ====================
# Triple sum
# ====================
def lemma3_window(H, rho: float):
    h = hurst(H)
    lower = 0.25 < h < 0.5 and rho < 4.0 * h - 3.0
    upper = 0.5 <= h < 1.0 and rho < 2.0 * (h - 1.0)
    if not (lower or upper):
        raise DomainError(f"(H, rho) = ({h}, {rho}) violates rho < 4H-3 (H < 1/2) or rho < 2(H-1) (H >= 1/2)")


def _kernel(d2: np.ndarray, e: float) -> np.ndarray:
    # |h-l|^{2 rho + 2}; the h = l term is 0 for e > 0 and 1 otherwise
    safe = np.where(d2 > 0, d2, 1.0)
    return np.where(d2 > 0, safe ** (e / 2.0), 0.0 if e > 0 else 1.0)


def lemma3_term(j: WaveIndex, h: WaveIndex, l: WaveIndex, H, rho: float) -> float:
    hh = hurst(H)
    e = 2.0 * rho + 2.0
    if j.is_zero or h.is_zero or l.is_zero or h == j or l == j:
        return 0.0
    fh = float(h.mag2) ** (-2.0 * hh) * float((h - j).mag2) ** (-2.0 * hh)
    fl = float(l.mag2) ** (-2.0 * hh) * float((l - j).mag2) ** (-2.0 * hh)
    k = float(_kernel(np.asarray(float((h - l).mag2)), e))
    return float(j.mag2) ** (e / 2.0) * (fh * fl) * k


def lemma3_sum(H, rho: float, R: int, max_R: int = CFG.LEMMA3_MAX_R, threads: int = 1) -> float:
    """Truncated triple sum over j, h, l in the square of side R.

    For fixed j the inner double sum is the quadratic form f^T K f with
    f(h) = |h|^{-4H}|h-j|^{-4H} and K(h-l) = |h-l|^{2 rho+2}; K * f is an FFT
    convolution on a padded grid.
    """
    h = hurst(H)
    lemma3_window(h, rho)
    if R > max_R:
        raise BudgetError(f"triple sum truncation R={R} exceeds the budget {max_R}")
    e = 2.0 * rho + 2.0
    size = 4 * R + 2
    r = np.arange(-R, R + 1)
    h1, h2 = np.meshgrid(r, r, indexing="ij")
    a2 = (h1 * h1 + h2 * h2).astype(float)

    off = np.fft.fftfreq(size, d=1.0 / size)
    o1, o2 = np.meshgrid(off, off, indexing="ij")
    kfft = np.fft.fft2(_kernel(o1 * o1 + o2 * o2, e))

    def inner(jj: tuple[int, int]) -> float:
        j1, j2 = jj
        b2 = ((h1 - j1) ** 2 + (h2 - j2) ** 2).astype(float)
        ok = (a2 > 0) & (b2 > 0)
        f = np.where(ok, np.where(ok, a2, 1.0) ** (-2.0 * h) * np.where(ok, b2, 1.0) ** (-2.0 * h), 0.0)
        pad = np.zeros((size, size))
        pad[:2 * R + 1, :2 * R + 1] = f
        conv = np.real(np.fft.ifft2(np.fft.fft2(pad) * kfft))[:2 * R + 1, :2 * R + 1]
        return float((j1 * j1 + j2 * j2) ** (e / 2.0) * np.sum(f * conv))

    js = [(int(a), int(b)) for a, b in zip(h1.ravel(), h2.ravel()) if (a, b) != (0, 0)]
    return float(sum(pmap(inner, js, threads)))


def lemma3_factorized_bound(H, rho: float, R: int) -> float:
    """sum_j |j|^{2 rho+2} (inner single sum)^2, the comparison series of the convergence proof."""
    h = hurst(H)
    lemma3_window(h, rho)
    e = 2.0 * rho + 2.0
    r = np.arange(-R, R + 1)
    h1, h2 = (a.ravel() for a in np.meshgrid(r, r, indexing="ij"))
    a2 = (h1 * h1 + h2 * h2).astype(float)
    total = 0.0
    for j1, j2 in zip(h1, h2):
        if j1 == 0 and j2 == 0:
            continue
        b2 = ((h1 - j1) ** 2 + (h2 - j2) ** 2).astype(float)
        ok = (a2 > 0) & (b2 > 0)
        hw = np.where(ok, a2, 1.0) ** ((e if e > 0 else 0.0) / 2.0 - 2.0 * h)
        s = np.sum(np.where(ok, hw * np.where(ok, b2, 1.0) ** (-2.0 * h), 0.0))
        total += float(j1 * j1 + j2 * j2) ** (e / 2.0) * s * s
    return total


@dataclass(frozen=True)
class Lemma3Report:
    H: float
    rho: float
    Rs: tuple[int, ...]
    values: tuple[float, ...]
    rel_change: float
    verdict: str

    def stable(self, tol: float = 0.05) -> bool:
        """Relative change over the last truncation doubling below ``tol``."""
        return self.rel_change < tol


def lemma3_report(H, rho: float, Rs: Sequence[int] = (6, 12, 24), max_R: int = CFG.LEMMA3_MAX_R,
                  threads: int = 1) -> Lemma3Report:
    Rs = tuple(sorted(int(x) for x in Rs))
    values = [lemma3_sum(H, rho, R, max_R, threads) for R in Rs]
    v = series_verdict(Rs, values)
    change = rel_change(values[-2], values[-1])
    log.info("triple sum H=%.3f rho=%.3f: %s (last change %.3f)", hurst(H), rho, v.verdict, change)
    return Lemma3Report(hurst(H), float(rho), Rs, tuple(values), change, v.verdict)
