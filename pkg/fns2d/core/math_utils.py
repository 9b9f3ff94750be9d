from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


def rel_change(old: float, new: float) -> float:
    den = max(abs(old), abs(new))
    if den == 0.0:
        return 0.0
    return abs(new - old) / den


def mean_stderr(samples, axis: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Sample mean and its standard error along ``axis``."""
    x = np.asarray(samples, dtype=float)
    n = x.shape[axis]
    mean = x.mean(axis=axis)
    if n < 2:
        return mean, np.full_like(mean, np.inf)
    return mean, x.std(axis=axis, ddof=1) / math.sqrt(n)


def within_se(value: float, target: float, stderr: float, n_se: float = 4.0) -> bool:
    return abs(value - target) <= n_se * stderr


def loglog_slope(x, y) -> tuple[float, float]:
    """Least-squares fit of log y = a + b log x; returns (b, exp(a))."""
    lx = np.log(np.asarray(x, dtype=float))
    ly = np.log(np.asarray(y, dtype=float))
    b, a = np.polyfit(lx, ly, 1)
    return float(b), float(math.exp(a))


def fitted_bound(x, y, exponent: float) -> float:
    """Smallest M with y <= M x**exponent on the sample."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    return float(np.max(y / x ** exponent))


def power_mean(values, beta: float, weight: float) -> float:
    v = np.asarray(values, dtype=float)
    if math.isinf(beta):
        return float(v.max()) if v.size else 0.0
    return float((weight * np.sum(v ** beta)) ** (1.0 / beta))


def lattice_sum_reference(cutoffs, exponent: float = -2.0) -> np.ndarray:
    """Partial sums of sum |k|^exponent over the square max(|k1|,|k2|) <= N, k != 0."""
    out = []
    for n in cutoffs:
        r = np.arange(-n, n + 1)
        k1, k2 = np.meshgrid(r, r, indexing="ij")
        m2 = (k1 * k1 + k2 * k2).astype(float)
        m2[n, n] = np.inf
        out.append(float(np.sum(m2 ** (exponent / 2.0))))
    return np.asarray(out)


# ====================
# Series verdicts
# ====================
@dataclass(frozen=True)
class SeriesVerdict:
    verdict: str
    values: tuple[float, ...]
    rel_changes: tuple[float, ...]
    increment_ratio: float
    reference_ratio: float


def series_verdict(cutoffs, values, reference=None) -> SeriesVerdict:
    """Classify partial sums over successive cutoff doublings.

    The last increment ratio d_{j+1}/d_j is compared with the same ratio of
    the borderline lattice sum |k|^-2 on the same cutoffs (or ``reference``):
    faster decay than the borderline reads as converged.
    """
    cutoffs = list(cutoffs)
    v = [float(x) for x in values]
    if len(v) < 3:
        raise ValueError("at least 3 cutoffs are needed for a verdict")
    ref = lattice_sum_reference(cutoffs) if reference is None else np.asarray(reference, dtype=float)
    d = np.diff(v)
    dref = np.diff(ref)
    q = abs(d[-1]) / abs(d[-2]) if d[-2] != 0 else (0.0 if d[-1] == 0 else math.inf)
    qref = dref[-1] / dref[-2]
    changes = tuple(rel_change(a, b) for a, b in zip(v[:-1], v[1:]))
    verdict = "converged" if q < qref else "diverged"
    return SeriesVerdict(verdict, tuple(v), changes, float(q), float(qref))
