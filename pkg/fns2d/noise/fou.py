from __future__ import annotations

import logging
import math
import threading
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np
from scipy import integrate, signal, special, stats

from config import CFG
from core.errors import (
    HurstMismatchError,
    PreconditionError,
    QuadratureError,
    UnresolvedDecayError,
)
from core.math_utils import mean_stderr, series_verdict
from core.parallel import pmap
from core.rng import replica_stream
from field.spectral import NormSpec, WaveIndex, besov_norm_coeffs, mode_set
from field.trajectory import Trajectory
from noise.fbm import ComplexFbmFamily, FbmPath, hurst, sample_family, sample_fbm

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class OuParams:
    lam: float
    H: float

    def __post_init__(self):
        if not self.lam > 0:
            raise PreconditionError(f"decay rate must be positive, got {self.lam}")
        hurst(self.H)


@dataclass(frozen=True)
class ChConstant:
    H: float
    value: float
    quadrature_error: float


# ====================
# C_H
# ====================
_CH_CACHE: dict[tuple[float, float], ChConstant] = {}
_CH_LOCK = threading.Lock()


def c_h_closed_form(H) -> float:
    # r - s is Laplace for independent unit exponentials, so E|r-s|^{2H} = Gamma(2H+1)
    return 0.5 * math.gamma(2.0 * hurst(H) + 1.0)


def _c_h_tail(H: float, R: float) -> float:
    # |C(r,s)| <= r^H s^H, and the region outside [0,R]^2 is covered by two strips
    a = H + 1.0
    return 2.0 * math.gamma(a) * math.gamma(a) * special.gammaincc(a, R)


def c_h_constant(H, tol: float = 1e-6, R: float = CFG.CH_TRUNCATION) -> ChConstant:
    h = hurst(H)
    if tol <= 0:
        raise PreconditionError(f"tol must be positive, got {tol}")
    key = (h, float(tol))
    with _CH_LOCK:
        hit = _CH_CACHE.get(key)
    if hit is not None:
        return hit

    h2 = 2.0 * h

    def f(s, r):
        return math.exp(-r - s) * 0.5 * (r ** h2 + s ** h2 - (r - s) ** h2)

    # symmetric integrand: twice the triangle s <= r keeps the |r-s| kink on the boundary
    val, err = integrate.dblquad(f, 0.0, R, 0.0, lambda r: r, epsabs=tol / 10.0, epsrel=1e-12)
    value = 2.0 * val
    bound = 2.0 * err + _c_h_tail(h, R)
    if not bound <= tol:
        raise QuadratureError(f"C_H quadrature at H={h} did not reach tol={tol}", bound)
    out = ChConstant(h, value, bound)
    with _CH_LOCK:
        _CH_CACHE.setdefault(key, out)
    log.debug("C_H(%.4f) = %.12f (bound %.2e)", h, value, bound)
    return out


def c_h_monte_carlo(H, T: float = 30.0, dt: float = 0.01, replicas: int = 20000,
                    seed: int = 0, chunk: int = 2000, threads: int = 1) -> tuple[float, float]:
    """Variance of e^{-T} b(T) + int_0^T e^{-r} b(r) dr; returns (estimate, stderr)."""
    h = hurst(H)
    L = int(round(T / dt))
    t = dt * np.arange(L + 1)
    w = np.exp(-t)
    sizes = [min(chunk, replicas - i) for i in range(0, replicas, chunk)]

    def one(i):
        p = sample_fbm(h, L, dt, replica_stream(seed, 11, i), sizes[i])
        b = p.values
        return w[-1] * b[:, -1] + np.trapezoid(w * b, t, axis=-1)

    x = np.concatenate(pmap(one, range(len(sizes)), threads))
    m, se = mean_stderr(x * x)
    return float(m), float(se)


def stationary_variance(params: OuParams, chc: ChConstant) -> float:
    if chc.H != params.H:
        raise HurstMismatchError(f"C_H computed for H={chc.H}, mode has H={params.H}")
    return chc.value * params.lam ** (-2.0 * params.H)


def burn_in_time(lam: float, trunc_tol: float = CFG.TRUNC_TOL) -> float:
    return max(1.0, -math.log(trunc_tol) / lam)


# ====================
# Per-mode convolution
# ====================
@dataclass
class FouModeState:
    """Running value of int_{-inf}^t e^{-lam(t-s)} db(s) for one mode."""
    value: complex
    mode: WaveIndex
    last_time: float

    @property
    def lam(self) -> float:
        return float(self.mode.mag2)

    def advance(self, times: np.ndarray, path: np.ndarray) -> complex:
        """Advance to times[-1] along the piecewise-linear path sampled at ``times``.

        times[0] must equal last_time. Each segment contributes the exact
        integration-by-parts value b(t+h) - e^{-lam h} b(t) - lam int e^{-lam(t+h-s)} b(s) ds.
        """
        times = np.asarray(times, dtype=float)
        if not math.isclose(times[0], self.last_time, rel_tol=0.0, abs_tol=1e-12):
            raise PreconditionError(f"state is at t={self.last_time}, path starts at {times[0]}")
        h = np.diff(times)
        phi = -np.expm1(-self.lam * h) / (self.lam * h)
        kick = phi * np.diff(np.asarray(path))
        decay_after = np.exp(-self.lam * (times[-1] - times[1:]))
        self.value = complex(math.exp(-self.lam * (times[-1] - times[0])) * self.value
                             + np.sum(decay_after * kick))
        self.last_time = float(times[-1])
        return self.value


def _check_resolved(lam: float, dt: float, max_lambda_dt: float):
    if lam * dt > max_lambda_dt + 1e-12:
        raise UnresolvedDecayError(f"lambda*dt = {lam * dt:.4f} exceeds {max_lambda_dt}")


def sample_fou_path(params: OuParams, path: FbmPath, t_grid: Sequence[float],
                    trunc_tol: float = CFG.TRUNC_TOL, max_lambda_dt: float = CFG.MAX_LAMBDA_DT) -> np.ndarray:
    """z on t_grid (leading replica axes kept), started from z(path.t0) = 0."""
    lam, dt = params.lam, path.dt
    _check_resolved(lam, dt, max_lambda_dt)
    t_grid = np.asarray(t_grid, dtype=float)
    pos = (t_grid - path.t0) / dt
    idx = np.rint(pos).astype(np.int64)
    if np.any(np.abs(pos - idx) > 1e-6) or idx.min() < 0 or idx.max() > path.steps:
        raise PreconditionError("t_grid is not a subset of the driving path grid")
    burn = t_grid[0] - path.t0
    if math.exp(-lam * burn) > trunc_tol:
        log.warning("burn-in %.3f too short for lambda=%.3f: neglected past weight %.2e",
                    burn, lam, math.exp(-lam * burn))
    e = math.exp(-lam * dt)
    phi = -math.expm1(-lam * dt) / (lam * dt)
    x = phi * path.increments()
    z = signal.lfilter([1.0], [1.0, -e], x, axis=-1)
    z = np.concatenate([np.zeros(z.shape[:-1] + (1,)), z], axis=-1)
    return z[..., idx]


def sample_z_coeffs(family: ComplexFbmFamily, t_grid: Sequence[float],
                    trunc_tol: float = CFG.TRUNC_TOL, max_lambda_dt: float = CFG.MAX_LAMBDA_DT,
                    threads: int = 1) -> np.ndarray:
    """Stationary convolution for every stored mode, shape (..., T, n+)."""
    H = family.hurst

    def one(k: WaveIndex):
        p = OuParams(float(k.mag2), H)
        re, im = family.complex_path(k)
        return (sample_fou_path(p, re, t_grid, trunc_tol, max_lambda_dt)
                + 1j * sample_fou_path(p, im, t_grid, trunc_tol, max_lambda_dt))

    cols = pmap(one, list(family.modes()), threads)
    return np.stack(cols, axis=-1)


def z_family(H, cutoff: int, t_final: float, dt: float, seed: int, replicas: Optional[int] = None,
             trunc_tol: float = CFG.TRUNC_TOL, max_lambda_dt: float = CFG.MAX_LAMBDA_DT, amplitude: float = 1.0) -> ComplexFbmFamily:
    steps = max(1, int(round(t_final / dt)))
    return sample_family(H, cutoff, steps, dt, seed, replicas=replicas, burn_tol=trunc_tol,
                         max_lambda_dt=max_lambda_dt, amplitude=amplitude)


def sample_z_field(H, cutoff: int, family: ComplexFbmFamily, t_grid: Sequence[float],
                   trunc_tol: float = CFG.TRUNC_TOL, max_lambda_dt: float = CFG.MAX_LAMBDA_DT, threads: int = 1) -> Trajectory:
    if family.cutoff < cutoff:
        raise PreconditionError(f"family cutoff {family.cutoff} does not cover {cutoff}")
    if hurst(H) != family.hurst:
        raise PreconditionError(f"family has H={family.hurst}, asked for H={H}")
    if family.replicas is not None:
        raise PreconditionError("sample_z_field takes a single-replica family")
    if family.cutoff != cutoff:
        family = replace(family, cutoff=cutoff)
    t_grid = np.asarray(t_grid, dtype=float)
    c = sample_z_coeffs(family, t_grid, trunc_tol, max_lambda_dt, threads)
    jump = Trajectory(t_grid, cutoff, c).max_jump(0.0)
    return Trajectory(t_grid, cutoff, c, diagnostics={"max_jump_h0": jump})


# ====================
# Regularity diagnostics
# ====================
def z_series(H, cutoff: int, r: float, chc: Optional[ChConstant] = None) -> float:
    """Truncated E||z||^2_{H^r} = sum over Z^2_0 of 2 C_H |k|^{2r-4H}."""
    h = hurst(H)
    c = (chc or c_h_constant(h)).value
    ms = mode_set(cutoff)
    return float(2.0 * np.sum(2.0 * c * ms.mag2.astype(float) ** (r - 2.0 * h)))


@dataclass(frozen=True)
class RegularityRow:
    H: float
    r: float
    N: int
    series_value: float
    mc_value: float
    mc_stderr: float
    verdict: str


def z_regularity_report(H, cutoffs: Sequence[int], r_grid: Sequence[float], replicas: int,
                        seed: int = 0, mc_cutoff: Optional[int] = None, dt: float = 0.05,
                        trunc_tol: float = CFG.TRUNC_TOL, threads: int = 1) -> list[RegularityRow]:
    h = hurst(H)
    cutoffs = sorted(int(n) for n in cutoffs)
    if len(cutoffs) < 3:
        raise PreconditionError("z_regularity_report needs at least 3 cutoffs")
    chc = c_h_constant(h)
    mc_n = cutoffs[0] if mc_cutoff is None else int(mc_cutoff)

    mc: dict[float, tuple[float, float]] = {}
    if replicas >= 2:
        fam = z_family(h, mc_n, dt, dt, seed, replicas=replicas, trunc_tol=trunc_tol)
        z0 = sample_z_coeffs(fam, [0.0], trunc_tol, threads=threads)[:, 0, :]
        ms = mode_set(mc_n)
        for r in r_grid:
            sq = 2.0 * np.sum(ms.mag2.astype(float) ** r * np.abs(z0) ** 2, axis=-1)
            m, se = mean_stderr(sq)
            mc[r] = (float(m), float(se))

    rows = []
    for r in r_grid:
        values = [z_series(h, n, r, chc) for n in cutoffs]
        verdict = series_verdict(cutoffs, values).verdict
        for n, v in zip(cutoffs, values):
            m, se = mc.get(r, (math.nan, math.nan)) if n == mc_n else (math.nan, math.nan)
            rows.append(RegularityRow(h, float(r), n, v, m, se, verdict))
    return rows


def z_besov_report(traj: Trajectory, s: float, pq: Sequence[tuple[float, float]]) -> list[tuple[float, float, float]]:
    """Dyadic Besov proxies sup_t ||z(t)||_{B^s_{p,q}}; reported, never asserted."""
    out = []
    for p, q in pq:
        vals = besov_norm_coeffs(traj.coeffs, traj.cutoff, NormSpec("besov", s, p, q))
        out.append((float(p), float(q), float(np.max(vals))))
    return out


def stationary_samples(H, lam: float, replicas: int, seed: int = 0, dt: float = 0.01,
                       trunc_tol: float = CFG.TRUNC_TOL, tag: int = 21, chunk: int = 2000,
                       threads: int = 1) -> np.ndarray:
    """Draws of the burn-in convolution at t = 0 for rate lam, one per replica."""
    h = hurst(H)
    step = min(dt, CFG.MAX_LAMBDA_DT / lam)
    L = int(math.ceil(burn_in_time(lam, trunc_tol) / step))
    params = OuParams(float(lam), h)
    sizes = [min(chunk, replicas - i) for i in range(0, replicas, chunk)]

    def one(i):
        p = sample_fbm(h, L, step, replica_stream(seed, tag, i), sizes[i], t0=-L * step)
        return sample_fou_path(params, p, [0.0], trunc_tol)[:, 0]

    return np.concatenate(pmap(one, range(len(sizes)), threads))


@dataclass(frozen=True)
class VarianceRow:
    H: float
    lam: float
    theory: float
    mc_value: float
    mc_stderr: float

    @property
    def within(self) -> bool:
        return abs(self.mc_value - self.theory) <= 4.0 * self.mc_stderr


def fou_variance_check(H, lams: Sequence[float], replicas: int, seed: int = 0,
                       tol: float = 1e-6, threads: int = 1) -> list[VarianceRow]:
    """Empirical stationary variance against C_H lam^{-2H} for every rate."""
    chc = c_h_constant(H, tol)
    rows = []
    for i, lam in enumerate(lams):
        x = stationary_samples(chc.H, lam, replicas, seed, tag=100 + i, threads=threads)
        m, se = mean_stderr(x * x)
        rows.append(VarianceRow(chc.H, float(lam), stationary_variance(OuParams(float(lam), chc.H), chc),
                                float(m), float(se)))
    return rows


def law_equality_check(H, lam: float, replicas: int = 4000, seed: int = 0,
                       dt: float = 0.01, trunc_tol: float = CFG.TRUNC_TOL) -> float:
    """KS p-value between the burn-in convolution at rate lam and lam^{-H} times the unit-rate one."""
    h = hurst(H)
    a = stationary_samples(h, float(lam), replicas, seed, dt, trunc_tol, tag=21)
    b = lam ** (-h) * stationary_samples(h, 1.0, replicas, seed, dt, trunc_tol, tag=22)
    return float(stats.ks_2samp(a, b).pvalue)
