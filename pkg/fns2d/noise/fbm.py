from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Iterator, Optional, Sequence

import numpy as np
from scipy.linalg import LinAlgError, cholesky, toeplitz

from config import CFG
from core.csvio import write_table
from core.errors import CholeskyFailure, CirculantEmbeddingError, PreconditionError
from core.rng import mode_stream
from field.spectral import WaveIndex, mode_set

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class HurstParam:
    H: float

    def __post_init__(self):
        if not (0.0 < float(self.H) < 1.0):
            raise PreconditionError(f"Hurst parameter must lie in (0,1), got {self.H}")


def hurst(H) -> float:
    return float(H.H) if isinstance(H, HurstParam) else HurstParam(float(H)).H


def fbm_covariance(t: float, s: float, H) -> float:
    h2 = 2.0 * hurst(H)
    return 0.5 * (abs(t) ** h2 + abs(s) ** h2 - abs(t - s) ** h2)


def fgn_autocov(n: np.ndarray, H: float) -> np.ndarray:
    n = np.abs(np.asarray(n, dtype=float))
    h2 = 2.0 * H
    return 0.5 * (np.abs(n + 1) ** h2 - 2.0 * n ** h2 + np.abs(n - 1) ** h2)


@dataclass(frozen=True, eq=False)
class FbmPath:
    """b(t0 + n dt), n = 0..L, with b(t0) = 0; values may carry leading replica axes."""
    t0: float
    dt: float
    values: np.ndarray
    H: float = 0.5

    @property
    def steps(self) -> int:
        return self.values.shape[-1] - 1

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.steps + 1)

    def increments(self) -> np.ndarray:
        return np.diff(self.values, axis=-1)


# ====================
# Exact samplers
# ====================
@lru_cache(maxsize=64)
def _circulant_sqrt(H: float, L: int, tol: float) -> np.ndarray:
    gamma = fgn_autocov(np.arange(L + 1), H)
    row = np.concatenate([gamma, gamma[-2:0:-1]])
    eig = np.real(np.fft.fft(row))
    if eig.min() < -tol * max(1.0, eig.max()):
        raise CirculantEmbeddingError(f"circulant embedding indefinite at H={H}, L={L}", float(eig.min()))
    out = np.sqrt(np.clip(eig, 0.0, None) / row.size)
    out.setflags(write=False)
    return out


@lru_cache(maxsize=16)
def _cholesky_factor(H: float, L: int) -> np.ndarray:
    cov = toeplitz(fgn_autocov(np.arange(L), H))
    try:
        f = cholesky(cov, lower=True)
    except LinAlgError as exc:
        raise CholeskyFailure(f"fGn covariance not positive definite at H={H}, L={L}",
                              float(np.linalg.cond(cov))) from exc
    f.setflags(write=False)
    return f


def fgn(H: float, L: int, rng: np.random.Generator, size: tuple[int, ...] = (),
        method: str = "auto", tol: float = CFG.FBM_EIG_TOL) -> np.ndarray:
    """Unit-step fractional Gaussian noise, shape size + (L,)."""
    sq = None
    if method != "cholesky":
        try:
            sq = _circulant_sqrt(H, L, tol)
        except CirculantEmbeddingError:
            if method == "circulant":
                raise
            log.warning("circulant embedding indefinite at H=%.4f L=%d, falling back to Cholesky", H, L)
    if sq is None:
        z = rng.standard_normal(size + (L,))
        return z @ _cholesky_factor(H, L).T
    n = sq.size
    w = sq * (rng.standard_normal(size + (n,)) + 1j * rng.standard_normal(size + (n,)))
    return np.real(np.fft.fft(w, axis=-1))[..., :L]


def sample_fbm(H, L: int, dt: float, seed, replicas: Optional[int] = None,
               t0: float = 0.0, method: str = "auto") -> FbmPath:
    h = hurst(H)
    if L < 1:
        raise PreconditionError(f"need at least one step, got L={L}")
    if dt <= 0:
        raise PreconditionError(f"dt must be positive, got {dt}")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    size = () if replicas is None else (int(replicas),)
    inc = fgn(h, L, rng, size, method) * dt ** h
    zero = np.zeros(size + (1,))
    return FbmPath(float(t0), float(dt), np.concatenate([zero, np.cumsum(inc, axis=-1)], axis=-1), h)


# ====================
# Complex family
# ====================
@dataclass(frozen=True)
class ComplexFbmFamily:
    """Lazy per-mode complex fBms b_k = b_k^re + i b_k^im for k in Z^2_+.

    Every mode owns the stream (seed, k1, k2, component), so paths do not
    depend on the cutoff or on the order of evaluation. With ``burn_tol`` the
    path of mode k starts T_burn(k) earlier; with ``max_lambda_dt`` its step
    is refined so that |k|^2 dt_k stays below the bound.
    """
    hurst: float
    cutoff: int
    steps: int
    dt: float
    seed: int
    t0: float = 0.0
    amplitude: float = 1.0
    replicas: Optional[int] = None
    burn_tol: Optional[float] = None
    max_lambda_dt: Optional[float] = None

    def refine(self, k: WaveIndex) -> int:
        if self.max_lambda_dt is None:
            return 1
        return max(1, math.ceil(self.dt * k.mag2 / self.max_lambda_dt - 1e-12))

    def burn_steps(self, k: WaveIndex) -> int:
        if self.burn_tol is None:
            return 0
        t_burn = max(1.0, -math.log(self.burn_tol) / k.mag2)
        return math.ceil(t_burn / self.dt - 1e-9)

    def path(self, k: WaveIndex, component: str) -> FbmPath:
        if not k.in_upper or k.maxnorm() > self.cutoff:
            raise PreconditionError(f"mode {k} is not a stored index of cutoff {self.cutoff}")
        r = self.refine(k)
        nb = self.burn_steps(k)
        L = r * (self.steps + nb)
        dt = self.dt / r
        t0 = self.t0 - nb * self.dt
        if self.amplitude == 0.0:
            size = () if self.replicas is None else (self.replicas,)
            return FbmPath(t0, dt, np.zeros(size + (L + 1,)), self.hurst)
        p = sample_fbm(self.hurst, L, dt, mode_stream(self.seed, k.k1, k.k2, component),
                       self.replicas, t0)
        if self.amplitude != 1.0:
            p = FbmPath(p.t0, p.dt, self.amplitude * p.values, p.H)
        return p

    def complex_path(self, k: WaveIndex) -> tuple[FbmPath, FbmPath]:
        return self.path(k, "re"), self.path(k, "im")

    def modes(self) -> Iterator[WaveIndex]:
        yield from mode_set(self.cutoff).waves()


def sample_family(H, cutoff: int, L: int, dt: float, seed: int, **kw) -> ComplexFbmFamily:
    if L < 1:
        raise PreconditionError(f"need at least one step, got L={L}")
    if dt <= 0:
        raise PreconditionError(f"dt must be positive, got {dt}")
    return ComplexFbmFamily(hurst(H), int(cutoff), int(L), float(dt), int(seed), **kw)


# ====================
# Dumps
# ====================
def write_path(path: str | Path, p: FbmPath, manifest: Sequence[str] = ()) -> Path:
    if p.values.ndim != 1:
        raise PreconditionError("path dump takes a single replica")
    return write_table(path, ("t", "value"), zip(p.times.tolist(), p.values.tolist()), manifest)


def write_family(path: str | Path, fam: ComplexFbmFamily, manifest: Sequence[str] = ()) -> Path:
    def rows():
        for k in fam.modes():
            re, im = fam.complex_path(k)
            for t, a, b in zip(re.times.tolist(), re.values.tolist(), im.values.tolist()):
                yield (k.k1, k.k2, t, a, b)
    return write_table(path, ("k1", "k2", "t", "re", "im"), rows(), manifest)
