from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from core.errors import AliasingError, CutoffMismatchError, PreconditionError
from core.rng import replica_stream
from field.spectral import (
    TWO_PI,
    FourierField,
    NormSpec,
    WaveIndex,
    besov_norm,
    coeffs_to_spectrum,
    embed,
    grid_to_coeffs,
    mode_set,
    random_field,
    sobolev_norm,
    sobolev_sq,
    spectrum_to_grid,
    to_box,
    wavenumbers,
)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class GammaCoefficient:
    h: WaveIndex
    k: WaveIndex
    value: float


@dataclass(frozen=True)
class TrilinearValue:
    value: float

    def __float__(self) -> float:
        return self.value


# ====================
# Interaction coefficients
# ====================
def gamma_array(h1, h2, k1, k2) -> np.ndarray:
    """Vectorised gamma_{h,k}; zero where h = 0 or h = k or k = 0."""
    h1, h2, k1, k2 = (np.asarray(a, dtype=np.int64) for a in (h1, h2, k1, k2))
    d1, d2 = k1 - h1, k2 - h2
    num = (-h2 * k1 + h1 * k2) * (d1 * k1 + d2 * k2)
    hh, dd, kk = h1 * h1 + h2 * h2, d1 * d1 + d2 * d2, k1 * k1 + k2 * k2
    ok = (hh > 0) & (dd > 0) & (kk > 0)
    den = TWO_PI * np.sqrt(np.where(ok, hh, 1)) * np.sqrt(np.where(ok, dd, 1)) * np.sqrt(np.where(ok, kk, 1))
    return np.where(ok, num / den, 0.0)


def gamma(h: WaveIndex, k: WaveIndex) -> float:
    if h.is_zero or k.is_zero:
        raise PreconditionError("gamma needs h != 0 and k != 0")
    if h == k:
        raise PreconditionError("gamma_{h,k} is undefined for h = k (|k-h| = 0)")
    return float(gamma_array(h.k1, h.k2, k.k1, k.k2))


def gamma_coefficient(h: WaveIndex, k: WaveIndex) -> GammaCoefficient:
    return GammaCoefficient(h, k, gamma(h, k))


# ====================
# Convolution oracle
# ====================
def _box_offsets(cutoff: int) -> tuple[np.ndarray, np.ndarray]:
    r = np.arange(-cutoff, cutoff + 1)
    a, b = np.meshgrid(r, r, indexing="ij")
    return a.ravel(), b.ravel()


def _convolve(ubox: np.ndarray, vbox: np.ndarray, k1: np.ndarray, k2: np.ndarray,
              h1: np.ndarray, h2: np.ndarray, cutoff: int) -> np.ndarray:
    """i sum_h gamma_{h,k} u_h v_{k-h} for each row k, h taken in the given order."""
    n = cutoff
    g = gamma_array(h1[None, :], h2[None, :], k1[:, None], k2[:, None])
    d1, d2 = k1[:, None] - h1[None, :], k2[:, None] - h2[None, :]
    inside = (np.abs(d1) <= n) & (np.abs(d2) <= n)
    g = np.where(inside, g, 0.0)
    d1c, d2c = np.clip(d1, -n, n) + n, np.clip(d2, -n, n) + n
    uh = ubox[..., h1 + n, h2 + n][..., None, :]
    vkh = vbox[..., d1c, d2c]
    return 1j * np.sum(g * uh * vkh, axis=-1)


def bilinear_direct_pair(uc: np.ndarray, vc: np.ndarray, cutoff: int,
                         chunk: int = 256) -> tuple[np.ndarray, np.ndarray]:
    """B_k for k in Z^2_+ and, independently, B_{-k}; both shape (..., n+)."""
    ms = mode_set(cutoff)
    ubox, vbox = to_box(uc, cutoff), to_box(vc, cutoff)
    h1, h2 = _box_offsets(cutoff)
    upper, lower = [], []
    for s in range(0, ms.size, chunk):
        k1, k2 = ms.k1[s:s + chunk], ms.k2[s:s + chunk]
        upper.append(_convolve(ubox, vbox, k1, k2, h1, h2, cutoff))
        # mirrored row: h runs over -h in the same order
        lower.append(_convolve(ubox, vbox, -k1, -k2, -h1, -h2, cutoff))
    return np.concatenate(upper, axis=-1), np.concatenate(lower, axis=-1)


def bilinear_direct_coeffs(uc: np.ndarray, vc: np.ndarray, cutoff: int) -> np.ndarray:
    up, low = bilinear_direct_pair(uc, vc, cutoff)
    if not np.array_equal(np.conj(up), -low):
        raise AssertionError("conj(B_k) = -B_{-k} violated")
    return up


def bilinear_direct(u: FourierField, v: FourierField) -> FourierField:
    if u.cutoff != v.cutoff:
        raise CutoffMismatchError(u.cutoff, v.cutoff)
    return FourierField(u.cutoff, bilinear_direct_coeffs(u.coeffs, v.coeffs, u.cutoff))


def truncation_mass(u: FourierField, v: FourierField) -> float:
    """H^0 mass of B(u,v) on modes the cutoff discards."""
    if u.cutoff != v.cutoff:
        raise CutoffMismatchError(u.cutoff, v.cutoff)
    n2 = 2 * u.cutoff
    full = bilinear_fft(embed(u, n2), embed(v, n2))
    kept = embed(full, u.cutoff)
    return float(max(0.0, sobolev_norm(full, 0.0) ** 2 - sobolev_norm(kept, 0.0) ** 2))


# ====================
# Pseudo-spectral kernel
# ====================
def dealias_grid(cutoff: int) -> int:
    return 3 * cutoff + 1


def bilinear_fft_coeffs(uc: np.ndarray, vc: np.ndarray, cutoff: int, m: int | None = None) -> np.ndarray:
    """P[(u.grad) v] on a zero-padded grid; exact on the retained band for M > 3N."""
    m = dealias_grid(cutoff) if m is None else int(m)
    if m <= 3 * cutoff:
        raise AliasingError(f"dealiased product needs M > 3N = {3 * cutoff}, got {m}")
    kx, ky = wavenumbers(m)
    us = coeffs_to_spectrum(uc, cutoff, m)
    vs = coeffs_to_spectrum(vc, cutoff, m)
    u = spectrum_to_grid(us)
    dx = spectrum_to_grid(1j * kx * vs)
    dy = spectrum_to_grid(1j * ky * vs)
    w = u[..., 0:1, :, :] * dx + u[..., 1:2, :, :] * dy
    return grid_to_coeffs(w, cutoff)


def bilinear_fft(u: FourierField, v: FourierField, m: int | None = None,
                 dealias: str = "two-thirds") -> FourierField:
    if u.cutoff != v.cutoff:
        raise CutoffMismatchError(u.cutoff, v.cutoff)
    if dealias != "two-thirds":
        raise PreconditionError(f"unknown dealias rule {dealias!r}")
    return FourierField(u.cutoff, bilinear_fft_coeffs(u.coeffs, v.coeffs, u.cutoff, m))


def trilinear_coeffs(u1: np.ndarray, u2: np.ndarray, u3: np.ndarray, cutoff: int) -> np.ndarray:
    """<B(u1,u2),u3> evaluated at doubled cutoff (batched)."""
    n2 = 2 * cutoff
    src, dst = mode_set(cutoff), mode_set(n2)
    slots = dst.box_slot[src.k1 + n2, src.k2 + n2]

    def up(c):
        out = np.zeros(np.shape(c)[:-1] + (dst.size,), dtype=np.complex128)
        out[..., slots] = c
        return out

    b = bilinear_fft_coeffs(up(u1), up(u2), n2)[..., slots]
    return 2.0 * np.real(np.sum(b * np.conj(u3), axis=-1))


def trilinear(u1: FourierField, u2: FourierField, u3: FourierField) -> TrilinearValue:
    for f in (u2, u3):
        if f.cutoff != u1.cutoff:
            raise CutoffMismatchError(u1.cutoff, f.cutoff)
    return TrilinearValue(float(trilinear_coeffs(u1.coeffs, u2.coeffs, u3.coeffs, u1.cutoff)))


# ====================
# Product-estimate diagnostics
# ====================
def giga_admissible(delta: float, theta: float, rho: float) -> bool:
    return (0.0 <= delta < 2.0 and rho > 0.0 and theta > 0.0
            and rho + delta > 1.0 and theta + rho + delta >= 2.0)


def giga_ratio_report(cutoff: int, delta: float, theta: float, rho: float,
                      samples: int = 50, seed: int = 0, decay: float = 1.0) -> dict:
    """Ensemble of ||B(u,v)||_{-delta} / (||u||_theta ||v||_rho); a fitted constant, not a check."""
    if not giga_admissible(delta, theta, rho):
        raise PreconditionError(f"(delta, theta, rho) = ({delta}, {theta}, {rho}) outside the admissible region")
    ratios = []
    for i in range(samples):
        rng = replica_stream(seed, 31, i)
        u = random_field(cutoff, rng, decay)
        v = random_field(cutoff, rng, decay)
        b = bilinear_fft(u, v)
        ratios.append(sobolev_norm(b, -delta) / (sobolev_norm(u, theta) * sobolev_norm(v, rho)))
    r = np.asarray(ratios)
    return {"max": float(r.max()), "median": float(np.median(r)), "min": float(r.min())}


def chemin_admissible(s1: float, s2: float, p: float) -> bool:
    return s1 + s2 > 0.0 and s1 < 2.0 / p and s2 < 2.0 / p


def chemin_ratio_report(cutoff: int, s1: float, s2: float, p: float = 2.0, q: float = 2.0,
                        samples: int = 20, seed: int = 0, decay: float = 1.0) -> dict:
    """||B(u,v)||_{B^{s-1}} / (||u||_{B^{s1}} ||v||_{B^{s2}}) with s = s1 + s2 - 2/p."""
    if not chemin_admissible(s1, s2, p):
        raise PreconditionError(f"(s1, s2, p) = ({s1}, {s2}, {p}) outside the product-estimate region")
    s = s1 + s2 - 2.0 / p
    ratios = []
    for i in range(samples):
        rng = replica_stream(seed, 32, i)
        u = random_field(cutoff, rng, decay)
        v = random_field(cutoff, rng, decay)
        b = bilinear_fft(u, v)
        num = besov_norm(b, NormSpec("besov", s - 1.0, p, q))
        den = besov_norm(u, NormSpec("besov", s1, p, q)) * besov_norm(v, NormSpec("besov", s2, p, q))
        ratios.append(num / den)
    r = np.asarray(ratios)
    log.info("chemin ratio over %d samples: max %.4g", samples, r.max())
    return {"s": s, "max": float(r.max()), "median": float(np.median(r))}


def energy_scale(*fields: FourierField) -> float:
    """Product of H^1 norms; the natural size of a trilinear pairing."""
    return math.prod(math.sqrt(float(sobolev_sq(f.coeffs, f.cutoff, 1.0))) for f in fields)
