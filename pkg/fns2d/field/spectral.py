from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from core.errors import (
    AliasingError,
    CutoffMismatchError,
    DegenerateResolutionError,
    PreconditionError,
)

TWO_PI = 2.0 * math.pi


# ====================
# Wave indices
# ====================
@dataclass(frozen=True)
class WaveIndex:
    k1: int
    k2: int

    @property
    def mag2(self) -> int:
        return self.k1 * self.k1 + self.k2 * self.k2

    @property
    def mag(self) -> float:
        return math.sqrt(self.mag2)

    @property
    def is_zero(self) -> bool:
        return self.k1 == 0 and self.k2 == 0

    @property
    def in_upper(self) -> bool:
        # Z^2_+ : k1 > 0, or k1 == 0 and k2 > 0
        return self.k1 > 0 or (self.k1 == 0 and self.k2 > 0)

    def perp(self) -> tuple[int, int]:
        return (-self.k2, self.k1)

    def __neg__(self) -> "WaveIndex":
        return WaveIndex(-self.k1, -self.k2)

    def __sub__(self, other: "WaveIndex") -> "WaveIndex":
        return WaveIndex(self.k1 - other.k1, self.k2 - other.k2)

    def __add__(self, other: "WaveIndex") -> "WaveIndex":
        return WaveIndex(self.k1 + other.k1, self.k2 + other.k2)

    def maxnorm(self) -> int:
        return max(abs(self.k1), abs(self.k2))


@dataclass(frozen=True, eq=False)
class ModeSet:
    """Z^2_+ indices of the square truncation max(|k1|,|k2|) <= N."""
    cutoff: int
    k1: np.ndarray
    k2: np.ndarray
    mag2: np.ndarray
    mag: np.ndarray
    box_slot: np.ndarray  # (2N+1, 2N+1): storage slot of k or of -k
    box_sign: np.ndarray  # +1 where k is stored, -1 where -k is stored, 0 at k=0

    @property
    def size(self) -> int:
        return int(self.k1.size)

    def index(self, k: WaveIndex) -> int:
        if not k.in_upper or k.maxnorm() > self.cutoff:
            raise KeyError(k)
        return int(self.box_slot[k.k1 + self.cutoff, k.k2 + self.cutoff])

    def waves(self) -> list[WaveIndex]:
        return [WaveIndex(int(a), int(b)) for a, b in zip(self.k1, self.k2)]


@lru_cache(maxsize=None)
def mode_set(cutoff: int) -> ModeSet:
    if cutoff < 0:
        raise PreconditionError(f"cutoff must be >= 0, got {cutoff}")
    n = cutoff
    k1 = [0] * n + [a for a in range(1, n + 1) for _ in range(2 * n + 1)]
    k2 = list(range(1, n + 1)) + [b for _ in range(1, n + 1) for b in range(-n, n + 1)]
    k1 = np.asarray(k1, dtype=np.int64)
    k2 = np.asarray(k2, dtype=np.int64)
    mag2 = k1 * k1 + k2 * k2

    slot = np.zeros((2 * n + 1, 2 * n + 1), dtype=np.int64)
    sign = np.zeros((2 * n + 1, 2 * n + 1), dtype=np.int64)
    idx = np.arange(k1.size)
    slot[k1 + n, k2 + n] = idx
    sign[k1 + n, k2 + n] = 1
    slot[-k1 + n, -k2 + n] = idx
    sign[-k1 + n, -k2 + n] = -1

    arrays = (k1, k2, mag2, np.sqrt(mag2.astype(float)), slot, sign)
    for a in arrays:
        a.setflags(write=False)
    return ModeSet(n, *arrays)


# ====================
# Fields
# ====================
@dataclass(frozen=True, eq=False)
class FourierField:
    """Coefficients v_k on Z^2_+ ; v_{-k} = -conj(v_k) is implied."""
    cutoff: int
    coeffs: np.ndarray

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=np.complex128, copy=True)
        ms = mode_set(self.cutoff)
        if c.shape != (ms.size,):
            raise PreconditionError(f"expected {ms.size} coefficients for cutoff {self.cutoff}, got {c.shape}")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @classmethod
    def zeros(cls, cutoff: int) -> "FourierField":
        return cls(cutoff, np.zeros(mode_set(cutoff).size, dtype=np.complex128))

    @classmethod
    def from_modes(cls, cutoff: int, values: dict[tuple[int, int], complex]) -> "FourierField":
        """Build from a {(k1,k2): v_k} map; entries for -k must respect reality."""
        ms = mode_set(cutoff)
        c = np.zeros(ms.size, dtype=np.complex128)
        seen: dict[int, complex] = {}
        for (a, b), val in values.items():
            k = WaveIndex(a, b)
            if k.is_zero:
                raise PreconditionError("k = (0,0) carries no coefficient")
            if k.in_upper:
                i, v = ms.index(k), complex(val)
            else:
                i, v = ms.index(-k), -complex(val).conjugate()
            if i in seen and seen[i] != v:
                raise PreconditionError(f"reality violated at {k}")
            seen[i] = v
            c[i] = v
        return cls(cutoff, c)

    @property
    def modes(self) -> ModeSet:
        return mode_set(self.cutoff)

    def coeff(self, k: WaveIndex) -> complex:
        if k.is_zero or k.maxnorm() > self.cutoff:
            return 0j
        if k.in_upper:
            return complex(self.coeffs[self.modes.index(k)])
        return -complex(self.coeffs[self.modes.index(-k)]).conjugate()

    def box(self) -> np.ndarray:
        return to_box(self.coeffs, self.cutoff)

    def _check(self, other: "FourierField"):
        if other.cutoff != self.cutoff:
            raise CutoffMismatchError(self.cutoff, other.cutoff)

    def __add__(self, other: "FourierField") -> "FourierField":
        self._check(other)
        return FourierField(self.cutoff, self.coeffs + other.coeffs)

    def __sub__(self, other: "FourierField") -> "FourierField":
        self._check(other)
        return FourierField(self.cutoff, self.coeffs - other.coeffs)

    def __neg__(self) -> "FourierField":
        return FourierField(self.cutoff, -self.coeffs)

    def scale(self, a: float) -> "FourierField":
        # only real factors keep the reality constraint
        return FourierField(self.cutoff, float(a) * self.coeffs)

    def __mul__(self, a: float) -> "FourierField":
        return self.scale(a)

    __rmul__ = __mul__

    def equals(self, other: "FourierField") -> bool:
        return self.cutoff == other.cutoff and np.array_equal(self.coeffs, other.coeffs)


def to_box(coeffs: np.ndarray, cutoff: int) -> np.ndarray:
    """Full-box array [..., k1+N, k2+N] with the mirror filled in."""
    ms = mode_set(cutoff)
    c = np.asarray(coeffs)
    picked = c[..., ms.box_slot]
    return np.where(ms.box_sign > 0, picked, np.where(ms.box_sign < 0, -np.conj(picked), 0))


def from_box(box: np.ndarray, cutoff: int) -> np.ndarray:
    ms = mode_set(cutoff)
    n = cutoff
    return np.asarray(box)[..., ms.k1 + n, ms.k2 + n]


def embed(field: FourierField, cutoff: int) -> FourierField:
    """Zero-pad (cutoff >= field.cutoff) or truncate to another square cutoff."""
    src, dst = mode_set(field.cutoff), mode_set(cutoff)
    out = np.zeros(dst.size, dtype=np.complex128)
    keep = (np.abs(src.k1) <= cutoff) & (np.abs(src.k2) <= cutoff)
    n = cutoff
    out[dst.box_slot[src.k1[keep] + n, src.k2[keep] + n]] = field.coeffs[keep]
    return FourierField(cutoff, out)


def random_field(cutoff: int, rng: np.random.Generator, decay: float = 0.0, scale: float = 1.0) -> FourierField:
    ms = mode_set(cutoff)
    z = rng.standard_normal(ms.size) + 1j * rng.standard_normal(ms.size)
    return FourierField(cutoff, scale * z * ms.mag ** (-decay))


# ====================
# Norms
# ====================
@dataclass(frozen=True)
class NormSpec:
    kind: str
    r_or_s: float
    p: float = 2.0
    q: float = 2.0

    def __post_init__(self):
        if self.kind not in ("sobolev", "besov"):
            raise PreconditionError(f"unknown norm kind {self.kind!r}")
        if self.kind == "sobolev" and (self.p != 2.0 or self.q != 2.0):
            object.__setattr__(self, "p", 2.0)
            object.__setattr__(self, "q", 2.0)
        if not (1.0 <= self.p <= math.inf and 1.0 <= self.q <= math.inf):
            raise PreconditionError(f"p, q must lie in [1, inf], got p={self.p}, q={self.q}")


def sobolev_sq(coeffs: np.ndarray, cutoff: int, r: float) -> np.ndarray:
    """Batched squared H^r norm; the sum runs over Z^2_0, i.e. twice Z^2_+."""
    ms = mode_set(cutoff)
    w = ms.mag2.astype(float) ** r
    return 2.0 * np.sum(w * np.abs(coeffs) ** 2, axis=-1)


def sobolev_norm(field: FourierField, r: float) -> float:
    return float(math.sqrt(sobolev_sq(field.coeffs, field.cutoff, r)))


def shell_index(cutoff: int) -> np.ndarray:
    """Dyadic shell j of every stored mode: 2^j <= |k| < 2^(j+1)."""
    ms = mode_set(cutoff)
    # integer arithmetic: j = floor(log2 |k|) = (bit_length(|k|^2) - 1) // 2
    return np.asarray([(int(m).bit_length() - 1) // 2 for m in ms.mag2], dtype=np.int64)


def complete_shells(cutoff: int) -> int:
    """Number of shells lying entirely inside the square truncation."""
    j = 0
    while 2 ** (j + 1) <= cutoff + 1:
        j += 1
    return j


def grid_lp(u: np.ndarray, p: float) -> np.ndarray:
    """Batched L^p norm over the torus of a (..., 2, M, M) grid field."""
    mag = np.sqrt(np.sum(u * u, axis=-3))
    if math.isinf(p):
        return mag.max(axis=(-2, -1))
    return (TWO_PI ** 2 * np.mean(mag ** p, axis=(-2, -1))) ** (1.0 / p)


def besov_blocks(coeffs: np.ndarray, cutoff: int, p: float, grid: int | None = None) -> np.ndarray:
    """L^p grid norms of the dyadic blocks, shape (..., n_shells).

    Every shell meeting the truncation enters, the outer ones partially; at
    least one complete shell is required.
    """
    if complete_shells(cutoff) < 1:
        raise DegenerateResolutionError(f"cutoff {cutoff} holds no complete dyadic shell")
    m = grid or max(4 * cutoff, 2 * cutoff + 2)
    shells = shell_index(cutoff)
    out = []
    for j in range(int(shells.max()) + 1):
        block = np.where(shells == j, coeffs, 0)
        out.append(grid_lp(coeffs_to_grid(block, cutoff, m), p))
    return np.stack(out, axis=-1)


def besov_norm_coeffs(coeffs: np.ndarray, cutoff: int, spec: NormSpec, grid: int | None = None) -> np.ndarray:
    blocks = besov_blocks(coeffs, cutoff, spec.p, grid)
    j = np.arange(blocks.shape[-1])
    weighted = 2.0 ** (j * spec.r_or_s) * blocks
    if math.isinf(spec.q):
        return weighted.max(axis=-1)
    return np.sum(weighted ** spec.q, axis=-1) ** (1.0 / spec.q)


def besov_norm(field: FourierField, spec: NormSpec, grid: int | None = None) -> float:
    if spec.kind != "besov":
        raise PreconditionError("besov_norm needs a besov NormSpec")
    if field.cutoff == 0:
        raise DegenerateResolutionError("empty truncation holds no dyadic shell")
    return float(besov_norm_coeffs(field.coeffs, field.cutoff, spec, grid))


def norm(field: FourierField, spec: NormSpec) -> float:
    if spec.kind == "sobolev":
        return sobolev_norm(field, spec.r_or_s)
    return besov_norm(field, spec)


# ====================
# Semigroup
# ====================
def heat_factors(cutoff: int, t: float) -> np.ndarray:
    if t < 0:
        raise PreconditionError(f"heat semigroup needs t >= 0, got {t}")
    return np.exp(-mode_set(cutoff).mag2 * float(t))


def heat_semigroup(field: FourierField, t: float) -> FourierField:
    return FourierField(field.cutoff, field.coeffs * heat_factors(field.cutoff, t))


def smoothing_ratio(field: FourierField, t: float, s1: float, s2: float) -> float:
    """t^{(s1-s2)/2} ||e^{tA} v||_{s1} / ||v||_{s2}; bounded for s1 >= s2."""
    den = sobolev_norm(field, s2)
    if den == 0.0:
        return 0.0
    return t ** ((s1 - s2) / 2.0) * sobolev_norm(heat_semigroup(field, t), s1) / den


# ====================
# Physical grid
# ====================
def _check_grid(cutoff: int, m: int):
    if m < 2 * cutoff + 2:
        raise AliasingError(f"grid {m} too small for cutoff {cutoff}; need M >= {2 * cutoff + 2}")


def coeffs_to_spectrum(coeffs: np.ndarray, cutoff: int, m: int) -> np.ndarray:
    """FFT-ordered vector spectrum c_k = v_k k_perp/(2 pi |k|), shape (..., 2, M, M)."""
    _check_grid(cutoff, m)
    ms = mode_set(cutoff)
    c = np.asarray(coeffs, dtype=np.complex128)
    lead = c.shape[:-1]
    a = c / (TWO_PI * ms.mag)
    spec = np.zeros(lead + (2, m, m), dtype=np.complex128)
    i1, i2 = ms.k1 % m, ms.k2 % m
    j1, j2 = (-ms.k1) % m, (-ms.k2) % m
    for comp, perp in enumerate((-ms.k2, ms.k1)):
        ck = a * perp
        spec[..., comp, i1, i2] = ck
        spec[..., comp, j1, j2] = np.conj(ck)
    return spec


def spectrum_to_grid(spec: np.ndarray) -> np.ndarray:
    m = spec.shape[-1]
    return np.real(np.fft.ifft2(spec, axes=(-2, -1))) * (m * m)


def coeffs_to_grid(coeffs: np.ndarray, cutoff: int, m: int) -> np.ndarray:
    """Batched synthesis u = sum_k v_k k_perp/(2 pi |k|) e^{i k.xi}, shape (..., 2, M, M)."""
    return spectrum_to_grid(coeffs_to_spectrum(coeffs, cutoff, m))


def wavenumbers(m: int) -> tuple[np.ndarray, np.ndarray]:
    k = np.fft.fftfreq(m, d=1.0 / m)
    return np.meshgrid(k, k, indexing="ij")


def grid_to_coeffs(u: np.ndarray, cutoff: int) -> np.ndarray:
    """Leray-projected analysis of a (..., 2, M, M) grid field; the mean is dropped."""
    u = np.asarray(u, dtype=float)
    m = u.shape[-1]
    _check_grid(cutoff, m)
    ms = mode_set(cutoff)
    uh = np.fft.fft2(u, axes=(-2, -1)) / (m * m)
    c1 = uh[..., 0, ms.k1 % m, ms.k2 % m]
    c2 = uh[..., 1, ms.k1 % m, ms.k2 % m]
    return TWO_PI * (c1 * (-ms.k2) + c2 * ms.k1) / ms.mag


def to_physical(field: FourierField, m: int) -> np.ndarray:
    return coeffs_to_grid(field.coeffs, field.cutoff, m)


def from_physical(u: np.ndarray, cutoff: int | None = None) -> FourierField:
    m = np.asarray(u).shape[-1]
    n = (m - 2) // 2 if cutoff is None else cutoff
    return FourierField(n, grid_to_coeffs(u, n))


def grid_divergence(u: np.ndarray) -> np.ndarray:
    """Spectral divergence of a (2, M, M) grid field."""
    kx, ky = wavenumbers(u.shape[-1])
    uh = np.fft.fft2(u, axes=(-2, -1))
    return np.real(np.fft.ifft2(1j * kx * uh[0] + 1j * ky * uh[1]))


def grid_energy(u: np.ndarray) -> float:
    """Physical L^2(T) energy, integral of |u|^2 over [0, 2 pi)^2."""
    return float(TWO_PI ** 2 * np.mean(np.sum(u * u, axis=0)))
