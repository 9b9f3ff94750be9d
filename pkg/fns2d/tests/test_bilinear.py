from __future__ import annotations

import math

import numpy as np
import pytest

from core.errors import AliasingError, CutoffMismatchError, PreconditionError
from field.spectral import FourierField, WaveIndex, embed, mode_set, random_field, to_box
from nonlinear.bilinear import (
    bilinear_direct,
    bilinear_direct_pair,
    bilinear_fft,
    chemin_ratio_report,
    energy_scale,
    gamma,
    gamma_array,
    giga_admissible,
    giga_ratio_report,
    trilinear,
    truncation_mass,
)


# ====================
# gamma
# ====================
def test_gamma_examples():
    assert gamma(WaveIndex(1, 0), WaveIndex(2, 0)) == 0.0
    assert gamma(WaveIndex(1, 0), WaveIndex(0, 1)) == pytest.approx(1.0 / (2.0 * math.sqrt(2.0) * math.pi))


def test_gamma_rejects_degenerate_indices():
    with pytest.raises(PreconditionError, match="h = k"):
        gamma(WaveIndex(1, 1), WaveIndex(1, 1))
    with pytest.raises(PreconditionError):
        gamma(WaveIndex(0, 0), WaveIndex(1, 1))


def test_gamma_is_not_pointwise_symmetric():
    k = WaveIndex(0, 1)
    assert gamma(k - WaveIndex(1, 0), k) == 0.0
    assert gamma(WaveIndex(1, 0), k) != 0.0


def test_self_interaction_sees_only_symmetrized_gamma(rng):
    # sum_h gamma_{h,k} u_h u_{k-h} is unchanged by symmetrizing gamma under h -> k-h
    n = 4
    u = random_field(n, rng, decay=1.0)
    box = to_box(u.coeffs, n)
    r = np.arange(-n, n + 1)
    h1, h2 = (a.ravel() for a in np.meshgrid(r, r, indexing="ij"))
    for k in mode_set(n).waves()[::5]:
        d1, d2 = k.k1 - h1, k.k2 - h2
        inside = (np.abs(d1) <= n) & (np.abs(d2) <= n)
        g = np.where(inside, gamma_array(h1, h2, k.k1, k.k2), 0.0)
        gs = np.where(inside, gamma_array(d1, d2, k.k1, k.k2), 0.0)
        prod = box[h1 + n, h2 + n] * box[np.clip(d1, -n, n) + n, np.clip(d2, -n, n) + n]
        assert np.sum(g * prod) == pytest.approx(np.sum(0.5 * (g + gs) * prod), abs=1e-12)


# ====================
# B(u,v)
# ====================
def test_direct_conjugate_symmetry(rng):
    u, v = random_field(4, rng), random_field(4, rng)
    up, low = bilinear_direct_pair(u.coeffs, v.coeffs, 4)
    assert np.array_equal(np.conj(up), -low)


@pytest.mark.parametrize("n", [4, 8])
def test_fft_matches_direct(rng, n):
    for _ in range(3):
        u, v = random_field(n, rng, decay=1.0), random_field(n, rng, decay=1.0)
        a, b = bilinear_direct(u, v).coeffs, bilinear_fft(u, v).coeffs
        assert np.max(np.abs(a - b)) <= 1e-10 * np.max(np.abs(a))


def test_shear_mode_has_no_self_interaction():
    u = FourierField.from_modes(3, {(1, 0): 1.0})
    assert np.max(np.abs(bilinear_direct(u, u).coeffs)) == 0.0
    assert truncation_mass(u, u) < 1e-24


def test_bilinear_cutoff_mismatch():
    with pytest.raises(CutoffMismatchError):
        bilinear_direct(FourierField.zeros(2), FourierField.zeros(3))
    with pytest.raises(CutoffMismatchError):
        bilinear_fft(FourierField.zeros(2), FourierField.zeros(3))


def test_fft_grid_must_dealias():
    u = FourierField.zeros(4)
    with pytest.raises(AliasingError):
        bilinear_fft(u, u, m=12)


def test_truncation_mass_vanishes_on_half_band(rng):
    u = embed(random_field(2, rng), 4)
    v = embed(random_field(2, rng), 4)
    assert truncation_mass(u, v) < 1e-20
    w = random_field(4, rng)
    assert truncation_mass(w, w) > 0.0


# ====================
# <B(u,v),w>
# ====================
def test_trilinear_identities(rng):
    u1, u2, u3 = (random_field(6, rng, decay=1.0) for _ in range(3))
    scale = energy_scale(u1, u2, u3)
    assert abs(trilinear(u1, u2, u2).value) <= 1e-12 * scale
    a = trilinear(u1, u2, u3).value
    b = trilinear(u1, u3, u2).value
    assert abs(a + b) <= 1e-12 * scale


def test_trilinear_cutoff_mismatch():
    with pytest.raises(CutoffMismatchError):
        trilinear(FourierField.zeros(2), FourierField.zeros(2), FourierField.zeros(3))


# ====================
# Product estimates
# ====================
@pytest.mark.parametrize("delta,theta,rho,ok", [
    (0.5, 0.75, 0.75, True),
    (0.5, 0.5, 1.0, True),
    (-0.1, 0.5, 0.5, False),
    (0.5, 1.0, 0.5, False),
    (0.5, 0.1, 0.1, False),
])
def test_giga_region(delta, theta, rho, ok):
    assert giga_admissible(delta, theta, rho) is ok


def test_giga_report():
    out = giga_ratio_report(6, 0.5, 0.75, 0.75, samples=5, seed=1)
    assert 0.0 < out["min"] <= out["median"] <= out["max"] < math.inf
    with pytest.raises(PreconditionError):
        giga_ratio_report(6, 0.5, 0.1, 0.1)


def test_chemin_report():
    out = chemin_ratio_report(8, 0.5, 0.5, samples=3, seed=1)
    assert out["s"] == pytest.approx(0.0)
    assert 0.0 < out["max"] < math.inf
    with pytest.raises(PreconditionError):
        chemin_ratio_report(8, 1.5, 0.5)
