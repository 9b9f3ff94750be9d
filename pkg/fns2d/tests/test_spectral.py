from __future__ import annotations

import math

import numpy as np
import pytest

from core.errors import AliasingError, CutoffMismatchError, DegenerateResolutionError, PreconditionError
from core.csvio import write_table
from field.io import FIELD_HEADER, read_field, write_field
from field.spectral import (
    FourierField,
    NormSpec,
    WaveIndex,
    besov_norm,
    complete_shells,
    embed,
    from_physical,
    grid_divergence,
    grid_energy,
    heat_factors,
    heat_semigroup,
    mode_set,
    random_field,
    smoothing_ratio,
    sobolev_norm,
    to_physical,
)
from field.trajectory import Trajectory


# ====================
# Modes
# ====================
@pytest.mark.parametrize("n", [1, 2, 5, 8])
def test_mode_count(n):
    ms = mode_set(n)
    assert ms.size == 2 * n * n + 2 * n
    assert all(WaveIndex(int(a), int(b)).in_upper for a, b in zip(ms.k1, ms.k2))


def test_mode_set_of_two():
    assert mode_set(2).size == 12
    assert mode_set(0).size == 0


def test_index_rejects_lower_half():
    with pytest.raises(KeyError):
        mode_set(3).index(WaveIndex(-1, 0))


def test_reality_mirror():
    f = FourierField.from_modes(3, {(1, 2): 1 + 2j})
    assert f.coeff(WaveIndex(-1, -2)) == -(1 - 2j)
    assert f.coeff(WaveIndex(4, 0)) == 0j


def test_from_modes_rejects_inconsistent_mirror():
    with pytest.raises(PreconditionError, match="reality"):
        FourierField.from_modes(2, {(1, 0): 1.0, (-1, 0): 1.0})


def test_cutoff_mismatch():
    with pytest.raises(CutoffMismatchError):
        FourierField.zeros(2) + FourierField.zeros(3)


def test_embed_pads_and_truncates():
    f = FourierField.from_modes(2, {(1, 1): 1j, (2, -2): 3.0})
    g = embed(f, 4)
    assert g.coeff(WaveIndex(2, -2)) == 3.0
    assert embed(g, 2).equals(f)
    assert embed(f, 1).coeff(WaveIndex(2, -2)) == 0j


# ====================
# Norms
# ====================
def test_sobolev_examples():
    assert sobolev_norm(FourierField.from_modes(2, {(1, 0): 1.0}), 0.0) == pytest.approx(math.sqrt(2.0))
    assert sobolev_norm(FourierField.from_modes(2, {(1, 2): 1.0}), 1.0) == pytest.approx(math.sqrt(10.0))


def test_besov_zero_regularity_matches_l2(rng):
    f = random_field(8, rng, decay=1.0)
    assert besov_norm(f, NormSpec("besov", 0.0)) == pytest.approx(sobolev_norm(f, 0.0), rel=1e-12)


@pytest.mark.parametrize("s", [0.5, 1.0, 2.0])
def test_besov_sobolev_equivalence(rng, s):
    f = random_field(8, rng, decay=1.5)
    b = besov_norm(f, NormSpec("besov", s))
    h = sobolev_norm(f, s)
    assert b <= h * (1 + 1e-12)
    assert h <= 2.0 ** s * b * (1 + 1e-12)


def test_single_shell_equality():
    f = FourierField.from_modes(4, {(2, 0): 1.0})
    s = 1.0
    assert besov_norm(f, NormSpec("besov", s)) == pytest.approx(2.0 ** s * sobolev_norm(f, 0.0))


def test_besov_counts_partial_outer_shell():
    # |(3, 3)| lies in shell 2, which the square N = 3 only partly covers
    f = FourierField.from_modes(3, {(3, 3): 1.0 - 1.0j})
    assert complete_shells(3) == 2
    assert besov_norm(f, NormSpec("besov", 1.0)) == pytest.approx(4.0 * sobolev_norm(f, 0.0), rel=1e-12)


@pytest.mark.parametrize("r1, r2", [(-1.0, 0.0), (0.0, 0.5), (0.5, 2.0)])
def test_sobolev_norm_monotone_in_regularity(rng, r1, r2):
    f = random_field(8, rng, decay=1.0)
    assert sobolev_norm(f, r1) <= sobolev_norm(f, r2) * (1 + 1e-12)


def test_besov_needs_a_shell():
    with pytest.raises(DegenerateResolutionError):
        besov_norm(FourierField.zeros(0), NormSpec("besov", 0.0))
    assert complete_shells(1) == 1
    assert complete_shells(3) == 2


def test_norm_spec_rejects_bad_exponent():
    with pytest.raises(PreconditionError):
        NormSpec("besov", 0.0, p=0.5)


# ====================
# Semigroup
# ====================
def test_heat_factor_example():
    f = FourierField.from_modes(2, {(1, 0): 1.0})
    assert heat_semigroup(f, math.log(2.0)).coeff(WaveIndex(1, 0)) == pytest.approx(0.5)


def test_heat_semigroup_law():
    a, b = heat_factors(6, 0.3), heat_factors(6, 0.45)
    np.testing.assert_allclose(a * b, heat_factors(6, 0.75), rtol=1e-14)
    with pytest.raises(PreconditionError):
        heat_factors(6, -1.0)


def test_smoothing_ratio_bounded(rng):
    f = random_field(16, rng)
    ratios = [smoothing_ratio(f, t, 1.0, 0.0) for t in (1e-3, 1e-2, 1e-1, 1.0)]
    # sup_x x^{1/2} e^{-x} = (2e)^{-1/2}
    assert max(ratios) <= 1.0 / math.sqrt(2.0 * math.e) + 1e-12


# ====================
# Physical grid
# ====================
def test_single_mode_synthesis():
    f = FourierField.from_modes(2, {(1, 0): 1.0})
    m = 8
    u = to_physical(f, m)
    xi1 = 2.0 * np.pi * np.arange(m) / m
    np.testing.assert_allclose(u[0], 0.0, atol=1e-14)
    np.testing.assert_allclose(u[1], np.repeat((np.cos(xi1) / np.pi)[:, None], m, axis=1), atol=1e-14)


def test_physical_round_trip_and_parseval(rng):
    f = random_field(6, rng, decay=1.0)
    u = to_physical(f, 16)
    g = from_physical(u, 6)
    assert np.max(np.abs(g.coeffs - f.coeffs)) < 1e-12
    assert grid_energy(u) == pytest.approx(sobolev_norm(f, 0.0) ** 2, rel=1e-12)
    assert np.max(np.abs(grid_divergence(u))) < 1e-10


def test_gradient_field_projects_to_zero():
    m = 16
    x = 2.0 * np.pi * np.arange(m) / m
    x1, x2 = np.meshgrid(x, x, indexing="ij")
    # grad of sin(x1) cos(2 x2)
    u = np.stack([np.cos(x1) * np.cos(2 * x2), -2.0 * np.sin(x1) * np.sin(2 * x2)])
    assert np.max(np.abs(from_physical(u, 4).coeffs)) < 1e-12


def test_operations_keep_reality_mirror(rng):
    f = random_field(6, rng, decay=1.0)
    outputs = [
        heat_semigroup(f, 0.1),
        from_physical(to_physical(f, 16), 6),
        f + f * 2.0,
        -f,
        embed(f, 9),
    ]
    for g in outputs:
        b = g.box()
        n = g.cutoff
        np.testing.assert_allclose(b[::-1, ::-1], -np.conj(b), atol=1e-14)
        assert b[n, n] == 0


def test_grid_too_small():
    with pytest.raises(AliasingError):
        to_physical(FourierField.zeros(4), 9)


# ====================
# Trajectories and files
# ====================
def test_trajectory_rejects_unordered_times():
    with pytest.raises(PreconditionError, match="increasing"):
        Trajectory(np.array([0.0, 0.0]), 1, np.zeros((2, mode_set(1).size)))


def test_subsample():
    f = FourierField.from_modes(1, {(1, 0): 1.0})
    t = Trajectory.constant(np.arange(5) * 0.1, f)
    s = t.subsample(2)
    np.testing.assert_allclose(s.times, [0.0, 0.2, 0.4])
    with pytest.raises(PreconditionError):
        t.subsample(0)


def test_field_file_round_trip(tmp_path, rng):
    f = random_field(3, rng)
    p = write_field(tmp_path / "f.csv", f, ["fns2d manifest config=x seed=1"])
    assert read_field(p).equals(f)


def _field_file(path, cutoff, rows):
    return write_table(path, ("k1", "k2", "re", "im"), rows, [FIELD_HEADER.format(cutoff=cutoff)])


def test_field_file_folds_lower_half_rows(tmp_path):
    f = read_field(_field_file(tmp_path / "f.csv", 2, [(-1, 0, 1.0, 2.0), (0, 1, 3.0, 0.0)]))
    assert f.coeff(WaveIndex(1, 0)) == complex(-1.0, 2.0)
    assert f.coeff(WaveIndex(-1, 0)) == complex(1.0, 2.0)
    assert f.coeff(WaveIndex(0, 1)) == 3.0


@pytest.mark.parametrize("rows, match", [
    ([(3, 0, 1.0, 0.0)], "outside cutoff"),
    ([(0, 0, 1.0, 0.0)], "zero mode"),
    ([(1, 0, 1.0, 0.0), (-1, 0, 1.0, 0.0)], "mirror"),
])
def test_field_file_rejects_bad_rows(tmp_path, rows, match):
    with pytest.raises(PreconditionError, match=match):
        read_field(_field_file(tmp_path / "f.csv", 2, rows))
