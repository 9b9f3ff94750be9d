from __future__ import annotations

import math
from dataclasses import replace

import pytest

from config import CFG
from core.csvio import read_table
from harness import acceptance
from harness.acceptance import QUICK, _global, _lemmas
from harness.report import ArtifactWriter
from harness.runconfig import resolve
from nonlinear.series import Lemma3Report, ScalingFit


@pytest.fixture
def rc(tmp_path):
    return resolve(CFG(), "accept", {"out": str(tmp_path), "seed": "5", "threads": "2"})


# ====================
# Global solutions
# ====================
def test_global_check_halves_dt_on_a_shared_path(rc, tmp_path):
    tier = replace(QUICK, global_cutoff=4, global_t_final=0.1, global_dt=0.01, global_seeds=3)
    ok, detail = _global(rc, tier, ArtifactWriter(rc))
    assert ok, detail
    _, cols, rows = read_table(tmp_path / "accept_global.csv")
    assert cols == ["seed", "sup_h_sigma", "blow_up"]
    by_key = {r[0]: float(r[1]) for r in rows}
    assert [r[0] for r in rows[:3]] == ["5", "6", "7"]
    # a different dt must move the answer, but only a little
    assert 0.0 < by_key["dt_halving"] < 0.05
    assert by_key["final_change"] < 0.05
    assert by_key["ledger_ratio"] > 1.4


# ====================
# Series oracles
# ====================
def _fit(which, H, rho=0.0, **kw):
    return ScalingFit(-2.0, -2.0, 1.0, (8.0, 16.0), (1.0, 0.25))


@pytest.mark.parametrize("change, ok", [(0.0021, True), (0.2, False)])
def test_lemma_rows_use_the_stability_rule(rc, tmp_path, monkeypatch, change, ok):
    rep = Lemma3Report(0.75, -0.75, (4, 8, 16), (1.0, 1.2, 1.2 * (1 + change)), change, "converged")
    monkeypatch.setattr(acceptance, "lemma_scaling_fit", _fit)
    monkeypatch.setattr(acceptance, "lemma3_report", lambda *a, **kw: rep)
    passed, _ = _lemmas(rc, QUICK, ArtifactWriter(rc))
    assert passed == ok
    _, _, rows = read_table(tmp_path / "accept_lemmas.csv")
    assert rows[-1][0] == "lemma3"
    assert float(rows[-1][3]) == pytest.approx(change)
    assert math.isnan(float(rows[-1][4]))
