from __future__ import annotations

import math

import numpy as np
import pytest

from config import CFG
from core.csvio import read_table
from core.errors import BlowUpError, ConfigError, DomainError
from field.spectral import FourierField
from field.trajectory import Trajectory
from harness import cli
from harness.report import ArtifactWriter, manifest_line
from harness.runconfig import apply, defaults, parse_config_file, resolve
from nonlinear.moments import MomentReport
from nonlinear.series import Lemma3Report, ScalingFit


# ====================
# Configuration
# ====================
def test_defaults_follow_cfg():
    rc = resolve(CFG(), "bzz-moment")
    assert rc.hurst == CFG.HURST
    assert rc.cutoffs == CFG.SERIES_CUTOFFS


def test_flags_override_file(tmp_path):
    p = tmp_path / "run.cfg"
    p.write_text("# comment\nhurst = 0.8\nseed = 5  # trailing\ncutoffs = 4,8,16\n", encoding="utf-8")
    values = parse_config_file(p)
    assert values == {"hurst": "0.8", "seed": "5", "cutoffs": "4,8,16"}
    rc = resolve(CFG(), "bzz-moment", values, {"seed": 9, "cutoff": None})
    assert rc.hurst == 0.8
    assert rc.seed == 9
    assert rc.cutoffs == (4, 8, 16)


def test_unknown_key():
    with pytest.raises(ConfigError, match="unknown configuration key"):
        apply(defaults(CFG(), "accept"), {"colour": "blue"})


def test_malformed_file(tmp_path):
    p = tmp_path / "bad.cfg"
    p.write_text("hurst 0.5\n", encoding="utf-8")
    with pytest.raises(ConfigError, match="key = value"):
        parse_config_file(p)


@pytest.mark.parametrize("subcommand, values", [
    ("bzz-moment", {"hurst": "0.2"}),
    ("picard", {"hurst": "0.6"}),
    ("simulate", {"hurst": "0.75", "sigma": "0.6"}),
    ("uniqueness", {"hurst": "0.4"}),
    ("accept", {"cutoffs": "8,16"}),
    ("accept", {"replicas": "0"}),
])
def test_precondition_checks(subcommand, values):
    with pytest.raises(ConfigError):
        resolve(CFG(), subcommand, values)


def test_picard_defaults_to_the_local_regime():
    rc = resolve(CFG(), "picard")
    assert rc.hurst == CFG.LOCAL_HURST
    assert 7.0 / 16.0 < rc.hurst < 0.5
    assert resolve(CFG(), "simulate").hurst == CFG.HURST


def test_config_hash():
    a = resolve(CFG(), "accept")
    assert a.config_hash == resolve(CFG(), "accept").config_hash
    assert a.config_hash != resolve(CFG(), "accept", {"seed": "1"}).config_hash
    assert len(a.config_hash) == 16


# ====================
# Artifacts
# ====================
def test_every_table_carries_the_manifest(tmp_path):
    rc = resolve(CFG(), "accept", {"out": str(tmp_path)})
    w = ArtifactWriter(rc)
    w.table("x.csv", ("a",), [(1,)])
    w.field("f.csv", FourierField.zeros(1))
    for name in ("x.csv", "f.csv"):
        comments, _, _ = read_table(tmp_path / name)
        assert comments[0] == manifest_line(rc)
    text = w.manifest(1.5, "passed").read_text(encoding="utf-8")
    assert "status=passed" in text
    assert "artifact=x.csv" in text


# ====================
# Command line
# ====================
def test_rough_noise_moment_is_a_config_error(tmp_path):
    assert cli.run(["bzz-moment", "--hurst", "0.2", "--out", str(tmp_path)]) == cli.EXIT_CONFIG


def test_unknown_set_key_is_a_config_error(tmp_path):
    assert cli.run(["accept", "--set", "colour=blue", "--out", str(tmp_path)]) == cli.EXIT_CONFIG
    assert cli.run(["accept", "--set", "novalue", "--out", str(tmp_path)]) == cli.EXIT_CONFIG


def test_missing_subcommand():
    assert cli.run([]) == cli.EXIT_CONFIG


def test_bilinear_check_is_reproducible(tmp_path):
    outs = [tmp_path / "a", tmp_path / "b"]
    for out in outs:
        assert cli.run(["bilinear-check", "--quick", "--cutoff", "4", "--seed", "3", "--out", str(out)]) == cli.EXIT_OK
    first, second = ((o / "bilinear_check.csv").read_bytes() for o in outs)
    assert first == second
    assert first.startswith(b"# fns2d manifest config=")
    assert (outs[0] / "manifest.txt").exists()


def test_precondition_failure_exit_code(tmp_path, monkeypatch):
    def boom(rc, w):
        raise DomainError("outside the window")

    monkeypatch.setitem(cli.COMMANDS, "series-oracle", boom)
    assert cli.run(["series-oracle", "--out", str(tmp_path)]) == cli.EXIT_CONFIG
    assert "status=precondition" in (tmp_path / "manifest.txt").read_text(encoding="utf-8")


def test_blow_up_exit_code(tmp_path, monkeypatch):
    partial = Trajectory(np.array([0.0, 0.01]), 1, np.zeros((2, 4)), diagnostics={"h_sigma": np.array([1.0, 2e6])})

    def boom(rc, w):
        raise BlowUpError(0.01, 2e6, partial)

    monkeypatch.setitem(cli.COMMANDS, "simulate", boom)
    assert cli.run(["simulate", "--out", str(tmp_path)]) == cli.EXIT_NUMERIC
    _, cols, rows = read_table(tmp_path / "blowup.csv")
    assert cols == ["t", "u_h_sigma"]
    assert len(rows) == 2


def test_bzz_fourth_moment_reports_its_checks(tmp_path):
    argv = ["bzz-moment", "--set", "moment=2", "--cutoff", "2", "--replicas", "1", "--out", str(tmp_path)]
    assert cli.run(argv) == cli.EXIT_OK
    comments, _, rows = read_table(tmp_path / "bzz_moment.csv")
    assert "diagonal_ok=True" in comments[-1]
    assert "jensen_ok=True" in comments[-1]
    assert rows[0][2] == "2"


@pytest.mark.parametrize("series, diagonal, second_sq", [
    (1.0, 0.5, 0.9),
    (0.5, 0.9, 0.9),
])
def test_bzz_fourth_moment_failures(tmp_path, monkeypatch, series, diagonal, second_sq):
    def fake(spec, rho, *args, **kw):
        return MomentReport(rho, 2, series, math.nan, math.nan, spec.cutoff, spec.H, "",
                            {"diagonal": diagonal, "second_moment_sq": second_sq})

    monkeypatch.setattr(cli, "bzz_fourth_moment", fake)
    argv = ["bzz-moment", "--set", "moment=2", "--cutoff", "2", "--replicas", "1", "--out", str(tmp_path)]
    assert cli.run(argv) == cli.EXIT_FAILED


@pytest.mark.parametrize("offset, change, code", [
    (0.0, 0.002, cli.EXIT_OK),
    (0.3, 0.002, cli.EXIT_FAILED),
    (0.0, 0.2, cli.EXIT_FAILED),
])
def test_series_oracle_exit_code_follows_the_checks(tmp_path, monkeypatch, offset, change, code):
    def fit(which, H, rho=0.0, **kw):
        return ScalingFit(-2.0 + offset, -2.0, 1.0, (8.0, 16.0), (1.0, 0.25))

    def lemma3(H, rho, Rs, **kw):
        return Lemma3Report(H, rho, tuple(Rs), (1.0, 1.1, 1.1 * (1 + change)), change, "converged")

    monkeypatch.setattr(cli, "lemma_scaling_fit", fit)
    monkeypatch.setattr(cli, "lemma3_report", lemma3)
    assert cli.run(["series-oracle", "--quick", "--out", str(tmp_path)]) == code
    _, cols, rows = read_table(tmp_path / "series_oracle.csv")
    assert cols[-1] == "ok"
    assert [r[0] for r in rows] == ["lemma1", "lemma2", "lemma3"]
