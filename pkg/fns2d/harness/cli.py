from __future__ import annotations

import argparse
import logging
import math
import sys
import time
from typing import Optional, Sequence

import numpy as np

from config import CFG
from core.errors import BlowUpError, ConfigError, FNS2DError, PreconditionError
from core.math_utils import mean_stderr, rel_change, within_se
from core.rng import replica_stream
from harness.acceptance import bilinear_agreement, run_acceptance, trilinear_identities
from harness.report import ArtifactWriter
from harness.runconfig import SUBCOMMANDS, RunConfig, parse_config_file, resolve
from noise.fbm import sample_fbm
from noise.fou import c_h_closed_form, c_h_constant, fou_variance_check, z_regularity_report
from nonlinear.moments import bzz_fourth_moment, bzz_moment_threshold, bzz_second_moment, gibbs_spec
from nonlinear.series import lemma2_window, lemma3_report, lemma3_window, lemma_scaling_fit
from solver.conditions import check_parameter_conditions, local_params_for
from solver.dpd import (
    SolverConfig,
    forcing_path,
    global_solve,
    picard_solve,
    uniqueness_check,
    unit_direction,
)

log = logging.getLogger(__name__)

EXIT_OK, EXIT_FAILED, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3

_FLAGS = (
    ("--hurst", float), ("--cutoff", int), ("--dt", float), ("--t-final", float), ("--seed", int),
    ("--replicas", int), ("--rho", float), ("--sigma", float), ("--tol", float), ("--threads", int),
    ("--out", str), ("--snap-every", int),
)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    for flag, kind in _FLAGS:
        common.add_argument(flag, type=kind, default=None)
    common.add_argument("--config", default=None, help="key = value file; flags override it")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="any other configuration key")
    common.add_argument("--quick", action="store_true", default=None)

    parser = argparse.ArgumentParser(prog="fns2d", description="Spectral stochastic Navier-Stokes verification suite")
    sub = parser.add_subparsers(dest="subcommand", required=True)
    for name in SUBCOMMANDS:
        sub.add_parser(name, parents=[common])
    return parser


def _flag_values(ns: argparse.Namespace) -> dict:
    values = {flag[2:].replace("-", "_"): getattr(ns, flag[2:].replace("-", "_")) for flag, _ in _FLAGS}
    values["quick"] = ns.quick
    for item in ns.set:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        values[k.strip().replace("-", "_")] = v.strip()
    return values


# ====================
# Subcommands
# ====================
def cmd_sample_fbm(rc: RunConfig, w: ArtifactWriter) -> bool:
    L = max(1, int(round(rc.t_final / rc.dt)))
    reps = max(2, rc.replicas)
    p = sample_fbm(rc.hurst, L, rc.dt, replica_stream(rc.seed, 1, 0), reps)
    t = p.times
    w.table("fbm_path.csv", ("t", "value"), zip(t.tolist(), p.values[0].tolist()))
    stride = max(1, L // 200)
    m, se = mean_stderr(p.values[:, ::stride] ** 2)
    theory = t[::stride] ** (2.0 * rc.hurst)
    ok = [bool(within_se(a, b, s)) if s > 0 else a == b for a, b, s in zip(m, theory, se)]
    w.table("fbm_variance.csv", ("t", "empirical", "theory", "stderr", "within_4se"),
            zip(t[::stride].tolist(), m.tolist(), theory.tolist(), se.tolist(), ok))
    return all(ok)


def cmd_fou_variance(rc: RunConfig, w: ArtifactWriter) -> bool:
    chc = c_h_constant(rc.hurst, rc.tol)
    rows = fou_variance_check(rc.hurst, rc.lams, rc.replicas, rc.seed, rc.tol, rc.threads)
    w.table("fou_variance.csv", ("H", "lam", "theory", "mc", "stderr", "within_4se"),
            [(r.H, r.lam, r.theory, r.mc_value, r.mc_stderr, r.within) for r in rows],
            [f"c_h={chc.value!r} quad_bound={chc.quadrature_error!r} closed_form={c_h_closed_form(rc.hurst)!r}"])
    return all(r.within for r in rows)


def cmd_z_regularity(rc: RunConfig, w: ArtifactWriter) -> bool:
    edge = 2.0 * (rc.hurst - 0.5)
    report = z_regularity_report(rc.hurst, rc.cutoffs, (edge - 0.1, edge + 0.1), rc.replicas, rc.seed,
                                 threads=rc.threads)
    w.table("z_regularity.csv", ("H", "r", "N", "series", "mc", "stderr", "verdict"),
            [(r.H, r.r, r.N, r.series_value, r.mc_value, r.mc_stderr, r.verdict) for r in report])
    ok = True
    for r in report:
        want = "converged" if r.r < edge else "diverged"
        ok &= r.verdict == want
        if not math.isnan(r.mc_value):
            ok &= within_se(r.mc_value, r.series_value, r.mc_stderr)
    return ok


def cmd_bilinear_check(rc: RunConfig, w: ArtifactWriter) -> bool:
    pairs = 5 if rc.quick else 20
    res = bilinear_agreement((4, 8, 16), pairs, rc.seed)
    a, b = trilinear_identities(rc.cutoff, 20 if rc.quick else 100, rc.seed)
    w.table("bilinear_check.csv", ("N", "max_rel_err", "conj_symmetry"), res,
            [f"trilinear b(u1,u2,u2)={a!r} antisymmetry={b!r}"])
    return all(e < 1e-10 and s for _, e, s in res) and a < 1e-10 and b < 1e-10


def cmd_bzz_moment(rc: RunConfig, w: ArtifactWriter) -> bool:
    spec = gibbs_spec(rc.hurst, rc.cutoff, rc.tol)
    ok = True
    if rc.moment == 1:
        rep = bzz_second_moment(spec, rc.rho, rc.replicas, rc.seed, cutoffs=rc.cutoffs, threads=rc.threads)
        extra = [f"{k}={v!r}" for k, v in sorted(rep.details.items())]
        ok &= rep.verdict == ("converged" if rc.rho < bzz_moment_threshold(rc.hurst) else "diverged")
    else:
        rep = bzz_fourth_moment(spec, rc.rho, rc.replicas, rc.seed, threads=rc.threads)
        diag, second_sq = rep.details["diagonal"], rep.details["second_moment_sq"]
        diag_ok = rel_change(diag, second_sq) < 1e-10
        jensen_ok = rep.series_value >= second_sq
        ok &= diag_ok and jensen_ok
        extra = [f"diagonal={diag!r} second_sq={second_sq!r} diagonal_ok={diag_ok} jensen_ok={jensen_ok}"]
    w.table("bzz_moment.csv", ("H", "rho", "m", "N", "series", "mc", "stderr", "verdict"),
            [(rep.H, rep.rho, rep.m, rep.cutoff, rep.series_value, rep.mc_value, rep.mc_stderr, rep.verdict)], extra)
    return ok and (math.isnan(rep.mc_value) or within_se(rep.mc_value, rep.series_value, rep.mc_stderr))


def cmd_series_oracle(rc: RunConfig, w: ArtifactWriter) -> bool:
    rows = []
    fit = lemma_scaling_fit("lemma1", rc.hurst, threads=rc.threads)
    rows.append(("lemma1", rc.hurst, math.nan, fit.slope, fit.expected, fit.bound_constant, fit.within()))
    try:
        lemma2_window(rc.hurst, rc.rho)
        fit2 = lemma_scaling_fit("lemma2", rc.hurst, rc.rho, threads=rc.threads)
        rows.append(("lemma2", rc.hurst, rc.rho, fit2.slope, fit2.expected, fit2.bound_constant, fit2.within()))
    except PreconditionError as exc:
        log.info("lemma2 skipped: %s", exc)
    extra = []
    try:
        lemma3_window(rc.hurst, rc.rho)
        rep = lemma3_report(rc.hurst, rc.rho, (4, 8, 16) if rc.quick else (6, 12, 24), threads=rc.threads)
        rows.append(("lemma3", rc.hurst, rc.rho, rep.rel_change, math.nan, rep.values[-1], rep.stable()))
        extra = [f"lemma3 verdict={rep.verdict}"]
    except PreconditionError as exc:
        log.info("lemma3 skipped: %s", exc)
    w.table("series_oracle.csv", ("series", "H", "rho", "slope_or_change", "expected", "constant_or_value", "ok"),
            rows, extra)
    return all(r[-1] for r in rows)


def _solver_config(rc: RunConfig) -> SolverConfig:
    return SolverConfig(rc.hurst, rc.cutoff, rc.dt, rc.t_final, rc.scheme, sigma=rc.sigma,
                        picard_tol=CFG.PICARD_TOL, picard_max_iter=CFG.PICARD_MAX_ITER,
                        blowup_threshold=CFG.BLOWUP_THRESHOLD)


def cmd_picard(rc: RunConfig, w: ArtifactWriter) -> bool:
    cfg = _solver_config(rc)
    params = local_params_for(rc.hurst)
    verdict = check_parameter_conditions(params, rc.hurst)
    w.table("conditions.csv", ("condition", "margin", "holds"),
            [(i, m, i not in verdict.violated) for i, m in enumerate(verdict.margins, start=1)],
            [f"alpha={params.alpha!r} sigma={params.sigma!r} beta={params.beta!r} p={params.p!r} q={params.q!r}"])
    z = forcing_path(cfg, rc.seed, threads=rc.threads)
    u0 = unit_direction(rc.cutoff, rc.seed).scale(rc.u0_scale)
    res = picard_solve(cfg, u0, z)
    w.table("picard_residuals.csv", ("iteration", "residual"), enumerate(res.residuals, start=1),
            [f"tau={res.tau!r} converged={res.converged}"])
    w.table("picard_prefix.csv", ("t", "factor"), zip(z.times.tolist(), res.factors.tolist()))
    return res.tau > 0


def _snapshots(rc: RunConfig, w: ArtifactWriter, traj, prefix: str):
    if rc.snap_every <= 0:
        return
    for i in range(0, len(traj), rc.snap_every):
        w.field(f"{prefix}_{i:06d}.csv", traj[i], [f"t={traj.times[i]!r}"])


def _pad(a: np.ndarray) -> np.ndarray:
    # the ledger has one entry per step, the trajectory one per time
    return np.append(a, math.nan)


def cmd_simulate(rc: RunConfig, w: ArtifactWriter) -> bool:
    cfg = _solver_config(rc)
    z = forcing_path(cfg, rc.seed, threads=rc.threads)
    v0 = unit_direction(rc.cutoff, rc.seed + 1)
    res = global_solve(cfg, v0, z)
    d, led = res.u.diagnostics, res.ledger
    n = len(res.u)
    w.table("trajectory.csv",
            ("t", "u_h0", "u_grad", "u_h_sigma", "v_h_sigma", "lhs", "dissipation", "production", "transport",
             "residual", "lhs_sigma", "dissipation_sigma", "production_sigma", "residual_sigma"),
            zip(res.u.times.tolist(), d["h0"].tolist(), d["grad"].tolist(), d["h_sigma"].tolist(),
                res.v.diagnostics["h_sigma"].tolist(), *(_pad(a).tolist() for a in (
                    led.lhs, led.dissipation, led.production, led.transport, led.residual,
                    led.lhs_sigma, led.dissipation_sigma, led.production_sigma, led.residual_sigma))))
    _snapshots(rc, w, res.v, "v")
    log.info("simulate: %d steps, sup ||u||_sigma = %.4g", n - 1, res.sup_h_sigma)
    return True


def cmd_uniqueness(rc: RunConfig, w: ArtifactWriter) -> bool:
    cfg = _solver_config(rc)
    z = forcing_path(cfg, rc.seed, threads=rc.threads)
    zc = forcing_path(cfg, rc.seed + 1, threads=rc.threads)
    v0 = unit_direction(rc.cutoff, rc.seed + 1)
    rep = uniqueness_check(cfg, v0, z, rc.deltas, rc.seed, z_control=zc)
    w.table("uniqueness.csv", ("delta", "response_final", "response_sup"),
            zip(rep.deltas, rep.response_final, rep.response_sup),
            [f"identical_sup={rep.identical_sup!r} control_sup={rep.control_sup!r}"])
    return rep.identical_sup < 1e-12 and rep.response_spread < 2.0


def cmd_accept(rc: RunConfig, w: ArtifactWriter) -> bool:
    return all(r.passed for r in run_acceptance(rc, w))


COMMANDS = {
    "sample-fbm": cmd_sample_fbm,
    "fou-variance": cmd_fou_variance,
    "z-regularity": cmd_z_regularity,
    "bilinear-check": cmd_bilinear_check,
    "bzz-moment": cmd_bzz_moment,
    "series-oracle": cmd_series_oracle,
    "picard": cmd_picard,
    "simulate": cmd_simulate,
    "uniqueness": cmd_uniqueness,
    "accept": cmd_accept,
}


def run(argv: Optional[Sequence[str]] = None, cfg: Optional[CFG] = None) -> int:
    cfg = cfg or CFG()
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    try:
        file_values = parse_config_file(ns.config) if ns.config else None
        rc = resolve(cfg, ns.subcommand, file_values, _flag_values(ns))
    except ConfigError as exc:
        print(f"fns2d: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    w = ArtifactWriter(rc)
    log.info("%s: config %s seed %d -> %s", rc.subcommand, rc.config_hash, rc.seed, w.root)
    t0 = time.perf_counter()
    try:
        passed = COMMANDS[rc.subcommand](rc, w)
    except PreconditionError as exc:
        print(f"fns2d: precondition violated: {exc}", file=sys.stderr)
        w.manifest(time.perf_counter() - t0, "precondition")
        return EXIT_CONFIG
    except FNS2DError as exc:
        if isinstance(exc, BlowUpError) and exc.partial is not None:
            p = exc.partial
            w.table("blowup.csv", ("t", "u_h_sigma"), zip(p.times.tolist(), p.diagnostics["h_sigma"].tolist()))
        path = w.manifest(time.perf_counter() - t0, "numeric-failure")
        print(f"fns2d: numerical failure: {exc} (diagnostics: {path})", file=sys.stderr)
        return EXIT_NUMERIC
    w.manifest(time.perf_counter() - t0, "passed" if passed else "failed")
    log.info("%s finished: %s", rc.subcommand, "passed" if passed else "FAILED")
    return EXIT_OK if passed else EXIT_FAILED
