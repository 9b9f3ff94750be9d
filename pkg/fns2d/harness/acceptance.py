from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from config import CFG
from core.errors import FNS2DError
from core.math_utils import rel_change, within_se
from core.parallel import pmap
from core.rng import replica_stream
from field.spectral import random_field
from harness.report import ArtifactWriter
from harness.runconfig import RunConfig
from noise.fou import c_h_constant, fou_variance_check, z_regularity_report
from nonlinear.bilinear import (
    bilinear_direct_pair,
    bilinear_fft_coeffs,
    energy_scale,
    trilinear,
)
from nonlinear.moments import bzz_fourth_moment, bzz_second_moment, gibbs_spec
from nonlinear.series import lemma3_report, lemma_scaling_fit
from solver.conditions import check_parameter_conditions, feasible_parameter_search, sample_point
from solver.dpd import (
    SolverConfig,
    forcing_path,
    global_solve,
    integrate,
    picard_ensemble_report,
    uniqueness_check,
    unit_direction,
)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class CheckResult:
    number: int
    name: str
    passed: bool
    detail: str
    seconds: float = 0.0


@dataclass(frozen=True)
class Tier:
    """Problem sizes of one acceptance run."""
    quick: bool
    fou_replicas: int
    bilinear_pairs: int
    bilinear_cutoffs: tuple[int, ...]
    trilinear_triples: int
    bzz_replicas: int
    fourth_replicas: int
    lemma3_Rs: tuple[int, ...]
    picard_cutoff: int
    picard_seeds: int
    global_cutoff: int
    global_t_final: float
    global_dt: float
    global_seeds: int
    unique_cutoff: int
    unique_t_final: float


FULL = Tier(False, 20000, 20, (4, 8, 16), 100, 5000, 1_000_000, (6, 12, 24),
            16, 10, 32, 5.0, 0.005, 10, 16, 1.0)
QUICK = Tier(True, 2000, 5, (4, 8), 20, 1000, 100_000, (4, 8, 16),
             8, 3, 8, 1.0, 0.01, 2, 8, 0.5)


# ====================
# Shared measurements
# ====================
def bilinear_agreement(cutoffs, pairs: int, seed: int) -> list[tuple[int, float, bool]]:
    """(cutoff, max relative error fft vs direct, exact conjugate symmetry) per cutoff."""
    out = []
    for n in cutoffs:
        worst, sym = 0.0, True
        for i in range(pairs):
            rng = replica_stream(seed, 50 + n, i)
            u, v = random_field(n, rng), random_field(n, rng)
            up, low = bilinear_direct_pair(u.coeffs, v.coeffs, n)
            sym &= bool(np.array_equal(np.conj(up), -low))
            fft = bilinear_fft_coeffs(u.coeffs, v.coeffs, n)
            worst = max(worst, float(np.max(np.abs(fft - up)) / np.max(np.abs(up))))
        out.append((n, worst, sym))
    return out


def trilinear_identities(cutoff: int, triples: int, seed: int) -> tuple[float, float]:
    """Largest |<B(u1,u2),u2>| and |<B(u1,u2),u3> + <B(u1,u3),u2>| relative to the field scale."""
    worst_a = worst_b = 0.0
    for i in range(triples):
        rng = replica_stream(seed, 60, i)
        u1, u2, u3 = (random_field(cutoff, rng) for _ in range(3))
        a = abs(float(trilinear(u1, u2, u2))) / energy_scale(u1, u2, u2)
        b = abs(float(trilinear(u1, u2, u3)) + float(trilinear(u1, u3, u2))) / energy_scale(u1, u2, u3)
        worst_a, worst_b = max(worst_a, a), max(worst_b, b)
    return worst_a, worst_b


# ====================
# Criteria
# ====================
def _fou_variance(rc: RunConfig, tier: Tier, w: ArtifactWriter) -> tuple[bool, str]:
    rows, ok = [], True
    for H in (0.45, 0.6, 0.75):
        chc = c_h_constant(H, 1e-6)
        ok &= chc.quadrature_error <= 1e-6
        for r in fou_variance_check(H, (1.0, 4.0, 9.0), tier.fou_replicas, rc.seed, threads=rc.threads):
            ok &= r.within
            rows.append((r.H, r.lam, chc.value, chc.quadrature_error, r.theory, r.mc_value, r.mc_stderr, r.within))
    half = c_h_constant(0.5, 1e-6).value
    ok &= abs(half - 0.5) <= 1e-6
    w.table("accept_fou_variance.csv", ("H", "lam", "c_h", "quad_bound", "theory", "mc", "stderr", "within_4se"), rows,
            [f"C_1/2={half!r}"])
    return ok, f"C_1/2={half:.8f}, {sum(r[-1] for r in rows)}/{len(rows)} within 4 SE"


def _z_regularity(rc: RunConfig, tier: Tier, w: ArtifactWriter) -> tuple[bool, str]:
    rows, ok = [], True
    for H in (0.45, 0.6, 0.75):
        edge = 2.0 * (H - 0.5)
        report = z_regularity_report(H, (8, 16, 32), (edge - 0.1, edge + 0.1), 0, rc.seed)
        for row in report:
            rows.append((row.H, row.r, row.N, row.series_value, row.verdict))
        below = {row.verdict for row in report if row.r < edge}
        above = {row.verdict for row in report if row.r > edge}
        ok &= below == {"converged"} and above == {"diverged"}
    w.table("accept_z_regularity.csv", ("H", "r", "N", "series", "verdict"), rows)
    return ok, "verdicts bracket r = 2(H-1/2)"


def _bilinear(rc: RunConfig, tier: Tier, w: ArtifactWriter) -> tuple[bool, str]:
    res = bilinear_agreement(tier.bilinear_cutoffs, tier.bilinear_pairs, rc.seed)
    w.table("accept_bilinear.csv", ("N", "max_rel_err", "conj_symmetry"), res)
    worst = max(e for _, e, _ in res)
    return worst < 1e-10 and all(s for *_, s in res), f"max rel err {worst:.2e}"


def _trilinear(rc: RunConfig, tier: Tier, w: ArtifactWriter) -> tuple[bool, str]:
    a, b = trilinear_identities(8, tier.trilinear_triples, rc.seed)
    w.table("accept_trilinear.csv", ("identity", "max_relative"), [("b(u1,u2,u2)", a), ("antisymmetry", b)])
    return a < 1e-10 and b < 1e-10, f"{a:.2e}, {b:.2e}"


def _bzz_second(rc: RunConfig, tier: Tier, w: ArtifactWriter) -> tuple[bool, str]:
    rows, ok = [], True
    for H, rho, want in ((0.75, -0.75, "converged"), (0.45, -1.3, "converged"), (0.45, -1.0, "diverged")):
        spec = gibbs_spec(H, 8)
        mc = tier.bzz_replicas if want == "converged" else 0
        rep = bzz_second_moment(spec, rho, mc, rc.seed, cutoffs=(8, 16, 32), threads=rc.threads)
        agree = True if mc == 0 else within_se(rep.mc_value, rep.series_value, rep.mc_stderr)
        ok &= agree and rep.verdict == want
        rows.append((H, rho, rep.series_value, rep.mc_value, rep.mc_stderr, rep.verdict, agree))
    w.table("accept_bzz_second.csv", ("H", "rho", "series", "mc", "stderr", "verdict", "within_4se"), rows)
    return ok, "; ".join(f"({r[0]},{r[1]}) {r[5]}" for r in rows)


def _bzz_fourth(rc: RunConfig, tier: Tier, w: ArtifactWriter) -> tuple[bool, str]:
    spec = gibbs_spec(0.75, 4)
    cases = bzz_fourth_moment(spec, -0.75, tier.fourth_replicas, rc.seed, engine="cases", threads=rc.threads)
    generic = bzz_fourth_moment(spec, -0.75, engine="generic")
    eng = rel_change(cases.series_value, generic.series_value)
    diag = rel_change(cases.details["diagonal"], cases.details["second_moment_sq"])
    mc = within_se(cases.mc_value, cases.series_value, cases.mc_stderr)
    w.table("accept_bzz_fourth.csv", ("quantity", "value"), [
        ("cases", cases.series_value), ("generic", generic.series_value), ("engine_rel_diff", eng),
        ("diagonal", cases.details["diagonal"]), ("second_sq", cases.details["second_moment_sq"]),
        ("mc", cases.mc_value), ("mc_stderr", cases.mc_stderr),
    ] + [(f"case {k}", v) for k, v in sorted(cases.details["cases"].items())])
    return eng < 1e-10 and diag < 1e-10 and mc, f"engines {eng:.1e}, diagonal {diag:.1e}, mc within 4 SE: {mc}"


def _lemmas(rc: RunConfig, tier: Tier, w: ArtifactWriter) -> tuple[bool, str]:
    fits = [
        ("lemma1", 0.4, 0.0, lemma_scaling_fit("lemma1", 0.4, threads=rc.threads)),
        ("lemma1", 0.75, 0.0, lemma_scaling_fit("lemma1", 0.75, threads=rc.threads)),
        ("lemma2", 0.75, -0.75, lemma_scaling_fit("lemma2", 0.75, -0.75, threads=rc.threads)),
    ]
    l3 = lemma3_report(0.75, -0.75, tier.lemma3_Rs, threads=rc.threads)
    rows = [(name, H, rho, f.slope, f.expected, f.bound_constant, f.within()) for name, H, rho, f in fits]
    rows.append(("lemma3", l3.H, l3.rho, l3.rel_change, math.nan, l3.values[-1], l3.stable()))
    w.table("accept_lemmas.csv", ("series", "H", "rho", "slope_or_change", "expected", "constant_or_value", "ok"), rows)
    return all(r[-1] for r in rows), ", ".join(f"{r[0]} {r[3]:.3f}" for r in rows)


def _window(rc: RunConfig, tier: Tier, w: ArtifactWriter) -> tuple[bool, str]:
    c = 1.0 / 32.0
    sample = check_parameter_conditions(sample_point(c), 7.0 / 16.0 + c)
    low = feasible_parameter_search(0.40)
    mid = feasible_parameter_search(CFG.LOCAL_HURST)
    w.table("accept_window.csv", ("case", "result"), [
        ("sample point c=1/32", "satisfied" if sample.satisfied else f"violates {list(sample.violated)}"),
        ("H=0.40 search", "infeasible" if low is None else repr(low)),
        (f"H={CFG.LOCAL_HURST} search", "infeasible" if mid is None else repr(mid)),
    ])
    return sample.satisfied and low is None and mid is not None, f"sample point ok={sample.satisfied}"


def _picard(rc: RunConfig, tier: Tier, w: ArtifactWriter) -> tuple[bool, str]:
    cfg = SolverConfig(CFG.LOCAL_HURST, tier.picard_cutoff, 0.005, 0.05)
    u0 = unit_direction(cfg.cutoff, rc.seed).scale(1e-2)
    seeds = [rc.seed + i for i in range(tier.picard_seeds)]
    rep = picard_ensemble_report(cfg, u0, seeds, rc.threads)
    w.table("accept_picard.csv", ("seed", "tau", "factor"), zip(rep.seeds, rep.taus, rep.factors))
    need = math.ceil(0.9 * len(seeds))
    geometric = all(f < 1.0 for t, f in zip(rep.taus, rep.factors) if t > 0)
    return rep.certified >= need and geometric, f"{rep.certified}/{len(seeds)} certified"


def _global(rc: RunConfig, tier: Tier, w: ArtifactWriter) -> tuple[bool, str]:
    n = tier.global_cutoff
    fine = SolverConfig(0.75, n, tier.global_dt / 2.0, tier.global_t_final, sigma=0.4)
    coarse = replace(fine, dt=tier.global_dt)
    # the first seed is driven on the fine grid; its coarse run sees every other time of that path
    zf = forcing_path(fine, rc.seed, threads=rc.threads)
    v_first = unit_direction(n, rc.seed + 1000)
    fine_run = global_solve(fine, v_first, zf)

    def one(i: int):
        seed = rc.seed + i
        z = zf.subsample(2) if i == 0 else forcing_path(coarse, seed)
        try:
            return seed, global_solve(coarse, unit_direction(n, seed + 1000), z)
        except FNS2DError as exc:
            log.error("global solve failed for seed %d: %s", seed, exc)
            return seed, None

    runs = pmap(one, range(tier.global_seeds), rc.threads)
    ok = all(res is not None for _, res in runs)
    rows = [(seed, math.nan if res is None else res.sup_h_sigma, res is None) for seed, res in runs]
    halving = math.inf
    if runs[0][1] is not None:
        # compare on the shared grid times t > 0; both runs start from the same u0
        a = fine_run.u.diagnostics["h_sigma"][2::2]
        b = runs[0][1].u.diagnostics["h_sigma"][1:]
        halving = rel_change(float(np.max(b)), float(np.max(a)))
        rows.append(("final_change", rel_change(float(b[-1]), float(a[-1])), False))
    # ledger order on a resolved problem: lambda_max dt <= 1/4
    small = SolverConfig(0.75, 4, 1.0 / 128.0, 0.25, sigma=0.4)
    zs = forcing_path(replace(small, dt=small.dt / 2.0), rc.seed, threads=rc.threads)
    u0 = unit_direction(4, rc.seed)
    r1 = integrate(u0, zs.subsample(2))[1].max_residual()
    r2 = integrate(u0, zs)[1].max_residual()
    order = r1 / r2 if r2 > 0 else math.inf
    ok &= halving < 0.05 and order > 1.4
    rows.append(("dt_halving", halving, False))
    rows.append(("ledger_ratio", order, False))
    w.table("accept_global.csv", ("seed", "sup_h_sigma", "blow_up"), rows)
    return ok, f"dt halving change {halving:.3%}, ledger ratio {order:.2f}"


def _uniqueness(rc: RunConfig, tier: Tier, w: ArtifactWriter) -> tuple[bool, str]:
    cfg = SolverConfig(0.75, tier.unique_cutoff, 0.01, tier.unique_t_final, sigma=0.4)
    v0 = unit_direction(cfg.cutoff, rc.seed + 7)
    z = forcing_path(cfg, rc.seed, threads=rc.threads)
    zc = forcing_path(cfg, rc.seed + 1, threads=rc.threads)
    rep = uniqueness_check(cfg, v0, z, (1e-3, 1e-5, 1e-7), rc.seed, z_control=zc)
    rows = [("identical_sup", rep.identical_sup), ("control_sup", rep.control_sup)]
    rows += [(f"response delta={d!r}", r) for d, r in zip(rep.deltas, rep.response_final)]
    w.table("accept_uniqueness.csv", ("quantity", "value"), rows)
    ok = rep.identical_sup < 1e-12 and rep.response_spread < 2.0 and rep.control_sup > 1e-6
    return ok, f"replay {rep.identical_sup:.1e}, spread {rep.response_spread:.3f}"


CRITERIA: list[tuple[int, str, Callable[[RunConfig, Tier, ArtifactWriter], tuple[bool, str]]]] = [
    (1, "fOU variance law", _fou_variance),
    (2, "z regularity threshold", _z_regularity),
    (3, "bilinear oracle equivalence", _bilinear),
    (4, "trilinear identities", _trilinear),
    (5, "B(z,z) second moment", _bzz_second),
    (6, "B(z,z) fourth moment", _bzz_fourth),
    (7, "lattice sum scalings", _lemmas),
    (8, "parameter window", _window),
    (9, "local Picard regime", _picard),
    (10, "global regime", _global),
    (11, "pathwise uniqueness proxy", _uniqueness),
]


def run_acceptance(rc: RunConfig, w: ArtifactWriter, only: tuple[int, ...] = ()) -> list[CheckResult]:
    tier = QUICK if rc.quick else FULL
    results = []
    for number, name, fn in CRITERIA:
        if only and number not in only:
            continue
        t0 = time.perf_counter()
        try:
            passed, detail = fn(rc, tier, w)
        except FNS2DError as exc:
            passed, detail = False, f"{type(exc).__name__}: {exc}"
        dt = time.perf_counter() - t0
        log.info("criterion %d (%s): %s in %.1fs, %s", number, name, "PASS" if passed else "FAIL", dt, detail)
        results.append(CheckResult(number, name, bool(passed), detail, dt))
    # wall time stays out of the table so reruns produce identical bytes
    w.table("acceptance.csv", ("criterion", "name", "passed", "detail"),
            [(r.number, r.name, r.passed, r.detail) for r in results])
    return results
