from __future__ import annotations

import logging
import math
import statistics
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from config import CFG
from core.errors import (
    BlowUpError,
    CutoffMismatchError,
    DomainError,
    LocalFailureError,
    PreconditionError,
)
from core.math_utils import power_mean
from core.parallel import pmap
from core.rng import replica_stream
from field.spectral import FourierField, NormSpec, besov_norm_coeffs, mode_set, random_field, sobolev_sq
from field.trajectory import Trajectory
from noise.fbm import hurst
from noise.fou import sample_z_field, z_family
from nonlinear.bilinear import bilinear_fft_coeffs
from solver.conditions import LocalParams, check_parameter_conditions, local_params_for

log = logging.getLogger(__name__)

SCHEMES = ("exponential_euler", "imex")


@dataclass(frozen=True)
class SolverConfig:
    H: float
    cutoff: int
    dt: float
    t_final: float
    scheme: str = "exponential_euler"
    picard_tol: float = 1e-10
    picard_max_iter: int = 60
    blowup_threshold: float = 1e6
    sigma: float = 0.4
    local: Optional[LocalParams] = None

    def __post_init__(self):
        hurst(self.H)
        if self.cutoff < 1:
            raise PreconditionError(f"cutoff must be >= 1, got {self.cutoff}")
        if not (self.dt > 0 and self.t_final > 0):
            raise PreconditionError("dt and t_final must be positive")
        if self.scheme not in SCHEMES:
            raise PreconditionError(f"unknown scheme {self.scheme!r}, expected one of {SCHEMES}")

    @property
    def steps(self) -> int:
        return max(1, int(round(self.t_final / self.dt)))

    @property
    def times(self) -> np.ndarray:
        return self.dt * np.arange(self.steps + 1)


def forcing_path(cfg: SolverConfig, seed: int, amplitude: float = 1.0, trunc_tol: float = CFG.TRUNC_TOL,
                 threads: int = 1) -> Trajectory:
    """Sampled stationary convolution z on the solver grid."""
    fam = z_family(cfg.H, cfg.cutoff, cfg.t_final, cfg.dt, seed, trunc_tol=trunc_tol, amplitude=amplitude)
    return sample_z_field(cfg.H, cfg.cutoff, fam, cfg.times, trunc_tol=trunc_tol, threads=threads)


def zero_forcing(cfg: SolverConfig) -> Trajectory:
    return Trajectory.constant(cfg.times, FourierField.zeros(cfg.cutoff))


def _check_forcing(cutoff: int, z: Trajectory) -> tuple[np.ndarray, float]:
    if z.cutoff != cutoff:
        raise CutoffMismatchError(cutoff, z.cutoff)
    t = z.times
    if len(t) < 2:
        raise PreconditionError("forcing trajectory needs at least two times")
    dt = float(t[1] - t[0])
    if not np.allclose(np.diff(t), dt, rtol=1e-9, atol=0.0):
        raise PreconditionError("forcing trajectory must live on a uniform grid")
    return t, dt


def _pair(a: np.ndarray, b: np.ndarray, weight: np.ndarray | float = 1.0) -> np.ndarray:
    # <a, b> over Z^2_0 for real fields stored on Z^2_+
    return 2.0 * np.real(np.sum(a * weight * np.conj(b), axis=-1))


def _etd_weights(cutoff: int, dt: float) -> tuple[np.ndarray, np.ndarray]:
    lam = mode_set(cutoff).mag2.astype(float)
    decay = np.exp(-lam * dt)
    return decay, -np.expm1(-lam * dt) / lam


# ====================
# Linear mild formula
# ====================
def mild_linear(x0: FourierField, forcing: np.ndarray, dt: float) -> np.ndarray:
    """x_{n+1} = e^{dt A} x_n + int_0^dt e^{sA} ds f_n ; exact for piecewise-constant f."""
    decay, w = _etd_weights(x0.cutoff, dt)
    out = np.empty((forcing.shape[0] + 1, x0.coeffs.size), dtype=np.complex128)
    out[0] = x0.coeffs
    for n in range(forcing.shape[0]):
        out[n + 1] = decay * out[n] + w * forcing[n]
    return out


# ====================
# Time stepping
# ====================
@dataclass(frozen=True)
class EnergyLedger:
    """Per-step terms of the H^0 and H^sigma energy identities (left-point in time)."""
    times: np.ndarray
    lhs: np.ndarray
    dissipation: np.ndarray
    production: np.ndarray
    transport: np.ndarray
    lhs_sigma: np.ndarray
    dissipation_sigma: np.ndarray
    production_sigma: np.ndarray

    @property
    def residual(self) -> np.ndarray:
        return self.lhs + self.dissipation - self.production

    @property
    def residual_sigma(self) -> np.ndarray:
        return self.lhs_sigma + self.dissipation_sigma - self.production_sigma

    def max_residual(self) -> float:
        return float(np.max(np.abs(self.residual))) if self.residual.size else 0.0


def integrate(u0: FourierField, z: Trajectory, scheme: str = "exponential_euler", sigma: float = 0.0,
              blowup_threshold: float = math.inf) -> tuple[Trajectory, EnergyLedger]:
    """Step du/dt = Au - B(u+z, u+z) on the grid of z."""
    n = u0.cutoff
    t, dt = _check_forcing(n, z)
    if scheme not in SCHEMES:
        raise PreconditionError(f"unknown scheme {scheme!r}")
    ms = mode_set(n)
    lam = ms.mag2.astype(float)
    decay, w = _etd_weights(n, dt)
    wsig = lam ** sigma

    T = len(t)
    u = np.zeros((T, ms.size), dtype=np.complex128)
    u[0] = u0.coeffs
    keys = ("lhs", "dissipation", "production", "transport", "lhs_sigma", "dissipation_sigma", "production_sigma")
    led = {k: np.zeros(T - 1) for k in keys}
    hs = np.zeros(T)
    hs[0] = math.sqrt(sobolev_sq(u[0], n, sigma))

    for i in range(T - 1):
        ui, zi = u[i], z.coeffs[i]
        wi = ui + zi
        # B(w,u) and B(w,z) in one batch; B(w,w) is their sum
        b = bilinear_fft_coeffs(np.stack([wi, wi]), np.stack([ui, zi]), n)
        force = -(b[0] + b[1])
        if scheme == "exponential_euler":
            u[i + 1] = decay * ui + w * force
        else:
            u[i + 1] = (ui + dt * force) / (1.0 + lam * dt)

        e0, e1 = sobolev_sq(np.stack([ui, u[i + 1]]), n, 0.0)
        s0, s1 = sobolev_sq(np.stack([ui, u[i + 1]]), n, sigma)
        led["lhs"][i] = (e1 - e0) / (2.0 * dt)
        led["dissipation"][i] = sobolev_sq(ui, n, 1.0)
        led["transport"][i] = _pair(b[0], ui)
        led["production"][i] = -_pair(b[1], ui)
        led["lhs_sigma"][i] = (s1 - s0) / (2.0 * dt)
        led["dissipation_sigma"][i] = sobolev_sq(ui, n, 1.0 + sigma)
        led["production_sigma"][i] = -float(np.sum(_pair(b, ui, wsig)))

        hs[i + 1] = math.sqrt(s1) if s1 >= 0 else math.nan
        if not math.isfinite(hs[i + 1]) or hs[i + 1] > blowup_threshold:
            partial = Trajectory(t[:i + 2], n, u[:i + 2], diagnostics={"h_sigma": hs[:i + 2]})
            log.error("blow-up at t=%.4f: ||u||_sigma = %.3e", t[i + 1], hs[i + 1])
            raise BlowUpError(float(t[i + 1]), float(hs[i + 1]), partial)

    ledger = EnergyLedger(t[:-1].copy(), **led)
    diag = {
        "h0": np.sqrt(sobolev_sq(u, n, 0.0)),
        "grad": np.sqrt(sobolev_sq(u, n, 1.0)),
        "h_sigma": hs,
    }
    return Trajectory(t, n, u, diagnostics=diag), ledger


def reconstruct_v(u_traj: Trajectory, z_traj: Trajectory, sigma: float = 0.0) -> Trajectory:
    """v = u + z with H^sigma norms of v; triangle inequality checked per step."""
    if u_traj.cutoff != z_traj.cutoff:
        raise CutoffMismatchError(u_traj.cutoff, z_traj.cutoff)
    if not np.array_equal(u_traj.times, z_traj.times):
        raise PreconditionError("u and z trajectories live on different time grids")
    v = u_traj.coeffs + z_traj.coeffs
    nv = np.sqrt(sobolev_sq(v, u_traj.cutoff, sigma))
    bound = u_traj.norms(sigma) + z_traj.norms(sigma)
    if np.any(nv > bound * (1.0 + 1e-12) + 1e-300):
        raise AssertionError("triangle inequality violated in reconstruct_v")
    return Trajectory(u_traj.times, u_traj.cutoff, v, diagnostics={"h_sigma": nv})


@dataclass(frozen=True)
class GlobalResult:
    u: Trajectory
    v: Trajectory
    ledger: EnergyLedger

    @property
    def sup_h_sigma(self) -> float:
        return float(np.max(self.u.diagnostics["h_sigma"]))


def check_global_regime(H, sigma: float):
    h = hurst(H)
    if not 0.5 < h < 1.0:
        raise DomainError(f"the global regime needs 1/2 < H < 1, got H={h}")
    if not 0.0 < sigma < 2.0 * (h - 0.5):
        raise DomainError(f"the global regime needs 0 < sigma < 2(H-1/2) = {2.0 * (h - 0.5):.4f}, got {sigma}")


def global_solve(cfg: SolverConfig, v0: FourierField, z_traj: Trajectory) -> GlobalResult:
    check_global_regime(cfg.H, cfg.sigma)
    if v0.cutoff != cfg.cutoff:
        raise CutoffMismatchError(cfg.cutoff, v0.cutoff)
    u0 = v0 - z_traj[0]
    u, ledger = integrate(u0, z_traj, cfg.scheme, cfg.sigma, cfg.blowup_threshold)
    v = reconstruct_v(u, z_traj, cfg.sigma)
    log.info("global solve H=%.3f N=%d T=%.3g: sup ||u||_sigma = %.4g, ledger residual %.3e",
             cfg.H, cfg.cutoff, z_traj.times[-1], float(np.max(u.diagnostics["h_sigma"])),
             ledger.max_residual())
    return GlobalResult(u, v, ledger)


# ====================
# Picard map
# ====================
@dataclass(frozen=True)
class PicardResult:
    trajectory: Trajectory
    residuals: tuple[float, ...]
    factors: np.ndarray           # measured contraction factor of every prefix [0, t_m]
    tau: float
    converged: bool

    @property
    def iterations(self) -> int:
        return len(self.residuals)

    @property
    def contraction_factor(self) -> float:
        r = [b / a for a, b in zip(self.residuals[:-1], self.residuals[1:]) if a > 0]
        return max(r) if r else 0.0


def picard_map(u0: np.ndarray, u: np.ndarray, z: np.ndarray, cutoff: int, dt: float) -> np.ndarray:
    """Discrete mild map: I_m = e^{dt A} I_{m-1} - int e^{sA} ds B(u+z, u+z)_{m-1}."""
    decay, w = _etd_weights(cutoff, dt)
    s = u + z
    f = bilinear_fft_coeffs(s, s, cutoff)
    out = np.empty_like(u)
    out[0] = u0
    for m in range(1, u.shape[0]):
        out[m] = decay * out[m - 1] - w * f[m - 1]
    return out


def _prefix_norms(d: np.ndarray, cutoff: int, dt: float, p: LocalParams, sigma: float) -> np.ndarray:
    """E_T proxy of a difference stack on every prefix [0, t_m]."""
    c = np.sqrt(sobolev_sq(d, cutoff, sigma))
    b = besov_norm_coeffs(d, cutoff, NormSpec("besov", p.alpha, p.p, p.q))
    sup = np.maximum.accumulate(c)
    if math.isinf(p.beta):
        lb = np.maximum.accumulate(b)
    else:
        lb = (dt * np.cumsum(b ** p.beta)) ** (1.0 / p.beta)
    return np.maximum(sup, lb)


def picard_solve(cfg: SolverConfig, u0: FourierField, z_traj: Trajectory, force: bool = False) -> PicardResult:
    if u0.cutoff != cfg.cutoff:
        raise CutoffMismatchError(cfg.cutoff, u0.cutoff)
    params = cfg.local or local_params_for(cfg.H)
    verdict = check_parameter_conditions(params, cfg.H)
    if not verdict.satisfied:
        if not force:
            raise DomainError(f"local parameters violate conditions {list(verdict.violated)}")
        log.warning("conditions %s violated, continuing on request", list(verdict.violated))
    n = cfg.cutoff
    t, dt = _check_forcing(n, z_traj)
    z = z_traj.coeffs

    u = np.exp(-np.outer(t, mode_set(n).mag2)) * u0.coeffs[None, :]
    floor = 1e-3 * cfg.picard_tol
    residuals: list[float] = []
    prev: Optional[np.ndarray] = None
    factors = np.zeros(len(t))
    converged = False
    for it in range(cfg.picard_max_iter):
        nxt = picard_map(u0.coeffs, u, z, n, dt)
        e = _prefix_norms(nxt - u, n, dt, params, params.sigma)
        residuals.append(float(e[-1]))
        if prev is not None:
            ok = prev > floor
            ratio = np.where(ok, e / np.where(ok, prev, 1.0), 0.0)
            factors = np.maximum(factors, ratio)
        log.debug("picard iteration %d: residual %.3e", it + 1, e[-1])
        prev, u = e, nxt
        if e[-1] < cfg.picard_tol:
            converged = True
            break

    bad = np.nonzero(factors[1:] >= 1.0)[0]
    m_star = len(t) - 1 if bad.size == 0 else int(bad[0])
    if m_star == 0:
        raise LocalFailureError(float(factors[1]), tuple(residuals))
    tau = float(t[m_star])
    diag = {"residuals": np.asarray(residuals), "factors": factors, "tau": tau}
    if converged:
        traj = Trajectory(t, n, u, diagnostics=diag)
    else:
        log.warning("picard not converged after %d iterations; certified prefix [0, %.4g]", len(residuals), tau)
        traj = Trajectory(t[:m_star + 1], n, u[:m_star + 1], diagnostics=diag, stopped_at=tau)
    return PicardResult(traj, tuple(residuals), factors, tau, converged)


@dataclass(frozen=True)
class TauReport:
    H: float
    seeds: tuple[int, ...]
    taus: tuple[float, ...]          # nan where no prefix was certified
    factors: tuple[float, ...]

    @property
    def certified(self) -> int:
        return sum(1 for x in self.taus if x > 0)

    def summary(self) -> dict:
        ok = [x for x in self.taus if x > 0]
        if not ok:
            return {"min": math.nan, "median": math.nan, "max": math.nan}
        return {"min": min(ok), "median": statistics.median(ok), "max": max(ok)}


def picard_ensemble_report(cfg: SolverConfig, u0: FourierField, seeds: Sequence[int],
                           threads: int = 1) -> TauReport:
    """Certified interval length over independent forcing paths."""
    def one(seed: int) -> tuple[float, float]:
        z = forcing_path(cfg, seed)
        try:
            res = picard_solve(cfg, u0, z)
        except LocalFailureError as exc:
            return math.nan, exc.factor
        return res.tau, res.contraction_factor

    out = pmap(one, list(seeds), threads)
    rep = TauReport(hurst(cfg.H), tuple(int(s) for s in seeds),
                    tuple(a for a, _ in out), tuple(b for _, b in out))
    log.info("picard ensemble: %d/%d certified, tau %s", rep.certified, len(rep.seeds), rep.summary())
    return rep


# ====================
# Pathwise uniqueness proxy
# ====================
def unit_direction(cutoff: int, seed: int) -> FourierField:
    f = random_field(cutoff, replica_stream(seed, 41, 0), decay=1.0)
    return f.scale(1.0 / math.sqrt(float(sobolev_sq(f.coeffs, cutoff, 0.0))))


@dataclass(frozen=True)
class UniquenessReport:
    identical_sup: float
    deltas: tuple[float, ...]
    response_final: tuple[float, ...]   # ||V(T)||_0 / delta
    response_sup: tuple[float, ...]     # sup_t ||V(t)||_0 / delta
    control_sup: float = math.nan

    @property
    def response_spread(self) -> float:
        r = [x for x in self.response_final if x > 0]
        return max(r) / min(r) if r else math.inf


def _v_distance(a: GlobalResult, b: GlobalResult) -> np.ndarray:
    return np.sqrt(sobolev_sq(a.v.coeffs - b.v.coeffs, a.v.cutoff, 0.0))


def uniqueness_check(cfg: SolverConfig, v0: FourierField, z_traj: Trajectory,
                     deltas: Sequence[float] = (1e-3, 1e-5, 1e-7), seed: int = 0,
                     z_control: Optional[Trajectory] = None) -> UniquenessReport:
    base = global_solve(cfg, v0, z_traj)
    replay = global_solve(cfg, v0, z_traj)
    identical = float(np.max(_v_distance(base, replay)))

    w = unit_direction(cfg.cutoff, seed)
    fin, sup = [], []
    for d in deltas:
        pert = global_solve(cfg, v0 + w.scale(d), z_traj)
        dist = _v_distance(base, pert)
        fin.append(float(dist[-1] / d))
        sup.append(float(dist.max() / d))

    control = math.nan
    if z_control is not None:
        control = float(np.max(_v_distance(base, global_solve(cfg, v0, z_control))))
    rep = UniquenessReport(identical, tuple(float(d) for d in deltas), tuple(fin), tuple(sup), control)
    log.info("uniqueness: replay %.3e, response spread %.3f, control %.3e",
             identical, rep.response_spread, control)
    return rep
