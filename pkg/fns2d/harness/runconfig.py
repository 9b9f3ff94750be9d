from __future__ import annotations

import hashlib
import math
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path
from typing import Any, Mapping, Optional

from config import CFG
from core.errors import ConfigError

SUBCOMMANDS = (
    "sample-fbm", "fou-variance", "z-regularity", "bilinear-check", "bzz-moment",
    "series-oracle", "picard", "simulate", "uniqueness", "accept",
)


def _floats(raw: str) -> tuple[float, ...]:
    return tuple(float(x) for x in raw.replace(";", ",").split(",") if x.strip())


def _ints(raw: str) -> tuple[int, ...]:
    return tuple(int(x) for x in raw.replace(";", ",").split(",") if x.strip())


def _bool(raw: str) -> bool:
    v = raw.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {raw!r}")


@dataclass(frozen=True)
class RunConfig:
    subcommand: str
    hurst: float
    cutoff: int
    dt: float
    t_final: float
    seed: int
    replicas: int
    rho: float
    sigma: float
    tol: float
    threads: int
    out: str
    snap_every: int = 0
    quick: bool = False
    # subcommand-specific
    lams: tuple[float, ...] = (1.0, 4.0, 9.0)
    cutoffs: tuple[int, ...] = (8, 16, 32)
    moment: int = 1
    u0_scale: float = 1e-2
    seeds: int = 10
    deltas: tuple[float, ...] = (1e-3, 1e-5, 1e-7)
    scheme: str = "exponential_euler"

    def echo(self) -> list[str]:
        out = []
        for k, v in sorted(asdict(self).items()):
            if isinstance(v, tuple):
                v = ",".join(repr(x) if isinstance(x, float) else str(x) for x in v)
            elif isinstance(v, float):
                v = repr(v)
            out.append(f"{k}={v}")
        return out

    @property
    def config_hash(self) -> str:
        # where the artifacts go is not part of what they contain
        lines = [x for x in self.echo() if not x.startswith("out=")]
        return hashlib.sha256("\n".join(lines).encode("utf-8")).hexdigest()[:16]


_PARSERS = {
    "subcommand": str, "hurst": float, "cutoff": int, "dt": float, "t_final": float, "seed": int,
    "replicas": int, "rho": float, "sigma": float, "tol": float, "threads": int, "out": str,
    "snap_every": int, "quick": _bool, "lams": _floats, "cutoffs": _ints, "moment": int,
    "u0_scale": float, "seeds": int, "deltas": _floats, "scheme": str,
}


def defaults(cfg: CFG, subcommand: str) -> RunConfig:
    # the local solver only runs for 7/16 < H < 1/2
    h = cfg.LOCAL_HURST if subcommand == "picard" else cfg.HURST
    return RunConfig(
        subcommand=subcommand, hurst=h, cutoff=cfg.CUTOFF, dt=cfg.DT, t_final=cfg.T_FINAL,
        seed=cfg.SEED, replicas=cfg.REPLICAS, rho=cfg.RHO, sigma=cfg.SIGMA, tol=cfg.TOL,
        threads=cfg.THREADS, out=cfg.OUT_DIR, snap_every=cfg.SNAP_EVERY,
        cutoffs=tuple(cfg.SERIES_CUTOFFS), deltas=tuple(cfg.DELTAS), scheme=cfg.SCHEME,
    )


def parse_config_file(path: str | Path) -> dict[str, str]:
    """Plain ``key = value`` lines; '#' starts a comment."""
    out: dict[str, str] = {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    for n, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{n}: expected key = value")
        k, v = (s.strip() for s in line.split("=", 1))
        out[k.replace("-", "_")] = v
    return out


def apply(base: RunConfig, values: Mapping[str, Any]) -> RunConfig:
    known = {f.name for f in fields(RunConfig)}
    changes = {}
    for k, v in values.items():
        if k not in known:
            raise ConfigError(f"unknown configuration key {k!r}")
        if isinstance(v, str):
            try:
                v = _PARSERS[k](v)
            except ValueError as exc:
                raise ConfigError(f"bad value for {k}: {exc}") from exc
        changes[k] = v
    return replace(base, **changes)


def validate(rc: RunConfig) -> RunConfig:
    """Reject values outside the preconditions of the module a subcommand runs."""
    if rc.subcommand not in SUBCOMMANDS:
        raise ConfigError(f"unknown subcommand {rc.subcommand!r}")
    h = rc.hurst
    if not 0.0 < h < 1.0:
        raise ConfigError(f"hurst must lie in (0, 1), got {h}")
    checks = [
        (rc.cutoff >= 1, f"cutoff must be >= 1, got {rc.cutoff}"),
        (rc.dt > 0 and math.isfinite(rc.dt), f"dt must be positive, got {rc.dt}"),
        (rc.t_final > 0, f"t_final must be positive, got {rc.t_final}"),
        (rc.replicas >= 1, f"replicas must be >= 1, got {rc.replicas}"),
        (rc.tol > 0, f"tol must be positive, got {rc.tol}"),
        (rc.threads >= 1, f"threads must be >= 1, got {rc.threads}"),
        (rc.snap_every >= 0, f"snap_every must be >= 0, got {rc.snap_every}"),
        (rc.moment in (1, 2), f"moment must be 1 or 2, got {rc.moment}"),
        (all(x > 0 for x in rc.lams), "decay rates must be positive"),
        (len(rc.cutoffs) >= 3 and all(n >= 1 for n in rc.cutoffs), "need at least 3 positive cutoffs"),
        (rc.seeds >= 1, f"seeds must be >= 1, got {rc.seeds}"),
        (all(d > 0 for d in rc.deltas), "perturbation sizes must be positive"),
        (rc.scheme in ("exponential_euler", "imex"), f"unknown scheme {rc.scheme!r}"),
    ]
    for ok, msg in checks:
        if not ok:
            raise ConfigError(msg)

    sc = rc.subcommand
    if sc == "bzz-moment" and h <= 0.25:
        raise ConfigError(f"bzz-moment needs H > 1/4 (the B(z,z) moment series diverges otherwise), got H={h}")
    if sc == "picard" and not 7.0 / 16.0 < h < 0.5:
        raise ConfigError(f"picard needs 7/16 < H < 1/2, got H={h}")
    if sc in ("simulate", "uniqueness"):
        if not 0.5 < h < 1.0:
            raise ConfigError(f"{sc} needs 1/2 < H < 1, got H={h}")
        if not 0.0 < rc.sigma < 2.0 * (h - 0.5):
            raise ConfigError(f"{sc} needs 0 < sigma < 2(H-1/2) = {2.0 * (h - 0.5):.4f}, got sigma={rc.sigma}")
    return rc


def resolve(cfg: CFG, subcommand: str, file_values: Optional[Mapping[str, str]] = None,
            flag_values: Optional[Mapping[str, Any]] = None) -> RunConfig:
    """CFG defaults < config file < flags, then validation."""
    rc = defaults(cfg, subcommand)
    if file_values:
        rc = apply(rc, file_values)
    if flag_values:
        rc = apply(rc, {k: v for k, v in flag_values.items() if v is not None})
    return validate(replace(rc, subcommand=subcommand))
