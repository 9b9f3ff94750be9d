from __future__ import annotations

import os
from dataclasses import dataclass, field


def _env_int(name: str, default: int) -> int:
    raw = os.environ.get(name)
    try:
        return int(raw) if raw else default
    except ValueError:
        return default


@dataclass(frozen=True)
class CFG:
    # Run
    HURST: float = 0.75
    CUTOFF: int = 8
    DT: float = 0.005
    T_FINAL: float = 1.0
    SEED: int = 20240611
    REPLICAS: int = 2000
    RHO: float = -0.75
    SIGMA: float = 0.4
    TOL: float = 1e-6
    SNAP_EVERY: int = 0

    # Fractional noise / convolution
    FBM_EIG_TOL: float = 1e-10          # circulant eigenvalues above -tol are clipped to 0
    TRUNC_TOL: float = 1e-8             # burn-in: e^{-lambda T_burn} <= TRUNC_TOL
    MAX_LAMBDA_DT: float = 0.25
    CH_TRUNCATION: float = 60.0         # quadrature box [0,R]^2 for C_H

    # Series oracles
    SERIES_CUTOFFS: tuple[int, ...] = (8, 16, 32)
    LEMMA_K_GRID: tuple[int, ...] = (8, 12, 16, 24, 32, 48, 64)
    LEMMA3_MAX_R: int = 24
    WICK_GENERIC_MAX_CUTOFF: int = 5

    # Picard / local regime
    PICARD_TOL: float = 1e-10
    PICARD_MAX_ITER: int = 60
    LOCAL_HURST: float = 0.47

    # Global solver
    BLOWUP_THRESHOLD: float = 1e6
    SCHEME: str = "exponential_euler"
    DELTAS: tuple[float, ...] = (1e-3, 1e-5, 1e-7)

    # Environment (.env)
    THREADS: int = field(default_factory=lambda: max(1, _env_int("FNS2D_THREADS", os.cpu_count() or 1)))
    OUT_DIR: str = field(default_factory=lambda: os.environ.get("FNS2D_OUT", "out"))
    LOG_LEVEL: str = field(default_factory=lambda: os.environ.get("FNS2D_LOG_LEVEL", "INFO"))
