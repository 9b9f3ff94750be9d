from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from core.errors import PreconditionError
from noise.fbm import hurst

LOCAL_THRESHOLD = 7.0 / 16.0


@dataclass(frozen=True)
class LocalParams:
    """(alpha, sigma, beta, p, q) of the local fixed-point space; beta, p, q may be inf."""
    alpha: float
    sigma: float
    beta: float
    p: float
    q: float

    @classmethod
    def from_reciprocals(cls, alpha: float, sigma: float, two_over_beta: float,
                         two_over_p: float, two_over_q: float) -> "LocalParams":
        def inv(x: float) -> float:
            return math.inf if x == 0 else 2.0 / x
        return cls(float(alpha), float(sigma), inv(two_over_beta), inv(two_over_p), inv(two_over_q))

    @property
    def reciprocals(self) -> tuple[float, float, float]:
        """(2/beta, 2/p, 2/q)."""
        return 2.0 / self.beta, 2.0 / self.p, 2.0 / self.q


@dataclass(frozen=True)
class ConditionVerdict:
    H: float
    params: LocalParams
    violated: tuple[int, ...]
    margins: tuple[float, ...]

    @property
    def satisfied(self) -> bool:
        return not self.violated


def _margins(H: float, alpha, sigma, tb, tp, tq):
    """Nine margins, condition n holds iff margin n > 0 (>= 0 for the non-strict ones)."""
    return (
        sigma + 1.0 - tp - tb,            # 1: 2/p + 2/beta < sigma + 1
        alpha + 1.0 - tp - tq,            # 2: 2/p + 2/q < alpha + 1
        tq - tb,                          # 3: beta >= q
        tp - alpha,                       # 4: alpha < 2/p
        tp - sigma,                       # 5: sigma < 2/p
        alpha + sigma,                    # 6: alpha + sigma > 0
        sigma + tb - alpha,               # 7: alpha < sigma + 2/beta
        sigma + 1.0 - alpha,              # 8: alpha <= sigma + 1
        4.0 * (H - 0.5) - sigma,          # 9: sigma < 4(H - 1/2)
    )


_NON_STRICT = (3, 8)


def _holds(n: int, margin) -> np.ndarray:
    return margin >= 0 if n in _NON_STRICT else margin > 0


def check_parameter_conditions(params: LocalParams, H) -> ConditionVerdict:
    h = hurst(H)
    for name, v in (("beta", params.beta), ("p", params.p), ("q", params.q)):
        if not v >= 1.0:
            raise PreconditionError(f"{name} must be >= 1, got {v}")
    tb, tp, tq = params.reciprocals
    margins = _margins(h, params.alpha, params.sigma, tb, tp, tq)
    violated = tuple(n for n, m in enumerate(margins, start=1) if not _holds(n, m))
    return ConditionVerdict(h, params, violated, tuple(float(m) for m in margins))


def sample_point(c: float) -> LocalParams:
    """Canonical point for H = 7/16 + c."""
    return LocalParams.from_reciprocals(0.25 - 2.0 * c, -0.25 + 3.0 * c,
                                        0.5 - 4.0 * c, 0.25 - c, 0.5 - 4.0 * c)


def feasible_parameter_search(H, step: float = 1.0 / 64.0,
                              sigma_range: Sequence[float] = (-1.0, 1.0),
                              alpha_range: Sequence[float] = (-1.0, 1.0),
                              recip_max: float = 2.0) -> Optional[LocalParams]:
    """First grid point satisfying all nine conditions, or None.

    Taking q = beta loses nothing: 2/q enters (2) with a minus sign and (3)
    only asks 2/q >= 2/beta.
    """
    h = hurst(H)
    sig = np.arange(sigma_range[0], sigma_range[1] + step / 2, step)
    alp = np.arange(alpha_range[0], alpha_range[1] + step / 2, step)
    rec = np.arange(step, recip_max + step / 2, step)
    a, tp, tb = np.meshgrid(alp, rec, rec, indexing="ij")
    for s in sig:
        ok = np.ones(a.shape, dtype=bool)
        for n, m in enumerate(_margins(h, a, s, tb, tp, tb), start=1):
            ok &= _holds(n, m)
            if not ok.any():
                break
        if ok.any():
            i = tuple(int(x[0]) for x in np.nonzero(ok))
            return LocalParams.from_reciprocals(float(a[i]), float(s), float(tb[i]), float(tp[i]), float(tb[i]))
    return None


def local_params_for(H) -> LocalParams:
    """Canonical point when it is admissible, else the first point of the grid search."""
    h = hurst(H)
    if h > LOCAL_THRESHOLD:
        cand = sample_point(h - LOCAL_THRESHOLD)
        if check_parameter_conditions(cand, h).satisfied:
            return cand
    found = feasible_parameter_search(h)
    if found is None:
        raise PreconditionError(f"no admissible (alpha, sigma, beta, p, q) for H={h}")
    return found
