from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from core.errors import CutoffMismatchError, PreconditionError
from field.spectral import FourierField, sobolev_sq


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Fields on a strictly increasing time grid, stored as a (T, n+) stack."""
    times: np.ndarray
    cutoff: int
    coeffs: np.ndarray
    diagnostics: dict = field(default_factory=dict)
    stopped_at: Optional[float] = None

    def __post_init__(self):
        t = np.array(self.times, dtype=float, copy=True)
        c = np.array(self.coeffs, dtype=np.complex128, copy=True)
        if t.ndim != 1 or c.shape[0] != t.size:
            raise PreconditionError("times and field stack disagree in length")
        if t.size > 1 and not np.all(np.diff(t) > 0):
            raise PreconditionError("trajectory times must be strictly increasing")
        t.setflags(write=False)
        c.setflags(write=False)
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "coeffs", c)

    @classmethod
    def from_fields(cls, times, fields: list[FourierField], **kw) -> "Trajectory":
        cutoff = fields[0].cutoff
        for f in fields:
            if f.cutoff != cutoff:
                raise CutoffMismatchError(cutoff, f.cutoff)
        return cls(np.asarray(times), cutoff, np.stack([f.coeffs for f in fields]), **kw)

    @classmethod
    def constant(cls, times, f: FourierField) -> "Trajectory":
        return cls(np.asarray(times), f.cutoff, np.repeat(f.coeffs[None, :], len(times), axis=0))

    def __len__(self) -> int:
        return int(self.times.size)

    def __getitem__(self, i: int) -> FourierField:
        return FourierField(self.cutoff, self.coeffs[i])

    @property
    def fields(self) -> list[FourierField]:
        return [self[i] for i in range(len(self))]

    def norms(self, r: float) -> np.ndarray:
        return np.sqrt(sobolev_sq(self.coeffs, self.cutoff, r))

    def same_grid(self, other: "Trajectory") -> bool:
        return self.cutoff == other.cutoff and np.array_equal(self.times, other.times)

    def max_jump(self, r: float = 0.0) -> float:
        """Largest step-to-step change in H^r along the grid."""
        if len(self) < 2:
            return 0.0
        return float(np.sqrt(sobolev_sq(np.diff(self.coeffs, axis=0), self.cutoff, r)).max())

    def subsample(self, stride: int) -> "Trajectory":
        """Every ``stride``-th time, starting with the first."""
        if stride < 1:
            raise PreconditionError(f"stride must be >= 1, got {stride}")
        return Trajectory(self.times[::stride], self.cutoff, self.coeffs[::stride])
