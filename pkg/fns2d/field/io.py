from __future__ import annotations

import re
from pathlib import Path
from typing import Sequence

import numpy as np

from core.csvio import read_table, write_table
from core.errors import PreconditionError
from field.spectral import FourierField, mode_set

FIELD_HEADER = "fns2d-field v1 cutoff={cutoff}"
_HEADER_RE = re.compile(r"fns2d-field v1 cutoff=(\d+)")


def write_field(path: str | Path, field: FourierField, manifest: Sequence[str] = ()) -> Path:
    ms = field.modes
    rows = (
        (int(a), int(b), float(c.real), float(c.imag))
        for a, b, c in zip(ms.k1, ms.k2, field.coeffs)
    )
    comments = list(manifest) + [FIELD_HEADER.format(cutoff=field.cutoff)]
    return write_table(path, ("k1", "k2", "re", "im"), rows, comments)


def read_field(path: str | Path) -> FourierField:
    """Rows may name k or -k; a lower-half row is folded in through v_k = -conj(v_{-k})."""
    comments, cols, rows = read_table(path)
    cutoff = None
    for c in comments:
        m = _HEADER_RE.fullmatch(c)
        if m:
            cutoff = int(m.group(1))
    if cutoff is None:
        raise PreconditionError(f"{path}: missing fns2d-field header")
    if list(cols) != ["k1", "k2", "re", "im"]:
        raise PreconditionError(f"{path}: unexpected columns {cols}")
    ms = mode_set(cutoff)
    coeffs = np.zeros(ms.size, dtype=np.complex128)
    seen = np.zeros(ms.size, dtype=bool)
    for r in rows:
        a, b = int(r[0]), int(r[1])
        if a == 0 and b == 0:
            raise PreconditionError(f"{path}: the zero mode carries no coefficient")
        if max(abs(a), abs(b)) > cutoff:
            raise PreconditionError(f"{path}: mode ({a}, {b}) lies outside cutoff {cutoff}")
        v = complex(float(r[2]), float(r[3]))
        slot = ms.box_slot[a + cutoff, b + cutoff]
        if ms.box_sign[a + cutoff, b + cutoff] < 0:
            v = -v.conjugate()
        if seen[slot] and coeffs[slot] != v:
            raise PreconditionError(f"{path}: rows for ({a}, {b}) and its mirror break v_-k = -conj(v_k)")
        coeffs[slot], seen[slot] = v, True
    return FourierField(cutoff, coeffs)
