"""Fourth moments E|B_k|^2 |B_j|^2 of B(z,z) under the Gaussian measure.

Two independent engines:

* ``generic_table`` writes every B_k as a pair of real quadratic forms in the
  coordinates (Re z, Im z) and uses the cumulant formula for products of
  Gaussian quadratic forms. Dense, so only small cutoffs.
* ``case_table`` enumerates the Wick pairings of the eight factors
  z_h z_{k-h} conj(z_h') conj(z_{k-h'}) z_l z_{j-l} conj(z_l') conj(z_{j-l'}),
  solves the index constraints of each pairing exactly and sums the free
  indices; pairings are grouped by the partner of z_h into six cases.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from math import gcd

import numpy as np

from config import CFG
from core.errors import BudgetError
from field.spectral import mode_set
from nonlinear.bilinear import gamma_array

log = logging.getLogger(__name__)

CASE_LABELS = {2: "h=h'", 3: "h=k-h'", 4: "h=-l", 5: "h=l-j", 6: "h=l'", 7: "h=j-l'"}


def mode_variance(c_h: float, H: float, mag2: np.ndarray) -> np.ndarray:
    """E|z_e|^2 = 2 C_H |e|^{-4H}, and 0 at e = 0."""
    m2 = np.asarray(mag2, dtype=float)
    safe = np.where(m2 > 0, m2, 1.0)
    return np.where(m2 > 0, 2.0 * c_h * safe ** (-2.0 * H), 0.0)


# ====================
# Generic engine
# ====================
def _quadratic_forms(cutoff: int, s: np.ndarray) -> np.ndarray:
    """Whitened real symmetric forms: rows 0..n-1 are Re B_k, rows n..2n-1 are Im B_k."""
    ms = mode_set(cutoff)
    n, N = ms.size, cutoff
    dim = 2 * n
    r = np.arange(-N, N + 1)
    b1, b2 = (a.ravel() for a in np.meshgrid(r, r, indexing="ij"))
    slot = ms.box_slot[b1 + N, b2 + N]
    sign = ms.box_sign[b1 + N, b2 + N]
    # z_h = a_h . x with x = (Re z_+, Im z_+); z_{-h} = -conj(z_h)
    avec = np.zeros((b1.size, dim), dtype=np.complex128)
    rows = np.arange(b1.size)
    avec[rows, slot] = sign
    avec[rows, n + slot] = 1j * np.abs(sign)
    root = np.sqrt(np.concatenate([s, s]) / 2.0)
    avec = avec * root

    box_index = {(int(a), int(b)): i for i, (a, b) in enumerate(zip(b1, b2))}
    forms = np.zeros((dim, dim, dim))
    for i in range(n):
        k1, k2 = int(ms.k1[i]), int(ms.k2[i])
        d1, d2 = k1 - b1, k2 - b2
        inside = (np.abs(d1) <= N) & (np.abs(d2) <= N)
        g = np.where(inside, gamma_array(b1, b2, k1, k2), 0.0)
        idx = np.nonzero(g)[0]
        if idx.size == 0:
            continue
        other = np.asarray([box_index[(int(d1[t]), int(d2[t]))] for t in idx])
        q = 1j * (avec[idx] * g[idx, None]).T @ avec[other]
        q = 0.5 * (q + q.T)
        forms[i] = q.real
        forms[n + i] = q.imag
    return forms


def generic_table(cutoff: int, c_h: float, H: float, max_cutoff: int = CFG.WICK_GENERIC_MAX_CUTOFF) -> np.ndarray:
    if cutoff > max_cutoff:
        raise BudgetError(f"dense Wick engine limited to cutoff <= {max_cutoff}, got {cutoff}")
    ms = mode_set(cutoff)
    n = ms.size
    m = _quadratic_forms(cutoff, mode_variance(c_h, H, ms.mag2))
    t2 = np.einsum("aij,aij->a", m, m)
    c2 = np.einsum("aij,bij->ab", m, m)
    sq = m @ m
    pp = np.einsum("aij,bij->ab", sq, sq)
    xx = np.empty_like(c2)
    for a in range(m.shape[0]):
        x = m[a] @ m
        xx[a] = np.einsum("bij,bji->b", x, x)
    f = 4.0 * np.outer(t2, t2) + 8.0 * c2 ** 2 + 32.0 * pp + 16.0 * xx
    return f[:n, :n] + f[:n, n:] + f[n:, :n] + f[n:, n:]


def generic_second_moments(cutoff: int, c_h: float, H: float) -> np.ndarray:
    """E|B_k|^2 = 2 tr(M_re^2) + 2 tr(M_im^2) from the same forms."""
    ms = mode_set(cutoff)
    m = _quadratic_forms(cutoff, mode_variance(c_h, H, ms.mag2))
    t2 = np.einsum("aij,aij->a", m, m)
    return 2.0 * (t2[:ms.size] + t2[ms.size:])


# ====================
# Pairing enumeration
# ====================
# slot -> (conjugated, var, sign of var, side) ; index of slot = side - var or var
_SLOTS = (
    (False, 0, +1), (False, 0, -1),
    (True, 1, +1), (True, 1, -1),
    (False, 2, +1), (False, 2, -1),
    (True, 3, +1), (True, 3, -1),
)
_SIDE = (0, 0, 1, 1)                      # var -> 0 uses k, 1 uses j
_FORBIDDEN = {(0, 1), (2, 3), (4, 5), (6, 7)}


def _slot_expr(slot: int) -> tuple[list[int], int, int]:
    """Coefficients (vars[4], k, j) of the index carried by a slot."""
    _, var, sgn = _SLOTS[slot]
    coef = [0, 0, 0, 0]
    coef[var] = sgn
    side = _SIDE[var]
    offset = 0 if sgn > 0 else 1
    return coef, offset * (side == 0), offset * (side == 1)


def _matchings(items: tuple[int, ...]):
    if not items:
        yield ()
        return
    a = items[0]
    for i in range(1, len(items)):
        b = items[i]
        rest = items[1:i] + items[i + 1:]
        for m in _matchings(rest):
            yield ((a, b),) + m


@dataclass(frozen=True)
class _Component:
    vars: tuple[int, ...]
    free: tuple[int, ...]
    solved: tuple[tuple[int, int, tuple[int, ...], int, int], ...]  # var, den, free coefs, k, j
    checks: tuple[tuple[int, int], ...]                              # ck k + cj j = 0
    pairs: tuple[tuple[int, int, int], ...]                          # slot p, slot q, sign


@dataclass(frozen=True)
class Pairing:
    pairs: tuple[tuple[int, int], ...]
    case: int
    components: tuple[_Component, ...]

    @property
    def disconnected(self) -> bool:
        """No pair links the B_k factors with the B_j factors."""
        return all(len({_SIDE[v] for v in c.vars}) == 1 for c in self.components)


def _rref(rows: list[list[Fraction]], nvar: int):
    rows = [r[:] for r in rows]
    pivots = []
    r = 0
    for c in range(nvar):
        p = next((i for i in range(r, len(rows)) if rows[i][c] != 0), None)
        if p is None:
            continue
        rows[r], rows[p] = rows[p], rows[r]
        lead = rows[r][c]
        rows[r] = [x / lead for x in rows[r]]
        for i in range(len(rows)):
            if i != r and rows[i][c] != 0:
                f = rows[i][c]
                rows[i] = [x - f * y for x, y in zip(rows[i], rows[r])]
        pivots.append(c)
        r += 1
    return rows, pivots


def _lcm(a: int, b: int) -> int:
    return a * b // gcd(a, b)


def _component(vars_: list[int], eqs: list[tuple[list[int], int, int, int, int, int]]) -> _Component:
    nv = len(vars_)
    rows = [[Fraction(c[v]) for v in vars_] + [Fraction(ck), Fraction(cj)] for c, ck, cj, *_ in eqs]
    red, piv = _rref(rows, nv)
    free = [vars_[i] for i in range(nv) if i not in piv]
    solved, checks = [], []
    for row in red:
        lead = next((i for i in range(nv) if row[i] != 0), None)
        if lead is None:
            ck, cj = row[nv], row[nv + 1]
            if ck != 0 or cj != 0:
                den = _lcm(ck.denominator, cj.denominator)
                checks.append((int(ck * den), int(cj * den)))
            continue
        coefs = [row[vars_.index(f)] for f in free] + [row[nv], row[nv + 1]]
        den = 1
        for x in coefs:
            den = _lcm(den, x.denominator)
        ints = [int(x * den) for x in coefs]
        # den * var = -(sum ints_f free + ints_k k + ints_j j)
        solved.append((vars_[lead], den, tuple(ints[:-2]), ints[-2], ints[-1]))
    pairs = tuple((p, q, sg) for *_, p, q, sg in eqs)
    return _Component(tuple(vars_), tuple(free), tuple(solved), tuple(checks), pairs)


@lru_cache(maxsize=1)
def enumerate_pairings() -> tuple[Pairing, ...]:
    out = []
    for m in _matchings(tuple(range(8))):
        if any(tuple(sorted(p)) in _FORBIDDEN for p in m):
            continue
        eqs = []
        for p, q in m:
            cp, kp, jp = _slot_expr(p)
            cq, kq, jq = _slot_expr(q)
            same = _SLOTS[p][0] == _SLOTS[q][0]
            sg = -1 if same else 1
            # same conjugation pairs e_p = -e_q, mixed pairs e_p = e_q
            if same:
                eqs.append(([a + b for a, b in zip(cp, cq)], kp + kq, jp + jq, p, q, sg))
            else:
                eqs.append(([a - b for a, b in zip(cp, cq)], kp - kq, jp - jq, p, q, sg))
        parent = list(range(4))

        def find(x):
            while parent[x] != x:
                x = parent[x]
            return x

        for c, *_ in eqs:
            vs = [v for v in range(4) if c[v] != 0]
            for v in vs[1:]:
                parent[find(v)] = find(vs[0])
        groups: dict[int, list[int]] = {}
        for v in range(4):
            groups.setdefault(find(v), []).append(v)
        comps = []
        for vs in groups.values():
            ce = [e for e in eqs if any(e[0][v] != 0 for v in vs)]
            comps.append(_component(vs, ce))
        partner = next(q if p == 0 else p for p, q in m if 0 in (p, q))
        out.append(Pairing(tuple(m), partner, tuple(comps)))
    return tuple(out)


# ====================
# Case engine
# ====================
@dataclass(frozen=True)
class CaseTable:
    total: np.ndarray
    by_case: dict = field(default_factory=dict)
    disconnected: np.ndarray | None = None


def _eval_component(comp: _Component, kv: np.ndarray, jv: np.ndarray, N: int,
                    c_h: float, H: float) -> np.ndarray:
    """Sum over the free indices of one component, shape (len(kv), len(jv))."""
    r = np.arange(-N, N + 1)
    grid = np.stack([a.ravel() for a in np.meshgrid(r, r, indexing="ij")], axis=-1)  # (G, 2)
    nf = len(comp.free)
    if nf:
        combos = np.stack(np.meshgrid(*[np.arange(grid.shape[0])] * nf, indexing="ij"), -1).reshape(-1, nf)
    else:
        combos = np.zeros((1, 0), dtype=np.int64)
    K = kv[:, None, None, :]
    J = jv[None, :, None, :]
    val: dict[int, np.ndarray] = {}
    ok = np.ones((kv.shape[0], jv.shape[0], combos.shape[0]), dtype=bool)
    for i, f in enumerate(comp.free):
        val[f] = np.broadcast_to(grid[combos[:, i]][None, None, :, :], ok.shape + (2,))
    for var, den, fc, ck, cj in comp.solved:
        acc = ck * K + cj * J
        for f, a in zip(comp.free, fc):
            acc = acc + a * val[f]
        acc = -np.broadcast_to(acc, ok.shape + (2,))
        if den != 1:
            ok &= np.all(acc % den == 0, axis=-1)
            acc = acc // den
        val[var] = acc
    for ck, cj in comp.checks:
        ok &= np.all(ck * K + cj * J == 0, axis=-1)

    prod = ok.astype(float)
    for v in comp.vars:
        side = K if _SIDE[v] == 0 else J
        x = val[v]
        d = side - x
        inside = np.all(np.abs(x) <= N, axis=-1) & np.all(np.abs(d) <= N, axis=-1)
        g = gamma_array(x[..., 0], x[..., 1], side[..., 0], side[..., 1])
        prod = prod * np.where(inside, g, 0.0)
    for p, _, sg in comp.pairs:
        _, var, sgn = _SLOTS[p]
        side = K if _SIDE[var] == 0 else J
        e = val[var] if sgn > 0 else side - val[var]
        prod = prod * sg * mode_variance(c_h, H, np.sum(e * e, axis=-1))
    return prod.sum(axis=-1)


def case_table(cutoff: int, c_h: float, H: float, chunk: int = 16) -> CaseTable:
    ms = mode_set(cutoff)
    kv = np.stack([ms.k1, ms.k2], axis=-1)
    n = ms.size
    by_case = {c: np.zeros((n, n)) for c in CASE_LABELS}
    disconnected = np.zeros((n, n))
    for pairing in enumerate_pairings():
        t = np.zeros((n, n))
        for s in range(0, n, chunk):
            block = np.ones((min(chunk, n - s), n))
            for comp in pairing.components:
                block = block * _eval_component(comp, kv[s:s + chunk], kv, cutoff, c_h, H)
            t[s:s + chunk] = block
        by_case[pairing.case] += t
        if pairing.disconnected:
            disconnected += t
    total = sum(by_case.values())
    return CaseTable(total, by_case, disconnected)
