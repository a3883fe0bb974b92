"""Lower envelopes of strictly convex univariate quadratics.

An envelope is stored as a sorted partition of the real line.  Piece ``j``
covers ``[bounds[j], bounds[j + 1]]`` and holds the quadratic that is
smallest there; ``bounds[0] = -inf`` and ``bounds[n] = +inf``.  Inserting a
new quadratic walks the pieces once, splits each one at its crossings with
the newcomer and keeps whichever quadratic is lower on every sub-interval, so
the representation stays minimal and the cost is linear in its length.

The kernels below work on flat arrays (piece bounds, piece ids into a
coefficient table) so the dynamic program can call them without Python
overhead.  :class:`Envelope` wraps them for direct use.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any

import numpy as np
from numba import njit

__all__ = [
    "EPS_ABS",
    "EPS_REL",
    "Quadratic",
    "Interval",
    "Envelope",
    "intersect",
    "evaluate",
    "insert",
    "global_min",
]

EPS_ABS = 1e-12
EPS_REL = 1e-12
# relative width below which a freshly split piece is dropped
ZERO_WIDTH = 1e-14


@dataclass(eq=False)
class Quadratic:
    """``a*y**2 + b*y + c`` plus the bookkeeping needed to recover a fit.

    ``index`` is the grid index of the segment end that generated the
    quadratic, ``parent`` refers to the quadratic it was minimized against
    and ``kappa, eta`` give the minimizing successor value
    ``y_next = kappa * y + eta``.  All of these stay ``None`` for
    quadratics that were not produced by the dynamic program.
    """

    a: float
    b: float
    c: float
    index: int | None = None
    parent: Any = None
    kappa: float | None = None
    eta: float | None = None

    def __call__(self, y):
        return (self.a * y + self.b) * y + self.c

    @property
    def vertex(self) -> float:
        return -self.b / (2.0 * self.a)


@dataclass(frozen=True)
class Interval:
    lo: float
    hi: float

    def __contains__(self, y) -> bool:
        return self.lo <= y <= self.hi


# ---------------------------------------------------------------- kernels


@njit(cache=True, nogil=True)
def crossing_roots(da, db, dc):
    """Real roots of ``da*y**2 + db*y + dc``, ascending.

    Returns ``(count, r1, r2)``.  A non-positive discriminant counts as no
    crossing: the difference then keeps one sign, which is all the caller
    needs.
    """
    if da == 0.0:
        if db == 0.0:
            return 0, 0.0, 0.0
        return 1, -dc / db, 0.0
    disc = db * db - 4.0 * da * dc
    if not disc > 0.0:
        return 0, 0.0, 0.0
    s = math.sqrt(disc)
    h = -0.5 * (db + s) if db >= 0.0 else -0.5 * (db - s)
    r1 = h / da
    r2 = dc / h
    if r1 > r2:
        r1, r2 = r2, r1
    return 2, r1, r2


@njit(cache=True, nogil=True)
def _probe(x0, x1, v, which):
    """Probe point ``which`` (0, 1 or 2) inside ``[x0, x1]``.

    Point 0 keeps away from ``v``, the vertex of the difference: without a
    sign change the difference can still touch zero there.  Points 1 and 2
    sit near the ends at the scale of the end values, where the two
    quadratics are small enough for a relative comparison to be sharp.
    """
    lo_inf = x0 == -np.inf
    hi_inf = x1 == np.inf
    if which == 0:
        if lo_inf and hi_inf:
            if np.isnan(v):
                return 0.0
            return v + max(1.0, abs(v))
        if lo_inf:
            base = x1 if (np.isnan(v) or v >= x1) else v
            return base - max(1.0, abs(base))
        if hi_inf:
            base = x0 if (np.isnan(v) or v <= x0) else v
            return base + max(1.0, abs(base))
        if np.isnan(v):
            return 0.5 * (x0 + x1)
        y1 = x0 + 0.25 * (x1 - x0)
        y2 = x0 + 0.75 * (x1 - x0)
        return y1 if abs(y1 - v) >= abs(y2 - v) else y2
    if lo_inf and hi_inf:
        return -1.0 if which == 1 else 1.0
    if lo_inf:
        return x1 - (0.5 if which == 1 else 4.0) * max(1.0, abs(x1))
    if hi_inf:
        return x0 + (0.5 if which == 1 else 4.0) * max(1.0, abs(x0))
    if which == 1:
        return x0 + min(0.5 * (x1 - x0), 0.5 * max(1.0, abs(x0)))
    return x1 - min(0.5 * (x1 - x0), 0.5 * max(1.0, abs(x1)))


@njit(cache=True, nogil=True)
def insert_kernel(bounds, ids, n, qa, qb, qc, k, eps_abs, eps_rel,
                  out_bounds, out_ids):
    """Insert quadratic ``k`` of the table ``(qa, qb, qc)`` into an envelope.

    ``out_bounds``/``out_ids`` must hold at least ``3*n + 2``/``3*n + 1``
    entries.  Returns the new piece count, or -1 when ``k`` is nowhere lower
    than the envelope by more than the tie tolerance (output untouched in
    meaning).  Ties keep the incumbent.
    """
    a, b, c = qa[k], qb[k], qc[k]
    m = 0
    won = False
    pts = np.empty(4)
    for j in range(n):
        lo = bounds[j]
        hi = bounds[j + 1]
        p = ids[j]
        pa, pb, pc = qa[p], qb[p], qc[p]
        da = a - pa
        db = b - pb
        dc = c - pc
        cnt, r1, r2 = crossing_roots(da, db, dc)
        v = -db / (2.0 * da) if da != 0.0 else np.nan
        pts[0] = lo
        npts = 1
        if cnt >= 1 and lo < r1 < hi:
            pts[npts] = r1
            npts += 1
        if cnt == 2 and lo < r2 < hi:
            pts[npts] = r2
            npts += 1
        pts[npts] = hi
        for s in range(npts):
            x0 = pts[s]
            x1 = pts[s + 1]
            # the sign of the difference is constant here; only a reading
            # inside the tie band asks for another probe
            owner = p
            for which in range(3):
                y = _probe(x0, x1, v, which)
                mv = (a * y + b) * y + c
                pv = (pa * y + pb) * y + pc
                dv = (da * y + db) * y + dc
                tol = eps_abs + eps_rel * max(abs(mv), abs(pv))
                if not tol < np.inf:
                    tol = eps_abs
                if dv < -tol:
                    owner = k
                    break
                if dv > tol:
                    break
            if m > 0 and out_ids[m - 1] == owner:
                continue
            if (m > 0 and x0 > -np.inf and x1 < np.inf
                    and x1 - x0 <= ZERO_WIDTH * max(abs(x0), abs(x1))):
                # sliver from rounding: the previous piece absorbs it
                continue
            out_bounds[m] = x0
            out_ids[m] = owner
            m += 1
            if owner == k:
                won = True
    if not won:
        return -1
    out_bounds[m] = np.inf
    return m


@njit(cache=True, nogil=True)
def envelope_min(bounds, ids, n, qa, qb, qc):
    """Global minimum ``(y, value, piece)``; ties go to the smallest y."""
    best_y = np.nan
    best_v = np.inf
    best_j = -1
    for j in range(n):
        p = ids[j]
        a, b, c = qa[p], qb[p], qc[p]
        y = -b / (2.0 * a)
        if y < bounds[j]:
            y = bounds[j]
        elif y > bounds[j + 1]:
            y = bounds[j + 1]
        v = (a * y + b) * y + c
        if v < best_v:
            best_v = v
            best_y = y
            best_j = j
    return best_y, best_v, best_j


# ---------------------------------------------------------------- Python API


def intersect(p: Quadratic, q: Quadratic):
    """Crossings of ``p`` and ``q``.

    Returns ``(kind, roots)`` where ``kind`` is one of ``"identical"``,
    ``"parallel"`` (no crossing, including complex roots), ``"tangent"``,
    ``"one"`` (equal leading coefficients) or ``"two"``, and ``roots`` is a
    sorted tuple of the real solutions of ``p(y) = q(y)``.
    """
    da, db, dc = p.a - q.a, p.b - q.b, p.c - q.c
    if da == 0.0 and db == 0.0:
        return ("identical" if dc == 0.0 else "parallel"), ()
    if da == 0.0:
        return "one", (-dc / db,)
    disc = db * db - 4.0 * da * dc
    scale = max(db * db, abs(4.0 * da * dc))
    if abs(disc) <= EPS_REL * scale:
        return "tangent", (-db / (2.0 * da),)
    cnt, r1, r2 = crossing_roots(da, db, dc)
    if cnt == 0:
        return "parallel", ()
    return "two", (r1, r2)


class Envelope:
    """Pointwise minimum of a set of strictly convex quadratics.

    Parameters
    ----------
    eps_abs, eps_rel : float
        A newcomer only takes over where it is lower than the incumbent by
        more than ``eps_abs + eps_rel * max(|p(y)|, |q(y)|)``.
    """

    def __init__(self, eps_abs: float = EPS_ABS, eps_rel: float = EPS_REL):
        self.eps_abs = eps_abs
        self.eps_rel = eps_rel
        self._bounds = np.empty(0)
        self._ids = np.empty(0, dtype=np.int64)
        self._table: list[Quadratic] = []

    @classmethod
    def from_quadratics(cls, quads, **kw) -> "Envelope":
        env = cls(**kw)
        for q in quads:
            env.insert(q)
        return env

    @classmethod
    def _from_arrays(cls, bounds, ids, table, **kw) -> "Envelope":
        env = cls(**kw)
        env._bounds = np.asarray(bounds, dtype=float)
        env._ids = np.asarray(ids, dtype=np.int64)
        env._table = list(table)
        return env

    def __len__(self) -> int:
        return self._ids.size

    def __bool__(self) -> bool:
        return self._ids.size > 0

    @property
    def quadratics(self) -> list[Quadratic]:
        """The distinct quadratics that are minimal somewhere."""
        return list(self._table)

    @property
    def pieces(self) -> list[tuple[Interval, Quadratic]]:
        b = self._bounds
        return [(Interval(float(b[j]), float(b[j + 1])), self._table[p])
                for j, p in enumerate(self._ids)]

    def _coeffs(self, extra=()):
        tab = self._table + list(extra)
        qa = np.array([q.a for q in tab], dtype=float)
        qb = np.array([q.b for q in tab], dtype=float)
        qc = np.array([q.c for q in tab], dtype=float)
        return qa, qb, qc

    def insert(self, mu: Quadratic) -> bool:
        """Add ``mu``; returns whether it became part of the envelope."""
        if not mu.a > 0:
            raise ValueError(f"quadratic must be strictly convex, got a={mu.a}")
        if not all(map(math.isfinite, (mu.a, mu.b, mu.c))):
            raise ValueError("quadratic coefficients must be finite")
        n = len(self)
        if n == 0:
            self._bounds = np.array([-np.inf, np.inf])
            self._ids = np.zeros(1, dtype=np.int64)
            self._table = [mu]
            return True
        qa, qb, qc = self._coeffs((mu,))
        k = len(self._table)
        out_b = np.empty(3 * n + 2)
        out_i = np.empty(3 * n + 1, dtype=np.int64)
        m = insert_kernel(self._bounds, self._ids, n, qa, qb, qc, k,
                          self.eps_abs, self.eps_rel, out_b, out_i)
        if m < 0:
            return False
        ids = out_i[:m]
        used, remap = np.unique(ids, return_inverse=True)
        tab = self._table + [mu]
        self._table = [tab[u] for u in used]
        self._ids = remap.astype(np.int64)
        self._bounds = out_b[:m + 1].copy()
        return True

    def evaluate(self, y):
        if not self:
            raise ValueError("cannot evaluate an empty envelope")
        qa, qb, qc = self._coeffs()
        yy = np.asarray(y, dtype=float)
        j = np.searchsorted(self._bounds[1:-1], yy, side="right")
        p = self._ids[j]
        out = (qa[p] * yy + qb[p]) * yy + qc[p]
        return float(out) if out.ndim == 0 else out

    __call__ = evaluate

    def global_min(self) -> tuple[float, float, Quadratic]:
        if not self:
            raise ValueError("empty envelope has no minimum")
        qa, qb, qc = self._coeffs()
        y, v, j = envelope_min(self._bounds, self._ids, len(self), qa, qb, qc)
        return float(y), float(v), self._table[self._ids[j]]

    def dump(self) -> str:
        """One line per piece: ``lo hi a b c index``."""
        lines = []
        for iv, q in self.pieces:
            lines.append(f"{iv.lo!r} {iv.hi!r} {q.a!r} {q.b!r} {q.c!r} "
                         f"{'-' if q.index is None else q.index}")
        return "\n".join(lines)

    def check(self, rtol: float = 1e-9) -> None:
        """Raise AssertionError if a representation invariant is broken.

        Checks the partition of the real line, coalescing, continuity at
        piece boundaries and minimality of every piece at probe points.
        """
        with np.errstate(over="ignore", invalid="ignore"):
            self._check(rtol)

    def _check(self, rtol):
        n = len(self)
        if n == 0:
            return
        b = self._bounds
        assert b.size == n + 1, "bounds/pieces length mismatch"
        assert b[0] == -np.inf and b[-1] == np.inf, "partition must cover R"
        assert np.all(b[1:] > b[:-1]), "bounds not strictly increasing"
        assert np.all(self._ids[1:] != self._ids[:-1]), "adjacent duplicates"
        tab = self._table
        assert all(q.a > 0 for q in tab), "non-convex quadratic stored"
        assert sorted(set(self._ids.tolist())) == list(range(len(tab))), \
            "table holds quadratics that own no piece"

        def close(u, v):
            if not (math.isfinite(u) and math.isfinite(v)):
                return True  # overflow far out on the axis
            return abs(u - v) <= rtol * (1.0 + max(abs(u), abs(v)))

        for j in range(1, n):
            p, q = tab[self._ids[j - 1]], tab[self._ids[j]]
            x = b[j]
            assert close(p(x), q(x)), f"discontinuity at boundary {x!r}"
        for j in range(n):
            lo, hi = b[j], b[j + 1]
            own = tab[self._ids[j]]
            for y in _interior_probes(lo, hi):
                v = own(y)
                for other in tab:
                    w = other(y)
                    assert v <= w + rtol * (1.0 + max(abs(v), abs(w))), \
                        f"piece {j} is not minimal at y={y!r}"


def _interior_probes(lo, hi):
    if math.isinf(lo) and math.isinf(hi):
        return [-1.0, 0.0, 1.0]
    if math.isinf(lo):
        s = max(1.0, abs(hi))
        return [hi - 0.5 * s, hi - s, hi - 4 * s]
    if math.isinf(hi):
        s = max(1.0, abs(lo))
        return [lo + 0.5 * s, lo + s, lo + 4 * s]
    return [lo + f * (hi - lo) for f in (0.25, 0.5, 0.75)]


def evaluate(env: Envelope, y):
    return env.evaluate(y)


def insert(env: Envelope, mu: Quadratic) -> Envelope:
    env.insert(mu)
    return env


def global_min(env: Envelope):
    return env.global_min()
