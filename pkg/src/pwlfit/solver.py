"""Exact dynamic programming for continuous piecewise-linear fits.

The value function ``V_i^m(y)`` (least cost of covering ``[t_i, t_N]`` with
``m`` segments when the fit starts at value ``y``) is a lower envelope of
convex quadratics.  Each stage builds the envelope for every start index
from the envelopes of the previous stage:

    V_i^m(y) = min_{j} min_{p in V_j^{m-1}} min_{y'} [l_ij(y, y') + p(y')]

where the inner minimization is a closed-form partial minimization of a
convex quadratic form.  Every quadratic remembers the segment end ``j`` it
came from, the quadratic it was minimized against and the affine map giving
the minimizing ``y'``, so the optimal breakpoints and values are read back
by walking these links.

The penalized variant drops the segment count from the state and charges
``zeta`` per segment instead.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .cost import DISCRETE, Moments, QuadraticForm2, as_moments, qf_coeffs
from .envelope import (EPS_ABS, EPS_REL, Envelope, Quadratic, envelope_min,
                       insert_kernel)

__all__ = [
    "InfeasibleBudgetError",
    "InternalInvariantError",
    "Diagnostics",
    "FitResult",
    "InstrumentationReport",
    "minimize_out",
    "solve_constrained",
    "solve_regularized",
    "recover",
    "evaluate_fit",
    "path_cost",
    "instrumentation_report",
]


class InfeasibleBudgetError(ValueError):
    """The requested number of segments cannot be realized on the grid."""


class InternalInvariantError(RuntimeError):
    """A quadratic lost strict convexity or a recovery link is broken."""


# ---------------------------------------------------------------- partial minimization


def minimize_out(qf: QuadraticForm2, p: Quadratic, extra: float = 0.0,
                 index: int | None = None, parent=None) -> Quadratic:
    """Minimize ``qf(y, y') + p(y') + extra`` over ``y'``.

    The result is a quadratic in ``y`` carrying the recovery map
    ``y'* = kappa * y + eta``.  ``p`` may be the zero quadratic as long as
    the combined form stays strictly convex in ``y'``.
    """
    P, q = qf.P, qf.q
    P12 = 0.5 * (P[0, 1] + P[1, 0])
    a, b, c, kappa, eta = _partial_min(P[0, 0], P12, P[1, 1], q[0], q[1],
                                       qf.r, p.a, p.b, p.c, extra)
    if not (a > 0 and np.isfinite(kappa)):
        raise InternalInvariantError(
            f"partial minimization is not strictly convex (a={a})")
    return Quadratic(a, b, c, index=index, parent=parent, kappa=kappa, eta=eta)


@njit(cache=True, nogil=True)
def _partial_min(P11, P12, P22, q1, q2, r, pa, pb, pc, extra):
    d = P22 + pa
    if not d > 0.0:
        return np.nan, np.nan, np.nan, np.nan, np.nan
    e = q2 + pb
    a = P11 - P12 * P12 / d
    b = q1 - P12 * e / d
    c = r + pc + extra - 0.25 * e * e / d
    return a, b, c, -P12 / d, -0.5 * e / d


# ---------------------------------------------------------------- stage kernel


@njit(cache=True, nogil=True)
def _grow_f(x, n):
    y = np.empty(max(2 * x.size, n))
    y[:x.size] = x
    return y


@njit(cache=True, nogil=True)
def _grow_i(x, n):
    y = np.empty(max(2 * x.size, n), dtype=np.int64)
    y[:x.size] = x
    return y


@njit(cache=True, nogil=True)
def _build_envelope(i, j_hi, order, cstart, clen, ca, cb, cc, cid,
                    kind, t, tau, S, extra, eps_abs, eps_rel):
    """Envelope of V_i from the candidate sets of every j in (i, j_hi].

    Returns the piece bounds, piece -> quadratic ids, the surviving
    quadratics (coefficients, recovery map, generating index, parent id) and
    counters ``(candidates, accepted, peak_length)``.
    """
    cap = 16
    sa = np.empty(cap)
    sb = np.empty(cap)
    sc = np.empty(cap)
    sk = np.empty(cap)
    se = np.empty(cap)
    sg = np.empty(cap, dtype=np.int64)
    sp = np.empty(cap, dtype=np.int64)
    bnd = np.empty(8)
    ids = np.empty(8, dtype=np.int64)
    obnd = np.empty(8)
    oids = np.empty(8, dtype=np.int64)
    n = 0
    s = 0
    n_cand = 0
    n_acc = 0
    peak = 0
    for j in order:
        if j <= i or j > j_hi or clen[j] == 0:
            continue
        P11, P12, P22, q1, q2, r = qf_coeffs(kind, t, tau, S, i, j)
        for ci in range(cstart[j], cstart[j] + clen[j]):
            a, b, c, kap, eta = _partial_min(P11, P12, P22, q1, q2, r,
                                             ca[ci], cb[ci], cc[ci], extra)
            if not (a > 0.0 and np.isfinite(kap)):
                raise InternalInvariantError("lost strict convexity")
            n_cand += 1
            if s == sa.size:
                sa = _grow_f(sa, s + 1)
                sb = _grow_f(sb, s + 1)
                sc = _grow_f(sc, s + 1)
                sk = _grow_f(sk, s + 1)
                se = _grow_f(se, s + 1)
                sg = _grow_i(sg, s + 1)
                sp = _grow_i(sp, s + 1)
            sa[s] = a
            sb[s] = b
            sc[s] = c
            sk[s] = kap
            se[s] = eta
            sg[s] = j
            sp[s] = cid[ci]
            if n == 0:
                bnd[0] = -np.inf
                bnd[1] = np.inf
                ids[0] = s
                m = 1
            else:
                if obnd.size < 3 * n + 2:
                    obnd = np.empty(2 * (3 * n + 2))
                    oids = np.empty(2 * (3 * n + 2), dtype=np.int64)
                m = insert_kernel(bnd, ids, n, sa, sb, sc, s, eps_abs,
                                  eps_rel, obnd, oids)
                if m < 0:
                    continue
                bnd, obnd = obnd, bnd
                ids, oids = oids, ids
            n = m
            s += 1
            n_acc += 1
            if n > peak:
                peak = n
    # keep only quadratics that still own a piece, in first-seen order
    remap = np.full(s, -1, dtype=np.int64)
    u = 0
    for k in range(n):
        if remap[ids[k]] < 0:
            remap[ids[k]] = u
            u += 1
    keep = np.empty(u, dtype=np.int64)
    for k in range(s):
        if remap[k] >= 0:
            keep[remap[k]] = k
    out_ids = np.empty(n, dtype=np.int64)
    for k in range(n):
        out_ids[k] = remap[ids[k]]
    counters = np.array([n_cand, n_acc, peak], dtype=np.int64)
    return (bnd[:n + 1].copy(), out_ids, sa[keep], sb[keep], sc[keep],
            sk[keep], se[keep], sg[keep], sp[keep], counters)


# ---------------------------------------------------------------- bookkeeping


class _Pool:
    """Every quadratic that survived in some envelope, addressed by id."""

    _fields = ("a", "b", "c", "kappa", "eta", "index", "parent")

    def __init__(self):
        self.size = 0
        self.cols = {f: np.empty(64, dtype=np.int64 if f in ("index", "parent")
                                 else float) for f in self._fields}

    def extend(self, a, b, c, kappa, eta, index, parent) -> int:
        base = self.size
        k = len(a)
        if base + k > self.cols["a"].size:
            new = max(2 * self.cols["a"].size, base + k)
            for f, col in self.cols.items():
                grown = np.empty(new, dtype=col.dtype)
                grown[:base] = col[:base]
                self.cols[f] = grown
        for f, v in zip(self._fields, (a, b, c, kappa, eta, index, parent)):
            self.cols[f][base:base + k] = v
        self.size += k
        return base

    def quadratic(self, k: int) -> Quadratic:
        col = self.cols
        par = int(col["parent"][k])
        return Quadratic(float(col["a"][k]), float(col["b"][k]),
                         float(col["c"][k]), index=int(col["index"][k]),
                         parent=None if par < 0 else par,
                         kappa=None if par < 0 else float(col["kappa"][k]),
                         eta=None if par < 0 else float(col["eta"][k]))


class _Candidates:
    """Quadratic sets of the envelopes a stage may draw from, per index."""

    def __init__(self, N):
        self.start = np.zeros(N + 1, dtype=np.int64)
        self.length = np.zeros(N + 1, dtype=np.int64)
        self.a = np.empty(0)
        self.b = np.empty(0)
        self.c = np.empty(0)
        self.ids = np.empty(0, dtype=np.int64)

    def set_many(self, entries):
        """Replace everything by ``{index: (a, b, c, pool_ids)}``."""
        self.length[:] = 0
        parts = sorted(entries.items())
        sizes = [len(e[3]) for _, e in parts]
        offs = np.concatenate(([0], np.cumsum(sizes))).astype(np.int64)
        for (j, _), o, k in zip(parts, offs, sizes):
            self.start[j] = o
            self.length[j] = k
        if parts:
            self.a, self.b, self.c, self.ids = (
                np.concatenate([e[f] for _, e in parts]) for f in range(4))
            self.ids = self.ids.astype(np.int64)

    def add(self, j, a, b, c, ids):
        """Append the set for index ``j`` (regularized sweep)."""
        self.start[j] = self.a.size
        self.length[j] = len(a)
        self.a = np.concatenate((self.a, a))
        self.b = np.concatenate((self.b, b))
        self.c = np.concatenate((self.c, c))
        self.ids = np.concatenate((self.ids, np.asarray(ids, dtype=np.int64)))


@dataclass
class Diagnostics:
    """Solver counters.

    ``lengths[m - 1, i]`` is the final piece count of the envelope of
    ``V_i^m`` (0 where it is not defined); the regularized solver uses a
    single row.  ``peak_length`` is the longest envelope seen at any time,
    including mid-construction.
    """

    N: int
    lengths: np.ndarray
    peak_length: int = 0
    candidates: int = 0
    accepted: int = 0
    wall_time: float = 0.0
    stages: dict | None = field(default=None, repr=False)

    @property
    def max_lengths(self) -> np.ndarray:
        """``max_m length(V_i^m)`` for ``i = 0 .. N-1``."""
        return self.lengths[:, :self.N].max(axis=0)

    @property
    def R(self) -> int:
        return int(max(self.peak_length, self.lengths.max(initial=0)))


@dataclass
class FitResult:
    """An optimal continuous piecewise-linear fit.

    ``objective`` is the minimum read off the value function: the squared
    error, plus ``zeta * segments`` for the penalized problem.
    ``residual`` is the squared error of the recovered fit, rescored
    segment by segment.
    """

    indices: np.ndarray
    values: np.ndarray
    objective: float
    segments: int
    residual: float
    zeta: float | None = None
    diagnostics: Diagnostics | None = field(default=None, repr=False)

    def breakpoints(self, data) -> np.ndarray:
        """Grid positions of the breakpoints."""
        return as_moments(data).grid[self.indices]


# ---------------------------------------------------------------- solvers


def _terminal(mom: Moments):
    if mom.kind == DISCRETE:
        gN = mom.terminal
        return 1.0, -2.0 * gN, gN * gN
    return 0.0, 0.0, 0.0


def _eps_abs(mom: Moments, eps_abs):
    # the tie tolerance follows the cost scale of the data
    if eps_abs is None:
        return EPS_ABS * mom.energy
    return eps_abs


def _order(N, shuffle_seed):
    if shuffle_seed is None:
        return np.arange(N + 1, dtype=np.int64)
    return np.random.default_rng(shuffle_seed).permutation(N + 1).astype(np.int64)


def recover(pool: _Pool, best: int, y0: float, start: int = 0):
    """Walk recovery links from quadratic ``best`` evaluated at ``y0``.

    Returns the breakpoint indices and values.  The walk ends at the
    terminal quadratic, which has no parent.
    """
    col = pool.cols
    idx = [start]
    vals = [float(y0)]
    k = int(best)
    y = float(y0)
    for _ in range(pool.size + 1):
        par = int(col["parent"][k])
        if par < 0:
            break
        y = float(col["kappa"][k] * y + col["eta"][k])
        j = int(col["index"][k])
        if j <= idx[-1]:
            raise InternalInvariantError("recovery indices not increasing")
        idx.append(j)
        vals.append(y)
        k = par
    else:
        raise InternalInvariantError("recovery chain does not terminate")
    return np.array(idx, dtype=np.int64), np.array(vals)


def _finish(pool, env_arrays, mom, zeta, diag):
    bnd, ids, uid = env_arrays
    col = pool.cols
    y, v, j = envelope_min(bnd, ids, ids.size, col["a"][uid], col["b"][uid],
                           col["c"][uid])
    best = uid[ids[j]]
    idx, vals = recover(pool, best, y)
    if idx[-1] != mom.N:
        raise InternalInvariantError("recovered path does not reach N")
    return FitResult(idx, vals, float(v), idx.size - 1,
                     path_cost(mom, idx, vals), zeta, diag)


def _store(pool, res):
    bnd, ids, a, b, c, kap, eta, gen, par, counters = res
    base = pool.extend(a, b, c, kap, eta, gen, par)
    uid = np.arange(base, base + a.size, dtype=np.int64)
    return (bnd, ids, uid), (a, b, c, uid), counters


def _stage_envelope(env_arrays, pool, eps_abs, eps_rel):
    bnd, ids, uid = env_arrays
    table = [pool.quadratic(int(k)) for k in uid]
    return Envelope._from_arrays(bnd, ids, table, eps_abs=eps_abs,
                                 eps_rel=eps_rel)


def solve_constrained(data, M: int, *, threads: int = 1,
                      shuffle_seed: int | None = None,
                      keep_stages: bool = False,
                      eps_abs: float | None = None,
                      eps_rel: float = EPS_REL) -> list[FitResult]:
    """Optimal fits with exactly ``m`` segments for every ``m = 1 .. M``.

    Parameters
    ----------
    data : Signal or Moments
    M : int
        Largest segment count, ``1 <= M <= N``.
    threads : int
        Envelopes of one stage are independent and may be built
        concurrently; results do not depend on this setting.
    shuffle_seed : int, optional
        Visit segment ends in a random order instead of ascending.  Only
        useful to check order independence.
    keep_stages : bool
        Keep every stage envelope in ``diagnostics.stages[(m, i)]``.
    eps_abs : float, optional
        Absolute tie tolerance; defaults to ``1e-12`` times the signal
        energy.

    Returns
    -------
    list of FitResult
        Element ``m - 1`` is the optimum with ``m`` segments.
    """
    mom = as_moments(data)
    N = mom.N
    if N < 1:
        raise ValueError("signal needs N >= 1")
    if not isinstance(M, (int, np.integer)) or not 1 <= M <= N:
        raise InfeasibleBudgetError(f"segment budget must be in [1, {N}], got {M}")
    t_start = time.perf_counter()
    eps_abs = _eps_abs(mom, eps_abs)
    order = _order(N, shuffle_seed)
    pool = _Pool()
    ta, tb, tc = _terminal(mom)
    pool.extend([ta], [tb], [tc], [np.nan], [np.nan], [N], [-1])
    cands = _Candidates(N)
    cands.set_many({N: (np.array([ta]), np.array([tb]), np.array([tc]),
                        np.array([0], dtype=np.int64))})
    diag = Diagnostics(N, np.zeros((M, N + 1), dtype=np.int64))
    if keep_stages:
        diag.stages = {}
    results = []
    kernel_args = (mom.kind_code, mom.grid, mom._tau, mom._S)

    for m in range(1, M + 1):
        j_hi = N - m + 1
        starts = range(0, N - m + 1)

        def build(i, cands=cands, j_hi=j_hi):
            return _build_envelope(i, j_hi, order, cands.start, cands.length,
                                   cands.a, cands.b, cands.c, cands.ids,
                                   *kernel_args, 0.0, eps_abs, eps_rel)

        if threads > 1:
            with ThreadPoolExecutor(max_workers=threads) as ex:
                built = list(ex.map(build, starts))
        else:
            built = [build(i) for i in starts]

        nxt = {}
        first = None
        for i, res in zip(starts, built):
            env, cand, counters = _store(pool, res)
            nxt[i] = cand
            diag.lengths[m - 1, i] = env[1].size
            diag.candidates += int(counters[0])
            diag.accepted += int(counters[1])
            diag.peak_length = max(diag.peak_length, int(counters[2]))
            if keep_stages:
                diag.stages[(m, i)] = _stage_envelope(env, pool, eps_abs, eps_rel)
            if i == 0:
                first = env
        results.append(_finish(pool, first, mom, None, diag))
        cands = _Candidates(N)
        cands.set_many(nxt)

    diag.wall_time = time.perf_counter() - t_start
    return results


def solve_regularized(data, zeta: float, *, shuffle_seed: int | None = None,
                      keep_stages: bool = False,
                      eps_abs: float | None = None,
                      eps_rel: float = EPS_REL) -> FitResult:
    """Optimal fit for squared error plus ``zeta`` per segment."""
    mom = as_moments(data)
    N = mom.N
    zeta = float(zeta)
    if not zeta >= 0.0 or not np.isfinite(zeta):
        raise ValueError(f"penalty must be a finite number >= 0, got {zeta}")
    t_start = time.perf_counter()
    eps_abs = _eps_abs(mom, eps_abs)
    order = _order(N, shuffle_seed)
    pool = _Pool()
    ta, tb, tc = _terminal(mom)
    pool.extend([ta], [tb], [tc], [np.nan], [np.nan], [N], [-1])
    cands = _Candidates(N)
    cands.add(N, np.array([ta]), np.array([tb]), np.array([tc]), [0])
    diag = Diagnostics(N, np.zeros((1, N + 1), dtype=np.int64))
    if keep_stages:
        diag.stages = {}
    kernel_args = (mom.kind_code, mom.grid, mom._tau, mom._S)

    env = None
    for i in range(N - 1, -1, -1):
        res = _build_envelope(i, N, order, cands.start, cands.length,
                              cands.a, cands.b, cands.c, cands.ids,
                              *kernel_args, zeta, eps_abs, eps_rel)
        env, cand, counters = _store(pool, res)
        cands.add(i, *cand)
        diag.lengths[0, i] = env[1].size
        diag.candidates += int(counters[0])
        diag.accepted += int(counters[1])
        diag.peak_length = max(diag.peak_length, int(counters[2]))
        if keep_stages:
            diag.stages[i] = _stage_envelope(env, pool, eps_abs, eps_rel)

    fit = _finish(pool, env, mom, zeta, diag)
    diag.wall_time = time.perf_counter() - t_start
    return fit


# ---------------------------------------------------------------- fit evaluation


def path_cost(data, indices, values) -> float:
    """Squared error of the fit through ``(t[indices], values)``.

    Sums the segment quadratic forms and, for discrete signals, the error
    at the last sample.
    """
    mom = as_moments(data)
    idx = np.asarray(indices)
    y = np.asarray(values, dtype=float)
    if idx[0] != 0 or idx[-1] != mom.N or np.any(np.diff(idx) <= 0):
        raise ValueError("indices must increase from 0 to N")
    total = 0.0
    for k in range(idx.size - 1):
        P11, P12, P22, q1, q2, r = qf_coeffs(mom.kind_code, mom.grid, mom._tau, mom._S,
                                             int(idx[k]), int(idx[k + 1]))
        u, v = y[k], y[k + 1]
        total += P11 * u * u + 2 * P12 * u * v + P22 * v * v + q1 * u + q2 * v + r
    if mom.kind == DISCRETE:
        total += (mom.terminal - y[-1]) ** 2
    return float(total)


def evaluate_fit(fit: FitResult, data, t):
    """Value of the fitted polyline at ``t`` (grid coordinates)."""
    grid = as_moments(data).grid
    tt = np.asarray(t, dtype=float)
    if np.any(tt < grid[0]) or np.any(tt > grid[-1]):
        raise ValueError(f"t outside [{grid[0]}, {grid[-1]}]")
    out = np.interp(tt, grid[fit.indices], fit.values)
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------- instrumentation


@dataclass
class InstrumentationReport:
    max_lengths: np.ndarray
    R: int
    bound_held: bool
    index_bound_held: bool
    violations: list

    def lines(self) -> list[str]:
        out = [f"{i},{int(n)}" for i, n in enumerate(self.max_lengths)]
        out.append(f"R,{self.R},bound_held,{str(self.bound_held).lower()}")
        return out


def instrumentation_report(diag) -> InstrumentationReport:
    """Envelope lengths per start index against the bounds ``N`` and ``N - i``.

    Accepts a :class:`Diagnostics` or a :class:`FitResult`.  Violations of
    the bounds are reported, never raised.
    """
    if isinstance(diag, FitResult):
        diag = diag.diagnostics
    N = diag.N
    viol = [(m + 1 if diag.lengths.shape[0] > 1 else None, i, int(n))
            for m, row in enumerate(diag.lengths)
            for i, n in enumerate(row[:N]) if n > N - i]
    return InstrumentationReport(diag.max_lengths, diag.R, diag.R <= N,
                                 not viol, viol)
