"""Brute-force reference solutions.

For a fixed set of breakpoints the best values solve a symmetric tridiagonal
system (the normal equations of the summed segment costs).  Enumerating all
breakpoint sets then gives the exact optimum for small problems.  Nothing
here touches the envelope machinery.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .cost import DISCRETE, as_moments, transition_cost

__all__ = ["OracleResult", "CombinatorialGuardError", "tridiag_solve",
           "fixed_breakpoint_ls", "brute_force", "MAX_SUBSETS"]

MAX_SUBSETS = 10**6


class CombinatorialGuardError(ValueError):
    pass


@dataclass
class OracleResult:
    indices: np.ndarray
    values: np.ndarray
    objective: float
    regularized: bool = False


def tridiag_solve(diag, off, rhs):
    """Solve a symmetric tridiagonal system by elimination.

    Returns ``(x, ok)``; ``ok`` is False when a pivot was not positive.
    """
    d = np.array(diag, dtype=float)
    e = np.asarray(off, dtype=float)
    x = np.array(rhs, dtype=float)
    n = d.size
    ok = True
    # a bad pivot is reported through ok, not a warning
    with np.errstate(divide="ignore", invalid="ignore"):
        for k in range(1, n):
            if not d[k - 1] > 0:
                ok = False
            w = e[k - 1] / d[k - 1]
            d[k] -= w * e[k - 1]
            x[k] -= w * x[k - 1]
        ok = ok and d[-1] > 0
        x[-1] /= d[-1]
        for k in range(n - 2, -1, -1):
            x[k] = (x[k] - e[k] * x[k + 1]) / d[k]
    return x, bool(ok)


def _normal_equations(mom, idx):
    n = len(idx)
    diag = np.zeros(n)
    off = np.zeros(n - 1)
    rhs = np.zeros(n)
    forms = []
    for k in range(n - 1):
        qf = transition_cost(mom, int(idx[k]), int(idx[k + 1]))
        forms.append(qf)
        diag[k] += 2 * qf.P[0, 0]
        diag[k + 1] += 2 * qf.P[1, 1]
        off[k] += 2 * qf.P[0, 1]
        rhs[k] -= qf.q[0]
        rhs[k + 1] -= qf.q[1]
    if mom.kind == DISCRETE:
        diag[-1] += 2.0
        rhs[-1] += 2.0 * mom.terminal
    return diag, off, rhs, forms


def _objective(mom, forms, y):
    total = sum(qf(y[k], y[k + 1]) for k, qf in enumerate(forms))
    if mom.kind == DISCRETE:
        total += (mom.terminal - y[-1]) ** 2
    return float(total)


def fixed_breakpoint_ls(data, indices):
    """Best values for fixed breakpoint indices.

    Returns ``(values, objective, ok)`` where ``ok`` is False if the normal
    equations needed the tiny diagonal shift to be solvable.
    """
    mom = as_moments(data)
    idx = np.asarray(indices, dtype=np.int64)
    if idx.size < 2 or idx[0] != 0 or idx[-1] != mom.N or np.any(np.diff(idx) <= 0):
        raise ValueError("indices must be strictly increasing from 0 to N")
    diag, off, rhs, forms = _normal_equations(mom, idx)
    y, ok = tridiag_solve(diag, off, rhs)
    if not ok:
        y, _ = tridiag_solve(diag + 1e-12, off, rhs)
    return y, _objective(mom, forms, y), ok


def brute_force(data, M: int, zeta: float | None = None) -> OracleResult:
    """Exhaustive search over interior breakpoint sets of size ``M - 1``.

    With ``zeta`` given, searches every segment count up to ``M`` and
    minimizes squared error plus ``zeta`` per segment instead.  Ties keep
    the lexicographically smallest index set.
    """
    mom = as_moments(data)
    N = mom.N
    if not 1 <= M <= N:
        raise ValueError(f"M must be in [1, {N}]")
    counts = [M] if zeta is None else range(1, M + 1)
    total = sum(math.comb(N - 1, m - 1) for m in counts)
    if total > MAX_SUBSETS:
        raise CombinatorialGuardError(
            f"{total} breakpoint sets exceed the guard of {MAX_SUBSETS}")
    best = None
    for m in counts:
        for inner in itertools.combinations(range(1, N), m - 1):
            idx = (0, *inner, N)
            y, obj, _ = fixed_breakpoint_ls(mom, idx)
            if zeta is not None:
                obj += zeta * m
            if best is None or obj < best.objective:
                best = OracleResult(np.array(idx), y, obj, zeta is not None)
    return best
