"""Segment costs for continuous piecewise-linear least squares.

The squared error of a straight segment between grid points ``i < j`` that
takes the value ``y`` at ``t[i]`` and ``y'`` at ``t[j]`` is a quadratic form

    l_ij(y, y') = [y y'] P [y y']^T + q^T [y y'] + r

whose coefficients only depend on a few running sums of the signal.  After
an O(N) pass over the data every ``l_ij`` is available in O(1).

Two signal kinds are supported:

* ``discrete``: a time series ``g[0..N]`` on the implicit grid ``t_k = k``.
  The error of segment ``(i, j)`` sums over ``k = i .. j-1``; sample ``j``
  belongs to the next segment (or to the terminal cost when ``j == N``).
* ``continuous``: samples ``g(t_k)`` on a strictly increasing grid,
  interpreted as a piecewise-linear function, with the error integrated over
  ``[t_i, t_j]``.  All integrals are closed form.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numba import njit

__all__ = [
    "DISCRETE",
    "CONTINUOUS",
    "Signal",
    "Moments",
    "QuadraticForm2",
    "compute_moments",
    "transition_cost",
    "eval_qf",
    "as_moments",
]

DISCRETE = "discrete"
CONTINUOUS = "continuous"
_KIND_CODE = {DISCRETE: 0, CONTINUOUS: 1}


@dataclass(frozen=True)
class Signal:
    """A sampled signal ``g[0..N]``, optionally on an explicit grid.

    Use :meth:`discrete` or :meth:`continuous` rather than the raw
    constructor; both validate their input.
    """

    kind: str
    values: np.ndarray
    grid: np.ndarray

    @classmethod
    def discrete(cls, values) -> "Signal":
        g = _as_1d_finite(values, "values")
        return cls(DISCRETE, g, np.arange(g.size, dtype=float))

    @classmethod
    def continuous(cls, grid, values) -> "Signal":
        t = _as_1d_finite(grid, "grid")
        g = _as_1d_finite(values, "values")
        if t.size != g.size:
            raise ValueError(
                f"grid and values differ in length ({t.size} != {g.size})")
        if np.any(np.diff(t) <= 0):
            raise ValueError("grid must be strictly increasing")
        return cls(CONTINUOUS, g, t)

    @property
    def N(self) -> int:
        """Index of the last sample (there are N + 1 samples)."""
        return self.values.size - 1

    def energy(self) -> float:
        """Total cost of the zero approximand, used as a cost scale."""
        if self.kind == DISCRETE:
            return float(np.dot(self.values, self.values))
        u, v = self.values[:-1], self.values[1:]
        return float(np.sum(np.diff(self.grid) * (u * u + u * v + v * v)) / 3)


def _as_1d_finite(x, name):
    a = np.array(x, dtype=float).ravel()
    if a.size < 2:
        raise ValueError(f"{name} needs at least 2 entries (N >= 1)")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} must be finite")
    return a


@dataclass(frozen=True)
class Moments:
    """Prefix sums of ``g``, ``t*g`` and ``g**2``.

    ``H1[k]``, ``H2[k]``, ``H3[k]`` accumulate the first ``k + 1`` per-step
    terms (per-sample sums for discrete signals, per-interval integrals for
    continuous ones).  Times in ``H2`` are measured from ``origin`` (the
    first grid point) to limit cancellation on grids far from zero.
    """

    kind: str
    grid: np.ndarray
    H1: np.ndarray
    H2: np.ndarray
    H3: np.ndarray
    origin: float = 0.0
    terminal: float = 0.0
    energy: float = 0.0
    # padded copies with a leading zero, consumed by the kernels
    _tau: np.ndarray = field(init=False, repr=False, compare=False)
    _S: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "_tau", np.ascontiguousarray(self.grid - self.origin))
        S = np.zeros((3, self.H1.size + 1))
        S[0, 1:], S[1, 1:], S[2, 1:] = self.H1, self.H2, self.H3
        object.__setattr__(self, "_S", S)

    @property
    def N(self) -> int:
        return self.grid.size - 1

    @property
    def kind_code(self) -> int:
        return _KIND_CODE[self.kind]

    @classmethod
    def from_interval_integrals(cls, grid, h1, h2, h3) -> "Moments":
        """Build continuous moments from precomputed per-interval integrals.

        For an analytic ``g`` the caller supplies, for each interval
        ``[t_k, t_{k+1}]``, the integrals of ``g``, ``t*g`` (absolute time)
        and ``g**2``.
        """
        t = _as_1d_finite(grid, "grid")
        if np.any(np.diff(t) <= 0):
            raise ValueError("grid must be strictly increasing")
        h1, h2, h3 = (np.asarray(h, dtype=float) for h in (h1, h2, h3))
        if not (h1.shape == h2.shape == h3.shape == (t.size - 1,)):
            raise ValueError("need one integral per grid interval")
        t0 = float(t[0])
        return cls(CONTINUOUS, t, np.cumsum(h1), np.cumsum(h2 - t0 * h1),
                   np.cumsum(h3), origin=t0, terminal=0.0, energy=float(h3.sum()))


def compute_moments(signal: Signal) -> Moments:
    g, t = signal.values, signal.grid
    if signal.kind == DISCRETE:
        k = np.arange(g.size, dtype=float)
        return Moments(DISCRETE, t, np.cumsum(g), np.cumsum(k * g),
                       np.cumsum(g * g), origin=0.0, terminal=float(g[-1]),
                       energy=signal.energy())
    # exact integrals of the linear interpolant on each interval
    t0 = float(t[0])
    d = np.diff(t)
    lo = t[:-1] - t0
    u, v = g[:-1], g[1:]
    h1 = d * (u + v) / 2
    h2 = d * lo * (u + v) / 2 + d * d * (u + 2 * v) / 6
    h3 = d * (u * u + u * v + v * v) / 3
    return Moments(CONTINUOUS, t, np.cumsum(h1), np.cumsum(h2), np.cumsum(h3),
                   origin=t0, terminal=0.0, energy=float(h3.sum()))


def as_moments(data) -> Moments:
    if isinstance(data, Moments):
        return data
    if isinstance(data, Signal):
        return compute_moments(data)
    raise TypeError(f"expected Signal or Moments, got {type(data).__name__}")


@dataclass(frozen=True)
class QuadraticForm2:
    """``[y y'] P [y y']^T + q^T [y y'] + r``."""

    P: np.ndarray
    q: np.ndarray
    r: float

    def __call__(self, y, y_next):
        return eval_qf(self, y, y_next)


def eval_qf(qf: QuadraticForm2, y, y_next):
    P, q = qf.P, qf.q
    return (P[0, 0] * y * y + (P[0, 1] + P[1, 0]) * y * y_next
            + P[1, 1] * y_next * y_next + q[0] * y + q[1] * y_next + qf.r)


@njit(cache=True, nogil=True)
def qf_coeffs(kind, t, tau, S, i, j):
    """Coefficients ``(P11, P12, P22, q1, q2, r)`` of segment ``(i, j)``.

    ``t`` is the grid, ``tau`` the same grid shifted to the moment origin
    and ``S`` the zero-padded prefix sums.
    """
    if kind == 0:
        n = float(j - i)
        P11 = (n + 1.0) * (2.0 * n + 1.0) / (6.0 * n)
        P12 = (n * n - 1.0) / (6.0 * n)
        P22 = (n - 1.0) * (2.0 * n - 1.0) / (6.0 * n)
    else:
        w = t[j] - t[i]
        P11 = w / 3.0
        P12 = w / 6.0
        P22 = w / 3.0
    d = tau[j] - tau[i]
    S1 = S[0, j] - S[0, i]
    S2 = S[1, j] - S[1, i]
    q1 = -2.0 * (tau[j] * S1 - S2) / d
    q2 = -2.0 * (S2 - tau[i] * S1) / d
    r = S[2, j] - S[2, i]
    return P11, P12, P22, q1, q2, r


def transition_cost(moments, i: int, j: int) -> QuadraticForm2:
    """Quadratic form of the error of one segment between grid points i < j."""
    m = as_moments(moments)
    if not 0 <= i < j <= m.N:
        raise IndexError(f"need 0 <= i < j <= {m.N}, got i={i}, j={j}")
    P11, P12, P22, q1, q2, r = qf_coeffs(m.kind_code, m.grid, m._tau, m._S, i, j)
    return QuadraticForm2(np.array([[P11, P12], [P12, P22]]),
                          np.array([q1, q2]), float(r))
