"""Dynamic programming over a time grid for the exact objective.

``f_n(p, t)`` is the best final probability reachable from the diagonal state
``p|0><0| + (1-p)|1><1|`` at time ``t`` with ``n`` measurements still to
place. It is piecewise linear in ``p`` with the value 1/2 at ``p = 1/2``,
so only the two branches ``p = 0`` and ``p = 1`` are tabulated.
"""

from __future__ import annotations

import math
import time
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError
from .lz_core import Coupling, as_coupling, get_propagator
from .objective import (
    MeasurementSchedule,
    OptimizationResult,
    bloch_angle,
    transition_probability,
    upper_bound,
)

_CHUNK = 128


@dataclass(frozen=True)
class GridSpec:
    t_min: float = -50.0
    t_max: float = 50.0
    step: float = 0.01

    def __post_init__(self):
        if not (math.isfinite(self.t_min) and math.isfinite(self.t_max)):
            raise InvalidInputError("grid bounds must be finite")
        if self.step <= 0:
            raise InvalidInputError("grid step must be positive")
        if self.t_min >= self.t_max:
            raise InvalidInputError("grid needs t_min < t_max")
        if (self.t_max - self.t_min) / self.step > 1e7:
            raise InvalidInputError("grid has more than 1e7 intervals")

    @property
    def size(self) -> int:
        return int(math.floor((self.t_max - self.t_min) / self.step + 1e-9)) + 1

    def points(self) -> np.ndarray:
        return self.t_min + self.step * np.arange(self.size)


DEFAULT_GRID = GridSpec()


def interpolate_p(f_at_0, f_at_1, p):
    """Value at population ``p`` from the ``p = 0`` and ``p = 1`` branch values."""
    return np.where(
        p <= 0.5,
        (1 - 2 * p) * (np.asarray(f_at_0) - 0.5) + 0.5,
        (2 * p - 1) * (np.asarray(f_at_1) - 0.5) + 0.5,
    )[()]


def value_f0(c, p: float, t: float) -> float:
    """Final probability with no further measurements: ``p|u00|^2 + (1-p)|u01|^2``."""
    if math.isinf(t) and t > 0:
        return float(p)
    prop = get_propagator(c, 0.0 if math.isinf(t) else abs(t))
    m = float(prop.stay_probability(t, np.inf))
    return p * m + (1 - p) * (1 - m)


@dataclass
class ValueTable:
    """Tabulated ``f_n(p, t)`` for ``n = 0 .. n_max`` and both branches.

    ``values[n, s, i]`` is ``f_n(s, t_i)`` with ``s`` in {0, 1} the branch
    population; ``argmax[n, s, i]`` is the grid index of the next measurement
    (``-1`` at level 0). ``root`` and ``root_argmax`` hold the same for the
    starting time ``-inf``.
    """

    coupling: Coupling
    grid: GridSpec
    values: np.ndarray
    argmax: np.ndarray
    root: np.ndarray
    root_argmax: np.ndarray

    @property
    def n_max(self) -> int:
        return self.values.shape[0] - 1

    def value(self, n: int, p: float, i: int) -> float:
        return float(interpolate_p(self.values[n, 0, i], self.values[n, 1, i], p))

    def root_value(self, n: int) -> float:
        """Table estimate of the optimum with ``n`` measurements from ``|0><0|``."""
        return float(self.root[n, 1])

    def recover(self, n: int) -> tuple[float, ...]:
        """Walk the backpointers forward from ``(p = 1, t = -inf)``."""
        if not 1 <= n <= self.n_max:
            raise InvalidInputError(f"n must lie in 1..{self.n_max}")
        ts = self.grid.points()
        prop = get_propagator(self.coupling, max(abs(ts[0]), abs(ts[-1])))
        j = int(self.root_argmax[n, 1])
        p = float(prop.stay_probability(-np.inf, ts[j]))
        idx = [j]
        for level in range(n - 1, 0, -1):
            branch = 1 if p > 0.5 else 0
            k = int(self.argmax[level, branch, j])
            m = float(prop.stay_probability(ts[j], ts[k]))
            p = p * m + (1 - p) * (1 - m)
            idx.append(k)
            j = k
        return tuple(float(t) for t in ts[idx])


def _check_resolution(gamma: float, grid: GridSpec) -> None:
    reach = max(abs(grid.t_min), abs(grid.t_max))
    if gamma > 0 and grid.step > math.pi / (2 * math.sqrt(gamma) * reach):
        warnings.warn(
            f"grid step {grid.step} may be too coarse to resolve oscillations "
            f"for gamma={gamma} on |t| <= {reach}",
            RuntimeWarning,
            stacklevel=3,
        )


def _next_level(alpha, beta, g0, g1, root_d):
    """One Bellman step over the upper triangle ``j >= i``.

    With ``d = 2|u00(t_j, t_i)|^2 - 1`` the evolved branch value at ``t_j`` is
    ``1/2 + |d| * g`` where ``g`` is the ``p=1`` branch offset when the Bloch
    vector keeps its sign and the ``p=0`` offset when it flips.
    """
    G = len(alpha)
    ca, cb = np.conj(alpha), np.conj(beta)
    out = np.empty((2, G))
    arg = np.empty((2, G), dtype=np.int64)
    for i0 in range(0, G, _CHUNK):
        i1 = min(G, i0 + _CHUNK)
        u = ca[i0:i1, None] * alpha[None, i0:] + beta[i0:i1, None] * cb[None, i0:]
        d = 2.0 * (u.real**2 + u.imag**2) - 1.0
        # a zero-length segment is exactly the identity
        d[np.arange(i1 - i0), np.arange(i1 - i0)] = 1.0
        keep = d > 0
        ad = np.abs(d)
        below = np.arange(i0, G)[None, :] < np.arange(i0, i1)[:, None]
        for s, (same, flip) in enumerate(((g0, g1), (g1, g0))):
            v = ad * np.where(keep, same[None, i0:], flip[None, i0:])
            v[below] = -np.inf
            a = np.argmax(v, axis=1)
            arg[s, i0:i1] = a + i0
            out[s, i0:i1] = v[np.arange(i1 - i0), a]
    keep = root_d > 0
    ad = np.abs(root_d)
    root = np.empty(2)
    root_arg = np.empty(2, dtype=np.int64)
    for s, (same, flip) in enumerate(((g0, g1), (g1, g0))):
        v = ad * np.where(keep, same, flip)
        root_arg[s] = int(np.argmax(v))
        root[s] = v[root_arg[s]]
    return np.clip(out + 0.5, 0, 1), arg, np.clip(root + 0.5, 0, 1), root_arg


def build_tables(c, n_max: int, grid: GridSpec = DEFAULT_GRID) -> ValueTable:
    """Fill ``f_0 .. f_{n_max}`` on the grid by exhaustive search over ``t' >= t``."""
    c = as_coupling(c)
    if n_max < 1:
        raise InvalidInputError("n_max must be at least 1")
    _check_resolution(c.gamma, grid)
    ts = grid.points()
    G = len(ts)
    prop = get_propagator(c, max(abs(ts[0]), abs(ts[-1])))
    alpha, beta = prop.column(ts)
    m_end = prop.stay_probability(ts, np.inf)
    m_root = prop.stay_probability(-np.inf, ts)
    m_lz = float(prop.stay_probability(-np.inf, np.inf))

    values = np.empty((n_max + 1, 2, G))
    argmax = np.full((n_max + 1, 2, G), -1, dtype=np.int64)
    root = np.empty((n_max + 1, 2))
    root_argmax = np.full((n_max + 1, 2), -1, dtype=np.int64)
    values[0, 0] = 1 - m_end
    values[0, 1] = m_end
    root[0] = (1 - m_lz, m_lz)
    root_d = 2 * m_root - 1
    for n in range(1, n_max + 1):
        g0 = values[n - 1, 0] - 0.5
        g1 = values[n - 1, 1] - 0.5
        values[n], argmax[n], root[n], root_argmax[n] = _next_level(alpha, beta, g0, g1, root_d)
    return ValueTable(c, grid, values, argmax, root, root_argmax)


def optimize_dp(c, n: int, grid: GridSpec = DEFAULT_GRID, table: ValueTable | None = None):
    """Grid-optimal schedule of ``n`` measurements, re-scored with the exact objective."""
    c = as_coupling(c)
    if n < 1:
        raise InvalidInputError("n must be at least 1")
    start = time.perf_counter()
    if table is None or table.n_max < n:
        table = build_tables(c, n, grid)
    schedule = MeasurementSchedule(c, table.recover(n))
    exact = transition_probability(schedule)
    return OptimizationResult(
        schedule=schedule,
        probability=exact,
        method="dp",
        bound=upper_bound(n, bloch_angle(c)),
        diagnostics={
            "table_value": table.root_value(n),
            "grid": table.grid,
            "seconds": time.perf_counter() - start,
        },
    )
