"""Large-gamma pipeline and the maximin analysis.

Times are in the rescaled units used everywhere else; the adiabatic formulas
work in ``s = t / (2 sqrt(gamma))`` with

    tau(s)   = s / sqrt(1 + s^2)                      (= cos alpha)
    omega(s) = asinh(s) + s sqrt(1 + s^2)

A segment scales the Bloch z-component by
``tau0 tau1 + sqrt((1 - tau0^2)(1 - tau1^2)) cos(2 gamma (omega1 - omega0))``
up to ``O(1/gamma)`` corrections. The accumulated phase ``2 gamma omega`` is
the integral of the level splitting ``2 sqrt(t^2/4 + gamma)``.
"""

from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.optimize import differential_evolution

from .antiadiabatic import refine
from .errors import InvalidInputError
from .lz_core import as_coupling
from .objective import (
    MeasurementSchedule,
    OptimizationResult,
    batch_probability,
    bloch_angle,
    upper_bound,
)

MAXIMIN_MAX_N = 20

DE_POPULATION = 15
DE_GENERATIONS = 200
DE_CROSSOVER = 0.3
DE_WEIGHT = 0.7
DE_RESTARTS = 4


def tau_omega(t):
    """``(tau, omega)`` at scaled time ``t``; both are odd."""
    t = np.asarray(t, dtype=float)
    root = np.sqrt(1.0 + t * t)
    tau = t / root
    omega = np.arcsinh(t) + t * root
    if tau.ndim == 0:
        return float(tau), float(omega)
    return tau, omega


def omega_prime(s):
    return 2.0 * np.sqrt(1.0 + np.asarray(s, dtype=float) ** 2)


def _scaled(c, t):
    return np.asarray(t, dtype=float) / (2.0 * c.sqrt_gamma)


def adiabatic_bloch_factor(c, t0, t1):
    """Leading-order ``2|u_00(t1, t0)|^2 - 1``; endpoints may be infinite."""
    c = as_coupling(c)
    s0, s1 = np.broadcast_arrays(_scaled(c, t0), _scaled(c, t1))
    with np.errstate(invalid="ignore"):
        tau0 = np.where(np.isinf(s0), np.sign(s0), s0 / np.sqrt(1 + s0 * s0))
        tau1 = np.where(np.isinf(s1), np.sign(s1), s1 / np.sqrt(1 + s1 * s1))
    fin = np.isfinite(s0) & np.isfinite(s1)
    d = tau0 * tau1
    if np.any(fin):
        _, w0 = tau_omega(np.atleast_1d(s0[fin]))
        _, w1 = tau_omega(np.atleast_1d(s1[fin]))
        cross = np.sqrt((1 - tau0[fin] ** 2) * (1 - tau1[fin] ** 2)) * np.cos(2 * c.gamma * (w1 - w0))
        d = np.array(d, dtype=float)
        d[fin] += cross
    return d[()] if np.ndim(d) == 0 else d


def adiabatic_population_matrix(c, t0: float, t1: float) -> np.ndarray:
    m = 0.5 * (1.0 + float(adiabatic_bloch_factor(c, t0, t1)))
    return np.array([[m, 1.0 - m], [1.0 - m, m]])


def adiabatic_probability(c, s: MeasurementSchedule) -> float:
    """Large-gamma approximation of the exact objective."""
    if s.n < 1:
        raise InvalidInputError("the adiabatic approximation needs at least one measurement")
    ts = np.concatenate([[-np.inf], s.instants, [np.inf]])
    d = adiabatic_bloch_factor(as_coupling(c), ts[:-1], ts[1:])
    return float(0.5 * (1.0 + np.prod(d)))


def angle_form_probability(alphas: Sequence[float], cos_phases: Sequence[float] | None = None) -> float:
    """``1/2 {1 - cos a1 prod_l (cos a_l cos a_{l-1} + sin a_l sin a_{l-1} c_l) cos a_N}``.

    ``cos_phases`` holds the N-1 values ``c_l``; the envelope uses all ones.
    """
    a = np.asarray(alphas, dtype=float)
    c = np.ones(len(a) - 1) if cos_phases is None else np.asarray(cos_phases, dtype=float)
    links = np.cos(a[1:]) * np.cos(a[:-1]) + np.sin(a[1:]) * np.sin(a[:-1]) * c
    return float(0.5 * (1.0 - np.cos(a[0]) * np.prod(links) * np.cos(a[-1])))


def envelope_max(n: int) -> float:
    """Large-gamma optimum: equal angle steps ``pi / (n + 1)``."""
    if n < 0:
        raise InvalidInputError("n must be non-negative")
    return 0.5 * (1.0 + math.cos(math.pi / (n + 1)) ** (n + 1))


@dataclass(frozen=True)
class AdiabaticSeed:
    schedule: MeasurementSchedule
    radii: tuple[float, ...]


def analytic_seed(c, n: int) -> AdiabaticSeed:
    """Envelope-optimal instants ``-2 sqrt(gamma) cot(pi k / (n + 1))`` and oscillation radii."""
    c = as_coupling(c)
    if n < 1:
        raise InvalidInputError("n must be at least 1")
    if c.gamma <= 0:
        raise InvalidInputError("the adiabatic seed needs gamma > 0")
    k = np.arange(1, n + 1)
    x = np.pi * k / (n + 1)
    t = -2 * c.sqrt_gamma * np.cos(x) / np.sin(x)
    t[np.abs(t) < 1e-12] = 0.0
    t = np.sort(t)
    radii = 4 * np.pi / (c.sqrt_gamma * omega_prime(_scaled(c, t)))
    return AdiabaticSeed(MeasurementSchedule(c, tuple(t)), tuple(float(r) for r in radii))


def search_boxes(instants: Sequence[float], radii: Sequence[float], merge: bool = True):
    """Per-instant search intervals ``seed -+ radius``.

    Each side is clamped to half the gap to the neighbour on that side, so the
    intervals never overlap. With ``merge`` set, runs of three or more
    consecutive touching intervals become one shared interval.
    """
    t = np.asarray(instants, dtype=float)
    r = np.asarray(radii, dtype=float)
    if len(t) != len(r) or np.any(r <= 0) or not np.all(np.isfinite(r)):
        raise InvalidInputError("radii must be positive and match the instants")
    if np.any(np.diff(t) < 0):
        raise InvalidInputError("seed instants must be sorted")
    gaps = np.diff(t) / 2
    left = r.copy()
    right = r.copy()
    left[1:] = np.minimum(left[1:], gaps)
    right[:-1] = np.minimum(right[:-1], gaps)
    lo, hi = t - left, t + right
    if np.any(hi <= lo):
        raise InvalidInputError("empty search box")
    if merge and len(t) >= 3:
        touch = hi[:-1] >= lo[1:] - 1e-12
        start = 0
        while start < len(t):
            end = start
            while end < len(t) - 1 and touch[end]:
                end += 1
            if end - start + 1 >= 3:
                lo[start : end + 1] = lo[start]
                hi[start : end + 1] = hi[end]
            start = end + 1
    return list(zip(lo.tolist(), hi.tolist()))


def refine_de(
    c,
    seed: MeasurementSchedule,
    radii: Sequence[float],
    rng_seed=0,
    merge: bool = False,
    restarts: int = DE_RESTARTS,
):
    """Differential evolution over the seed's search boxes, then an exact pattern search.

    ``restarts`` independent populations are drawn from streams spawned off
    ``rng_seed``; each is polished and the best polished schedule wins.
    """
    c = as_coupling(c)
    if restarts < 1:
        raise InvalidInputError("restarts must be at least 1")
    start = time.perf_counter()
    n = seed.n
    bounds = search_boxes(seed.instants, radii, merge=merge)

    def negp(x):
        # vectorised: x has shape (n, popsize)
        return -batch_probability(c, np.sort(np.atleast_2d(x.T), axis=1))

    runs = []
    for stream in np.random.SeedSequence(rng_seed).spawn(restarts):
        result = differential_evolution(
            negp,
            bounds,
            popsize=DE_POPULATION,
            maxiter=DE_GENERATIONS,
            mutation=DE_WEIGHT,
            recombination=DE_CROSSOVER,
            seed=np.random.default_rng(stream),
            tol=0.0,
            atol=0.0,
            polish=False,
            x0=np.asarray(seed.instants),
            updating="deferred",
            vectorized=True,
        )
        runs.append((-float(result.fun), refine(np.sort(result.x), "exact", c)))
    de_value, polished = max(runs, key=lambda run: run[1].value)
    sched = MeasurementSchedule(c, polished.instants)
    return OptimizationResult(
        schedule=sched,
        probability=polished.value,
        method="adiabatic",
        bound=upper_bound(n, bloch_angle(c)),
        diagnostics={
            "seed_probability": float(batch_probability(c, [seed.instants])[0]),
            "de_probability": de_value,
            "restart_values": [run[1].value for run in runs],
            "refine_delta": polished.value - de_value,
            "boxes": bounds,
            "rng_seed": rng_seed,
            "converged": polished.converged,
            "seconds": time.perf_counter() - start,
        },
    )


def optimize_adiabatic(c, n: int, rng_seed=0, merge: bool = False, restarts: int = DE_RESTARTS) -> OptimizationResult:
    c = as_coupling(c)
    seed = analytic_seed(c, n)
    return refine_de(c, seed.schedule, seed.radii, rng_seed=rng_seed, merge=merge, restarts=restarts)


# -- maximin -----------------------------------------------------------------


@dataclass(frozen=True)
class AngleSchedule:
    """Angles ``alpha_l = arccos tau_l``, nonincreasing in ``[0, pi]``."""

    alphas: tuple[float, ...]

    def __post_init__(self):
        a = tuple(float(x) for x in self.alphas)
        if not a:
            raise InvalidInputError("an angle schedule needs at least one angle")
        if any(x < -1e-12 or x > math.pi + 1e-12 for x in a):
            raise InvalidInputError("angles must lie in [0, pi]")
        if any(x < y - 1e-12 for x, y in zip(a, a[1:])):
            raise InvalidInputError("angles must be nonincreasing")
        object.__setattr__(self, "alphas", a)

    @classmethod
    def from_schedule(cls, s: MeasurementSchedule) -> "AngleSchedule":
        tau, _ = tau_omega(_scaled(s.coupling, np.asarray(s.instants)))
        return cls(tuple(np.arccos(np.atleast_1d(tau))))


def maximin_evaluate(angles) -> float:
    """Worst case over the ``2^(N-1)`` sign choices of ``cos(a_{l-1} +- a_l)``."""
    a = np.asarray(angles.alphas if isinstance(angles, AngleSchedule) else AngleSchedule(tuple(angles)).alphas)
    n = len(a)
    if n > MAXIMIN_MAX_N:
        raise InvalidInputError(f"exact enumeration limited to N <= {MAXIMIN_MAX_N}")
    ends = math.cos(a[0]) * math.cos(a[-1])
    if n == 1:
        return 0.5 * (1.0 - ends)
    minus = np.cos(a[:-1] - a[1:])
    plus = np.cos(a[:-1] + a[1:])
    signs = np.array(list(itertools.product((0, 1), repeat=n - 1)), dtype=bool)
    prods = np.prod(np.where(signs, plus[None, :], minus[None, :]), axis=1)
    return float(np.min(0.5 * (1.0 - ends * prods)))


def maximin_solve(n: int):
    """Optimal maximin value and the canonical solution (one measurement at t = 0)."""
    if n < 1:
        raise InvalidInputError("n must be at least 1")
    return 0.5, AngleSchedule((math.pi / 2,) + (0.0,) * (n - 1))


def _strip_noops(a: np.ndarray, tol: float) -> np.ndarray:
    # alpha = pi and alpha = 0 are measurements at -inf and +inf
    lo, hi = 0, len(a)
    while lo < hi and abs(a[lo] - math.pi) <= tol:
        lo += 1
    while hi > lo and abs(a[hi - 1]) <= tol:
        hi -= 1
    return a[lo:hi]


def classify_theorem2(angles, tol: float = 1e-9, literal: bool = False) -> str:
    """Which family of maximin solutions the angles belong to, or ``not_optimal``.

    family1: ``alpha_1 = pi/2``; family2: ``alpha_N = pi/2``; family3: every
    angle in {0, pi/2, pi} with at least one ``pi/2``. Unless ``literal`` is
    set, family1 and family2 are also tested after dropping the leading
    ``pi`` and trailing ``0`` angles, which are no-op measurements; without
    that step schedules such as ``(pi, pi/2, pi/3)`` reach 1/2 unclassified.
    """
    a = np.asarray(angles.alphas if isinstance(angles, AngleSchedule) else AngleSchedule(tuple(angles)).alphas)
    half = math.pi / 2
    if abs(a[0] - half) <= tol:
        return "family1"
    if abs(a[-1] - half) <= tol:
        return "family2"
    special = np.array([0.0, half, math.pi])
    on_special = np.min(np.abs(a[:, None] - special[None, :]), axis=1) <= tol
    if np.all(on_special) and np.any(np.abs(a - half) <= tol):
        return "family3"
    if not literal:
        core = _strip_noops(a, tol)
        if len(core) and abs(core[0] - half) <= tol:
            return "family1"
        if len(core) and abs(core[-1] - half) <= tol:
            return "family2"
    return "not_optimal"


@dataclass(frozen=True)
class MaximinGridReport:
    n: int
    step: float
    schedules: int
    best_value: float
    best_angles: tuple[float, ...]
    mismatches: tuple[tuple[float, ...], ...]


def maximin_grid_search(
    n: int, step: float = math.pi / 12, tol: float = 1e-9, literal: bool = False
) -> MaximinGridReport:
    """Evaluate every nonincreasing angle schedule on a uniform grid over ``[0, pi]``.

    ``mismatches`` lists schedules where the classifier and the evaluated
    value disagree about optimality.
    """
    if n < 1:
        raise InvalidInputError("n must be at least 1")
    k = round(math.pi / step)
    if k < 1 or abs(k * step - math.pi) > 1e-9:
        raise InvalidInputError("step must divide pi")
    grid = [i * math.pi / k for i in range(k + 1)]
    best, best_angles, count = -1.0, (), 0
    mismatches = []
    for combo in itertools.combinations_with_replacement(range(k, -1, -1), n):
        angles = tuple(grid[i] for i in combo)
        value = maximin_evaluate(angles)
        count += 1
        if value > best + tol:
            best, best_angles = value, angles
        optimal = abs(value - 0.5) <= tol
        if optimal != (classify_theorem2(angles, tol, literal) != "not_optimal"):
            mismatches.append(angles)
    return MaximinGridReport(n, step, count, best, best_angles, tuple(mismatches))
