"""Measurement schedules and the exact transition-probability objective.

A nonselective measurement in the diabatic basis removes coherences, so between
measurements only the populations ``|u_jk|**2`` matter. For a 2x2 unitary
they form the doubly stochastic matrix ``[[m, 1 - m], [1 - m, m]]``, which
scales the Bloch z-component by ``2m - 1``. The probability after the last
segment is therefore ``(1 + prod_k (2 m_k - 1)) / 2``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import InvalidInputError
from .lz_core import Coupling, as_coupling, get_propagator, lz_probability

MAX_MEASUREMENTS = 64


@dataclass(frozen=True)
class MeasurementSchedule:
    coupling: Coupling
    instants: tuple[float, ...] = ()
    max_measurements: int = field(default=MAX_MEASUREMENTS, compare=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "coupling", as_coupling(self.coupling))
        ts = tuple(float(t) for t in self.instants)
        if not all(math.isfinite(t) for t in ts):
            raise InvalidInputError("measurement instants must be finite")
        if any(a > b for a, b in zip(ts, ts[1:])):
            raise InvalidInputError("measurement instants must be sorted ascending")
        if len(ts) > self.max_measurements:
            raise InvalidInputError(
                f"{len(ts)} measurements exceeds the maximum of {self.max_measurements}"
            )
        object.__setattr__(self, "instants", ts)

    @classmethod
    def of(cls, gamma, instants: Sequence[float] = (), *, sort: bool = False):
        ts = sorted(instants) if sort else instants
        return cls(as_coupling(gamma), tuple(ts))

    @property
    def n(self) -> int:
        return len(self.instants)

    @property
    def gamma(self) -> float:
        return self.coupling.gamma


@dataclass
class OptimizationResult:
    """Outcome of one optimiser run."""

    schedule: MeasurementSchedule
    probability: float
    method: str
    bound: float
    diagnostics: dict = field(default_factory=dict)

    @property
    def instants(self) -> tuple[float, ...]:
        return self.schedule.instants


def apply_measurement(w) -> np.ndarray:
    """Project a Bloch vector onto the measurement (z) axis."""
    w = np.asarray(w, dtype=float)
    return np.array([0.0, 0.0, w[2]])


def dephase(rho) -> np.ndarray:
    """Nonselective diabatic-basis measurement of a density matrix."""
    rho = np.asarray(rho, dtype=complex)
    return np.diag(np.diag(rho))


def segment_factors(c, instants: Sequence[float]) -> np.ndarray:
    """Bloch z-factors ``2|u_00|**2 - 1`` of the N+1 segments between -inf, instants, +inf."""
    ts = np.concatenate([[-np.inf], np.asarray(instants, dtype=float), [np.inf]])
    reach = float(np.max(np.abs(ts[1:-1]))) if len(ts) > 2 else 0.0
    prop = get_propagator(c, reach)
    return prop.bloch_z_factor(ts[:-1], ts[1:])


def transition_probability(s: MeasurementSchedule) -> float:
    """Exact ``<0|rho(+inf)|0>`` for a schedule, starting from ``|0><0|`` at -inf."""
    if s.n == 0:
        return float(get_propagator(s.coupling).stay_probability(-np.inf, np.inf))
    z = float(np.prod(segment_factors(s.coupling, s.instants)))
    return min(1.0, max(0.0, 0.5 * (1.0 + z)))


def batch_probability(c, instants) -> np.ndarray:
    """Vectorised :func:`transition_probability` for an ``(m, N)`` array of sorted schedules."""
    x = np.atleast_2d(np.asarray(instants, dtype=float))
    m, n = x.shape
    lo = np.full((m, 1), -np.inf)
    hi = np.full((m, 1), np.inf)
    ts = np.hstack([lo, x, hi])
    prop = get_propagator(c, float(np.max(np.abs(x))) if n else 0.0)
    z = prop.bloch_z_factor(ts[:, :-1], ts[:, 1:])
    return np.clip(0.5 * (1.0 + np.prod(z, axis=1)), 0.0, 1.0)


def upper_bound(n: int, delta_phi: float = math.pi) -> float:
    """Best value reachable with n measurements of freely chosen observables."""
    if n < 0:
        raise InvalidInputError("n must be non-negative")
    if not 0.0 <= delta_phi <= math.pi:
        raise InvalidInputError(f"delta_phi must lie in [0, pi], got {delta_phi}")
    return 0.5 * (1.0 + math.cos(delta_phi / (n + 1)) ** (n + 1))


def bloch_angle(c) -> float:
    """Angle between the Bloch vectors of |0> and U^dagger(+inf, -inf)|0>.

    Only populations enter, so ``cos(angle) = 2 exp(-2 pi gamma) - 1``.
    """
    return math.acos(max(-1.0, min(1.0, 2.0 * lz_probability(c) - 1.0)))


def mirror(s: MeasurementSchedule) -> MeasurementSchedule:
    """Time-reflected schedule; the objective is invariant under it."""
    return MeasurementSchedule(s.coupling, tuple(sorted(0.0 - t for t in s.instants)))
