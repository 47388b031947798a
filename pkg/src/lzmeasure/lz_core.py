"""Two-level Landau-Zener propagation in rescaled time.

The diabatic amplitudes obey

    i da/dt = -(t/2) a + sqrt(gamma) b
    i db/dt =  sqrt(gamma) a + (t/2) b

with ``gamma = delta**2 / (2 * epsilon)``. Segments with an endpoint at
``-inf`` or ``+inf`` are handled by integrating to a finite horizon and
projecting onto the instantaneous eigenstates there, which carry only a
``O(sqrt(gamma) / T**3)`` residual transition amplitude.

The module also provides the two special functions used by the small-gamma
expansion: the normalised Fresnel integral and 2F2(1, 1; 3/2, 2; z).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.integrate import DOP853
from scipy.special import erf
from scipy.special import fresnel as _scipy_fresnel

from .errors import ConvergenceError, InvalidInputError, InvalidIntervalError

RTOL = 1e-10
ATOL = 1e-12

#: limit of :func:`fresnel` as ``t -> +inf``; the limit at ``-inf`` is its negative
FRESNEL_LIMIT = complex(np.exp(1j * np.pi / 4) / np.sqrt(2))

HYP2F2_SWITCH_RADIUS = 16.0


@dataclass(frozen=True)
class Coupling:
    """Dimensionless adiabaticity parameter, optionally with its energy scales."""

    gamma: float
    delta: float | None = None
    epsilon: float | None = None

    def __post_init__(self):
        g = float(self.gamma)
        if not math.isfinite(g) or g < 0:
            raise InvalidInputError(f"gamma must be finite and non-negative, got {self.gamma!r}")
        object.__setattr__(self, "gamma", g)
        if (self.delta is None) != (self.epsilon is None):
            raise InvalidInputError("delta and epsilon must be given together")
        if self.delta is not None:
            if self.delta <= 0 or self.epsilon <= 0:
                raise InvalidInputError("delta and epsilon must be positive")
            expected = self.delta**2 / (2 * self.epsilon)
            if abs(expected - g) > 1e-12 * max(abs(expected), 1e-300):
                raise InvalidInputError(
                    f"gamma={g} inconsistent with delta**2/(2*epsilon)={expected}"
                )

    @classmethod
    def from_energies(cls, delta: float, epsilon: float) -> "Coupling":
        return cls(delta**2 / (2 * epsilon), delta, epsilon)

    @property
    def sqrt_gamma(self) -> float:
        return math.sqrt(self.gamma)


def as_coupling(c) -> Coupling:
    """Accept a :class:`Coupling` or a bare gamma value."""
    return c if isinstance(c, Coupling) else Coupling(float(c))


def horizon(gamma: float) -> float:
    """Truncation time standing in for ``+-inf``."""
    return max(40.0, 12.0 * math.sqrt(1.0 + gamma))


def lz_probability(c) -> float:
    """Closed-form probability of staying in the initial diabatic state."""
    return math.exp(-2 * math.pi * as_coupling(c).gamma)


# -- integration ------------------------------------------------------------


def _rhs(g: float):
    def fun(t, y):
        a, b = y
        return np.array([1j * (0.5 * t * a - g * b), -1j * (g * a + 0.5 * t * b)])

    return fun


def _integrate(g, t0, t1, y0, keep_dense=False):
    """Step DOP853 from t0 to t1; optionally collect the dense-output pieces."""
    y0 = np.asarray(y0, dtype=complex)
    pieces = []
    if t0 == t1:
        return y0.copy(), pieces
    solver = DOP853(_rhs(g), t0, y0, t1, rtol=RTOL, atol=ATOL)
    while solver.status == "running":
        message = solver.step()
        if solver.status == "failed":
            raise ConvergenceError(
                f"integration failed at t={solver.t}: {message}",
                step_size=solver.h_abs,
                t=solver.t,
            )
        if keep_dense:
            d = solver.dense_output()
            pieces.append((d.t_old, d.h, d.y_old.copy(), np.array(d.F)))
    return solver.y.copy(), pieces


def propagate(c, t0: float, t1: float, psi) -> np.ndarray:
    """Amplitudes ``(a, b)`` at ``t1`` given ``psi`` at ``t0`` (either direction)."""
    c = as_coupling(c)
    psi = np.asarray(psi, dtype=complex)
    if psi.shape != (2,) or not np.all(np.isfinite(psi)):
        raise InvalidInputError(f"psi must be two finite amplitudes, got {psi!r}")
    if not (math.isfinite(t0) and math.isfinite(t1)):
        raise InvalidInputError("propagate needs finite endpoints; use population_matrix for +-inf")
    y, _ = _integrate(c.sqrt_gamma, float(t0), float(t1), psi)
    return y


class _DenseBranch:
    """Vectorised evaluation of a DOP853 dense output on one side of t=0."""

    def __init__(self, pieces, sign):
        self.sign = sign
        self.t_old = np.array([p[0] for p in pieces])
        self.h = np.array([p[1] for p in pieces])
        self.y_old = np.array([p[2] for p in pieces])
        self.F = np.array([p[3] for p in pieces])  # (nseg, 7, 2)
        self.ends = sign * (self.t_old + self.h)  # ascending in |t|

    def __call__(self, t):
        idx = np.searchsorted(self.ends, self.sign * t)
        idx = np.minimum(idx, len(self.ends) - 1)
        x = ((t - self.t_old[idx]) / self.h[idx])[:, None]
        F = self.F[idx]
        y = np.zeros((len(t), 2), dtype=complex)
        for i in range(F.shape[1]):
            y += F[:, F.shape[1] - 1 - i]
            y *= x if i % 2 == 0 else 1 - x
        return y + self.y_old[idx]


def _eigenbasis(t: float, g: float) -> np.ndarray:
    """Columns are instantaneous eigenvectors, column j being the one closest to |j>."""
    _, v = np.linalg.eigh(np.array([[-t / 2, g], [g, t / 2]]))
    if abs(v[0, 0]) < abs(v[0, 1]):
        v = v[:, ::-1]
    return v.astype(complex)


class Propagator:
    """Cached evolution ``U(t, 0)`` over ``[-reach, reach]`` for one gamma.

    Only the first column ``(alpha, beta)`` is stored; the evolution is in
    SU(2), so ``U = [[alpha, -conj(beta)], [beta, conj(alpha)]]``.
    Segments are formed as ``U(t1, t0) = U(t1, 0) U(t0, 0)^dagger``.
    """

    def __init__(self, gamma: float, reach: float | None = None):
        self.gamma = float(gamma)
        g = math.sqrt(self.gamma)
        self.reach = float(max(horizon(self.gamma), reach or 0.0))
        L = self.reach
        e0 = np.array([1.0 + 0j, 0j])
        yp, pos = _integrate(g, 0.0, L, e0, keep_dense=True)
        ym, neg = _integrate(g, 0.0, -L, e0, keep_dense=True)
        self._pos = _DenseBranch(pos, 1.0)
        self._neg = _DenseBranch(neg, -1.0)
        v_plus = self._su2(*yp)
        v_minus = self._su2(*ym)
        # rows: <phi_j(+L)| U(+L, 0); columns: U(-L, 0)^dagger |phi_l(-L)>
        self.plus_rows = _eigenbasis(L, g).conj().T @ v_plus
        self.minus_cols = v_minus.conj().T @ _eigenbasis(-L, g)

    @staticmethod
    def _su2(a, b):
        return np.array([[a, -np.conj(b)], [b, np.conj(a)]])

    def column(self, t):
        """``(alpha(t), beta(t))`` for finite ``t`` inside the reach (vectorised)."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        if np.any(np.abs(t) > self.reach * (1 + 1e-12)):
            raise InvalidInputError(f"time outside propagator reach {self.reach}")
        out = np.empty((len(t), 2), dtype=complex)
        pos = t >= 0
        if pos.any():
            out[pos] = self._pos(t[pos])
        if (~pos).any():
            out[~pos] = self._neg(t[~pos])
        return out[:, 0], out[:, 1]

    def _row0(self, t1):
        """First row of the left factor for endpoint t1 (finite or +inf)."""
        t1 = np.asarray(t1, dtype=float)
        r = np.empty(t1.shape + (2,), dtype=complex)
        inf = np.isposinf(t1)
        r[inf] = self.plus_rows[0]
        fin = np.isfinite(t1)
        if fin.any():
            a, b = self.column(t1[fin])
            r[fin, 0] = a
            r[fin, 1] = -np.conj(b)
        return r

    def _col0(self, t0):
        """First column of the right factor for endpoint t0 (finite or -inf)."""
        t0 = np.asarray(t0, dtype=float)
        r = np.empty(t0.shape + (2,), dtype=complex)
        inf = np.isneginf(t0)
        r[inf] = self.minus_cols[:, 0]
        fin = np.isfinite(t0)
        if fin.any():
            a, b = self.column(t0[fin])
            r[fin, 0] = np.conj(a)
            r[fin, 1] = -b
        return r

    def stay_probability(self, t0, t1):
        """``|u_00(t1, t0)|**2`` elementwise; endpoints may be -inf/+inf resp."""
        t0, t1 = np.broadcast_arrays(np.asarray(t0, float), np.asarray(t1, float))
        out = np.ones(t0.shape)
        same = t0 == t1
        todo = ~same
        if np.any(todo & (np.isposinf(t0) | np.isneginf(t1))):
            raise InvalidIntervalError("segment must start below +inf and end above -inf")
        if todo.any():
            u = np.sum(self._row0(t1[todo]) * self._col0(t0[todo]), axis=-1)
            out[todo] = np.minimum(u.real**2 + u.imag**2, 1.0)
        return out

    def bloch_z_factor(self, t0, t1):
        """``2|u_00|**2 - 1``: the factor a segment applies to the Bloch z-component."""
        return 2.0 * self.stay_probability(t0, t1) - 1.0


@lru_cache(maxsize=16)
def _cached_propagator(gamma: float, reach: float) -> Propagator:
    return Propagator(gamma, reach)


def get_propagator(c, reach: float = 0.0) -> Propagator:
    """Shared :class:`Propagator` covering at least ``[-reach, reach]``."""
    gamma = as_coupling(c).gamma
    need = max(horizon(gamma), float(reach))
    return _cached_propagator(gamma, 10.0 * math.ceil(need / 10.0 - 1e-9))


def _finite_reach(*ts):
    return max([abs(t) for t in ts if math.isfinite(t)], default=0.0)


def population_matrix(c, t0: float, t1: float) -> np.ndarray:
    """``m[j, k] = |u_jk(t1, t0)|**2`` for ``t0 <= t1`` in the extended reals."""
    c = as_coupling(c)
    t0, t1 = float(t0), float(t1)
    if math.isnan(t0) or math.isnan(t1):
        raise InvalidInputError("time instants must not be NaN")
    if t0 > t1:
        raise InvalidIntervalError(f"t0={t0} > t1={t1}")
    if t0 == t1:
        return np.eye(2)
    p = get_propagator(c, _finite_reach(t0, t1))
    m = float(p.stay_probability(t0, t1))
    return np.array([[m, 1.0 - m], [1.0 - m, m]])


# -- special functions ------------------------------------------------------


def fresnel(t):
    """``sqrt(2/pi) * integral_0^t exp(i s**2) ds`` (vectorised)."""
    x = np.asarray(t, dtype=float) * math.sqrt(2.0 / math.pi)
    s, c = _scipy_fresnel(x)
    out = c + 1j * s
    return complex(out) if out.ndim == 0 else out


def _hyp2f2_series(z: complex) -> complex:
    term = 1.0 + 0j
    total = term
    n = 0
    while True:
        term *= z * (n + 1) / ((n + 1.5) * (n + 2))
        n += 1
        total += term
        if n > abs(z) and abs(term) <= 1e-17 * abs(total):
            return total
        if n > 2000:
            return total


def _hyp2f2_asymptotic(z: complex) -> complex:
    # 2F2 = (sqrt(pi)/z) int_0^sqrt(z) e^{u^2} (1 - erfc u) du; the erf part is
    # exact and the erfc part takes its large-|u| expansion, truncated optimally.
    root = np.sqrt(z)
    erfi = -1j * erf(1j * root)
    acc = math.log(2.0) + 0.5 * np.log(z) + 0.5 * np.euler_gamma
    poch = 1.0
    prev = math.inf
    for n in range(1, 200):
        poch *= n - 0.5
        term = (-1) ** (n + 1) * poch / (2 * n * z**n)
        if abs(term) >= prev or abs(term) < 1e-18 * abs(acc):
            break
        acc += term
        prev = abs(term)
    return complex(math.pi / (2 * z) * erfi - acc / z)


def hyp2f2(z):
    """Generalised hypergeometric 2F2(1, 1; 3/2, 2; z).

    Power series below ``|z| = HYP2F2_SWITCH_RADIUS``, large-argument expansion
    above it. Tested along the ray ``z = -i t**2 / 2``.
    """
    arr = np.asarray(z, dtype=complex)
    flat = [
        _hyp2f2_series(v) if abs(v) <= HYP2F2_SWITCH_RADIUS else _hyp2f2_asymptotic(v)
        for v in arr.ravel()
    ]
    out = np.array(flat, dtype=complex).reshape(arr.shape)
    return complex(out) if out.ndim == 0 else out
