"""Particle orbits X' = V, V' = -phi'(X) in the potential of a wave.

Energies between phi_- and phi_+ give trapped orbits bouncing between the
turning points alpha and P - alpha; energies above phi_+ give free orbits
that cross the whole period. Transit times are obtained by integrating the
characteristic system in time, which sidesteps the inverse square-root
singularity of the position-space period integrals. Those integrals are
kept as an independent check (``period_integral_check``).
"""

from __future__ import annotations

import dataclasses
import enum
import math
import warnings

import numpy as np
from scipy.integrate import IntegrationWarning, quad
from scipy.interpolate import CubicHermiteSpline, CubicSpline

SEPARATRIX_REL = 1e-8
EVENT_TOL = 1e-12
STEP_FRACTION = 0.01


class OrbitKind(str, enum.Enum):
    FREE = "free"
    TRAPPED = "trapped"


class OrbitDomainError(ValueError):
    """Energy outside the range admitted by the requested operation."""


class SeparatrixError(OrbitDomainError):
    """Energy inside the exclusion band around phi_+ where periods diverge."""


@dataclasses.dataclass(frozen=True, eq=False)
class OrbitTrace:
    energy: float
    kind: OrbitKind
    alpha: float
    period: float
    s: np.ndarray
    X: np.ndarray
    V: np.ndarray
    phi: object = dataclasses.field(repr=False, default=None)

    @property
    def energy_error(self):
        return 0.5 * self.V ** 2 + self.phi(self.X) - self.energy

    def position(self, s):
        """Dense output X(s) from the cubic Hermite fit through (X, V)."""
        return CubicHermiteSpline(self.s, self.X, self.V)(s)


def separatrix_band(wave):
    return SEPARATRIX_REL * (wave.phi_plus - wave.phi_minus)


def classify(wave, e):
    if e < wave.phi_minus:
        raise OrbitDomainError(f"energy {e:.6g} below the potential minimum {wave.phi_minus:.6g}")
    if abs(e - wave.phi_plus) < separatrix_band(wave) or (e <= wave.phi_plus and wave.phi_plus == wave.phi_minus):
        raise SeparatrixError(f"energy {e:.6g} lies in the separatrix band around {wave.phi_plus:.6g}")
    return OrbitKind.FREE if e > wave.phi_plus else OrbitKind.TRAPPED


def turning_point(wave, e):
    """alpha in [0, P/2] with phi(alpha) = e, by bisection on the interpolant.

    Accepts scalars or arrays of energies in [phi_-, phi_+].
    """
    e = np.asarray(e, dtype=float)
    if np.any(e < wave.phi_minus) or np.any(e > wave.phi_plus):
        raise OrbitDomainError("turning points exist only for phi_- <= e <= phi_+")
    phi = wave.interpolant
    lo = np.zeros_like(e)
    hi = np.full_like(e, 0.5 * wave.period)
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        above = phi(mid) > e
        lo = np.where(above, mid, lo)
        hi = np.where(above, hi, mid)
        if np.all(hi - lo <= 2 * np.spacing(0.5 * wave.period)):
            break
    alpha = np.where(np.abs(phi(lo) - e) <= np.abs(phi(hi) - e), lo, hi)
    alpha = np.where(e >= wave.phi_plus, 0.0, np.where(e <= wave.phi_minus, 0.5 * wave.period, alpha))
    return float(alpha) if alpha.ndim == 0 else alpha


def step_size(wave, e):
    """RK4 step resolving both the bounce frequency and the transit of one wavelength."""
    omega = math.sqrt(float(np.max(np.abs(wave.d2phi))))
    v_max = np.sqrt(2.0 * np.maximum(np.asarray(e, dtype=float) - wave.phi_minus, 0.0))
    length = wave.period / (2 * math.pi)
    bounce = 1.0 / omega if omega > 0 else math.inf
    return STEP_FRACTION * np.minimum(bounce, length / np.maximum(v_max, 1e-300))


def initial_state(wave, energies):
    """Canonical start points: (alpha, 0) for trapped, (0, sqrt(2(e - phi_+))) for free."""
    energies = np.asarray(energies, dtype=float)
    free = energies > wave.phi_plus
    x0 = np.zeros_like(energies)
    if np.any(~free):
        x0[~free] = turning_point(wave, energies[~free])
    v0 = np.where(free, np.sqrt(2.0 * np.maximum(energies - wave.phi_plus, 0.0)), 0.0)
    return x0, v0, free


class _Batch:
    """Vectorised RK4 for (X, V, I) with I' = psi(X) on a subset of orbits."""

    def __init__(self, wave, psi):
        self.dphi = wave.interpolant.derivative
        self.psi = psi

    def rhs(self, x, v):
        f = -self.dphi(x)
        g = self.psi(x) if self.psi is not None else 0.0 * x
        return v, f, g

    def step(self, x, v, i, dt):
        k1x, k1v, k1i = self.rhs(x, v)
        h2 = 0.5 * dt
        k2x, k2v, k2i = self.rhs(x + h2 * k1x, v + h2 * k1v)
        k3x, k3v, k3i = self.rhs(x + h2 * k2x, v + h2 * k2v)
        k4x, k4v, k4i = self.rhs(x + dt * k3x, v + dt * k3v)
        w = dt / 6.0
        return (x + w * (k1x + 2 * k2x + 2 * k3x + k4x),
                v + w * (k1v + 2 * k2v + 2 * k3v + k4v),
                i + w * (k1i + 2 * k2i + 2 * k3i + k4i))


def transit(wave, energies, psi=None, step_scale=1.0, max_steps=10_000_000, record=False):
    """Transit times (and optionally int psi(X(s)) ds) for a batch of energies.

    Trapped orbits run from (alpha, 0) until V returns to zero at P - alpha,
    free orbits from (0, sqrt(2(e - phi_+))) until X reaches P. Returns
    ``(periods, integrals, records)``; ``records`` is a list of (s, X, V)
    arrays per orbit when ``record`` is set, else None.
    """
    energies = np.atleast_1d(np.asarray(energies, dtype=float))
    for e in energies:
        classify(wave, float(e))
    x, v, free = initial_state(wave, energies)
    n = len(energies)
    dt_all = step_scale * step_size(wave, energies)
    integ = _Batch(wave, psi)
    P = wave.period

    periods = np.full(n, np.nan)
    integrals = np.zeros(n)
    idx = np.arange(n)
    s = np.zeros(n)
    i_acc = np.zeros(n)
    dt = dt_all.copy()
    traces = [([0.0], [x[k]], [v[k]]) for k in range(n)] if record else None
    steps = 0
    while len(idx):
        xn, vn, inn = integ.step(x, v, i_acc, dt)
        fr = free[idx]
        crossed = np.where(fr, xn >= P, (vn <= 0.0) & (v > 0.0))
        if np.any(crossed):
            c = np.flatnonzero(crossed)
            delta = _locate_event(integ, x[c], v[c], i_acc[c], dt[c], xn[c], vn[c], fr[c], P)
            xe, ve, ie = integ.step(x[c], v[c], i_acc[c], delta)
            periods[idx[c]] = s[c] + delta
            integrals[idx[c]] = ie
            if record:
                for j, k in enumerate(c):
                    tr = traces[idx[k]]
                    tr[0].append(s[k] + delta[j])
                    tr[1].append(xe[j])
                    tr[2].append(ve[j])
        keep = ~crossed
        s = s + dt
        if record:
            for k in np.flatnonzero(keep):
                tr = traces[idx[k]]
                tr[0].append(s[k])
                tr[1].append(xn[k])
                tr[2].append(vn[k])
        idx, x, v, i_acc, dt, s = idx[keep], xn[keep], vn[keep], inn[keep], dt[keep], s[keep]
        steps += 1
        if steps > max_steps:
            raise RuntimeError("orbit integration exceeded the step limit")
    records = [tuple(np.array(a) for a in tr) for tr in traces] if record else None
    return periods, integrals, records


def _locate_event(integ, x, v, i_acc, dt, xn, vn, free, P):
    """Newton on the partial step length that zeroes the event function."""
    # linear first guess from the end-point values
    g0 = np.where(free, x - P, v)
    g1 = np.where(free, xn - P, vn)
    delta = dt * g0 / (g0 - g1)
    delta = np.clip(np.nan_to_num(delta, nan=0.5 * dt), 0.0, dt)
    for _ in range(30):
        xe, ve, _ = integ.step(x, v, i_acc, delta)
        g = np.where(free, xe - P, ve)
        slope = np.where(free, ve, -integ.dphi(xe))
        corr = -g / slope
        delta = delta + corr
        if np.all(np.abs(corr) <= EVENT_TOL * dt):
            break
    return delta


def trace_orbit(wave, e, step_scale=1.0):
    """Integrate one orbit at energy ``e`` and return its samples."""
    kind = classify(wave, float(e))
    periods, _, rec = transit(wave, [e], step_scale=step_scale, record=True)
    s, X, V = rec[0]
    alpha = turning_point(wave, e) if kind is OrbitKind.TRAPPED else math.nan
    if kind is OrbitKind.TRAPPED:
        V[-1] = 0.0
    return OrbitTrace(energy=float(e), kind=kind, alpha=float(alpha), period=float(periods[0]),
                      s=s, X=X, V=V, phi=wave.interpolant)


def periodic_spline(wave, values):
    """Periodic cubic spline through grid values on [0, P] (first = last)."""
    values = np.asarray(values, dtype=float)
    data = values.copy()
    data[-1] = data[0]
    return CubicSpline(wave.x, data, bc_type="periodic")


def inner_integrals(wave, psi_values, energies, step_scale=1.0):
    """int psi(X(s)) ds over one transit per energy, with the transit times."""
    spline = periodic_spline(wave, psi_values)
    P = wave.period

    def psi(x):
        return spline(np.mod(x, P))

    periods, integrals, _ = transit(wave, energies, psi=psi, step_scale=step_scale)
    return integrals, periods


def _position_integral(wave, e, weight):
    """int weight(y) / sqrt(2(e - phi(y))) dy over one transit, by quadrature."""
    phi = wave.interpolant
    P = wave.period
    kind = classify(wave, float(e))
    opts = dict(epsabs=0.0, epsrel=1e-12, limit=400)
    if kind is OrbitKind.FREE:
        def f(y):
            return weight(y) / math.sqrt(2.0 * (e - float(phi(y))))
        pts = [0.25 * P]
        a, ea = quad(f, 0.0, 0.5 * P, points=pts, **opts)
        b, eb = quad(f, 0.5 * P, P, points=[0.75 * P], **opts)
        return a + b, ea + eb
    alpha = turning_point(wave, e)
    half = 0.5 * P - alpha

    # y = P/2 -+ half cos(theta) maps theta in [0, pi/2] onto each half of the
    # orbit and cancels the square-root singularity at the turning points
    def g(theta, sign):
        y = 0.5 * P + sign * half * math.cos(theta)
        gap = e - float(phi(y))
        if gap <= 0.0:
            return 0.0
        return weight(y) * half * math.sin(theta) / math.sqrt(2.0 * gap)

    # near the well bottom e - phi(y) loses digits to cancellation and quad may
    # stop short of epsrel; the returned error estimate then says so
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", IntegrationWarning)
        a, ea = quad(g, 0.0, 0.5 * math.pi, args=(-1.0,), **opts)
        b, eb = quad(g, 0.0, 0.5 * math.pi, args=(1.0,), **opts)
    return a + b, ea + eb


def period_integral_check(wave, e):
    """Transit time from the position-space integral, as (value, error estimate)."""
    return _position_integral(wave, e, lambda y: 1.0)


def inner_integral_check(wave, psi_values, e):
    spline = periodic_spline(wave, psi_values)
    return _position_integral(wave, e, lambda y: float(spline(y)))


def export_orbit_csv(trace, path):
    from .io import write_csv

    write_csv(path, ["s", "X", "V", "energy_error"], [trace.s, trace.X, trace.V, trace.energy_error])
