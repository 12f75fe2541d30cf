"""Periodic BGK potentials.

A wave solves ``phi'' = 1 - rho(phi)`` and is laid out with its maximum at
the ends of the period and its minimum in the middle. We shoot from the
maximum with ``phi'(0) = 0`` and stop at the next zero of ``phi'``, which
is the minimum; the second half of the period is the mirror image.
"""

from __future__ import annotations

import dataclasses
import functools
import math

import numpy as np
from scipy.optimize import brentq

from .numerics import QuinticHermite
from .profile import (MOMENT_TOL, ProfileDomainError, density_kernel, density_moment,
                      q_moment, q_moment_with_error)

STEPS_PER_PERIOD = 10_000
EVENT_TOL = 1e-12


class WaveError(RuntimeError):
    """Base class for failed wave constructions."""


class NonOscillatory(WaveError):
    """q at the equilibrium level is not positive, so no periodic orbit exists around it."""


class EventNotFound(WaveError):
    """The turning event was not reached within the allowed integration length."""


class AmplitudeTooLarge(WaveError):
    """The trajectory left the potential well (or the profile's energy domain)."""


class NoSignChange(ValueError):
    """rho - 1 does not change sign on the requested bracket."""


@dataclasses.dataclass(frozen=True, eq=False)
class BgkWave:
    period: float
    x: np.ndarray
    phi: np.ndarray
    dphi: np.ndarray
    d2phi: np.ndarray
    phi_minus: float
    phi_plus: float
    phi_star: float
    profile: object

    def __post_init__(self):
        for name in ("x", "phi", "dphi", "d2phi"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)
        if (len(self.x) - 1) % 2:
            raise ValueError("grid must have an even number of intervals")

    @property
    def grid_n(self):
        return len(self.x) - 1

    @property
    def h(self):
        return self.period / self.grid_n

    @functools.cached_property
    def interpolant(self):
        """Periodic C^2 quintic Hermite representation of phi."""
        return QuinticHermite(0.0, self.h, self.phi, self.dphi, self.d2phi, periodic=True)

    @functools.cached_property
    def q(self):
        return q_profile(self)


def find_equilibrium_level(profile, bracket=None):
    """Root phi* of rho(phi) = 1 inside ``bracket``."""
    if bracket is None:
        d = 1e-3 * profile.theta
        bracket = (-d, d)
    lo, hi = map(float, bracket)
    mid = 0.5 * (lo + hi)
    if abs(density_moment(profile, mid) - 1.0) <= 1e-13:
        # neutral profiles have their root at the centre of the default bracket,
        # possibly a degenerate one (q = 0) without a sign change
        return mid
    f_lo = density_moment(profile, lo) - 1.0
    f_hi = density_moment(profile, hi) - 1.0
    if f_lo == 0.0:
        return lo
    if f_hi == 0.0:
        return hi
    if np.sign(f_lo) == np.sign(f_hi):
        raise NoSignChange(f"rho - 1 has the same sign at {lo} and {hi}")
    root = brentq(lambda p: density_moment(profile, p) - 1.0, lo, hi, xtol=1e-15)
    return float(root)


def _hermite5(t, h, y0, y1, d0, d1, s0, s1):
    """Quintic Hermite value and derivative at local coordinate t in [0, 1]."""
    d0, d1 = d0 * h, d1 * h
    s0, s1 = s0 * h * h, s1 * h * h
    dy = y1 - y0
    c3 = 10 * dy - 6 * d0 - 4 * d1 - 1.5 * s0 + 0.5 * s1
    c4 = -15 * dy + 8 * d0 + 7 * d1 + 1.5 * s0 - s1
    c5 = 6 * dy - 3 * d0 - 3 * d1 - 0.5 * s0 + 0.5 * s1
    val = y0 + t * (d0 + t * (0.5 * s0 + t * (c3 + t * (c4 + t * c5))))
    der = d0 + t * (s0 + t * (3 * c3 + t * (4 * c4 + t * 5 * c5)))
    return val, der / h


def construct_wave(profile, phi_plus, grid_n=4096, *, steps_per_period=STEPS_PER_PERIOD,
                   max_periods=50.0, bracket=None):
    """Shoot from the maximum ``phi_plus`` and assemble one symmetric period.

    The RK4 step is chosen so that the period is resolved by at least
    ``steps_per_period`` steps; the grid values are taken from quintic
    Hermite dense output between steps.
    """
    if grid_n < 64 or grid_n % 2:
        raise ValueError("grid_n must be an even integer >= 64")
    phi_star = find_equilibrium_level(profile, bracket)
    q_star, q_err = q_moment_with_error(profile, phi_star)
    # a value inside the quadrature error cannot be told apart from zero
    if not q_star > max(q_err, MOMENT_TOL):
        raise NonOscillatory(f"q(phi*) = {float(q_star):.6g} is not resolvably positive: "
                             f"no oscillation about phi* = {phi_star:.6g}")
    if not phi_plus > phi_star:
        raise ValueError("phi_plus must exceed the equilibrium level")

    rho = density_kernel(profile)
    try:
        start_force = 1.0 - rho(phi_plus)
    except ProfileDomainError as exc:
        raise AmplitudeTooLarge(str(exc)) from exc
    if not start_force < 0:
        raise AmplitudeTooLarge(f"phi_plus = {phi_plus:.6g} lies beyond the right barrier of the well")

    t_guess = 2 * math.pi / math.sqrt(q_star)
    dt = t_guess / steps_per_period
    for _ in range(3):
        s, y, dy, d2y, half = _shoot(rho, phi_plus, phi_star, dt, max_periods * t_guess)
        if 2 * half / dt >= steps_per_period * (1 - 1e-12):
            break
        dt = 2 * half / steps_per_period
    period = 2 * half
    phi_minus = y[-1]
    if not d2y[-1] > 0:
        raise AmplitudeTooLarge(f"degenerate minimum: phi'' = {d2y[-1]:.3g} at phi_- = {phi_minus:.6g}")

    h = period / grid_n
    x_half = np.arange(grid_n // 2 + 1) * h
    k = np.minimum(np.searchsorted(s, x_half, side="right") - 1, len(s) - 2)
    step = s[k + 1] - s[k]
    t = (x_half - s[k]) / step
    phi_h, dphi_h = _hermite5(t, step, y[k], y[k + 1], dy[k], dy[k + 1], d2y[k], d2y[k + 1])
    phi_h[0], dphi_h[0] = phi_plus, 0.0
    phi_h[-1], dphi_h[-1] = phi_minus, 0.0

    phi = np.concatenate([phi_h, phi_h[-2::-1]])
    dphi = np.concatenate([dphi_h, -dphi_h[-2::-1]])
    wave_profile = profile.with_floor(phi_minus)
    d2phi = 1.0 - density_moment(wave_profile, phi)
    return BgkWave(period=period, x=np.arange(grid_n + 1) * h, phi=phi, dphi=dphi,
                   d2phi=d2phi, phi_minus=float(phi_minus), phi_plus=float(phi_plus),
                   phi_star=phi_star, profile=wave_profile)


def uniform_wave(profile, period, grid_n=4096, phi0=None):
    """Constant potential phi = phi* on a prescribed period.

    Not a wave in the sense of a strictly monotone half period, but a valid
    steady state whose linear problem is translation invariant; used as a
    closed-form reference for the stability machinery.
    """
    if grid_n < 64 or grid_n % 2:
        raise ValueError("grid_n must be an even integer >= 64")
    level = find_equilibrium_level(profile) if phi0 is None else float(phi0)
    n = grid_n + 1
    return BgkWave(period=float(period), x=np.arange(n) * (period / grid_n), phi=np.full(n, level),
                   dphi=np.zeros(n), d2phi=np.full(n, 1.0 - density_moment(profile, level)),
                   phi_minus=level, phi_plus=level, phi_star=level, profile=profile.with_floor(level))


def _shoot(rho, phi_plus, phi_star, dt, max_length):
    """RK4 from (phi_plus, 0) until phi' returns to zero from below.

    Returns step abscissae and (phi, phi', phi'') there; the last entry is
    the localised event, whose abscissa is the half period.
    """
    def force(p):
        try:
            return 1.0 - rho(p)
        except ProfileDomainError as exc:
            raise AmplitudeTooLarge(str(exc)) from exc

    def step(p, v, a, h):
        k1p, k1v = v, a
        k2p, k2v = v + 0.5 * h * k1v, force(p + 0.5 * h * k1p)
        k3p, k3v = v + 0.5 * h * k2v, force(p + 0.5 * h * k2p)
        k4p, k4v = v + h * k3v, force(p + h * k3p)
        return (p + h / 6 * (k1p + 2 * k2p + 2 * k3p + k4p),
                v + h / 6 * (k1v + 2 * k2v + 2 * k3v + k4v))

    s_list, p_list, v_list, a_list = [0.0], [phi_plus], [0.0], [force(phi_plus)]
    p, v, a, s = phi_plus, 0.0, a_list[0], 0.0
    while True:
        p_new, v_new = step(p, v, a, dt)
        a_new = force(p_new)
        if v_new >= 0.0 and v < 0.0:
            break
        if p_new < phi_star and v_new < 0 and a_new < 0:
            raise AmplitudeTooLarge("trajectory escaped past the left barrier of the well")
        s += dt
        if s > max_length:
            raise EventNotFound(f"no turning point within integration length {max_length:.4g}")
        p, v, a = p_new, v_new, a_new
        s_list.append(s)
        p_list.append(p)
        v_list.append(v)
        a_list.append(a)

    # Newton on the partial step length so that phi'(s + delta) = 0
    delta = dt * (-v) / (v_new - v)
    for _ in range(20):
        pe, ve = step(p, v, a, delta)
        ae = force(pe)
        correction = -ve / ae
        delta += correction
        if abs(correction) <= EVENT_TOL * dt:
            break
    pe, ve = step(p, v, a, delta)
    s_list.append(s + delta)
    p_list.append(pe)
    v_list.append(0.0)
    a_list.append(force(pe))
    return (np.array(s_list), np.array(p_list), np.array(v_list), np.array(a_list), s + delta)


def q_profile(wave):
    """q(x_i) = int mu'(v^2/2 + phi(x_i)) dv on the wave grid."""
    return np.asarray(q_moment(wave.profile, wave.phi))


def pseudo_potential(profile, phi, phi_star, n_gauss=24):
    """U(phi) = int_{phi*}^{phi} (rho(s) - 1) ds by Gauss-Legendre."""
    phi = np.asarray(phi, dtype=float)
    xg, wg = np.polynomial.legendre.leggauss(n_gauss)
    mid = 0.5 * (phi + phi_star)
    half = 0.5 * (phi - phi_star)
    pts = mid[..., None] + half[..., None] * xg
    return half * ((density_moment(profile, pts) - 1.0) @ wg)


def wave_diagnostics(wave):
    """Residuals of the structural invariants of a constructed wave."""
    n, h = wave.grid_n, wave.h
    phi, dphi, d2phi = wave.phi, wave.dphi, wave.d2phi
    energy = 0.5 * dphi ** 2 + pseudo_potential(wave.profile, phi, wave.phi_star)
    second_diff = (phi[2:] - 2 * phi[1:-1] + phi[:-2]) / h ** 2
    fourth = np.abs(d2phi[2:] - 2 * d2phi[1:-1] + d2phi[:-2]) / h ** 2
    half = dphi[1:n // 2]
    q = wave.q
    third = (d2phi[2:] - d2phi[:-2]) / (2 * h)
    return {
        "endpoint_error": max(abs(phi[0] - wave.phi_plus), abs(phi[-1] - wave.phi_plus),
                              abs(phi[n // 2] - wave.phi_minus)),
        "reflection_error": float(np.max(np.abs(phi - phi[::-1]))),
        "monotone": bool(np.all(half < 0)),
        "first_integral_spread": float(np.ptp(energy)),
        "ode_residual": float(np.max(np.abs(second_diff - d2phi[1:-1]))),
        "ode_residual_bound": float(h ** 2 / 12 * np.max(fourth) * 2 + 1e-9),
        "third_derivative_residual": float(np.max(np.abs(third + q[1:-1] * dphi[1:-1]))),
        "q_symmetry_error": float(np.max(np.abs(q - q[::-1]))),
        "max_q": float(np.max(q)),
    }


def export_wave_csv(wave, path):
    from .io import write_csv

    write_csv(path, ["x", "phi", "dphi", "q"], [wave.x, wave.phi, wave.dphi, wave.q])
