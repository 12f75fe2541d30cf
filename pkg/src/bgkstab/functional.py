"""Instability criterion for the ground state and the orbit-averaged quadratic form.

With (lambda_0, u_0) the ground pair of u'' + (q + lambda) u = 0 and
psi = u_0 u_0', the quadratic form

    L[psi] = int (psi'^2 - q psi^2) dx
             + int_{e > phi_+} mu'(e) I_f(e)^2 / P_f(e) de
             + 2 int_{phi_- < e < phi_+} mu'(e) I_t(e)^2 / P_t(e) de

reduces to twice the half-period integral of (q + lambda_0)(q + 4 lambda_0/3) u_0^4,
because the orbit integrals I_f, I_t of an odd function vanish.
"""

from __future__ import annotations

import dataclasses
import enum
import math

import numpy as np

from .numerics import adaptive_gk15, derivative, trapezoid
from . import orbit
from .orbit import inner_integrals, separatrix_band
from .sturm import solve_eigen

IDENTITY_TOL = 1e-6
OUTER_REL_TOL = 1e-9
TAIL_TOL = 1e-12


class Verdict(str, enum.Enum):
    UNSTABLE = "Unstable"
    INCONCLUSIVE = "Inconclusive"


class IdentityViolation(RuntimeError):
    """An integration-by-parts identity failed: the eigenpair and q are inconsistent."""


@dataclasses.dataclass(frozen=True)
class CriterionReport:
    lambda0: float
    criterion_integral: float
    identity_ibp1: tuple
    identity_ibp2: tuple
    verdict: Verdict
    error_bound: float

    def to_dict(self):
        return {
            "lambda0": self.lambda0,
            "criterion_integral": self.criterion_integral,
            "identity_ibp1": list(self.identity_ibp1),
            "identity_ibp2": list(self.identity_ibp2),
            "verdict": self.verdict.value,
            "error_bound": self.error_bound,
        }


@dataclasses.dataclass(frozen=True)
class FunctionalBreakdown:
    term_gradient: float
    term_free: float
    term_trapped: float
    total: float
    error_budget: float
    budget_parts: dict
    free_weight: float = 1.0

    def to_dict(self):
        return dataclasses.asdict(self)


def test_function(u0, h):
    """psi = u_0 u_0' with the fourth-order derivative of the odd extension."""
    u0 = np.asarray(u0, dtype=float)
    return u0 * derivative(u0, h, ends="odd")


test_function.__test__ = False  # not a pytest test despite the name


def relative_gap(pair):
    a, b = pair
    return abs(a - b) / max(abs(a), abs(b), 1e-300)


def _criterion_parts(q, u0, lam0, h):
    n = len(q) - 1
    du = derivative(u0, h, ends="odd")
    half = slice(0, n // 2 + 1)
    integrand = (q + lam0) * (q + 4.0 * lam0 / 3.0) * u0 ** 4
    value = trapezoid(integrand[half], h)
    ibp1 = (trapezoid(du ** 4, h), 3.0 * trapezoid((q + lam0) * u0 ** 2 * du ** 2, h))
    ibp2 = (trapezoid((q + lam0) * u0 ** 4, h), 3.0 * trapezoid(u0 ** 2 * du ** 2, h))
    return value, ibp1, ibp2


def criterion_from_q(q, period, spectral=None, identity_tol=IDENTITY_TOL, u0_scale=1.0):
    """Criterion report for grid values of q on [0, period].

    The eigenpair is second-order accurate, so every reported integral is
    extrapolated from the given grid and the grid with every other node,
    (4 I_h - I_2h) / 3. The error bound is the size of that correction.
    """
    q = np.asarray(q, dtype=float)
    n = len(q) - 1
    if n % 4:
        raise ValueError("criterion needs a grid size divisible by 4")
    h = period / n
    spectral = solve_eigen(q, period, 2) if spectral is None else spectral
    coarse = solve_eigen(q[::2], period, 2)
    fine_parts = _criterion_parts(q, u0_scale * spectral.eigenfunctions[0],
                                  float(spectral.eigenvalues[0]), h)
    coarse_parts = _criterion_parts(q[::2], u0_scale * coarse.eigenfunctions[0],
                                    float(coarse.eigenvalues[0]), 2 * h)
    fine, crude = np.hstack([np.ravel(p) for p in fine_parts]), np.hstack([np.ravel(p) for p in coarse_parts])
    extrapolated = (4.0 * fine - crude) / 3.0
    value = float(extrapolated[0])
    ibp1 = (float(extrapolated[1]), float(extrapolated[2]))
    ibp2 = (float(extrapolated[3]), float(extrapolated[4]))
    for name, pair in (("first", ibp1), ("second", ibp2)):
        if relative_gap(pair) > identity_tol:
            raise IdentityViolation(f"{name} integration-by-parts identity off by "
                                    f"{relative_gap(pair):.3e} (pair {pair[0]:.12g}, {pair[1]:.12g})")
    lam0 = float(spectral.eigenvalues[0])
    u0 = u0_scale * spectral.eigenfunctions[0]
    bound = abs(value - fine[0]) + 1e-13 * trapezoid(integrand_scale(q, u0, lam0), h)
    verdict = Verdict.UNSTABLE if value < -bound else Verdict.INCONCLUSIVE
    return CriterionReport(lam0, value, ibp1, ibp2, verdict, float(bound))


def integrand_scale(q, u0, lam0):
    return (np.abs(q) + abs(lam0)) ** 2 * u0 ** 4


def criterion(wave, spectral=None, identity_tol=IDENTITY_TOL):
    return criterion_from_q(wave.q, wave.period, spectral, identity_tol)


def gradient_term(wave, psi):
    """int (psi'^2 - q psi^2) dx over one period."""
    dpsi = derivative(psi, wave.h, ends="periodic")
    return trapezoid(dpsi ** 2 - wave.q * psi ** 2, wave.h)


def energy_cutoff(wave, psi, tail_tol=TAIL_TOL):
    """Upper energy beyond which the free-particle term is below ``tail_tol``.

    Uses I_f^2 / P_f <= max|psi|^2 P sqrt(2(e - phi_-)) / (2(e - phi_+)) and the
    exponential envelope of |mu'| rather than the algebraic decay bound,
    which would push the cutoff to astronomically large energies.
    Returns (E_max, tail bound).
    """
    prof = wave.profile
    scale = float(np.max(np.abs(psi))) ** 2 * wave.period
    e = wave.phi_plus + prof.theta
    grid = np.linspace(0.0, 60.0 * prof.theta, 601)

    def tail(e0):
        es = e0 + grid
        f = prof.envelope(es) * np.sqrt(2 * (es - wave.phi_minus)) / (2 * (es - wave.phi_plus))
        return scale * (trapezoid(f, grid[1]) + f[-1] * prof.theta)

    while tail(e) > tail_tol * max(scale, 1e-300):
        e += prof.theta
    return e, tail(e)


def _outer(wave, psi, lo, hi, weight, breakpoints, tol, initial_panels=2):
    """Adaptive energy integral of weight * mu'(e) I(e)^2 / T(e) plus step-doubling error."""
    dmu = wave.profile.dmu

    def f(e):
        flat = e.ravel()
        fine, period = inner_integrals(wave, psi, flat)
        coarse, period2 = inner_integrals(wave, psi, flat, step_scale=2.0)
        val = weight * dmu(flat) * fine ** 2 / period
        val2 = weight * dmu(flat) * coarse ** 2 / period2
        return np.stack([val.reshape(e.shape), np.abs(val - val2).reshape(e.shape)])

    value, err, edges = adaptive_gk15(f, lo, hi, tol=np.array([tol, math.inf]),
                                      initial_panels=initial_panels, breakpoints=breakpoints)
    return float(value[0]), float(err[0]), float(value[1]) / 15.0, edges


def lin_functional(wave, psi, *, free_weight=1.0, rel_tol=OUTER_REL_TOL):
    """Gradient, free and trapped contributions to L[psi] with an error budget.

    ``free_weight`` multiplies the free-particle term; 1 reproduces the
    form stated above, 2 counts right- and left-moving free particles
    separately (which is what the small-rate limit of the dispersion
    scalar converges to).
    """
    psi = np.asarray(psi, dtype=float)
    if len(psi) != wave.grid_n + 1:
        raise ValueError("psi must live on the wave grid")
    if abs(psi[0]) > 1e-12 * np.max(np.abs(psi)) or abs(psi[-1]) > 1e-12 * np.max(np.abs(psi)):
        raise ValueError("psi must satisfy Dirichlet end conditions")
    grad = float(gradient_term(wave, psi))
    depth = wave.phi_plus - wave.phi_minus
    # a uniform state has no trapped particles; the cut below the free range
    # is then scaled by the profile temperature instead of the well depth
    scale = depth if depth > 0 else wave.profile.theta
    eps = separatrix_band(wave) if depth > 0 else orbit.SEPARATRIX_REL * scale
    tol = rel_tol * max(abs(grad), 1e-300)
    e_max, tail = energy_cutoff(wave, psi)

    trapped = trapped_quad = trapped_inner = 0.0
    # band-edge samples sit just outside the band so rounding cannot put them inside
    edge_e = [wave.phi_plus + 1.001 * eps]
    if depth > 0:
        t_lo, t_hi = wave.phi_minus, wave.phi_plus - eps
        t_breaks = [wave.phi_plus - depth * 10.0 ** -k for k in range(1, 8)]
        trapped, trapped_quad, trapped_inner, _ = _outer(wave, psi, t_lo, t_hi, 2.0, t_breaks, tol)
        edge_e.insert(0, wave.phi_plus - 1.001 * eps)

    f_lo, f_hi = wave.phi_plus + eps, e_max
    f_breaks = [wave.phi_plus + scale * 10.0 ** -k for k in range(1, 8)] + [wave.phi_plus + 1.0]
    free, free_quad, free_inner, _ = _outer(wave, psi, f_lo, f_hi, free_weight, f_breaks, tol)

    # band around the separatrix: integrand bounded by its values at the band edges
    edge_vals, edge_periods = inner_integrals(wave, psi, edge_e)
    edge = np.abs(wave.profile.dmu(np.array(edge_e))) * edge_vals ** 2 / edge_periods
    band = 2.0 * eps * (free_weight * edge[-1] + (2.0 * edge[0] if depth > 0 else 0.0))

    floor = 64 * np.finfo(float).eps * abs(grad)
    parts = {
        "outer_quadrature": trapped_quad + free_quad,
        "inner_integration": trapped_inner + free_inner,
        "separatrix_band": float(band),
        "energy_tail": free_weight * float(tail),
        "round_off": float(floor),
    }
    budget = float(sum(parts.values()))
    return FunctionalBreakdown(grad, free, trapped, grad + free + trapped, budget, parts,
                               float(free_weight))


def export_report_json(report, path):
    from .io import write_json

    write_json(path, report.to_dict())
