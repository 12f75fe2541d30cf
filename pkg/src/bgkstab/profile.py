"""Equilibrium energy profiles mu(e) and their velocity moments.

Two closed-form families are built in, both of the shape
``C * P(e) * exp(-e / theta)`` with a polynomial ``P``:

* ``maxwellian``: ``P(e) = 1``
* ``bump``: ``P(e) = 1 + kappa * e**m`` with ``m`` in {1, 2}

Velocity moments use the substitution ``e = phi + t**2`` so that
``int mu(v**2/2 + phi) dv = 2*sqrt(2) * int_0^inf mu(phi + t**2) dt`` has a
smooth integrand, which is then integrated with Gauss-Kronrod panels on a
truncated interval ``[0, T]``.
"""

from __future__ import annotations

import dataclasses
import enum
import functools
import math

import numpy as np

from .numerics import QuadratureError, adaptive_gk15, gk15_panels, panel_nodes

SQRT8 = 2.0 * math.sqrt(2.0)
MOMENT_TOL = 1e-10
TAIL_TOL = 1e-12
DEFAULT_E_FLOOR = -2.0


class ProfileDomainError(ValueError):
    """An energy below the profile's operational floor was requested."""


class Family(str, enum.Enum):
    MAXWELLIAN = "maxwellian"
    BUMP = "bump"


@dataclasses.dataclass(frozen=True)
class DistributionProfile:
    """Closed-form energy profile with neutrality and decay metadata.

    ``decay_exponent`` and ``decay_constant`` record a bound
    ``|mu'(e)| (1 + e**gamma) <= C`` valid for ``e >= 0``; ``e_min`` is the
    lowest energy at which the profile may be evaluated.
    """

    family: Family
    theta: float = 1.0
    kappa: float = 0.0
    m: int = 2
    normalization: float = 1.0
    decay_exponent: float = 2.0
    decay_constant: float = math.inf
    e_min: float = DEFAULT_E_FLOOR

    def __post_init__(self):
        object.__setattr__(self, "family", Family(self.family))
        if not self.theta > 0:
            raise ValueError("theta must be positive")
        if self.kappa < 0:
            raise ValueError("kappa must be non-negative")
        if self.m not in (1, 2):
            raise ValueError("bump exponent m must be 1 or 2")
        if not self.normalization > 0:
            raise ValueError("normalization must be positive")
        if not self.decay_exponent > 1:
            raise ValueError("decay exponent gamma must exceed 1")

    @property
    def poly(self):
        """Coefficients of P(e) in increasing powers."""
        if self.family is Family.MAXWELLIAN or self.kappa == 0.0:
            return np.array([1.0])
        c = np.zeros(self.m + 1)
        c[0] = 1.0
        c[self.m] = self.kappa
        return c

    def mu(self, e):
        """Unchecked evaluation of mu on arrays."""
        e = np.asarray(e, dtype=float)
        ex = self.normalization * np.exp(-e / self.theta)
        if self.family is Family.MAXWELLIAN or self.kappa == 0.0:
            return ex
        em = e if self.m == 1 else e * e
        return (1.0 + self.kappa * em) * ex

    def dmu(self, e):
        """Unchecked closed-form mu'(e)."""
        e = np.asarray(e, dtype=float)
        ex = self.normalization * np.exp(-e / self.theta)
        if self.family is Family.MAXWELLIAN or self.kappa == 0.0:
            return -ex / self.theta
        if self.m == 1:
            return (self.kappa - (1.0 + self.kappa * e) / self.theta) * ex
        return (2 * self.kappa * e - (1.0 + self.kappa * e * e) / self.theta) * ex

    def envelope(self, e):
        """Upper bound for |mu| and |mu'| at energies e >= 0 (monotone for large e)."""
        e = np.abs(np.asarray(e, dtype=float))
        p = np.abs(self.poly)
        dp = np.abs(np.polynomial.polynomial.polyder(p)) if len(p) > 1 else np.array([0.0])
        bound = np.polynomial.polynomial.polyval(e, p) * (1 + 1 / self.theta) + np.polynomial.polynomial.polyval(e, dp)
        return self.normalization * bound * np.exp(-e / self.theta)

    def with_floor(self, e_min):
        return dataclasses.replace(self, e_min=float(e_min))


def make_profile(family, theta=1.0, kappa=0.0, m=2, *, e_min=DEFAULT_E_FLOOR,
                 decay_exponent=2.0, normalize_=True):
    """Build a profile, normalise it and attach decay metadata."""
    family = Family(family)
    if family is Family.MAXWELLIAN:
        kappa = 0.0
    if family is Family.BUMP and m == 1 and kappa > 0:
        # P(e) = 1 + kappa e is negative below -1/kappa
        e_min = max(e_min, -1.0 / kappa)
    prof = DistributionProfile(family, theta, kappa, m, e_min=e_min,
                               decay_exponent=decay_exponent)
    if normalize_:
        prof = normalize(prof)
    return attach_decay(prof)


def attach_decay(profile):
    """Fill ``decay_constant`` with sup_{e>=0} |mu'(e)| (1 + e**gamma), padded 1%."""
    e = np.linspace(0.0, cutoff_energy(profile) * 4 + 50 * profile.theta, 20001)
    c = np.max(np.abs(profile.dmu(e)) * (1 + e ** profile.decay_exponent))
    return dataclasses.replace(profile, decay_constant=1.01 * float(c))


def evaluate_mu(profile, e):
    """mu(e) with the domain check ``e >= profile.e_min``."""
    e_arr = np.asarray(e, dtype=float)
    if np.any(e_arr < profile.e_min):
        raise ProfileDomainError(f"energy {np.min(e_arr):.6g} below profile floor {profile.e_min:.6g}")
    out = profile.mu(e_arr)
    return float(out) if out.ndim == 0 else out


def evaluate_dmu(profile, e):
    e_arr = np.asarray(e, dtype=float)
    if np.any(e_arr < profile.e_min):
        raise ProfileDomainError(f"energy {np.min(e_arr):.6g} below profile floor {profile.e_min:.6g}")
    out = profile.dmu(e_arr)
    return float(out) if out.ndim == 0 else out


def cutoff_energy(profile, rel=1e-17):
    """Energy beyond which the profile envelope is below ``rel`` times its scale."""
    scale = profile.normalization
    e = max(profile.e_min, 0.0) + profile.theta
    while profile.envelope(e) > rel * scale:
        e += profile.theta
    return e


@functools.lru_cache(maxsize=64)
def _moment_panels(profile):
    """Panel partition on [0, T] resolving both moment kernels over the energy range."""
    ecut = cutoff_energy(profile)
    t_max = math.sqrt(ecut - profile.e_min)
    probes = np.linspace(profile.e_min, max(profile.e_min, 0.0) + 2 * profile.theta, 9)

    scale = 1.0 / max(float(np.max(profile.envelope(probes))), 1e-300)

    def f(t):
        e = probes[:, None, None] + t[None] ** 2
        return scale * np.stack([profile.mu(e), profile.dmu(e)])

    _, _, edges = adaptive_gk15(f, 0.0, t_max, tol=1e-3 * MOMENT_TOL, initial_panels=8)
    nodes, half = panel_nodes(edges)
    # tail beyond T: integrand bounded by envelope(e) decaying at least like exp(-t^2/theta)
    e_t = profile.e_min + t_max ** 2
    tail = SQRT8 * float(profile.envelope(e_t)) * profile.theta / (2 * t_max)
    return edges, nodes, half, tail


def _moment(profile, phi, kernel):
    phi = np.asarray(phi, dtype=float)
    if np.any(phi < profile.e_min):
        raise ProfileDomainError(f"potential {np.min(phi):.6g} below profile floor {profile.e_min:.6g}")
    edges, nodes, half, tail = _moment_panels(profile)
    vals = kernel(phi[..., None, None] + nodes ** 2)
    kron, err = gk15_panels(vals, half)
    value = SQRT8 * kron.sum(axis=-1)
    error = SQRT8 * err.sum(axis=-1) + tail
    allowed = MOMENT_TOL * np.maximum(1.0, np.abs(value))
    if np.any(error > allowed):
        # local refinement for the offending potentials only
        bad = np.atleast_1d(error > allowed)
        flat_phi = np.atleast_1d(phi)[bad]
        val2, err2, _ = adaptive_gk15(lambda t: kernel(flat_phi[:, None, None] + t[None] ** 2),
                                      edges[0], edges[-1], tol=float(np.max(np.atleast_1d(allowed)[bad])) / SQRT8,
                                      initial_panels=len(edges) - 1)
        value = np.atleast_1d(value).copy()
        error = np.atleast_1d(error).copy()
        value[bad] = SQRT8 * val2
        error[bad] = SQRT8 * err2 + tail
        if np.any(error > np.atleast_1d(allowed)):
            raise QuadratureError("velocity moment did not converge", float(error.max()))
        value, error = value.reshape(phi.shape), error.reshape(phi.shape)
    return value, error


def density_moment_with_error(profile, phi):
    return _moment(profile, phi, profile.mu)


def q_moment_with_error(profile, phi):
    return _moment(profile, phi, profile.dmu)


def density_moment(profile, phi):
    """rho(phi) = int mu(v^2/2 + phi) dv."""
    value, _ = _moment(profile, phi, profile.mu)
    return float(value) if np.ndim(value) == 0 else value


def q_moment(profile, phi):
    """int mu'(v^2/2 + phi) dv, the derivative of rho with respect to phi."""
    value, _ = _moment(profile, phi, profile.dmu)
    return float(value) if np.ndim(value) == 0 else value


def neutrality_factor(profile):
    """Factor by which the profile must be scaled to have unit density at phi = 0."""
    raw = density_moment(dataclasses.replace(profile, e_min=min(profile.e_min, 0.0)), 0.0)
    if not np.isfinite(raw) or raw == 0.0:
        raise ValueError(f"neutrality integral is {raw!r}; cannot normalise")
    return 1.0 / raw


def normalize(profile):
    """Rescale so that int mu(v^2/2) dv = 1."""
    return dataclasses.replace(profile, normalization=profile.normalization * neutrality_factor(profile))


def check_profile(profile, energies=None, fd_step=1e-5, fd_tol=1e-6, neutral_tol=1e-10):
    """Return a dict of invariant residuals; raises nothing, callers assert."""
    if energies is None:
        energies = np.linspace(profile.e_min, cutoff_energy(profile), 400)
    e = np.asarray(energies, dtype=float)
    e_pos = e[e >= 0]
    fd = (profile.mu(e + fd_step) - profile.mu(e - fd_step)) / (2 * fd_step)
    dmu = profile.dmu(e)
    return {
        "min_mu": float(np.min(profile.mu(e))),
        "neutrality_error": abs(density_moment(profile, 0.0) - 1.0) if profile.e_min <= 0 else math.nan,
        "decay_margin": float(np.max(np.abs(profile.dmu(e_pos)) * (1 + e_pos ** profile.decay_exponent)
                                     - profile.decay_constant)) if len(e_pos) else -math.inf,
        "fd_mismatch": float(np.max(np.abs(dmu - fd) / (1 + np.abs(dmu)))),
        "nonnegative": bool(np.all(profile.mu(e) >= 0)),
        "neutral": abs(density_moment(profile, 0.0) - 1.0) <= neutral_tol if profile.e_min <= 0 else False,
        "fd_ok": bool(np.max(np.abs(dmu - fd) / (1 + np.abs(dmu))) <= fd_tol),
    }


def density_kernel(profile):
    """Fast scalar rho(phi) on the cached Kronrod panels (no error estimate).

    Used in inner loops such as the wave ODE, where the panel error has
    already been certified by ``_moment_panels``.
    """
    from .numerics import KRONROD_WEIGHTS

    _, nodes, half, _ = _moment_panels(profile)
    tau = (nodes ** 2).ravel()
    w = SQRT8 * (half[:, None] * KRONROD_WEIGHTS[None, :]).ravel()
    e_min = profile.e_min
    mu = profile.mu

    def rho(phi):
        if phi < e_min:
            raise ProfileDomainError(f"potential {phi:.6g} below profile floor {e_min:.6g}")
        return float(w @ mu(phi + tau))

    return rho
