import math

import numpy as np
import pytest
from scipy.integrate import quad
from scipy.optimize import brentq

from bgkstab.profile import make_profile
from bgkstab.sturm import spectrum
from bgkstab.functional import test_function
from bgkstab.wave import construct_wave, find_equilibrium_level, uniform_wave

ACCEPTANCE_LINES = []

# (theta, kappa, m, amplitude above phi*) for waves shared across modules
WAVE_CASES = [
    (1.0, 8.0, 2, 0.01),
    (1.0, 8.0, 2, 0.05),
    (1.0, 8.0, 2, 0.1),
    (1.0, 3.0, 1, 0.05),
    (2.0, 4.0, 2, 0.1),
    (1.0, 20.0, 2, 0.03),
]


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def bump():
    return make_profile("bump", 1.0, 8.0, 2)


@pytest.fixture(scope="session")
def waves():
    out = {}
    for theta, kappa, m, amp in WAVE_CASES:
        prof = make_profile("bump", theta, kappa, m)
        out[(theta, kappa, m, amp)] = construct_wave(prof, find_equilibrium_level(prof) + amp)
    return out


@pytest.fixture(scope="session")
def wave05(waves):
    return waves[(1.0, 8.0, 2, 0.05)]


@pytest.fixture(scope="session")
def wave05_psi(wave05):
    return test_function(spectrum(wave05).eigenfunctions[0], wave05.h)


@pytest.fixture(scope="session")
def flat25(bump):
    return uniform_wave(bump, 25.0, 1024)


def homogeneous_dispersion(profile, period, lam):
    """D(lam) = 2 int_0^inf mu'(v^2/2) k^2 v^2 / (lam^2 + k^2 v^2) dv for a uniform state at phi = 0."""
    k = 2 * math.pi / period

    def f(v):
        return float(profile.dmu(0.5 * v * v)) * k * k * v * v / (lam * lam + k * k * v * v)

    return 2 * quad(f, 0, np.inf, epsabs=1e-14, epsrel=1e-13, limit=500)[0]


def homogeneous_growth_rate(profile, period):
    """Root of D(lam) = k^2, the exact growth rate of a sin(kx) perturbation."""
    k2 = (2 * math.pi / period) ** 2
    return brentq(lambda lam: homogeneous_dispersion(profile, period, lam) - k2, 1e-3, 2.0, xtol=1e-15)
