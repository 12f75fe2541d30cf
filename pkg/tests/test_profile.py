import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import brentq

from bgkstab import profile as pr


def bump_density_closed_form(phi, kappa, m):
    """rho(phi) for theta = 1 from the Gaussian moments E[v^2/2] = 1/2, E[v^4/4] = 3/4."""
    if m == 1:
        return np.exp(-phi) * (1 + kappa * (phi + 0.5)) / (1 + 0.5 * kappa)
    return np.exp(-phi) * (1 + kappa * (phi * phi + phi + 0.75)) / (1 + 0.75 * kappa)


def test_maxwellian_closed_forms():
    p = pr.make_profile("maxwellian", 1.0)
    assert p.normalization == pytest.approx(1 / math.sqrt(2 * math.pi), rel=1e-12)
    assert pr.evaluate_mu(p, 0.0) == pytest.approx(p.normalization, rel=1e-15)
    phi = np.linspace(-0.5, 2.0, 11)
    assert np.allclose(pr.density_moment(p, phi), np.exp(-phi), rtol=1e-10, atol=0)
    assert np.allclose(pr.q_moment(p, phi), -np.exp(-phi), rtol=1e-10, atol=0)
    assert np.all(np.diff(pr.density_moment(p, phi)) < 0)


@pytest.mark.parametrize("kappa,m", [(8.0, 2), (4.0, 2), (3.0, 1)])
def test_bump_density_matches_gaussian_moments(kappa, m):
    p = pr.make_profile("bump", 1.0, kappa, m)
    phi = np.linspace(-0.1, 1.5, 9)
    assert np.allclose(pr.density_moment(p, phi), bump_density_closed_form(phi, kappa, m), rtol=1e-10, atol=0)
    assert abs(pr.density_moment(p, 0.0) - 1.0) <= 1e-10


def test_bump_q_at_equilibrium():
    # (kappa/4 - 1) / (1 + 3 kappa / 4) for theta = 1, m = 2
    p = pr.make_profile("bump", 1.0, 8.0, 2)
    assert pr.q_moment(p, 0.0) == pytest.approx(1 / 7, rel=1e-10)


def test_bump_interior_maximum():
    p = pr.make_profile("bump", 1.0, 4.0, 2)
    # closed-form derivative sign change, located independently by brentq
    e_star = brentq(lambda e: 2 * 4.0 * e - (1 + 4.0 * e * e), 1.0, 3.0, xtol=1e-15)
    assert e_star == pytest.approx(1 + math.sqrt(0.75), rel=1e-14)
    assert abs(pr.evaluate_dmu(p, e_star)) < 1e-14
    assert pr.evaluate_mu(p, e_star) > pr.evaluate_mu(p, e_star - 0.1)
    assert pr.evaluate_mu(p, e_star) > pr.evaluate_mu(p, e_star + 0.1)


@pytest.mark.parametrize("family,kappa,m", [("maxwellian", 0.0, 2), ("bump", 8.0, 2), ("bump", 2.0, 1)])
def test_profile_invariants(family, kappa, m):
    p = pr.make_profile(family, 1.0, kappa, m, e_min=-0.4)
    report = pr.check_profile(p)
    assert report["nonnegative"]
    assert report["neutral"]
    assert report["fd_ok"]
    assert report["decay_margin"] <= 0


def test_q_is_derivative_of_density():
    p = pr.make_profile("bump", 1.0, 8.0, 2)
    phi = np.linspace(-0.15, 0.4, 20)
    step = 1e-5
    fd = (pr.density_moment(p, phi + step) - pr.density_moment(p, phi - step)) / (2 * step)
    q = pr.q_moment(p, phi)
    assert np.max(np.abs(fd - q) / np.abs(q)) < 1e-6


def test_normalization_linear_in_scale():
    p = pr.make_profile("bump", 1.0, 8.0, 2)
    doubled = pr.DistributionProfile("bump", 1.0, 8.0, 2, normalization=2.0)
    assert pr.normalize(doubled).normalization == pytest.approx(0.5 * pr.normalize(
        pr.DistributionProfile("bump", 1.0, 8.0, 2)).normalization * 2, rel=1e-14)
    assert pr.neutrality_factor(doubled) == pytest.approx(0.5 * pr.neutrality_factor(
        pr.DistributionProfile("bump", 1.0, 8.0, 2)), rel=1e-14)
    assert pr.density_moment(p, 0.0) == pytest.approx(1.0, abs=1e-12)


def test_domain_errors():
    p = pr.make_profile("bump", 1.0, 8.0, 2, e_min=-0.2)
    with pytest.raises(pr.ProfileDomainError):
        pr.evaluate_mu(p, -0.3)
    with pytest.raises(pr.ProfileDomainError):
        pr.density_moment(p, -0.5)
    with pytest.raises(ValueError):
        pr.make_profile("bump", -1.0, 8.0, 2)
    with pytest.raises(ValueError):
        pr.make_profile("bump", 1.0, 8.0, 3)


def test_moment_error_estimate_small():
    p = pr.make_profile("bump", 2.0, 5.0, 2)
    _, err = pr.density_moment_with_error(p, 0.1)
    assert err <= 1e-10


@given(st.floats(0.3, 4.0), st.floats(0.0, 20.0), st.sampled_from([1, 2]))
@settings(max_examples=25, deadline=None)
def test_neutrality_property(theta, kappa, m):
    p = pr.make_profile("bump", theta, kappa, m)
    assert abs(pr.density_moment(p, 0.0) - 1.0) <= 1e-10
    e = np.linspace(max(p.e_min, 0.0), 40 * theta, 200)
    assert np.all(p.mu(e) >= 0)
