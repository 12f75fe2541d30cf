import json
import math

import numpy as np
import pytest
from scipy.integrate import quad

from bgkstab import dispersion as ds
from bgkstab.functional import lin_functional, test_function
from bgkstab.numerics import trapezoid
from bgkstab.sturm import spectrum

from conftest import homogeneous_dispersion, homogeneous_growth_rate

GROWTH_RATE_P25 = 0.191185466880224  # root of D(lam) = k^2 for P = 25, theta = 1, kappa = 8, m = 2


@pytest.fixture(scope="module")
def flat_setup(flat25):
    psi = test_function(spectrum(flat25).eigenfunctions[0], flat25.h)
    orbits = ds.trace_mode_orbits(flat25, ds.mode_positions(flat25, 64), ds.velocity_grid(flat25, 201, psi))
    return flat25, psi, orbits


@pytest.fixture(scope="module")
def bump_setup(wave05, wave05_psi):
    orbits = ds.trace_mode_orbits(wave05, ds.mode_positions(wave05, 64),
                                  ds.velocity_grid(wave05, 201, wave05_psi), 64)
    return wave05, wave05_psi, orbits


def test_frozen_growth_rate_matches_oracle(bump):
    assert homogeneous_growth_rate(bump, 25.0) == pytest.approx(GROWTH_RATE_P25, rel=1e-12)


def test_grids(wave05):
    v = ds.velocity_grid(wave05, 101)
    assert np.array_equal(v[::-1], -v) and v[50] == 0.0
    x = ds.mode_positions(wave05, 64)
    assert len(x) == 64 and x[0] == 0.0 and x[-1] < wave05.period
    with pytest.raises(ValueError):
        ds.velocity_grid(wave05, 100)
    with pytest.raises(ValueError):
        ds.mode_positions(wave05, 96)


def test_exp_moments():
    for a in (0.0, 1e-6, 0.5, 0.999, 1.0, 3.0, 80.0):
        E = ds._exp_moments(np.array([a]))[0]
        for k in range(4):
            ref = quad(lambda t: t ** k * math.exp(-a * t), 0, 1, epsabs=0, epsrel=1e-13)[0]
            assert E[k] == pytest.approx(ref, rel=1e-12)


def test_orbit_closure(bump_setup):
    w, _, orbits = bump_setup
    assert orbits.closure_error < 1e-7
    assert orbits.static.sum() == 2  # v = 0 at the extremum nodes x = 0 and x = P/2
    assert np.all(np.isfinite(orbits.period[orbits.active]))


def test_history_average_uniform_closed_form(flat25):
    # W = lam int_0^inf e^{-lam s} sin(k(x - v s)) ds
    k, lam = 2 * math.pi / 25.0, 0.2
    psi = np.sin(k * flat25.x)
    for x, v in [(3.0, 0.7), (10.0, -1.3), (0.0, 2.5)]:
        e = 0.5 * v * v + flat25.phi_star
        got = ds.orbit_weighted_average(flat25, psi, e, x, v, lam)
        exact = lam * (lam * math.sin(k * x) - k * v * math.cos(k * x)) / (lam ** 2 + (k * v) ** 2)
        assert got == pytest.approx(exact, rel=1e-7, abs=1e-9)


def test_history_average_limits(bump_setup):
    w, psi, orbits = bump_setup
    spline = ds.periodic_spline(w, psi)
    big = ds.history_average(orbits, spline, 1e5)
    x_cells = np.broadcast_to(orbits.x[:, None], orbits.energy.shape)[orbits.active]
    assert np.max(np.abs(big - spline(x_cells))) < 1e-3 * np.max(np.abs(psi))


def test_uniform_scalar_matches_oracle(flat_setup, bump):
    w, psi, orbits = flat_setup
    k2 = (2 * math.pi / 25.0) ** 2
    norm = trapezoid(psi ** 2, w.h)
    for lam in (0.1, 0.3, 1.0):
        h = ds.dispersion_scalar(w, psi, lam, orbits=orbits)
        assert h == pytest.approx(norm * (k2 - homogeneous_dispersion(bump, 25.0, lam)), rel=1e-3)


def test_uniform_growth_rate(flat_setup):
    w, psi, orbits = flat_setup
    scan = ds.find_growth_rate(w, psi, orbits=orbits, galerkin=True, galerkin_size=4)
    assert scan.root == pytest.approx(GROWTH_RATE_P25, rel=1e-6)
    assert scan.galerkin_root == pytest.approx(GROWTH_RATE_P25, rel=1e-6)
    assert scan.bracket[0] < scan.root < scan.bracket[1]
    assert scan.caveat == ds.ROOT_CAVEAT
    mode = ds.assemble_mode(w, psi, scan.root, orbits=orbits)
    assert mode.poisson_residual < 1e-3 * np.sqrt(np.mean(mode.psi_xx ** 2))


def test_inconclusive_wave_has_no_root(bump_setup):
    w, psi, orbits = bump_setup
    scan = ds.find_growth_rate(w, psi, orbits=orbits, n_lambda=8)
    assert scan.root is None and np.all(scan.h_values > 0)
    with pytest.raises(ds.NoSignChange):
        ds.find_growth_rate(w, psi, orbits=orbits, n_lambda=8, raise_on_failure=True)


def test_transport_residual_second_order(wave05, wave05_psi):
    res = []
    for nx, nv in ((32, 101), (64, 201)):
        orbits = ds.trace_mode_orbits(wave05, ds.mode_positions(wave05, nx),
                                      ds.velocity_grid(wave05, nv, wave05_psi), 64)
        res.append(ds.assemble_mode(wave05, wave05_psi, 0.1, orbits=orbits).transport_residual)
    assert res[0] / res[1] == pytest.approx(4.0, rel=0.1)


def test_even_function_small_rate_limit(bump_setup):
    # the small-rate limit counts left- and right-moving free particles separately
    w, _, orbits = bump_setup
    u0 = spectrum(w).eigenfunctions[0]
    t_max = ds.period_range(orbits)[1]
    h0 = ds.dispersion_scalar(w, u0, 1e-3 / t_max, orbits=orbits)
    two = lin_functional(w, u0, free_weight=2.0, rel_tol=1e-6).total
    one = lin_functional(w, u0, free_weight=1.0, rel_tol=1e-6).total
    assert h0 == pytest.approx(two, rel=1e-2)
    assert abs(h0 - one) > 10 * abs(h0 - two)


def test_reflection(bump_setup):
    w, psi, orbits = bump_setup
    mode = ds.assemble_mode(w, psi, 0.2, orbits=orbits)
    back = ds.reflect_mode(ds.reflect_mode(mode))
    assert back.lam == mode.lam
    assert np.array_equal(back.dist_shape, mode.dist_shape)
    assert back.transport_residual == mode.transport_residual
    partner = ds.reflect_mode(mode)
    assert partner.lam == -mode.lam
    assert partner.transport_residual == pytest.approx(mode.transport_residual, rel=1e-10)
    odd = ds.GrowingMode(0.1, mode.x, mode.v[:-1], mode.psi, mode.field_shape,
                         mode.dist_shape[:, :-1], 0.0, 0.0, 0)
    with pytest.raises(ds.GridAsymmetry):
        ds.reflect_mode(odd)


def test_rate_validation(wave05, wave05_psi):
    with pytest.raises(ValueError):
        ds.assemble_mode(wave05, wave05_psi, -0.1)
    with pytest.raises(ds.GridAsymmetry):
        ds.assemble_mode(wave05, wave05_psi, 0.1, vgrid=np.linspace(-1, 2, 9))


def test_exports(tmp_path, flat_setup):
    w, psi, orbits = flat_setup
    mode = ds.assemble_mode(w, psi, 0.2, orbits=orbits)
    ds.export_mode_csv(mode, tmp_path / "m.csv")
    lines = (tmp_path / "m.csv").read_text().splitlines()
    assert lines[0] == "x,v,F_value" and len(lines) == 1 + mode.dist_shape.size
    scan = ds.DispersionScan(np.array([0.1, 0.2]), np.array([1.0, -1.0]), (0.1, 0.2), 0.15)
    ds.export_scan_json(scan, tmp_path / "s.json")
    assert json.loads((tmp_path / "s.json").read_text())["root"] == 0.15
