import math

import numpy as np
import pytest

from bgkstab import orbit
from bgkstab.sturm import spectrum
from bgkstab.wave import uniform_wave


def test_classify(wave05):
    w = wave05
    assert orbit.classify(w, w.phi_plus + 0.01) is orbit.OrbitKind.FREE
    assert orbit.classify(w, 0.5 * (w.phi_plus + w.phi_minus)) is orbit.OrbitKind.TRAPPED
    with pytest.raises(orbit.SeparatrixError):
        orbit.classify(w, w.phi_plus)
    with pytest.raises(orbit.OrbitDomainError):
        orbit.classify(w, w.phi_minus - 0.01)


def test_turning_point(wave05):
    w = wave05
    e = np.linspace(w.phi_minus, w.phi_plus, 9)
    alpha = orbit.turning_point(w, e)
    assert alpha[0] == 0.5 * w.period and alpha[-1] == 0.0
    assert np.max(np.abs(w.interpolant(alpha[1:-1]) - e[1:-1])) < 1e-13
    with pytest.raises(orbit.OrbitDomainError):
        orbit.turning_point(w, w.phi_plus + 1.0)


def test_harmonic_limit(wave05):
    w = wave05
    omega = math.sqrt(w.d2phi[w.grid_n // 2])
    e = w.phi_minus + 1e-8 * (w.phi_plus - w.phi_minus)
    period, _, _ = orbit.transit(w, [e])
    assert period[0] == pytest.approx(math.pi / omega, rel=1e-6)


def test_uniform_free_transit(bump):
    w = uniform_wave(bump, 25.0, 256)
    v = np.array([0.3, 1.0, 4.0])
    period, _, _ = orbit.transit(w, w.phi_star + 0.5 * v ** 2)
    assert np.allclose(period, 25.0 / v, rtol=1e-12)


def test_periods_match_quadrature(wave05):
    w = wave05
    depth = w.phi_plus - w.phi_minus
    energies = np.concatenate([w.phi_minus + depth * np.array([0.01, 0.3, 0.7, 0.999]),
                               w.phi_plus + depth * np.array([1e-3, 0.5, 10.0])])
    periods, _, _ = orbit.transit(w, energies)
    for e, p in zip(energies, periods):
        ref, err = orbit.period_integral_check(w, e)
        assert err < 1e-10 * ref
        assert abs(p - ref) <= 1e-8 * ref


def test_trace_symmetry_and_energy(wave05):
    w = wave05
    e = w.phi_minus + 0.4 * (w.phi_plus - w.phi_minus)
    tr = orbit.trace_orbit(w, e)
    assert tr.kind is orbit.OrbitKind.TRAPPED
    assert tr.X[0] == pytest.approx(tr.alpha, abs=1e-14)
    assert tr.X[-1] == pytest.approx(w.period - tr.alpha, abs=1e-9)
    assert np.max(np.abs(tr.energy_error)) < 1e-9
    s = np.linspace(0.0, tr.period, 41)
    assert np.max(np.abs(tr.position(s) + tr.position(tr.period - s) - w.period)) < 1e-8
    free = orbit.trace_orbit(w, w.phi_plus + 0.2)
    assert free.X[-1] == pytest.approx(w.period, abs=1e-10)
    assert np.all(np.diff(free.X) > 0)


def test_step_halving_fourth_order(wave05):
    w = wave05
    e = [w.phi_minus + 0.5 * (w.phi_plus - w.phi_minus), w.phi_plus + 0.3]
    ref = np.array([orbit.period_integral_check(w, x)[0] for x in e])
    err = [np.abs(orbit.transit(w, e, step_scale=s)[0] - ref) for s in (8.0, 4.0)]
    assert np.all(err[0] / err[1] > 10)


def test_inner_integrals(wave05, wave05_psi):
    w = wave05
    u0 = spectrum(w).eigenfunctions[0]
    depth = w.phi_plus - w.phi_minus
    energies = [w.phi_minus + 0.3 * depth, w.phi_plus + 1e-3, w.phi_plus + 0.1, w.phi_plus + 3.0]
    smooth, _ = orbit.inner_integrals(w, u0 ** 2, energies)
    kinked, _ = orbit.inner_integrals(w, u0, energies)
    odd, _ = orbit.inner_integrals(w, wave05_psi, energies)
    for e, a, b in zip(energies, smooth, kinked):
        assert a == pytest.approx(orbit.inner_integral_check(w, u0 ** 2, e)[0], rel=1e-9)
        # the periodic extension of u0 has a corner at x = 0, which free orbits cross
        assert b == pytest.approx(orbit.inner_integral_check(w, u0, e)[0], rel=1e-6)
    assert np.all(np.abs(odd) < 1e-10 * np.max(np.abs(kinked)))


def test_export(tmp_path, wave05):
    tr = orbit.trace_orbit(wave05, wave05.phi_plus + 0.1)
    orbit.export_orbit_csv(tr, tmp_path / "o.csv")
    lines = (tmp_path / "o.csv").read_text().splitlines()
    assert lines[0] == "s,X,V,energy_error" and len(lines) == len(tr.s) + 1
