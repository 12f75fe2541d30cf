import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bgkstab import sturm
from bgkstab.numerics import trapezoid
from bgkstab.wave import uniform_wave


def exact_constant(P, c, k):
    return ((np.arange(k) + 1) * math.pi / P) ** 2 - c


def test_discrete_eigenvalues_exact():
    # the difference operator has eigenvalues (4/h^2) sin^2(j pi h / 2P) - c
    P, c, n = 2.0, 1.5, 200
    res = sturm.solve_eigen(np.full(n + 1, c), P, 4)
    h = P / n
    j = np.arange(1, 5)
    exact = 4 / h ** 2 * np.sin(j * math.pi * h / (2 * P)) ** 2 - c
    assert np.allclose(res.eigenvalues, exact, rtol=1e-13, atol=1e-12)


@given(st.floats(0.5, 10.0), st.floats(-5.0, 5.0))
@settings(max_examples=15, deadline=None)
def test_richardson_constant_q(P, c):
    coarse = sturm.solve_eigen(np.full(257, c), P, 3)
    fine = sturm.solve_eigen(np.full(513, c), P, 3)
    ex = exact_constant(P, c, 3)
    err = np.abs(sturm.richardson(coarse, fine) - ex) / np.maximum(np.abs(ex), 1.0)
    assert np.all(err < 1e-7)


def test_eigenfunction_properties(waves):
    for w in waves.values():
        res = sturm.spectrum(w, 3)
        u0, u1 = res.eigenfunctions[:2]
        assert sturm.sign_changes(u0) == 0
        assert sturm.sign_changes(u1) == 1
        assert np.all(u0[1:-1] > 0)
        assert np.max(np.abs(u0 - u0[::-1])) < 1e-9
        for u in res.eigenfunctions:
            assert trapezoid(u * u, res.h) == pytest.approx(1.0, rel=1e-12)
            assert u[0] == 0.0 and u[-1] == 0.0 and u[1] > 0
        for lam, u in zip(res.eigenvalues, res.eigenfunctions):
            assert sturm.rayleigh_quotient(u, w.q, res.h) == pytest.approx(lam, rel=1e-8, abs=1e-10)
        assert np.all(np.diff(res.eigenvalues) > 0)


def test_second_order_convergence():
    P = 10.0

    def q(n):
        x = np.linspace(0.0, P, n + 1)
        return 0.2 + 0.3 * np.sin(np.pi * x / P) ** 2

    lam = [sturm.solve_eigen(q(n), P, 2).eigenvalues[0] for n in (256, 512, 1024)]
    assert abs(lam[0] - lam[1]) / abs(lam[1] - lam[2]) == pytest.approx(4.0, rel=0.02)


def test_discrete_residual(wave05):
    res = sturm.spectrum(wave05)
    h = res.h
    for lam, u in zip(res.eigenvalues, res.eigenfunctions):
        r = (u[2:] - 2 * u[1:-1] + u[:-2]) / h ** 2 + (wave05.q[1:-1] + lam) * u[1:-1]
        assert np.max(np.abs(r)) < 1e-9 * np.max(np.abs(u)) / h ** 2


def test_discretization_error():
    with pytest.raises(sturm.DiscretizationError):
        sturm.solve_eigen(np.zeros(17), 1.0, 4)
    with pytest.raises(ValueError):
        sturm.solve_eigen(np.zeros(65), 1.0, 1)


def test_spectral_order_violation(bump):
    w = uniform_wave(bump, 25.0, 256)  # lambda_1 = (2 pi / 25)^2 - 1/7 is far from 0
    with pytest.raises(sturm.SpectralOrderViolation):
        sturm.ground_state(w)


def test_ground_state_on_wave(wave05):
    lam0, u0 = sturm.ground_state(wave05)
    assert lam0 < 0
    assert np.all(u0[1:-1] > 0)


def test_export(tmp_path, wave05):
    res = sturm.spectrum(wave05)
    sturm.export_spectrum_csv(res, tmp_path / "s.csv", tmp_path / "u.csv")
    assert (tmp_path / "s.csv").read_text().splitlines()[0] == "n,lambda_n"
    assert len((tmp_path / "u.csv").read_text().splitlines()) == wave05.grid_n + 2
