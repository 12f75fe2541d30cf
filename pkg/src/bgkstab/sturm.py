"""Dirichlet Sturm-Liouville eigenpairs of u'' + (q + lambda) u = 0.

Second-order central differences on the interior nodes turn the problem
into a symmetric tridiagonal eigenproblem for ``-u'' - q u``. Eigenvalues
come from bisection on Sturm-sequence counts, eigenvectors from inverse
iteration.
"""

from __future__ import annotations

import dataclasses
import math
import sys

import numpy as np
from scipy.linalg import solve_banded

from .numerics import trapezoid

EPS = sys.float_info.epsilon


class DiscretizationError(ValueError):
    """Grid too coarse for the number of requested eigenpairs."""


class SpectralOrderViolation(RuntimeError):
    """The computed spectrum contradicts lambda_0 < lambda_1 = 0."""


@dataclasses.dataclass(frozen=True, eq=False)
class SpectralResult:
    eigenvalues: np.ndarray
    eigenfunctions: np.ndarray  # shape (k, grid_n + 1), zero at both ends
    x: np.ndarray
    period: float
    boundary: str = "dirichlet"

    @property
    def grid_n(self):
        return len(self.x) - 1

    @property
    def h(self):
        return self.period / self.grid_n


def sturm_count(diag, off_sq, sigma):
    """Number of eigenvalues of the tridiagonal matrix strictly below ``sigma``."""
    count = 0
    d = 1.0
    tiny = EPS * EPS
    for a, b2 in zip(diag, off_sq):
        d = (a - sigma) - b2 / d
        if d == 0.0:
            d = -tiny
        if d < 0.0:
            count += 1
    return count


def _bisect(diag, off_sq, index, lo, hi):
    """Eigenvalue number ``index`` (0-based) inside the Gershgorin interval."""
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi or hi - lo <= 2 * EPS * max(abs(lo), abs(hi)):
            break
        if sturm_count(diag, off_sq, mid) > index:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


def _inverse_iteration(diag, off, sigma, scale, iterations=3):
    n = len(diag)
    ab = np.zeros((3, n))
    ab[0, 1:] = off
    ab[2, :-1] = off
    shift = sigma + 8 * EPS * scale
    ab[1] = diag - shift
    x = np.ones(n) / math.sqrt(n)
    x[::3] += 0.1  # avoid starting exactly orthogonal to the target
    for _ in range(iterations):
        x = solve_banded((1, 1), ab, x)
        x /= np.linalg.norm(x)
    return x


def solve_eigen(q, period, k=2):
    """First ``k`` Dirichlet eigenpairs of -u'' - q u = lambda u on [0, period].

    ``q`` is sampled on the uniform grid including both endpoints. Returned
    eigenfunctions satisfy int u^2 dx = 1 (trapezoid) and u'(0) > 0.
    """
    q = np.asarray(q, dtype=float)
    n = len(q) - 1
    if k < 2:
        raise ValueError("at least two eigenpairs are required")
    if k >= n / 4:
        raise DiscretizationError(f"k = {k} eigenpairs need more than {n} grid intervals")
    h = period / n
    diag = 2.0 / h ** 2 - q[1:-1]
    off = np.full(n - 2, -1.0 / h ** 2)
    off_sq = np.concatenate([[0.0], off ** 2])
    radius = 2.0 / h ** 2
    lo, hi = float(np.min(diag) - radius), float(np.max(diag) + radius)
    scale = max(abs(lo), abs(hi))

    values, vectors = [], []
    diag_list, off_sq_list = diag.tolist(), off_sq.tolist()
    for j in range(k):
        lam = _bisect(diag_list, off_sq_list, j, lo if j == 0 else values[-1], hi)
        vec = _inverse_iteration(diag, off, lam, scale)
        for prev in vectors:
            vec -= (prev[1:-1] @ vec) * prev[1:-1] / (prev[1:-1] @ prev[1:-1])
        u = np.concatenate([[0.0], vec, [0.0]])
        u /= math.sqrt(trapezoid(u * u, h))
        if u[1] < 0:
            u = -u
        values.append(lam)
        vectors.append(u)
    return SpectralResult(np.array(values), np.array(vectors), np.arange(n + 1) * h, float(period))


def kernel_tolerance(h, q):
    """Allowed |lambda_1| for the exact continuum value 0."""
    return max(1e-6, 10 * h * h * float(np.max(np.abs(q))))


def spectrum(wave, k=2):
    return solve_eigen(wave.q, wave.period, k)


def ground_state(wave, spectral=None, lambda1_tol=None):
    """(lambda_0, u_0) of a wave, checked against lambda_0 < lambda_1 = 0."""
    spectral = spectrum(wave) if spectral is None else spectral
    lam0, lam1 = spectral.eigenvalues[:2]
    tol = kernel_tolerance(wave.h, wave.q) if lambda1_tol is None else lambda1_tol
    if not lam0 < 0:
        raise SpectralOrderViolation(f"lambda_0 = {lam0:.6g} is not negative")
    if abs(lam1) > tol:
        raise SpectralOrderViolation(f"lambda_1 = {lam1:.6g} exceeds kernel tolerance {tol:.3g}")
    return float(lam0), spectral.eigenfunctions[0]


def rayleigh_quotient(u, q, h):
    """Discrete (|u'|^2 - q u^2) / u^2 quotient matching the difference operator."""
    du = np.diff(u) / h
    return (h * np.sum(du * du) - trapezoid(q * u * u, h)) / trapezoid(u * u, h)


def sign_changes(u, rel_tol=1e-10):
    """Interior sign changes of a grid function, ignoring tiny values."""
    inner = u[1:-1]
    keep = inner[np.abs(inner) > rel_tol * np.max(np.abs(inner))]
    return int(np.sum(np.signbit(keep[1:]) != np.signbit(keep[:-1])))


def cosine_similarity(a, b):
    return float(abs(a @ b) / (np.linalg.norm(a) * np.linalg.norm(b)))


def richardson(coarse, fine):
    """Two-grid extrapolation of second-order eigenvalues (fine has half the spacing)."""
    return (4.0 * np.asarray(fine.eigenvalues) - np.asarray(coarse.eigenvalues)) / 3.0


def export_spectrum_csv(spectral, spectrum_path, eigenfunction_path):
    from .io import write_csv

    write_csv(spectrum_path, ["n", "lambda_n"],
              [list(range(len(spectral.eigenvalues))), spectral.eigenvalues])
    write_csv(eigenfunction_path, ["x", "u0", "u1"],
              [spectral.x, spectral.eigenfunctions[0], spectral.eigenfunctions[1]])
