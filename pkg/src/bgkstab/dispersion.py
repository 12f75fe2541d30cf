"""Growing-mode assembly and the growth-rate scan.

For a rate lambda > 0 and a periodic potential perturbation psi, the
distribution perturbation

    F(x, v) = mu'(e) (W(x, v) - psi(x)),   W = int_{-inf}^0 lambda e^{lambda s} psi(X(s)) ds

solves the linearised transport equation exactly, X(s) being the backward
characteristic through (x, v). Orbits are periodic, so the history integral
closes over one period T with the factor 1 / (1 - e^{-lambda T}).

Backward orbits are integrated once per (x, v) cell and stored as M + 1
uniform samples of (X, V) over one period; W for any psi and any lambda is
then an exact integral of e^{lambda s} against the cubic Hermite interpolant
of psi(X(s)) through those samples.
"""

from __future__ import annotations

import dataclasses
import math

import numpy as np
from scipy.optimize import brentq

from .functional import energy_cutoff
from .numerics import derivative, trapezoid
from .orbit import periodic_spline, separatrix_band, step_size, transit

DEFAULT_NX = 128
DEFAULT_NV = 401
DEFAULT_SAMPLES = 128
ROOT_CAVEAT = ("lambda* is a zero of the projection <psi, A_lambda psi> onto a fixed psi: "
               "a necessary condition for a growing mode, not a certified eigenvalue")


class NoSignChange(RuntimeError):
    """The scan found no sign change of the dispersion scalar."""


class GridAsymmetry(ValueError):
    """The velocity grid is not symmetric about zero."""


def velocity_grid(wave, n_v=DEFAULT_NV, psi=None):
    """Symmetric uniform grid with v_max = sqrt(2(E_max - phi_-)); v[::-1] == -v exactly."""
    if n_v % 2 == 0 or n_v < 5:
        raise ValueError("velocity grid needs an odd number (>= 5) of nodes")
    e_max, _ = energy_cutoff(wave, np.ones(1) if psi is None else psi)
    v_max = math.sqrt(2.0 * (e_max - wave.phi_minus))
    dv = 2.0 * v_max / (n_v - 1)
    return dv * (np.arange(n_v) - (n_v - 1) // 2)


def mode_positions(wave, n_x=DEFAULT_NX):
    """Periodic mode nodes x_i = i P / n_x, i < n_x, taken from the wave grid."""
    if wave.grid_n % n_x:
        raise ValueError("n_x must divide the wave grid size")
    return wave.x[: wave.grid_n : wave.grid_n // n_x].copy()


@dataclasses.dataclass(eq=False)
class ModeOrbits:
    """Backward orbit samples for every (x, v) cell; independent of psi and lambda."""

    wave: object
    x: np.ndarray
    v: np.ndarray
    energy: np.ndarray      # (n_x, n_v)
    period: np.ndarray      # (n_x, n_v), nan for static or excluded cells
    X: np.ndarray           # (n_cells_active, M + 1) samples at sigma = k T / M into the past
    V: np.ndarray
    active: np.ndarray      # (n_x, n_v) bool, cells with a stored orbit
    static: np.ndarray      # equilibrium points: W = psi(x) exactly
    excluded: np.ndarray    # separatrix-band cells that are not equilibria
    closure_error: float

    @property
    def samples(self):
        return self.X.shape[1] - 1


def trace_mode_orbits(wave, x, v, samples=DEFAULT_SAMPLES):
    """Integrate each cell's characteristic backward over one orbit period."""
    xx, vv = np.meshgrid(x, v, indexing="ij")
    phi_x = np.interp(x, wave.x, wave.phi)
    dphi_x = np.interp(x, wave.x, wave.dphi)
    energy = 0.5 * vv ** 2 + phi_x[:, None]
    eps = separatrix_band(wave)
    dphi_scale = max(float(np.max(np.abs(wave.dphi))), 1e-300)
    static = (vv == 0.0) & (np.abs(dphi_x)[:, None] <= 1e-12 * dphi_scale)
    band = (np.abs(energy - wave.phi_plus) < eps) | ((energy <= wave.phi_plus) & (wave.phi_plus == wave.phi_minus))
    excluded = band & ~static
    active = ~(static | excluded)

    period = np.full(energy.shape, np.nan)
    e_act = energy[active]
    t, _, _ = transit(wave, e_act)
    trapped = e_act <= wave.phi_plus
    t = np.where(trapped, 2.0 * t, t)
    period[active] = t

    # fixed-count backward RK4; substeps per sample bucketed by powers of two
    dt_need = step_size(wave, e_act)
    n_sub = np.maximum(1, 2 ** np.ceil(np.log2(np.maximum(t / (samples * dt_need), 1.0)))).astype(int)
    x0, v0 = xx[active], vv[active]
    X = np.empty((len(t), samples + 1))
    V = np.empty((len(t), samples + 1))
    dphi = wave.interpolant.derivative
    for m in np.unique(n_sub):
        sel = np.flatnonzero(n_sub == m)
        h = -t[sel] / (samples * m)
        xs, vs = x0[sel].copy(), v0[sel].copy()
        X[sel, 0], V[sel, 0] = xs, vs
        for k in range(1, samples + 1):
            for _ in range(m):
                k1x, k1v = vs, -dphi(xs)
                k2x, k2v = vs + 0.5 * h * k1v, -dphi(xs + 0.5 * h * k1x)
                k3x, k3v = vs + 0.5 * h * k2v, -dphi(xs + 0.5 * h * k2x)
                k4x, k4v = vs + h * k3v, -dphi(xs + h * k3x)
                xs = xs + h / 6 * (k1x + 2 * k2x + 2 * k3x + k4x)
                vs = vs + h / 6 * (k1v + 2 * k2v + 2 * k3v + k4v)
            X[sel, k], V[sel, k] = xs, vs
    P = wave.period
    gap = np.mod(X[:, -1] - X[:, 0] + 0.5 * P, P) - 0.5 * P
    closure = float(np.max(np.abs(gap))) if len(gap) else 0.0
    return ModeOrbits(wave, x, v, energy, period, X, V, active, static, excluded, closure)


def _exp_moments(a):
    """E_k(a) = int_0^1 t^k e^{-a t} dt for k = 0..3, stable for all a >= 0."""
    a = np.asarray(a, dtype=float)
    out = np.empty(a.shape + (4,))
    small = a < 1.0
    if np.any(small):
        s = a[small]
        term = np.ones_like(s)
        acc = np.zeros(s.shape + (4,))
        for j in range(30):
            for k in range(4):
                acc[..., k] += term / (k + j + 1)
            term = term * (-s) / (j + 1)
        out[small] = acc
    if np.any(~small):
        b = a[~small]
        ea = np.exp(-b)
        e0 = -np.expm1(-b) / b
        e1 = (e0 - ea) / b
        e2 = (2 * e1 - ea) / b
        e3 = (3 * e2 - ea) / b
        out[~small] = np.stack([e0, e1, e2, e3], axis=-1)
    return out


def history_average(orbits, psi_spline, lam):
    """W for every active cell: closed-form periodic history integral at rate lam."""
    P = orbits.wave.period
    X, V = orbits.X, orbits.V
    T = orbits.period[orbits.active]
    M = orbits.samples
    g = psi_spline(np.mod(X, P))
    # sigma = -s runs into the past, so dG/dsigma = -psi'(X) V
    dg = -psi_spline(np.mod(X, P), 1) * V
    delta = T / M
    a = lam * delta
    E = _exp_moments(a)
    c00 = E[:, 0] - 3 * E[:, 2] + 2 * E[:, 3]
    c10 = E[:, 1] - 2 * E[:, 2] + E[:, 3]
    c01 = 3 * E[:, 2] - 2 * E[:, 3]
    c11 = E[:, 3] - E[:, 2]
    seg = (c00[:, None] * g[:, :-1] + c10[:, None] * delta[:, None] * dg[:, :-1]
           + c01[:, None] * g[:, 1:] + c11[:, None] * delta[:, None] * dg[:, 1:])
    decay = np.exp(-a[:, None] * np.arange(M)[None, :])
    total = np.sum(decay * seg, axis=1)
    lt = lam * T
    # lam * delta / (1 - e^{-lam T}) -> 1 / M as lam -> 0
    closure = np.where(lt > 0, a / np.where(lt > 0, -np.expm1(-lt), 1.0), 1.0 / M)
    return closure * total


def orbit_weighted_average(wave, psi, e, x, v, lam, samples=DEFAULT_SAMPLES):
    """History integral of psi along the backward orbit through (x, v) at rate lam."""
    if not lam > 0:
        raise ValueError("rate must be positive")
    if not abs(0.5 * v * v + float(wave.interpolant(x)) - e) <= 1e-9 * max(1.0, abs(e)):
        raise ValueError("(x, v) is not on the energy level e")
    orbits = trace_mode_orbits(wave, np.array([float(x)]), np.array([float(v)]), samples)
    spline = periodic_spline(wave, psi)
    if not orbits.active[0, 0]:
        if orbits.static[0, 0]:
            return float(spline(x))
        from .orbit import SeparatrixError
        raise SeparatrixError("orbit lies in the separatrix band")
    return float(history_average(orbits, spline, lam)[0])


@dataclasses.dataclass(eq=False)
class GrowingMode:
    lam: float
    x: np.ndarray
    v: np.ndarray
    psi: np.ndarray
    field_shape: np.ndarray
    dist_shape: np.ndarray
    transport_residual: float
    poisson_residual: float
    excluded_cells: int
    psi_xx: np.ndarray = dataclasses.field(repr=False, default=None)
    dphi: np.ndarray = dataclasses.field(repr=False, default=None)
    dmu: np.ndarray = dataclasses.field(repr=False, default=None)
    residual_mask: np.ndarray = dataclasses.field(repr=False, default=None)

    @property
    def density(self):
        return trapezoid(self.dist_shape, self.v[1] - self.v[0], axis=1)


def _psi_on_mode_grid(wave, psi, stride):
    dpsi = derivative(psi, wave.h, ends="periodic")
    d2psi = derivative(dpsi, wave.h, ends="periodic")
    return psi[:-1:stride], dpsi[:-1:stride], d2psi[:-1:stride]


def residual_mask(orbits):
    """Interior cells whose five-point stencil stays on one side of the separatrix."""
    e = orbits.energy
    side = np.sign(e - orbits.wave.phi_plus)
    good = orbits.active | orbits.static
    mask = good.copy()
    mask[:, [0, -1]] = False
    for shift in (1, -1):
        mask &= np.roll(side, shift, axis=0) == side
        mask &= np.roll(good, shift, axis=0)
    mask[:, 1:-1] &= (side[:, 2:] == side[:, 1:-1]) & (side[:, :-2] == side[:, 1:-1])
    mask[:, 1:-1] &= good[:, 2:] & good[:, :-2]
    return mask


def transport_residual(mode):
    """RMS of lam F + v F_x - phi' F_v + psi' v mu' over the masked cells."""
    F = mode.dist_shape
    dx = mode.x[1] - mode.x[0]
    dv = mode.v[1] - mode.v[0]
    Fx = (np.roll(F, -1, axis=0) - np.roll(F, 1, axis=0)) / (2 * dx)
    Fv = np.zeros_like(F)
    Fv[:, 1:-1] = (F[:, 2:] - F[:, :-2]) / (2 * dv)
    v = mode.v[None, :]
    res = mode.lam * F + v * Fx - mode.dphi[:, None] * Fv - mode.field_shape[:, None] * v * mode.dmu
    mask = mode.residual_mask
    return float(np.sqrt(np.mean(res[mask] ** 2))) if np.any(mask) else 0.0


def poisson_residual(mode):
    """RMS over x of psi'' - int F dv."""
    return float(np.sqrt(np.mean((mode.psi_xx - mode.density) ** 2)))


def assemble_mode(wave, psi, lam, vgrid=None, *, n_x=DEFAULT_NX, orbits=None, samples=DEFAULT_SAMPLES):
    """Distribution shape from the history integral plus both residual norms."""
    if not lam > 0:
        raise ValueError("rate must be positive")
    psi = np.asarray(psi, dtype=float)
    if orbits is None:
        v = velocity_grid(wave, psi=psi) if vgrid is None else np.asarray(vgrid, dtype=float)
        if not np.array_equal(v[::-1], -v):
            raise GridAsymmetry("velocity grid must satisfy v[::-1] == -v")
        orbits = trace_mode_orbits(wave, mode_positions(wave, n_x), v, samples)
    x, v = orbits.x, orbits.v
    stride = wave.grid_n // len(x)
    psi_m, dpsi_m, d2psi_m = _psi_on_mode_grid(wave, psi, stride)
    spline = periodic_spline(wave, psi)
    W = np.broadcast_to(psi_m[:, None], orbits.energy.shape).copy()
    if np.any(orbits.active):
        W[orbits.active] = history_average(orbits, spline, lam)
    dmu = wave.profile.dmu(orbits.energy)
    F = dmu * (W - psi_m[:, None])
    mode = GrowingMode(float(lam), x, v, psi_m, -dpsi_m, F, 0.0, 0.0, int(orbits.excluded.sum()),
                       psi_xx=d2psi_m, dphi=np.interp(x, wave.x, wave.dphi), dmu=dmu,
                       residual_mask=residual_mask(orbits))
    mode.transport_residual = transport_residual(mode)
    mode.poisson_residual = poisson_residual(mode)
    return mode


def reflect_mode(mode):
    """Decaying partner: F(x, v) -> F(x, -v) and lam -> -lam."""
    if not np.array_equal(mode.v[::-1], -mode.v):
        raise GridAsymmetry("reflection needs a velocity grid with v[::-1] == -v")
    out = dataclasses.replace(mode, lam=-mode.lam, dist_shape=mode.dist_shape[:, ::-1].copy(),
                              dmu=mode.dmu[:, ::-1].copy(), residual_mask=mode.residual_mask[:, ::-1].copy())
    out.transport_residual = transport_residual(out)
    out.poisson_residual = poisson_residual(out)
    return out


def dispersion_scalar(wave, psi, lam, *, orbits=None, n_x=DEFAULT_NX, n_v=DEFAULT_NV):
    """h(lam) = -int psi (psi'' - int F dv) dx on the mode grid."""
    psi = np.asarray(psi, dtype=float)
    if not np.any(psi):
        return 0.0
    if orbits is None:
        orbits = trace_mode_orbits(wave, mode_positions(wave, n_x), velocity_grid(wave, n_v, psi))
    mode = assemble_mode(wave, psi, lam, orbits=orbits)
    dx = mode.x[1] - mode.x[0]
    return float(-dx * np.sum(mode.psi * (mode.psi_xx - mode.density)))


@dataclasses.dataclass
class DispersionScan:
    lambdas: np.ndarray
    h_values: np.ndarray
    bracket: tuple = None
    root: float = None
    caveat: str = ROOT_CAVEAT
    galerkin_root: float = None

    def to_dict(self):
        return {
            "lambdas": list(map(float, self.lambdas)),
            "h_values": list(map(float, self.h_values)),
            "bracket": None if self.bracket is None else list(map(float, self.bracket)),
            "root": self.root,
            "caveat": self.caveat,
            "galerkin_root": self.galerkin_root,
        }


def period_range(orbits):
    T = orbits.period[orbits.active]
    return float(np.min(T)), float(np.max(T))


def find_growth_rate(wave, psi, bracket_hint=None, *, n_lambda=24, orbits=None, n_x=DEFAULT_NX,
                     n_v=DEFAULT_NV, galerkin=False, galerkin_size=16, raise_on_failure=False):
    """Log-spaced scan of h, bracketing of a sign change and a bisection root.

    The default range runs from lam * max(T) = 1e-3 to lam * min(T) = 1e3.
    Without a sign change the scan is returned with ``root = None`` (or
    NoSignChange is raised when ``raise_on_failure`` is set).
    """
    psi = np.asarray(psi, dtype=float)
    if orbits is None:
        orbits = trace_mode_orbits(wave, mode_positions(wave, n_x), velocity_grid(wave, n_v, psi))
    if bracket_hint is None:
        t_min, t_max = period_range(orbits)
        bracket_hint = (1e-3 / t_max, 1e3 / t_min)
    lo, hi = map(float, bracket_hint)
    if not 0 < lo < hi:
        raise ValueError("bracket must satisfy 0 < lo < hi")
    lambdas = np.geomspace(lo, hi, n_lambda)

    def h(lam):
        return dispersion_scalar(wave, psi, lam, orbits=orbits)

    values = np.array([h(lam) for lam in lambdas])
    if not np.all(np.isfinite(values)):
        raise FloatingPointError("dispersion scalar is not finite on the scan")
    scan = DispersionScan(lambdas, values)
    flips = np.flatnonzero(np.signbit(values[:-1]) != np.signbit(values[1:]))
    if len(flips) == 0:
        if raise_on_failure:
            raise NoSignChange("h(lambda) keeps one sign over the scanned range")
        return scan
    j = flips[-1]
    a, b = lambdas[j], lambdas[j + 1]
    scan.bracket = (float(a), float(b))
    target = 1e-8 * abs(values[-1])
    root = brentq(h, a, b, xtol=1e-14 * b, rtol=4 * np.finfo(float).eps, maxiter=200)
    if abs(h(root)) > max(target, 1e-15):
        # secant polish in case brentq stopped on the x tolerance first
        root = _polish(h, root, a, b, target)
    scan.root = float(root)
    if galerkin:
        scan.galerkin_root = galerkin_growth_rate(wave, orbits, galerkin_size, (a, b))
    return scan


def _polish(h, root, a, b, target):
    fa = h(a)
    for _ in range(60):
        m = 0.5 * (a + b)
        fm = h(m)
        if abs(fm) <= target:
            return m
        if np.signbit(fm) == np.signbit(fa):
            a, fa = m, fm
        else:
            b = m
    return 0.5 * (a + b)


def trig_basis(wave, size):
    """Mean-free periodic basis sin(2 pi j x / P), cos(2 pi j x / P) on the wave grid."""
    half = size // 2
    k = 2 * np.pi * np.arange(1, half + 1) / wave.period
    return np.vstack([np.sin(np.outer(k, wave.x)), np.cos(np.outer(k, wave.x))])


def galerkin_matrix(wave, orbits, lam, size=16):
    """Symmetrised matrix of the dispersion operator in the trigonometric basis."""
    basis = trig_basis(wave, size)
    stride = wave.grid_n // len(orbits.x)
    dx = orbits.x[1] - orbits.x[0]
    dv = orbits.v[1] - orbits.v[0]
    dmu = wave.profile.dmu(orbits.energy)
    rows = []
    densities = []
    for b in basis:
        spline = periodic_spline(wave, b)
        b_m = b[:-1:stride]
        W = np.broadcast_to(b_m[:, None], orbits.energy.shape).copy()
        W[orbits.active] = history_average(orbits, spline, lam)
        densities.append(trapezoid(dmu * (W - b_m[:, None]), dv, axis=1))
        rows.append(b_m)
    B = np.array(rows)
    dens = np.array(densities)
    grads = np.array([derivative(b, wave.h, ends="periodic")[:-1:stride] for b in basis])
    A = dx * (grads @ grads.T) + dx * (B @ dens.T)
    return 0.5 * (A + A.T)


def galerkin_growth_rate(wave, orbits, size, bracket):
    """Zero crossing of the smallest Galerkin eigenvalue inside ``bracket``."""
    def smallest(lam):
        return float(np.linalg.eigvalsh(galerkin_matrix(wave, orbits, lam, size))[0])

    a, b = bracket
    if np.signbit(smallest(a)) == np.signbit(smallest(b)):
        return None
    return float(brentq(smallest, a, b, xtol=1e-12 * b))


def export_mode_csv(mode, path):
    from .io import write_csv

    xx, vv = np.meshgrid(mode.x, mode.v, indexing="ij")
    write_csv(path, ["x", "v", "F_value"], [xx.ravel(), vv.ravel(), mode.dist_shape.ravel()])


def export_scan_json(scan, path):
    from .io import write_json

    write_json(path, scan.to_dict())
