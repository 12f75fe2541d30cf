"""Shared numerical kernels: Gauss-Kronrod panels, Hermite interpolation,
finite differences and a classical RK4 step.

Everything here is vectorised with numpy and has no knowledge of plasma
physics; the physics modules build on top of it.
"""

from __future__ import annotations

import numpy as np

# 15-point Kronrod extension of the 7-point Gauss rule on [-1, 1].
_XGK = np.array([
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
])
_WGK = np.array([
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
])
_WG = np.array([
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
])

KRONROD_NODES = np.concatenate([-_XGK[:-1], _XGK[::-1]])
KRONROD_WEIGHTS = np.concatenate([_WGK[:-1], _WGK[::-1]])
# Gauss weights live on the odd-indexed Kronrod nodes (1, 3, 5, 7 from each end).
GAUSS_WEIGHTS = np.zeros(15)
GAUSS_WEIGHTS[[1, 3, 5]] = _WG[:3]
GAUSS_WEIGHTS[[9, 11, 13]] = _WG[2::-1]
GAUSS_WEIGHTS[7] = _WG[3]


ROUNDOFF_FACTOR = 50.0


class QuadratureError(RuntimeError):
    """Adaptive quadrature stopped before reaching its tolerance."""

    def __init__(self, message: str, achieved: float):
        super().__init__(f"{message} (achieved error estimate {achieved:.3e})")
        self.achieved = achieved


def panel_nodes(edges):
    """Kronrod nodes for consecutive panels; returns (nodes, half_widths).

    ``nodes`` has shape (n_panels, 15).
    """
    edges = np.asarray(edges, dtype=float)
    mid = 0.5 * (edges[1:] + edges[:-1])
    half = 0.5 * (edges[1:] - edges[:-1])
    return mid[:, None] + half[:, None] * KRONROD_NODES[None, :], half


def gk15_panels(values, half_widths):
    """Apply G7/K15 to integrand samples of shape (..., n_panels, 15).

    Returns per-panel Kronrod integrals and |K15 - G7| error estimates, both
    of shape (..., n_panels).
    """
    kron = (values @ KRONROD_WEIGHTS) * half_widths
    gauss = (values @ GAUSS_WEIGHTS) * half_widths
    return kron, np.abs(kron - gauss)


def adaptive_gk15(f, a, b, *, tol=1e-10, initial_panels=8, max_panels=2000,
                  breakpoints=()):
    """Adaptive Gauss-Kronrod integration of a vectorised integrand.

    ``f`` takes an array of abscissae of shape (n, 15) and returns values of
    shape (..., n, 15); the leading batch axes are integrated simultaneously
    and the panel partition is shared. ``tol`` is a scalar or an array
    broadcastable to the batch shape (``inf`` disables control of an entry).
    Panels are bisected until every controlled entry has a summed error
    below its tolerance, or until every panel's error is at round-off level
    (the returned error then exceeds ``tol`` and callers decide). Each panel
    is evaluated once, so expensive integrands are not recomputed on
    refinement.

    Returns ``(integral, error, edges)``.
    """
    cuts = sorted({float(a), float(b), *[float(p) for p in breakpoints if a < p < b]})
    pending = []
    for lo, hi in zip(cuts[:-1], cuts[1:]):
        e = np.linspace(lo, hi, initial_panels + 1)
        pending.extend(zip(e[:-1], e[1:]))
    done = {}
    while True:
        if pending:
            edges_new = np.array(pending)
            mid = 0.5 * (edges_new[:, 0] + edges_new[:, 1])
            half = 0.5 * (edges_new[:, 1] - edges_new[:, 0])
            values = f(mid[:, None] + half[:, None] * KRONROD_NODES)
            kron, err = gk15_panels(values, half)
            floor = ROUNDOFF_FACTOR * np.finfo(float).eps * (np.abs(values) @ KRONROD_WEIGHTS) * half
            for j, panel in enumerate(pending):
                done[panel] = (kron[..., j], err[..., j], floor[..., j])
            pending = []
        panels = sorted(done)
        kron = np.stack([done[p][0] for p in panels], axis=-1)
        err = np.stack([done[p][1] for p in panels], axis=-1)
        floor = np.stack([done[p][2] for p in panels], axis=-1)
        total = err.sum(axis=-1)
        scaled = np.broadcast_to(np.asarray(tol, dtype=float), total.shape)
        if np.all(total <= scaled):
            edges = np.array([p[0] for p in panels] + [panels[-1][1]])
            return kron.sum(axis=-1), total, edges
        n = len(panels)
        if n >= max_panels:
            raise QuadratureError("adaptive Gauss-Kronrod did not converge",
                                  float(np.max(total)))
        with np.errstate(divide="ignore", invalid="ignore"):
            rel = err / scaled[..., None]
        rel = np.nan_to_num(rel, nan=0.0, posinf=0.0)
        panel_rel = rel.reshape(-1, n).max(axis=0)
        # panels whose K15 - G7 gap is at round-off level cannot improve by bisection
        open_ = ~np.all((err <= floor).reshape(-1, n), axis=0)
        if not open_.any():
            edges = np.array([p[0] for p in panels] + [panels[-1][1]])
            return kron.sum(axis=-1), total, edges
        split = (panel_rel > 1.0 / n) & open_
        if not split.any():
            split = open_ & (panel_rel >= panel_rel[open_].max())
        for j in np.flatnonzero(split):
            lo, hi = panels[j]
            m = 0.5 * (lo + hi)
            del done[panels[j]]
            pending.extend([(lo, m), (m, hi)])


class QuinticHermite:
    """Piecewise quintic Hermite interpolant on a uniform grid.

    Matches value, first and second derivative at every node, so the
    interpolant is C^2. With ``periodic=True`` abscissae are wrapped into
    ``[x0, x0 + (n-1) h)``; the caller guarantees the first and last node
    carry identical data.
    """

    def __init__(self, x0, h, y, dy, d2y, periodic=False):
        y, dy, d2y = (np.asarray(a, dtype=float) for a in (y, dy, d2y))
        self.x0, self.h, self.periodic = float(x0), float(h), periodic
        self.n_int = len(y) - 1
        self.length = self.n_int * self.h
        y0, y1 = y[:-1], y[1:]
        d0, d1 = dy[:-1] * h, dy[1:] * h
        s0, s1 = d2y[:-1] * h * h, d2y[1:] * h * h
        # monomial coefficients in the local variable t in [0, 1]
        c = np.empty((self.n_int, 6))
        c[:, 0] = y0
        c[:, 1] = d0
        c[:, 2] = 0.5 * s0
        c[:, 3] = 10 * (y1 - y0) - 6 * d0 - 4 * d1 - 1.5 * s0 + 0.5 * s1
        c[:, 4] = -15 * (y1 - y0) + 8 * d0 + 7 * d1 + 1.5 * s0 - s1
        c[:, 5] = 6 * (y1 - y0) - 3 * d0 - 3 * d1 - 0.5 * s0 + 0.5 * s1
        self.coef = c
        self.dcoef = c[:, 1:] * np.arange(1, 6) / h
        self.d2coef = self.dcoef[:, 1:] * np.arange(1, 5) / h

    def _locate(self, x):
        u = (np.asarray(x, dtype=float) - self.x0)
        if self.periodic:
            u = np.mod(u, self.length)
        s = u / self.h
        i = np.clip(np.floor(s).astype(np.intp), 0, self.n_int - 1)
        return i, s - i

    @staticmethod
    def _horner(coef, i, t):
        out = coef[i, -1]
        for k in range(coef.shape[1] - 2, -1, -1):
            out = out * t + coef[i, k]
        return out

    def __call__(self, x):
        i, t = self._locate(x)
        return self._horner(self.coef, i, t)

    def derivative(self, x):
        i, t = self._locate(x)
        return self._horner(self.dcoef, i, t)

    def second_derivative(self, x):
        i, t = self._locate(x)
        return self._horner(self.d2coef, i, t)

    def value_and_derivative(self, x):
        i, t = self._locate(x)
        return self._horner(self.coef, i, t), self._horner(self.dcoef, i, t)


def derivative(f, h, ends="odd"):
    """Fourth-order central first derivative of nodal data on [0, L].

    ``ends`` selects the ghost-node extension beyond both endpoints: ``"odd"``
    reflects with a sign change about each endpoint (functions vanishing
    there with even derivative), ``"periodic"`` wraps around (first and last
    node coincide).
    """
    f = np.asarray(f, dtype=float)
    if ends == "odd":
        ext = np.concatenate([[-f[2], -f[1]], f, [-f[-2], -f[-3]]])
        # a vanishing endpoint reflects exactly through its own value
        ext[0] += 2 * f[0]
        ext[1] += 2 * f[0]
        ext[-1] += 2 * f[-1]
        ext[-2] += 2 * f[-1]
    elif ends == "periodic":
        ext = np.concatenate([f[-3:-1], f, f[1:3]])
    else:
        raise ValueError(f"unknown end treatment {ends!r}")
    return (ext[:-4] - 8 * ext[1:-3] + 8 * ext[3:-1] - ext[4:]) / (12 * h)


def trapezoid(f, h, axis=-1):
    """Composite trapezoid rule on uniformly spaced samples."""
    f = np.asarray(f, dtype=float)
    s = f.sum(axis=axis) - 0.5 * (np.take(f, 0, axis=axis) + np.take(f, -1, axis=axis))
    return h * s


def rk4_step(rhs, y, dt):
    """One classical Runge-Kutta step; ``y`` may be any numpy-compatible state."""
    k1 = rhs(y)
    k2 = rhs(y + 0.5 * dt * k1)
    k3 = rhs(y + 0.5 * dt * k2)
    k4 = rhs(y + dt * k3)
    return y + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
