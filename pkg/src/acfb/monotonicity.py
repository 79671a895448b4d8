"""Weiss energy, its r-trace, growth probes and the non-degeneracy constants.

With kappa = 2/(2 - alpha) and v = u - a_i (a_i the well at x0),

    W(u, x0, r) = r^-(n + 2 kappa - 2) int_{B_r} (1/2 |grad u|^2 + W(u))
                  - kappa/2 r^-(n + 2 kappa - 1) int_{dB_r} |v|^2 ,

which for alpha = 1 is the usual r^-(n+2) / r^-(n+3) normalization.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .errors import BallOutOfGrid, NotOnFreeBoundary
from .grid import VectorField
from .interface import Fit, _check_ball, node_distance, scaling_fit
from .potential import Potential

N_CIRCLE = 64
SUPERSAMPLE = 16


# -- quadrature ----------------------------------------------------------------------

def _volume_1d(f: VectorField, p: Potential, x0: float, r: float) -> float:
    """Cellwise integral of 1/2|u'|^2 + W over [x0 - r, x0 + r].

    Piecewise-constant gradients and linearly interpolated W on the covered
    part of every cell, plus the leading Euler-Maclaurin corrections
    (h^2/24) int |u''|^2 and -(h^2/12) [dW/dx]; exact for piecewise-quadratic u
    with linear W.
    """
    h = f.spec.h
    x = f.spec.axis_coords(0)
    u = f.values
    Wn = p.W(u)
    lo, hi = x[:-1], x[1:]
    a = np.clip(x0 - r, lo, hi)
    b = np.clip(x0 + r, lo, hi)
    length = np.maximum(b - a, 0.0)
    g = np.diff(u, axis=0) / h
    grad = 0.5 * np.sum(g * g, axis=-1) * length
    slope = np.diff(Wn) / h
    mid = 0.5 * (a + b)
    pot = (Wn[:-1] + slope * (mid - lo)) * length
    # second differences at nodes, copied to the end nodes
    d2 = np.zeros_like(u)
    d2[1:-1] = (u[2:] - 2 * u[1:-1] + u[:-2]) / h ** 2
    d2[0], d2[-1] = d2[1], d2[-2]
    s2 = 0.5 * (np.sum(d2[:-1] ** 2, axis=-1) + np.sum(d2[1:] ** 2, axis=-1))
    corr_grad = h * h / 24.0 * float(np.sum(s2 * length))
    cell_a = min(max(int(np.floor((x0 - r - x[0]) / h)), 0), len(slope) - 1)
    cell_b = min(max(int(np.floor((x0 + r - x[0]) / h)), 0), len(slope) - 1)
    corr_pot = -h * h / 12.0 * (slope[cell_b] - slope[cell_a])
    return float(np.sum(grad) + np.sum(pot)) + corr_grad + corr_pot


def _cell_density_2d(u, Wn, h):
    dx = np.diff(u, axis=0)
    dy = np.diff(u, axis=1)
    ex = np.sum(dx * dx, axis=-1)
    ey = np.sum(dy * dy, axis=-1)
    grad = 0.25 * (ex[:, :-1] + ex[:, 1:] + ey[:-1, :] + ey[1:, :]) / (h * h)
    pot = 0.25 * (Wn[:-1, :-1] + Wn[1:, :-1] + Wn[:-1, 1:] + Wn[1:, 1:])
    return grad + pot


def _coverage_2d(spec, x0, r):
    """Area of every cell inside the disk (supersampled on cut cells)."""
    h = spec.h
    xs = spec.axis_coords(0)
    ys = spec.axis_coords(1)
    X0, Y0 = np.meshgrid(xs[:-1] - x0[0], ys[:-1] - x0[1], indexing="ij")
    X1, Y1 = X0 + h, Y0 + h
    far = np.maximum(np.maximum(X0 ** 2, X1 ** 2) + np.maximum(Y0 ** 2, Y1 ** 2), 0.0)
    nx = np.where((X0 <= 0) & (X1 >= 0), 0.0, np.minimum(X0 ** 2, X1 ** 2))
    ny = np.where((Y0 <= 0) & (Y1 >= 0), 0.0, np.minimum(Y0 ** 2, Y1 ** 2))
    near = nx + ny
    cov = np.where(far <= r * r, h * h, 0.0)
    cut = (near < r * r) & (far > r * r)
    if np.any(cut):
        t = (np.arange(SUPERSAMPLE) + 0.5) / SUPERSAMPLE * h
        sx = X0[cut][:, None, None] + t[None, :, None]
        sy = Y0[cut][:, None, None] + t[None, None, :]
        inside = (sx * sx + sy * sy) <= r * r
        cov[cut] = inside.reshape(inside.shape[0], -1).mean(axis=1) * h * h
    return cov


def _volume_2d(f, p, x0, r):
    dens = _cell_density_2d(f.values, p.W(f.values), f.spec.h)
    return float(np.sum(dens * _coverage_2d(f.spec, x0, r)))


def _boundary(f: VectorField, v_fn, x0, r):
    """Integral of |v|^2 over the sphere of radius r (two points in 1D)."""
    if f.spec.n == 1:
        pts = np.array([[x0[0] - r], [x0[0] + r]])
        return float(np.sum(np.sum(v_fn(pts) ** 2, axis=-1)))
    ang = 2 * np.pi * np.arange(N_CIRCLE) / N_CIRCLE
    pts = np.stack([x0[0] + r * np.cos(ang), x0[1] + r * np.sin(ang)], axis=-1)
    return float(2 * np.pi * r / N_CIRCLE * np.sum(np.sum(v_fn(pts) ** 2, axis=-1)))


def _interpolator(f: VectorField, well):
    axes = [f.spec.axis_coords(a) for a in range(f.spec.n)]
    interp = RegularGridInterpolator(axes, f.values - well, method="linear")
    return interp


def _well_at(f, p, x0):
    idx = f.spec.nearest_node(x0)
    dist = p.distances(f.values[idx])
    return int(np.argmin(dist))


# -- Weiss energy ---------------------------------------------------------------------

@dataclass
class WeissParts:
    value: float
    volume: float
    boundary: float


def weiss_parts(f: VectorField, p: Potential, x0, r, well=None) -> WeissParts:
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    _check_ball(f.spec, x0, r, BallOutOfGrid)
    if not r > 0:
        raise ValueError("radius must be positive")
    i = _well_at(f, p, x0) if well is None else well
    n = f.spec.n
    kappa = p.kappa
    vol = _volume_1d(f, p, float(x0[0]), r) if n == 1 else _volume_2d(f, p, x0, r)
    bdry = _boundary(f, _interpolator(f, p.wells[i]), x0, r)
    vol_term = r ** -(n + 2 * kappa - 2) * vol
    bdry_term = 0.5 * kappa * r ** -(n + 2 * kappa - 1) * bdry
    return WeissParts(vol_term - bdry_term, vol_term, bdry_term)


def weiss_energy(f: VectorField, p: Potential, x0, r, well=None) -> float:
    return weiss_parts(f, p, x0, r, well).value


def quadrature_slack(h: float, r: float, parts: WeissParts, c_q: float = 1.0) -> float:
    """Allowance for O((h/r)^2) quadrature error of the two Weiss terms."""
    return c_q * (h / r) ** 2 * (abs(parts.volume) + abs(parts.boundary))


@dataclass
class WeissTrace:
    x0: tuple
    alpha: float
    kappa: float
    radii: np.ndarray
    values: np.ndarray
    discrete_derivative: np.ndarray  # forward differences W(r_{j+1}) - W(r_j)
    error_budget: np.ndarray  # per radius bound on the D_u g term of the derivative
    step_budget: np.ndarray  # error budget integrated over each step
    slack: np.ndarray  # quadrature slack per step
    monotone_strict: bool  # differences >= -slack
    monotone_with_budget: bool  # differences >= -(step_budget + slack)
    well: int = 0


def error_budget(f: VectorField, p: Potential, x0, r, well: int) -> float:
    """kappa r^(kappa-1) sup|D g_i| int_{B_1} |u_r|^(1+alpha), u_r(x) = v(x0 + r x)/r^kappa.

    g_i is the local factor W = |u - a_i|^alpha g_i(u), evaluated over the
    field values in the ball.
    """
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    dist = node_distance(f.spec, x0)
    ball = dist <= r
    vals = f.values[ball]
    dg = p.local_factor_grad(vals, well)
    sup_dg = float(np.max(np.sqrt(np.sum(dg * dg, axis=-1)))) if len(vals) else 0.0
    n, a, kappa = f.spec.n, p.alpha, p.kappa
    v = np.sqrt(np.sum((vals - p.wells[well]) ** 2, axis=-1))
    integral = f.spec.cell_volume * float(np.sum(v ** (1 + a))) * r ** (-n - kappa * (1 + a))
    return kappa * r ** (kappa - 1) * sup_dg * integral


def weiss_trace(f: VectorField, p: Potential, x0, radii, well=None, c_q: float = 1.0) -> WeissTrace:
    radii = np.asarray(radii, dtype=float)
    if np.any(np.diff(radii) <= 0):
        raise ValueError("radii must be strictly increasing")
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    i = _well_at(f, p, x0) if well is None else well
    parts = [weiss_parts(f, p, x0, r, i) for r in radii]
    values = np.array([q.value for q in parts])
    budget = np.array([error_budget(f, p, x0, r, i) for r in radii])
    diffs = np.diff(values)
    steps = np.diff(radii)
    step_budget = 0.5 * (budget[:-1] + budget[1:]) * steps
    slack = np.array([max(quadrature_slack(f.spec.h, radii[j], parts[j], c_q),
                          quadrature_slack(f.spec.h, radii[j + 1], parts[j + 1], c_q))
                      for j in range(len(diffs))])
    strict = bool(np.all(diffs >= -slack))
    loose = bool(np.all(diffs >= -(step_budget + slack)))
    return WeissTrace(tuple(x0.tolist()), p.alpha, p.kappa, radii, values, diffs, budget,
                      step_budget, slack, strict, loose, i)


def admissible_radius(f: VectorField, p: Potential, x0, well=None, fraction: float = 0.9) -> float:
    """Supremum of r with sup_{B_r(x0)} |u - a_i| < fraction * r0, capped by the grid."""
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    i = _well_at(f, p, x0) if well is None else well
    dist = node_distance(f.spec, x0).ravel()
    dev = np.sqrt(np.sum((f.values - p.wells[i]) ** 2, axis=-1)).ravel()
    order = np.argsort(dist, kind="stable")
    bad = np.flatnonzero(dev[order] >= fraction * p.r0_well)
    lo = np.asarray(f.spec.origin)
    hi = np.asarray(f.spec.upper())
    r_grid = float(np.min(np.minimum(x0 - lo, hi - x0)))
    r_bad = float(dist[order][bad[0]]) if bad.size else np.inf
    return min(r_bad, r_grid)


# -- growth probes ---------------------------------------------------------------------

def radii_ladder(r_min: float, r_max: float, ratio: float = 2 ** 0.25) -> np.ndarray:
    if not (r_min > 0 and r_max >= r_min):
        return np.zeros(0)
    count = int(np.floor(np.log(r_max / r_min) / np.log(ratio) + 1e-9)) + 1
    return r_min * ratio ** np.arange(count)


def _neighbours(shape, idx):
    out = []
    for ax in range(len(shape)):
        for step in (-1, 1):
            j = list(idx)
            j[ax] += step
            if 0 <= j[ax] < shape[ax]:
                out.append(tuple(j))
    return out


def is_free_boundary_node(delta: np.ndarray, idx, snap_tol: float = 0.0) -> bool:
    """Contact node with both a contact and an interface node among its axis neighbours."""
    if delta[idx] > snap_tol:
        return False
    nb = [delta[j] for j in _neighbours(delta.shape, idx)]
    return any(d <= snap_tol for d in nb) and any(d > snap_tol for d in nb)


def find_free_boundary_node(f: VectorField, p: Potential, near, snap_tol: float = 0.0):
    """Free-boundary node closest to ``near``."""
    dist = p.distances(f.values).min(axis=-1)
    contact = dist <= snap_tol
    inter = ~contact
    cand = np.zeros_like(contact)
    for ax in range(f.spec.n):
        lo = [slice(None)] * f.spec.n
        hi = [slice(None)] * f.spec.n
        lo[ax] = slice(0, -1)
        hi[ax] = slice(1, None)
        lo, hi = tuple(lo), tuple(hi)
        cand[lo] |= contact[lo] & inter[hi]
        cand[hi] |= contact[hi] & inter[lo]
    good = np.zeros_like(cand)
    for idx in zip(*np.nonzero(cand)):
        good[idx] = is_free_boundary_node(dist, idx, snap_tol)
    if not np.any(good):
        raise NotOnFreeBoundary("field has no free-boundary node")
    d = node_distance(f.spec, near)
    d = np.where(good, d, np.inf)
    return np.unravel_index(int(np.argmin(d)), d.shape)


def node_gradient_norm(f: VectorField) -> np.ndarray:
    """|grad_h u| with centred differences (one-sided on the outer ring)."""
    total = np.zeros(f.spec.extents)
    for ax in range(f.spec.n):
        d = np.gradient(f.values, f.spec.h, axis=ax)
        total += np.sum(d * d, axis=-1)
    return np.sqrt(total)


@dataclass
class GrowthProbe:
    x0: tuple
    radii: np.ndarray
    sup_delta: np.ndarray
    sup_grad: np.ndarray
    fit_delta: Fit
    fit_grad: Fit
    kappa: float
    tol: float
    grad_at_x0: float
    grad_small: bool
    passed: bool
    notes: list = field(default_factory=list)


def default_growth_radii(f: VectorField, p: Potential, x0, cap_fraction: float = 0.1,
                         ratio: float = 2 ** 0.25) -> np.ndarray:
    """Geometric ladder from 8h while the ball stays in the grid and sup delta <= cap * r0."""
    x0 = np.asarray(x0, dtype=float)
    lo = np.asarray(f.spec.origin)
    hi = np.asarray(f.spec.upper())
    r_grid = float(np.min(np.minimum(x0 - lo, hi - x0)))
    dist = node_distance(f.spec, x0)
    delta = p.distances(f.values).min(axis=-1)
    scale = p.r0_well if np.isfinite(p.r0_well) else 1.0
    ladder = radii_ladder(8 * f.spec.h, r_grid, ratio)
    keep = [r for r in ladder if delta[dist <= r].max() <= cap_fraction * scale]
    return np.asarray(keep)


def growth_probe(f: VectorField, p: Potential, x0_index, radii=None, tol: float = 0.15,
                 snap_tol: float = 0.0, cap_fraction: float = 0.1) -> GrowthProbe:
    """Sup of delta and |grad u| over balls about a free-boundary node, with log-log fits."""
    x0_index = tuple(int(i) for i in np.atleast_1d(x0_index))
    delta = p.distances(f.values).min(axis=-1)
    if not is_free_boundary_node(delta, x0_index, snap_tol):
        raise NotOnFreeBoundary(f"node {x0_index} is not a free-boundary node")
    x0 = np.asarray(f.spec.origin) + f.spec.h * np.asarray(x0_index)
    if radii is None:
        radii = default_growth_radii(f, p, x0, cap_fraction)
    radii = np.asarray(radii, dtype=float)
    dist = node_distance(f.spec, x0)
    gnorm = node_gradient_norm(f)
    sup_d = np.array([delta[dist <= r].max() for r in radii])
    sup_g = np.array([gnorm[dist <= r].max() for r in radii])
    fit_d = scaling_fit(radii, sup_d)
    fit_g = scaling_fit(radii, sup_g)
    kappa = p.kappa
    g0 = float(gnorm[x0_index])
    grad_small = g0 <= 10 * f.spec.h ** (kappa - 1)
    ok = abs(fit_d.slope - kappa) <= tol
    if p.alpha == 1.0:
        ok = ok and abs(fit_g.slope - (kappa - 1)) <= tol
    notes = []
    if not grad_small:
        notes.append(f"|grad u(x0)| = {g0:.3e} exceeds 10 h^(kappa-1)")
    return GrowthProbe(tuple(x0.tolist()), radii, sup_d, sup_g, fit_d, fit_g, kappa, tol, g0,
                       grad_small, bool(ok), notes)


# -- non-degeneracy constants ------------------------------------------------------------

def _sup_dg(p: Potential) -> float:
    """Sup of |D g| over lattices filling B_{r0}(a_i) for every well."""
    radius = p.r0_well if np.isfinite(p.r0_well) else 1.0
    per_axis = {1: 401, 2: 81, 3: 21}.get(p.m, 9)
    ticks = np.linspace(-radius, radius, per_axis)
    mesh = np.meshgrid(*([ticks] * p.m), indexing="ij")
    pts = np.stack([x.ravel() for x in mesh], axis=-1)
    pts = pts[np.sum(pts * pts, axis=-1) <= radius * radius]
    best = 0.0
    for a in p.wells:
        dg = p.modulation.grad(pts + a)
        best = max(best, float(np.max(np.sqrt(np.sum(dg * dg, axis=-1)))))
    return best


def select_nondegeneracy_constants(p: Potential, n: int = 1):
    """theta = 0.9 x min{alpha C_g / (4 |Dg|), r0}; c = 0.9 x min{alpha(2-alpha)C_g/(8n), (2-alpha)^2 C_g/16}."""
    a, cg = p.alpha, p.g_lower_bound
    dg = _sup_dg(p)
    first = a * cg / (4 * dg) if dg > 0 else np.inf
    r0 = p.r0_well if np.isfinite(p.r0_well) else np.inf
    theta = 0.9 * min(first, r0)
    c = 0.9 * min(a * (2 - a) * cg / (8 * n), (2 - a) ** 2 * cg / 16)
    return float(theta), float(c)
