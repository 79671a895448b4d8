"""Distance to the wells, diffuse-interface measures, contact labels and free-boundary length.

All measures are node counts times h^n over closed balls, with ball membership
decided by node centres.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from skimage import measure as skmeasure

from .errors import DegenerateFit, RadiusOutOfGrid
from .grid import GridSpec, VectorField
from .potential import Potential, nearest_well


@dataclass
class DeltaGrid:
    spec: GridSpec
    delta: np.ndarray
    nearest_well: np.ndarray  # 0-based well index per node


def delta_field(f: VectorField, p: Potential) -> DeltaGrid:
    idx, delta = nearest_well(p.distances(f.values))
    return DeltaGrid(f.spec, delta, idx)


def contact_labels(d: DeltaGrid) -> np.ndarray:
    """0 on the diffuse interface, k on nodes sitting exactly on well k (1-based)."""
    return np.where(d.delta == 0.0, d.nearest_well + 1, 0).astype(np.int64)


def default_gammas(p: Potential):
    return [g * p.r0_well for g in (0.4, 0.2, 0.1, 0.05)]


# -- balls ----------------------------------------------------------------

def _check_ball(spec: GridSpec, center, r, err=RadiusOutOfGrid):
    c = np.asarray(center, dtype=float)
    lo = np.asarray(spec.origin)
    hi = np.asarray(spec.upper())
    slack = 1e-9 * spec.h
    if np.any(c - r < lo - slack) or np.any(c + r > hi + slack):
        raise err(f"ball of radius {r} about {tuple(c)} leaves the grid")


def node_distance(spec: GridSpec, center) -> np.ndarray:
    x = spec.coords() - np.asarray(center, dtype=float)
    return np.sqrt(np.sum(x * x, axis=-1))


def ball_mask(spec: GridSpec, center, r, dist=None) -> np.ndarray:
    _check_ball(spec, center, r)
    dist = node_distance(spec, center) if dist is None else dist
    return dist <= r


# -- measures -----------------------------------------------------------------

@dataclass
class InterfaceReport:
    center: tuple
    radii: np.ndarray
    measure_I0: np.ndarray
    measure_Igamma: dict
    contact: np.ndarray  # shape (N_wells, len(radii))
    boundary_length: np.ndarray = None
    ball_energy: np.ndarray = None
    slopes: dict = field(default_factory=dict)


def interface_measures(d: DeltaGrid, center, radii, gammas=(), n_wells=None) -> InterfaceReport:
    radii = np.asarray(sorted(float(r) for r in radii))
    for r in radii:
        _check_ball(d.spec, center, r)
    dist = node_distance(d.spec, center)
    vol = d.spec.cell_volume
    n_wells = int(d.nearest_well.max()) + 1 if n_wells is None else n_wells
    interface = d.delta > 0
    labels = contact_labels(d)
    m0 = np.empty(len(radii))
    mg = {float(g): np.empty(len(radii)) for g in gammas}
    contact = np.empty((n_wells, len(radii)))
    for k, r in enumerate(radii):
        ball = dist <= r
        m0[k] = np.count_nonzero(interface & ball) * vol
        for g in mg:
            mg[g][k] = np.count_nonzero((d.delta >= g) & ball) * vol
        counts = np.bincount(labels[ball], minlength=n_wells + 1)
        contact[:, k] = counts[1:n_wells + 1] * vol
    return InterfaceReport(tuple(float(c) for c in np.atleast_1d(center)), radii, m0, mg, contact)


def ball_energy(f: VectorField, p: Potential, center, radii) -> np.ndarray:
    """Energy J(B_r) by node quadrature of the split-edge energy density."""
    from .minimizer import energy_density

    dens = energy_density(f, p)
    dist = node_distance(f.spec, center)
    out = []
    for r in radii:
        _check_ball(f.spec, center, r)
        out.append(float(np.sum(dens[dist <= r])) * f.spec.cell_volume)
    return np.asarray(out)


# -- free-boundary length -------------------------------------------------------

def _segment_disk_length(p0, p1, center, r):
    """Length of each segment p0[k]-p1[k] inside the closed disk (vectorized)."""
    d = p1 - p0
    f = p0 - center
    a = np.sum(d * d, axis=1)
    b = 2.0 * np.sum(f * d, axis=1)
    c = np.sum(f * f, axis=1) - r * r
    disc = b * b - 4 * a * c
    out = np.zeros(len(p0))
    ok = (disc > 0) & (a > 0)
    sq = np.sqrt(np.where(ok, disc, 0.0))
    safe_a = np.where(a > 0, a, 1.0)
    t0 = np.clip((-b - sq) / (2 * safe_a), 0.0, 1.0)
    t1 = np.clip((-b + sq) / (2 * safe_a), 0.0, 1.0)
    out[ok] = (t1 - t0)[ok] * np.sqrt(a[ok])
    return out


def contour_segments(labels: np.ndarray, spec: GridSpec):
    """Marching-squares segments of the interface/contact transition, in physical units."""
    indicator = (labels == 0).astype(float)
    p0, p1 = [], []
    for line in skmeasure.find_contours(indicator, 0.5):
        if len(line) < 2:
            continue
        p0.append(line[:-1])
        p1.append(line[1:])
    if not p0:
        return np.zeros((0, 2)), np.zeros((0, 2))
    origin = np.asarray(spec.origin)
    return np.concatenate(p0) * spec.h + origin, np.concatenate(p1) * spec.h + origin


def boundary_length(labels: np.ndarray, spec: GridSpec, center, radii) -> np.ndarray:
    """Discrete length of the free boundary inside each ball.

    In 2D: marching-squares contour of the 0 / nonzero label transition,
    clipped analytically to each disk.  In 1D: the number of contact nodes
    with an interface neighbour inside the ball.
    """
    radii = [float(r) for r in radii]
    for r in radii:
        _check_ball(spec, center, r)
    if spec.n == 1:
        inter = labels == 0
        cont = ~inter
        gamma = np.zeros_like(inter)
        gamma[1:] |= cont[1:] & inter[:-1]
        gamma[:-1] |= cont[:-1] & inter[1:]
        dist = node_distance(spec, center)
        return np.array([float(np.count_nonzero(gamma & (dist <= r))) for r in radii])
    if spec.n != 2:
        raise ValueError("boundary_length supports n = 1 or 2")
    p0, p1 = contour_segments(labels, spec)
    c = np.asarray(center, dtype=float)
    return np.array([float(np.sum(_segment_disk_length(p0, p1, c, r))) for r in radii])


def transition_edge_count(labels: np.ndarray) -> int:
    """Number of grid edges joining an interface node and a contact node."""
    b = labels == 0
    return int(sum(np.count_nonzero(np.diff(b, axis=a)) for a in range(b.ndim)))


# -- regression -------------------------------------------------------------------

@dataclass
class Fit:
    slope: float
    intercept: float
    r2: float
    n_used: int
    dropped: int


def scaling_fit(radii, values) -> Fit:
    """Least squares of log(values) on log(radii); nonpositive values are dropped."""
    r = np.asarray(radii, dtype=float)
    v = np.asarray(values, dtype=float)
    keep = (v > 0) & (r > 0)
    if np.count_nonzero(keep) < 4:
        raise DegenerateFit(f"need at least 4 positive points, have {int(np.count_nonzero(keep))}")
    x, y = np.log(r[keep]), np.log(v[keep])
    A = np.stack([x, np.ones_like(x)], axis=1)
    (slope, intercept), *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - (slope * x + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid ** 2)) / ss_tot if ss_tot > 0 else 1.0
    return Fit(float(slope), float(intercept), r2, int(keep.sum()), int((~keep).sum()))


# -- coexistence -----------------------------------------------------------------

@dataclass
class TwoPhase:
    radii: np.ndarray
    first: np.ndarray
    second: np.ndarray
    first_pass_index: int
    passed: bool


def two_phase_check(labels: np.ndarray, spec: GridSpec, center, radii, c_floor: float,
                    n_wells: int = None) -> TwoPhase:
    radii = np.asarray(sorted(float(r) for r in radii))
    dist = node_distance(spec, center)
    n_wells = int(labels.max()) if n_wells is None else n_wells
    vol = spec.cell_volume
    first, second = np.zeros(len(radii)), np.zeros(len(radii))
    for k, r in enumerate(radii):
        _check_ball(spec, center, r)
        counts = np.bincount(labels[dist <= r], minlength=n_wells + 1)[1:] * vol
        top = np.sort(counts)[::-1]
        first[k] = top[0] if len(top) else 0.0
        second[k] = top[1] if len(top) > 1 else 0.0
    ok = second >= c_floor * radii ** spec.n
    idx = int(np.argmax(ok)) if np.any(ok) else -1
    passed = idx >= 0 and bool(np.all(ok[idx:]))
    return TwoPhase(radii, first, second, idx, passed)
