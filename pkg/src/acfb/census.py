"""Sub-cube decomposition of a centred square and the five-way cube classification."""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .errors import GridTooSmall
from .grid import VectorField
from .potential import Potential

T1, T2, T3, T4, T5 = 1, 2, 3, 4, 5


@dataclass(frozen=True)
class CensusConfig:
    L: float
    k: int
    theta: float
    epsilon: float = 0.05
    center: tuple = None

    def __post_init__(self):
        if not (0.0 < self.epsilon < 0.5):
            raise ValueError("epsilon must lie in (0, 1/2)")
        if self.k < 1:
            raise ValueError("k must be a positive integer")
        if not (self.L > 0 and self.theta > 0):
            raise ValueError("L and theta must be positive")


@dataclass
class CubeCensus:
    k: int
    L: float
    theta: float
    epsilon: float
    nodes_per_side: int
    index: np.ndarray  # (K, n) integer cube coordinates
    sigma: np.ndarray  # (K, N) measure of {|u - a_j| < theta/2} in each cube
    classes: np.ndarray  # (K,) values 1..5
    dominant: np.ndarray  # (K,) 0-based well for T4/T5 cubes, -1 otherwise
    totals: dict
    violations: list = field(default_factory=list)

    @property
    def interface_count(self):
        return self.totals[T2] + self.totals[T3] + self.totals[T5]


def select_cube_side(p: Potential, c_nondeg: float, theta: float, h: float = None) -> float:
    """Smallest L with c (L/4)^(2/(2-alpha)) >= 2 theta, rounded up to a multiple of 4h."""
    L = 4.0 * (2.0 * theta / c_nondeg) ** ((2.0 - p.alpha) / 2.0)
    if h:
        unit = 4.0 * h
        L = np.ceil(L / unit * (1 - 1e-12)) * unit
    return float(L)


def _layout(f: VectorField, cfg: CensusConfig):
    spec = f.spec
    p_nodes = int(round(cfg.L / spec.h))
    if p_nodes < 1 or abs(p_nodes * spec.h - cfg.L) > 1e-9 * max(cfg.L, 1.0):
        raise GridTooSmall(f"cube side {cfg.L} is not a multiple of h = {spec.h}")
    center = spec.center() if cfg.center is None else cfg.center
    cidx = spec.nearest_node(center)
    starts = []
    for ax in range(spec.n):
        s = cidx[ax] - cfg.k * p_nodes
        if s < 0 or s + 2 * cfg.k * p_nodes > spec.extents[ax]:
            raise GridTooSmall(f"square of side {2 * cfg.k * cfg.L} does not fit in the grid")
        starts.append(s)
    return p_nodes, starts


def census(f: VectorField, p: Potential, cfg: CensusConfig) -> CubeCensus:
    n = f.spec.n
    N = p.n_wells
    p_nodes, starts = _layout(f, cfg)
    side = 2 * cfg.k
    # crop to the census square and fold into cubes: (side, p, side, p, ...)
    sl = tuple(slice(s, s + side * p_nodes) for s in starts)
    u = f.values[sl]
    dist = p.distances(u)  # (..., N)
    near = dist < 0.5 * cfg.theta
    shape = []
    for _ in range(n):
        shape += [side, p_nodes]
    vol = f.spec.cell_volume
    node_axes = tuple(range(1, 2 * n, 2))
    sigma = np.empty((side,) * n + (N,))
    for j in range(N):
        counts = near[..., j].reshape(shape).sum(axis=node_axes)
        sigma[..., j] = counts * vol
    Ln = (p_nodes * f.spec.h) ** n
    big = (1 - 2 * cfg.epsilon) * Ln
    small = cfg.epsilon / max(N - 1, 1) * Ln

    j0 = np.argmax(sigma, axis=-1)
    smax = np.take_along_axis(sigma, j0[..., None], axis=-1)[..., 0]
    others = sigma.copy()
    np.put_along_axis(others, j0[..., None], -np.inf, axis=-1)
    second = others.max(axis=-1) if N > 1 else np.zeros_like(smax)

    classes = np.zeros((side,) * n, dtype=np.int64)
    dominant = np.full((side,) * n, -1, dtype=np.int64)
    interior = np.ones((side,) * n, dtype=bool)
    for ax in range(n):
        idx = [slice(None)] * n
        idx[ax] = 0
        interior[tuple(idx)] = False
        idx[ax] = -1
        interior[tuple(idx)] = False
    classes[~interior] = T1
    low = interior & (smax <= big)
    classes[low & (second >= small)] = T2
    classes[low & (second < small)] = T3
    high = interior & (smax > big)
    # for every cube, does each neighbour exceed the threshold for this cube's j0?
    all_nb = np.ones((side,) * n, dtype=bool)
    pad = np.pad(sigma, [(1, 1)] * n + [(0, 0)], constant_values=np.inf)
    for off in itertools.product((-1, 0, 1), repeat=n):
        if all(o == 0 for o in off):
            continue
        view = pad[tuple(slice(1 + o, 1 + o + side) for o in off)]
        nb = np.take_along_axis(view, j0[..., None], axis=-1)[..., 0]
        all_nb &= nb > big
    classes[high & all_nb] = T4
    classes[high & ~all_nb] = T5
    dominant[high] = j0[high]

    # T4/T5 cubes should stay within theta of their dominant well
    violations = []
    for cube in zip(*np.nonzero(high)):
        j = int(j0[cube])
        sub = tuple(slice(c * p_nodes, (c + 1) * p_nodes) for c in cube)
        worst = float(dist[sub + (j,)].max())
        if not worst < cfg.theta:
            violations.append((tuple(int(c) for c in cube), j, worst))

    flat_idx = np.array(list(itertools.product(range(side), repeat=n)), dtype=np.int64)
    totals = {c: int(np.count_nonzero(classes == c)) for c in (T1, T2, T3, T4, T5)}
    return CubeCensus(cfg.k, cfg.L, cfg.theta, cfg.epsilon, p_nodes, flat_idx,
                      sigma.reshape(-1, N), classes.ravel(), dominant.ravel(), totals, violations)


@dataclass
class CensusScaling:
    k_list: list
    totals: list
    counts: np.ndarray  # |T2| + |T3| + |T5| per k
    slope: float
    intercept: float
    verdict: str  # "pass", "fail" or "vacuous pass"
    bound: float


def census_scaling(f: VectorField, p: Potential, base_cfg: CensusConfig, k_list) -> CensusScaling:
    k_list = [int(k) for k in k_list]
    if any(b <= a for a, b in zip(k_list, k_list[1:])):
        raise ValueError("k_list must be increasing")
    results = []
    for k in k_list:
        cfg = CensusConfig(base_cfg.L, k, base_cfg.theta, base_cfg.epsilon, base_cfg.center)
        results.append(census(f, p, cfg))
    counts = np.array([c.interface_count for c in results], dtype=float)
    bound = (f.spec.n - 1) + 0.3
    keep = counts > 0
    if not np.any(keep):
        return CensusScaling(k_list, [c.totals for c in results], counts, float("nan"), float("nan"),
                             "vacuous pass", bound)
    if np.count_nonzero(keep) < 2:
        return CensusScaling(k_list, [c.totals for c in results], counts, float("nan"), float("nan"),
                             "fail", bound)
    x = np.log(np.asarray(k_list, dtype=float)[keep])
    y = np.log(counts[keep])
    slope, intercept = np.polyfit(x, y, 1)
    verdict = "pass" if slope <= bound else "fail"
    return CensusScaling(k_list, [c.totals for c in results], counts, float(slope), float(intercept),
                         verdict, bound)
