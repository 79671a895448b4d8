"""Multi-well potentials of product form.

    W(u) = prod_i |u - a_i|^alpha * g(u)

All evaluators accept a single point of shape ``(m,)`` or a stack of points of
shape ``(..., m)`` and broadcast over the leading axes.
"""
from __future__ import annotations

import functools
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import ValidationFailure

SUBGRADIENT_ZERO = "subgradient_zero"
EPSILON_SMOOTHING = "epsilon_smoothing"


@dataclass(frozen=True)
class SingularityPolicy:
    """How the gradient of W is evaluated at (or near) the wells."""

    mode: str = SUBGRADIENT_ZERO
    eps_reg: float = 1e-3

    def __post_init__(self):
        if self.mode not in (SUBGRADIENT_ZERO, EPSILON_SMOOTHING):
            raise ValueError(f"unknown singularity policy {self.mode!r}")
        if self.mode == EPSILON_SMOOTHING and not self.eps_reg > 0:
            raise ValueError("eps_reg must be positive under epsilon_smoothing")

    @property
    def smoothing(self) -> float:
        return self.eps_reg if self.mode == EPSILON_SMOOTHING else 0.0


@dataclass(frozen=True)
class Modulation:
    """Closed-form positive factor g(u) together with its analytic gradient."""

    name: str
    value: Callable[[np.ndarray], np.ndarray]
    grad: Callable[[np.ndarray], np.ndarray]
    params: dict = field(default_factory=dict)


def constant_modulation(value: float = 1.0) -> Modulation:
    value = float(value)

    def g(u):
        return np.full(np.shape(u)[:-1], value)

    def dg(u):
        return np.zeros(np.shape(u))

    return Modulation("constant", g, dg, {"value": value})


def quadratic_bump(c0: float = 1.0, b: float = 1.0, center=None) -> Modulation:
    """g(u) = c0 + b |u - center|^2."""
    c0, b = float(c0), float(b)
    ctr = None if center is None else np.asarray(center, dtype=float)

    def shifted(u):
        u = np.asarray(u, dtype=float)
        return u if ctr is None else u - ctr

    def g(u):
        d = shifted(u)
        return c0 + b * np.sum(d * d, axis=-1)

    def dg(u):
        return 2.0 * b * shifted(u)

    params = {"c0": c0, "b": b}
    if ctr is not None:
        params["center"] = ctr.tolist()
    return Modulation("quadratic_bump", g, dg, params)


MODULATIONS = {"constant": constant_modulation, "quadratic_bump": quadratic_bump}


def make_modulation(name: str, **params) -> Modulation:
    try:
        factory = MODULATIONS[name]
    except KeyError:
        raise ValueError(f"unknown modulation {name!r}; known: {sorted(MODULATIONS)}") from None
    return factory(**params)


@dataclass(frozen=True)
class Potential:
    wells: np.ndarray
    alpha: float
    modulation: Modulation = field(default_factory=constant_modulation)
    g_lower_bound: float = 1.0

    def __post_init__(self):
        wells = np.atleast_2d(np.asarray(self.wells, dtype=float))
        if wells.ndim != 2 or wells.shape[0] < 1:
            raise ValueError("wells must be a non-empty list of points")
        object.__setattr__(self, "wells", wells)
        object.__setattr__(self, "alpha", float(self.alpha))

    @property
    def m(self) -> int:
        return self.wells.shape[1]

    @property
    def n_wells(self) -> int:
        return self.wells.shape[0]

    @functools.cached_property
    def r0_well(self) -> float:
        """Half the minimal inter-well distance (infinite for a single well)."""
        if self.n_wells < 2:
            return float("inf")
        diff = self.wells[:, None, :] - self.wells[None, :, :]
        dist = np.sqrt(np.sum(diff * diff, axis=-1))
        return 0.5 * float(dist[~np.eye(self.n_wells, dtype=bool)].min())

    @property
    def kappa(self) -> float:
        return 2.0 / (2.0 - self.alpha) if self.alpha < 2 else float("inf")

    # -- evaluation -------------------------------------------------------
    def distances(self, u, smoothing: float = 0.0) -> np.ndarray:
        """Distances |u - a_i|, stacked on a trailing axis of length N."""
        u = np.asarray(u, dtype=float)
        # loop over the (few) components: cheaper than reducing a trailing axis
        sq = (u[..., 0, None] - self.wells[:, 0]) ** 2
        for c in range(1, self.m):
            sq += (u[..., c, None] - self.wells[:, c]) ** 2
        if smoothing:
            sq = sq + smoothing * smoothing
        return np.sqrt(sq)

    def W(self, u, smoothing: float = 0.0):
        u = np.asarray(u, dtype=float)
        dist = self.distances(u, smoothing)
        powered = dist if self.alpha == 1.0 else dist ** self.alpha
        return np.prod(powered, axis=-1) * self.modulation.value(u)

    def gradW(self, u, policy: SingularityPolicy = SingularityPolicy()):
        u = np.asarray(u, dtype=float)
        eps = policy.smoothing
        a = self.alpha
        dist = self.distances(u, eps)
        powered = dist if a == 1.0 else dist ** a
        g = self.modulation.value(u)
        N = self.n_wells
        out = np.zeros(u.shape)
        at_well = None
        if eps == 0.0:
            at_well = np.any(dist == 0.0, axis=-1)
            safe = np.where(dist == 0.0, 1.0, dist)
        else:
            safe = dist
        for i in range(N):
            others = np.ones(u.shape[:-1])
            for k in range(N):
                if k != i:
                    others = others * powered[..., k]
            # alpha * (u - a_i) |u - a_i|^(alpha - 2)
            coef = a * safe[..., i] ** (a - 2.0) * others * g
            out += coef[..., None] * (u - self.wells[i])
        out += (np.prod(powered, axis=-1))[..., None] * self.modulation.grad(u)
        if at_well is not None and np.any(at_well):
            out = np.where(at_well[..., None], 0.0, out)
        return out

    def local_factor(self, u, i: int):
        """g_i(u) with W(u) = |u - a_i|^alpha g_i(u)."""
        u = np.asarray(u, dtype=float)
        dist = self.distances(u)
        powered = dist if self.alpha == 1.0 else dist ** self.alpha
        mask = np.ones(self.n_wells, dtype=bool)
        mask[i] = False
        return np.prod(powered[..., mask], axis=-1) * self.modulation.value(u)

    def local_factor_grad(self, u, i: int):
        """Analytic gradient of :meth:`local_factor` (finite wherever u avoids a_k, k != i)."""
        u = np.asarray(u, dtype=float)
        a = self.alpha
        dist = self.distances(u)
        safe = np.where(dist == 0.0, 1.0, dist)
        powered = dist if a == 1.0 else dist ** a
        others = [k for k in range(self.n_wells) if k != i]
        g = self.modulation.value(u)
        prod = np.ones(u.shape[:-1])
        for k in others:
            prod = prod * powered[..., k]
        out = prod[..., None] * self.modulation.grad(u)
        for k in others:
            rest = np.ones(u.shape[:-1])
            for q in others:
                if q != k:
                    rest = rest * powered[..., q]
            coef = a * safe[..., k] ** (a - 2.0) * rest * g
            out += coef[..., None] * (u - self.wells[k])
        return out

    def well_strength(self, i: int) -> float:
        """g_i(a_i): the coefficient of |u - a_i|^alpha at the well itself."""
        return float(self.local_factor(self.wells[i], i))


def eval_W(p: Potential, u):
    return p.W(u)


def eval_gradW(p: Potential, u, policy: SingularityPolicy = SingularityPolicy()):
    return p.gradW(u, policy)


# distances this close count as a tie, so rounding in the well coordinates
# cannot decide which well is nearest
TIE_RTOL = 1e-12


def nearest_well(dist):
    """Lowest index whose distance is within TIE_RTOL of the minimum, and that minimum."""
    delta = np.min(dist, axis=-1)
    idx = np.argmax(dist <= (delta * (1.0 + TIE_RTOL))[..., None], axis=-1)
    return idx, delta


def well_distance(p: Potential, u):
    """Nearest well index (0-based, lowest index on ties) and distance."""
    idx, delta = nearest_well(p.distances(u))
    if np.ndim(idx) == 0:
        return int(idx), float(delta)
    return idx, delta


@dataclass
class Diagnostics:
    min_sampled_g: float
    n_samples: int
    paper_faithful: bool
    notes: list


def _lattice(m: int, bound: float) -> np.ndarray:
    per_axis = {1: 401, 2: 41, 3: 15}.get(m, 7)
    ticks = np.linspace(-bound, bound, per_axis)
    mesh = np.meshgrid(*([ticks] * m), indexing="ij")
    pts = np.stack([x.ravel() for x in mesh], axis=-1)
    return pts[np.sum(pts * pts, axis=-1) <= bound * bound * (1 + 1e-12)]


def validate(p: Potential, field_bound: float) -> Diagnostics:
    """Sample-based check of the structural hypotheses on ``p``.

    Raises :class:`ValidationFailure` listing every violated condition.
    """
    violations = []
    notes = []
    if not (0.0 < p.alpha <= 2.0):
        violations.append(f"alpha out of range: {p.alpha} not in (0, 2]")
    if p.n_wells >= 2 and not p.r0_well > 0:
        violations.append("wells are not pairwise distinct")
    if p.n_wells < 2:
        notes.append("single well: test fixture, not a multi-phase potential")
    max_norm = float(np.max(np.linalg.norm(p.wells, axis=1)))
    if field_bound < max_norm:
        violations.append(f"field_bound {field_bound} smaller than max well norm {max_norm}")
    pts = _lattice(p.m, max(field_bound, 0.0))
    g = np.asarray(p.modulation.value(pts))
    min_g = float(g.min())
    if not min_g >= p.g_lower_bound:
        violations.append(f"g lower bound violated: min sampled g {min_g} < {p.g_lower_bound}")
    if not p.g_lower_bound > 0:
        violations.append("g_lower_bound must be positive")
    if violations:
        raise ValidationFailure(violations)
    return Diagnostics(min_g, len(pts), p.n_wells >= 2, notes)


def triangle_wells(radius: float = 1.0) -> np.ndarray:
    """Cube roots of unity in R^2, scaled."""
    ang = 2.0 * np.pi * np.arange(3) / 3.0
    return radius * np.stack([np.cos(ang), np.sin(ang)], axis=-1)
