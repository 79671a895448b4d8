"""Discrete energy, its gradient, descent to dead-core minimizers and 1D connections.

The discrete energy is

    E(u) = h^(n-2) * 1/2 * sum_edges w_e |u_p - u_q|^2 + h^n * sum_nodes w_v W(u_v)

with trapezoid weights (w_v = 1/2 per boundary axis, w_e = 1/2 for edges lying
on the boundary of the box).  On interior nodes the gradient is exactly
h^n (-Lap_h u + W_u(u)).
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .errors import DomainTooSmall, NonFiniteEnergy
from .grid import GridSpec, VectorField, init_field, interpolate_onto
from .potential import EPSILON_SMOOTHING, SUBGRADIENT_ZERO, Potential, SingularityPolicy

log = logging.getLogger(__name__)

GRADIENT_DESCENT_BB = "gradient_descent_bb"
SEMI_IMPLICIT = "semi_implicit"
# accepted iterations without a strict energy decrease before giving up
STALL_WINDOW = 100
# fixed short steps closing every active-set cycle
SMOOTHING_STEPS = 20


@dataclass(frozen=True)
class MinimizeConfig:
    scheme: str = GRADIENT_DESCENT_BB
    max_iters: int = 20000
    grad_tol: float = 1e-10
    snap_tol: float = None
    snap_every: int = 10
    seed: int = 0
    # None: smoothed surrogate stage for alpha < 1, plain subgradient policy otherwise
    policy: SingularityPolicy = None
    clamp: bool = True
    surrogate_iters: int = 2000
    # None: forward-backward steps for alpha <= 1
    prox: bool = None

    def __post_init__(self):
        if self.scheme not in (GRADIENT_DESCENT_BB, SEMI_IMPLICIT):
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if not self.grad_tol > 0:
            raise ValueError("grad_tol must be positive")
        if self.max_iters < 0:
            raise ValueError("max_iters must be nonnegative")

    def resolved_policy(self, p: Potential) -> SingularityPolicy:
        if self.policy is not None:
            return self.policy
        if p.alpha < 1.0:
            return SingularityPolicy(EPSILON_SMOOTHING, 1e-3)
        return SingularityPolicy(SUBGRADIENT_ZERO)

    def resolved_snap_tol(self, p: Potential) -> float:
        if self.snap_tol is not None:
            if p.n_wells >= 2 and not self.snap_tol < p.r0_well / 10:
                raise ValueError("snap_tol must be below r0_well / 10")
            return float(self.snap_tol)
        if p.n_wells >= 2:
            return 1e-4 * p.r0_well
        return 1e-8


@dataclass
class MinimizeResult:
    field: VectorField
    energy_trace: list
    final_grad_norm: float
    el_residual_interior: float
    snap_count_trace: list
    iterations: int
    converged: bool
    status: str = ""
    surrogate_trace: list = field(default_factory=list)


# -- discrete operators --------------------------------------------------------

def _edge_weights(spec: GridSpec, axis: int) -> np.ndarray:
    shape = list(spec.extents)
    shape[axis] -= 1
    w = np.ones(shape)
    for b in range(spec.n):
        if b == axis:
            continue
        sl = [slice(None)] * spec.n
        sl[b] = 0
        w[tuple(sl)] *= 0.5
        sl[b] = -1
        w[tuple(sl)] *= 0.5
    return w


class _Discretization:
    """Weights and stencils for one grid; reused across iterations."""

    def __init__(self, spec: GridSpec):
        self.spec = spec
        self.h = spec.h
        self.node_w = spec.trapezoid_weights()
        self.edge_w = [_edge_weights(spec, a) for a in range(spec.n)]
        self.grad_scale = spec.h ** (spec.n - 2)
        self.vol = spec.h ** spec.n

    def dirichlet_energy(self, u):
        total = 0.0
        for a, w in enumerate(self.edge_w):
            d = np.diff(u, axis=a)
            total += float(np.sum(w * np.sum(d * d, axis=-1)))
        return 0.5 * self.grad_scale * total

    def dirichlet_grad(self, u):
        g = np.zeros_like(u)
        for a, w in enumerate(self.edge_w):
            d = np.diff(u, axis=a) * w[..., None]
            lo = [slice(None)] * self.spec.n
            hi = [slice(None)] * self.spec.n
            lo[a] = slice(0, -1)
            hi[a] = slice(1, None)
            g[tuple(lo)] -= d
            g[tuple(hi)] += d
        return self.grad_scale * g

    def potential_energy(self, u, p: Potential, smoothing=0.0):
        return self.vol * float(np.sum(self.node_w * p.W(u, smoothing)))

    def energy(self, u, p, smoothing=0.0):
        return self.dirichlet_energy(u) + self.potential_energy(u, p, smoothing)

    def node_density(self, u, p):
        """Per-node energy density: each edge term split evenly between its ends."""
        dens = np.zeros(u.shape[:-1])
        for a in range(self.spec.n):
            d = np.diff(u, axis=a)
            e = 0.25 * np.sum(d * d, axis=-1) / self.h ** 2
            lo = [slice(None)] * self.spec.n
            hi = [slice(None)] * self.spec.n
            lo[a] = slice(0, -1)
            hi[a] = slice(1, None)
            dens[tuple(lo)] += e
            dens[tuple(hi)] += e
        return dens + p.W(u)


_DISC_CACHE = {}


def _disc(spec: GridSpec) -> _Discretization:
    d = _DISC_CACHE.get(spec)
    if d is None:
        if len(_DISC_CACHE) > 16:
            _DISC_CACHE.clear()
        d = _DISC_CACHE[spec] = _Discretization(spec)
    return d


def energy(f: VectorField, p: Potential, smoothing: float = 0.0) -> float:
    return _disc(f.spec).energy(f.values, p, smoothing)


def energy_density(f: VectorField, p: Potential) -> np.ndarray:
    """Node density of 1/2|grad u|^2 + W(u); h^n times its sum approximates J."""
    return _disc(f.spec).node_density(f.values, p)


def _raw_gradient(disc, u, mask, p, policy):
    g = disc.dirichlet_grad(u) + disc.vol * disc.node_w[..., None] * p.gradW(u, policy)
    g[mask] = 0.0
    return g


def gradient(f: VectorField, p: Potential, policy: SingularityPolicy = SingularityPolicy()) -> VectorField:
    """Exact gradient of :func:`energy` on free nodes, zero on frozen nodes."""
    g = _raw_gradient(_disc(f.spec), f.values, f.dirichlet_mask, p, policy)
    return VectorField(f.spec, g, f.dirichlet_mask.copy(), {"kind": "gradient"})


def _contact(u, p):
    dist = p.distances(u)
    idx = np.argmin(dist, axis=-1)
    delta = np.take_along_axis(dist, idx[..., None], axis=-1)[..., 0]
    return idx, delta


def _strengths(p):
    return np.array([p.well_strength(i) for i in range(p.n_wells)])


def _projected(disc, u, mask, p, contact, idx, strengths):
    """Minimal-norm element of the discrete subdifferential.

    Away from contact nodes this is the classical gradient.  At contact nodes
    the potential contributes the subdifferential of |u - a|^alpha g_i:
    all of R^m for alpha < 1, a ball of radius h^n w g_i(a_i) for alpha = 1,
    and {0} for alpha > 1.
    """
    pol = SingularityPolicy(SUBGRADIENT_ZERO)
    g = disc.dirichlet_grad(u)
    pot = disc.vol * disc.node_w[..., None] * p.gradW(u, pol)
    g = np.where(contact[..., None], g, g + pot)
    if p.alpha < 1.0:
        g[contact] = 0.0
    elif p.alpha == 1.0 and np.any(contact):
        radius = disc.vol * disc.node_w * strengths[idx]
        norm = np.sqrt(np.sum(g * g, axis=-1))
        shrink = np.where(norm > 0, np.maximum(norm - radius, 0.0) / np.where(norm > 0, norm, 1.0), 0.0)
        g = np.where(contact[..., None], g * shrink[..., None], g)
    g[mask] = 0.0
    return g


def projected_gradient(f: VectorField, p: Potential, snap_tol: float = 0.0) -> VectorField:
    disc = _disc(f.spec)
    idx, delta = _contact(f.values, p)
    contact = delta <= snap_tol
    g = _projected(disc, f.values, f.dirichlet_mask, p, contact, idx, _strengths(p))
    return VectorField(f.spec, g, f.dirichlet_mask.copy(), {"kind": "projected_gradient"})


def el_residual(f: VectorField, p: Potential, snap_tol: float = 0.0):
    """Max over free nodes of the Euler-Lagrange defect, and the form used.

    For alpha > 1 the defect is |Lap_h u - W_u(u)| everywhere ("full").  For
    alpha <= 1 the forcing is switched off on contact nodes (delta <= snap_tol);
    there the defect is measured against the subdifferential of the potential,
    i.e. it is 0 for alpha < 1 and max(|Lap_h u| - g_i(a_i), 0) for alpha = 1
    ("chi_subgradient").
    """
    disc = _disc(f.spec)
    idx, delta = _contact(f.values, p)
    contact = delta <= snap_tol if p.alpha <= 1.0 else np.zeros(delta.shape, dtype=bool)
    g = _projected(disc, f.values, f.dirichlet_mask, p, contact, idx, _strengths(p))
    norm = np.sqrt(np.sum(g * g, axis=-1)) / (disc.vol * disc.node_w)
    free = f.free
    resid = float(norm[free].max()) if np.any(free) else 0.0
    return resid, ("full" if p.alpha > 1.0 else "chi_subgradient")


# -- descent -----------------------------------------------------------------

def _flat_edges(disc: _Discretization):
    """Endpoints (flat node ids) and scaled weights of every grid edge."""
    spec = disc.spec
    ids = np.arange(int(np.prod(spec.extents))).reshape(spec.extents)
    ep, eq, ew = [], [], []
    for a, w in enumerate(disc.edge_w):
        lo = [slice(None)] * spec.n
        hi = [slice(None)] * spec.n
        lo[a] = slice(0, -1)
        hi[a] = slice(1, None)
        ep.append(ids[tuple(lo)].ravel())
        eq.append(ids[tuple(hi)].ravel())
        ew.append(w.ravel() * disc.grad_scale)
    return np.concatenate(ep), np.concatenate(eq), np.concatenate(ew)


class _Local:
    """The energy restricted to a set of active free nodes.

    Nodes outside the active set are held fixed; the energy differs from the
    full one by a constant, so descent on the active values is descent on the
    full energy.
    """

    def __init__(self, desc: "_Descent", active: np.ndarray, u_flat: np.ndarray):
        self.desc = desc
        self.active = active
        k = len(active)
        self.k = k
        loc = -np.ones(len(u_flat), dtype=np.int64)
        loc[active] = np.arange(k)
        ep, eq, ew = desc.edges
        sel = (loc[ep] >= 0) | (loc[eq] >= 0)
        ep, eq, self.ew = ep[sel], eq[sel], ew[sel]
        ext = np.setdiff1d(np.union1d(ep, eq), active, assume_unique=False)
        loc[ext] = k + np.arange(len(ext))
        self.ep, self.eq = loc[ep], loc[eq]
        self.u_ext = u_flat[ext]
        self.node_w = desc.node_w_flat[active]
        self.contact_w = self.node_w * desc.disc.vol

    def full(self, uA):
        return np.concatenate([uA, self.u_ext])

    def energy(self, uA, smoothing=0.0):
        U = self.full(uA)
        d = U[self.ep] - U[self.eq]
        dirichlet = 0.5 * float(np.sum(self.ew * np.sum(d * d, axis=-1)))
        pot = self.desc.disc.vol * float(np.sum(self.node_w * self.desc.p.W(uA, smoothing)))
        e = dirichlet + pot
        if not np.isfinite(e):
            raise NonFiniteEnergy(f"energy is not finite ({e})")
        return e

    def dirichlet_grad(self, uA):
        U = self.full(uA)
        d = (U[self.ep] - U[self.eq]) * self.ew[:, None]
        n = self.k + len(self.u_ext)
        g = np.empty((self.k, uA.shape[1]))
        for c in range(uA.shape[1]):
            col = np.bincount(self.ep, d[:, c], minlength=n) - np.bincount(self.eq, d[:, c], minlength=n)
            g[:, c] = col[:self.k]
        return g

    def grad(self, uA, smoothing=0.0, contact=None, split=False):
        """Smoothed gradient, or the minimal-norm subgradient when smoothing is 0.

        With ``split`` also returns the gradient of the energy minus the
        singular part c_v |u_v - a_i|^alpha (c_v = h^n w_v g_i(a_i), a_i the
        nearest well), which is continuous for alpha <= 1.
        """
        p = self.desc.p
        g = self.dirichlet_grad(uA)
        if smoothing:
            pol = SingularityPolicy(EPSILON_SMOOTHING, smoothing)
            return g + self.contact_w[:, None] * p.gradW(uA, pol)
        idx, delta = contact if contact is not None else _contact(uA, p)
        on = delta == 0.0
        pot = np.where(on[:, None], 0.0, self.contact_w[:, None] * p.gradW(uA, SingularityPolicy(SUBGRADIENT_ZERO)))
        smooth = None
        if split:
            c = self.contact_w * self.desc.strengths[idx]
            v = uA - self.desc.wells[idx]
            safe = np.where(on, 1.0, delta)
            sing = (c * p.alpha * safe ** (p.alpha - 2.0))[:, None] * v
            near = (delta < 0.5 * p.r0_well) & ~on
            smooth = g + pot - np.where(near[:, None], sing, 0.0)
        g = g + pot
        if np.any(on):
            if p.alpha < 1.0:
                g[on] = 0.0
            elif p.alpha == 1.0:
                radius = self.contact_w[on] * self.desc.strengths[idx[on]]
                norm = np.sqrt(np.sum(g[on] ** 2, axis=-1))
                shrink = np.maximum(norm - radius, 0.0) / np.where(norm > 0, norm, 1.0)
                g[on] = g[on] * shrink[:, None]
        return (g, smooth) if split else g

    def prox(self, z, tau, contact):
        """Proximal map of tau * c_v |. - a_i|^alpha, with the split of :meth:`grad`.

        ``contact`` is the (nearest well, distance) pair of the current point;
        nodes split there are mapped toward that same well, the others are left
        at the forward point.
        """
        desc = self.desc
        idx, delta = contact
        near = delta < 0.5 * desc.p.r0_well
        out = z.copy()
        if not np.any(near):
            return out
        a = desc.wells[idx[near]]
        v = z[near] - a
        s = np.sqrt(np.sum(v * v, axis=-1))
        lam = tau * self.contact_w[near] * desc.strengths[idx[near]]
        t = _radial_prox(s, lam, desc.p.alpha)
        scale = np.where(s > 0, t / np.where(s > 0, s, 1.0), 0.0)
        out[near] = a + scale[:, None] * v
        return out


def _radial_prox(s, lam, alpha):
    """argmin over t >= 0 of (t - s)^2 / 2 + lam t^alpha, for alpha in (0, 1]."""
    if alpha == 1.0:
        return np.maximum(s - lam, 0.0)
    out = np.zeros_like(s)
    live = (s > 0) & (lam > 0)
    out[(s > 0) & ~live] = s[(s > 0) & ~live]
    s, lam = s[live], lam[live]
    # the nonzero candidate is the larger root of t - s + lam alpha t^(alpha - 1) = 0,
    # which lies to the right of the inflection point of the objective
    t_lo = (lam * alpha * (1.0 - alpha)) ** (1.0 / (2.0 - alpha))
    t = np.maximum(s, t_lo)
    # f is convex on [t_lo, inf), so Newton from the right decreases monotonically
    todo = np.arange(len(t))
    for _ in range(60):
        tt, ss, ll = t[todo], s[todo], lam[todo]
        f = tt - ss + ll * alpha * tt ** (alpha - 1.0)
        df = 1.0 - ll * alpha * (1.0 - alpha) * tt ** (alpha - 2.0)
        step = np.where(df > 0, f / np.where(df > 0, df, 1.0), 0.0)
        new = np.maximum(tt - step, t_lo[todo])
        t[todo] = new
        moving = (np.abs(new - tt) > 1e-13 * new) & (new > t_lo[todo])
        todo = todo[moving]
        if not todo.size:
            break
    ok = t - s + lam * alpha * t ** (alpha - 1.0) <= 1e-12 * np.maximum(s, 1.0)
    obj_t = 0.5 * (t - s) ** 2 + lam * t ** alpha
    out[live] = np.where(ok & (obj_t < 0.5 * s * s), t, 0.0)
    return out


class _Descent:
    """Shared state of one minimization on one grid."""

    def __init__(self, f: VectorField, p: Potential, cfg: MinimizeConfig):
        self.f = f
        self.p = p
        self.cfg = cfg
        self.disc = _disc(f.spec)
        self.mask = f.dirichlet_mask
        self.free = ~self.mask
        self.free_ids = np.flatnonzero(self.free.ravel())
        self.snap_tol = cfg.resolved_snap_tol(p)
        self.strengths = _strengths(p)
        self.wells = p.wells
        self.clamp = cfg.clamp and cfg.snap_every > 0
        self.edges = _flat_edges(self.disc)
        self.node_w_flat = self.disc.node_w.ravel()
        self.m = f.m
        # forward-backward steps on the singular part of W near the wells
        self.use_prox = p.alpha <= 1.0 if cfg.prox is None else bool(cfg.prox) and p.alpha <= 1.0

    def E(self, u, smoothing=0.0):
        e = self.disc.energy(u, self.p, smoothing)
        if not np.isfinite(e):
            raise NonFiniteEnergy(f"energy is not finite ({e})")
        return e

    def pgrad(self, u, smoothing=0.0):
        if smoothing:
            pol = SingularityPolicy(EPSILON_SMOOTHING, smoothing)
            return _raw_gradient(self.disc, u, self.mask, self.p, pol)
        idx, delta = _contact(u, self.p)
        return _projected(self.disc, u, self.mask, self.p, delta == 0.0, idx, self.strengths)

    # -- active sets --
    def active_set(self, u, g, halo=2):
        """Free nodes that can move: off the wells or with a nonzero subgradient, plus a halo."""
        _, delta = _contact(u, self.p)
        moving = (delta > 0) | np.any(g != 0.0, axis=-1)
        moving &= self.free
        grown = moving.copy()
        for _ in range(halo):
            nb = grown.copy()
            for a in range(grown.ndim):
                lo = [slice(None)] * grown.ndim
                hi = [slice(None)] * grown.ndim
                lo[a] = slice(0, -1)
                hi[a] = slice(1, None)
                nb[tuple(lo)] |= grown[tuple(hi)]
                nb[tuple(hi)] |= grown[tuple(lo)]
            grown = nb
        grown &= self.free
        if grown.sum() > 0.6 * len(self.free_ids):
            return self.free_ids
        return np.flatnonzero(grown.ravel())

    # -- clamping --
    def crossing_clamp(self, old, trial, old_contact):
        """Nodes whose step passes over (or right next to) their nearest well land on it."""
        idx, delta = old_contact
        a = self.wells[idx]
        step = trial - old
        ss = np.sum(step * step, axis=-1)
        t = np.clip(np.sum((a - old) * step, axis=-1) / np.where(ss > 0, ss, 1.0), 0.0, 1.0)
        closest = old + t[..., None] * step
        miss = np.sqrt(np.sum((closest - a) ** 2, axis=-1))
        hit = (ss > 0) & (t < 1.0) & (miss <= np.maximum(self.snap_tol, 0.25 * delta))
        end_near = _contact(trial, self.p)[1] < self.snap_tol
        hit |= end_near & (ss > 0)
        if not np.any(hit):
            return trial, 0
        out = trial.copy()
        out[hit] = a[hit]
        return out, int(hit.sum())

    def snap_sweep_local(self, loc: _Local, uA, e_now):
        idx, delta = _contact(uA, self.p)
        cand = (delta > 0) & (delta < self.snap_tol)
        if not np.any(cand):
            return uA, e_now, 0
        out = uA.copy()
        out[cand] = self.wells[idx[cand]]
        e_new = loc.energy(out)
        if e_new <= e_now:
            return out, e_new, int(cand.sum())
        return uA, e_now, 0

    def snap_sweep(self, u, e_now):
        """Energy-guarded clamping of free nodes within snap_tol of a well."""
        loc = _Local(self, self.free_ids, u.reshape(-1, self.m))
        uA = u.reshape(-1, self.m)[self.free_ids]
        e_loc = loc.energy(uA)
        uA2, e_loc2, n = self.snap_sweep_local(loc, uA, e_loc)
        if not n:
            return u, e_now, 0
        out = u.reshape(-1, self.m).copy()
        out[self.free_ids] = uA2
        return out.reshape(u.shape), self.E(out.reshape(u.shape)), n

    # -- main loop --
    def run(self, u, smoothing=0.0, max_iters=None, trace=None, snaps=None, stage="true", cycle=400):
        """Active-set cycles of Barzilai-Borwein descent with monotone backtracking.

        Every cycle restricts the unknowns to the nodes that can move and
        checks the full projected gradient at its end.
        """
        cfg = self.cfg
        max_iters = cfg.max_iters if max_iters is None else max_iters
        shape = u.shape
        u = u.reshape(-1, self.m).copy()
        e = self.E(u.reshape(shape), smoothing)
        g_full = self.pgrad(u.reshape(shape), smoothing)
        gnorm = float(np.max(np.abs(g_full))) if g_full.size else 0.0
        if trace is not None and not trace:
            trace.append(e)
        spec = self.f.spec
        tau0 = spec.h ** (2 - spec.n) / (4.0 * spec.n)
        tau = tau0
        it = 0
        status = "max_iters"
        best, since_best = e, 0
        prev_active = None
        while True:
            if gnorm <= cfg.grad_tol:
                status = "converged"
                break
            if it >= max_iters:
                break
            active = self.active_set(u.reshape(shape), g_full)
            loc = _Local(self, active, u)
            uA = u[active]
            e_loc = loc.energy(uA, smoothing)
            offset = e - e_loc
            contact = None if smoothing else _contact(uA, self.p)
            # the semi-implicit step keeps the potential force explicit in its right-hand side
            prox = self.use_prox and not smoothing and cfg.scheme != SEMI_IMPLICIT
            if prox:
                gA, sA = loc.grad(uA, 0.0, contact, split=True)
            else:
                gA = sA = loc.grad(uA, smoothing, contact)
            gl = float(np.max(np.abs(gA))) if gA.size else 0.0
            stop_cycle = min(max_iters, it + cycle)
            local_status = "cycle"
            while it < stop_cycle:
                if gl <= cfg.grad_tol:
                    local_status = "local_converged"
                    break
                it += 1
                accepted = False
                # the last few steps of a cycle are short ones, which damp the
                # high-frequency error that long BB steps leave behind
                short = cfg.scheme != SEMI_IMPLICIT and it > stop_cycle - SMOOTHING_STEPS
                step = tau0 if short else tau
                for _ in range(60):
                    if cfg.scheme == SEMI_IMPLICIT:
                        trial = self._implicit_step(loc, uA, gA, step)
                    elif prox:
                        trial = loc.prox(uA - step * sA, step, contact)
                    else:
                        trial = uA - step * gA
                    candidates = []
                    if self.clamp and not smoothing and not prox:
                        clamped, nclamp = self.crossing_clamp(uA, trial, contact)
                        if nclamp:
                            candidates.append(clamped)
                    candidates.append(trial)
                    for cand in candidates:
                        if not np.all(np.isfinite(cand)):
                            continue
                        try:
                            e_trial = loc.energy(cand, smoothing)
                        except NonFiniteEnergy:
                            continue
                        if e_trial <= e_loc:
                            accepted = True
                            break
                    if accepted:
                        break
                    step *= 0.5
                    if step < 1e-14 * tau0:
                        break
                if not short:
                    tau = step
                if not accepted:
                    local_status = "stalled"
                    break
                new_contact = None if smoothing else _contact(cand, self.p)
                if prox:
                    g_new, s_new = loc.grad(cand, 0.0, new_contact, split=True)
                else:
                    g_new = s_new = loc.grad(cand, smoothing, new_contact)
                s = cand - uA
                y = s_new - sA
                uA, e_loc, gA, sA, contact = cand, e_trial, g_new, s_new, new_contact
                nsnap = 0
                if self.clamp and not smoothing and it % cfg.snap_every == 0:
                    uA, e_loc, nsnap = self.snap_sweep_local(loc, uA, e_loc)
                    if nsnap:
                        contact = _contact(uA, self.p)
                        if prox:
                            gA, sA = loc.grad(uA, 0.0, contact, split=True)
                        else:
                            gA = sA = loc.grad(uA, smoothing, contact)
                e = offset + e_loc
                if trace is not None:
                    trace.append(e)
                if snaps is not None:
                    snaps.append(nsnap)
                gl = float(np.max(np.abs(gA)))
                if e_loc < best - offset:
                    best, since_best = e_loc + offset, 0
                else:
                    since_best += 1
                    if since_best >= STALL_WINDOW:
                        local_status = "stalled"
                        break
                if cfg.scheme == SEMI_IMPLICIT:
                    tau = min(2.0 * tau, 2.0 ** 20 * tau0)
                    continue
                # Barzilai-Borwein step, alternating the two formulas
                sy = float(np.sum(s * y))
                if sy > 0:
                    tau = float(np.sum(s * s)) / sy if it % 2 else sy / float(np.sum(y * y))
                else:
                    tau = 2.0 * tau
                tau = min(max(tau, 1e-6 * tau0), 1e6 * tau0)
            u[active] = uA
            e = self.E(u.reshape(shape), smoothing)
            g_full = self.pgrad(u.reshape(shape), smoothing)
            gnorm = float(np.max(np.abs(g_full)))
            log.debug("cycle end: it=%d active=%d |g|=%.3e local=%s", it, len(active), gnorm, local_status)
            if gnorm <= cfg.grad_tol:
                status = "converged"
                break
            same = prev_active is not None and np.array_equal(prev_active, active)
            if local_status == "stalled" and (same or len(active) == len(self.free_ids)):
                status = "stalled"
                break
            if local_status == "stalled":
                since_best = 0
            prev_active = active
        return u.reshape(shape), e, gnorm, it, status

    def _implicit_step(self, loc: _Local, uA, gA, tau):
        """(I + tau K) u_new = u - tau (g - K u) on the active nodes: Laplacian implicit."""
        cache = getattr(loc, "lu", None)
        if cache is None:
            cache = loc.lu = {}
        if tau not in cache:
            if len(cache) > 8:
                cache.clear()
            K = self._stiffness(loc)
            n = K.shape[0]
            cache[tau] = splu((sp.identity(n, format="csc") + tau * K).tocsc())
        K = self._stiffness(loc)
        rhs = uA - tau * (gA - K @ uA)
        return cache[tau].solve(rhs)

    def _stiffness(self, loc: _Local):
        if getattr(loc, "K", None) is not None:
            return loc.K
        k = loc.k
        rows, cols, vals = [], [], []
        for x, y in ((loc.ep, loc.eq), (loc.eq, loc.ep)):
            ok = x < k
            rows.append(x[ok])
            cols.append(x[ok])
            vals.append(loc.ew[ok])
            both = ok & (y < k)
            rows.append(x[both])
            cols.append(y[both])
            vals.append(-loc.ew[both])
        loc.K = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                              shape=(k, k)).tocsr()
        return loc.K


def minimize(f: VectorField, p: Potential, cfg: MinimizeConfig = MinimizeConfig()) -> MinimizeResult:
    """Descend from ``f`` with frozen Dirichlet nodes.

    With an ``epsilon_smoothing`` policy the smoothed surrogate energy is
    minimized first (``surrogate_trace``) and the result polished on the true
    energy.  ``energy_trace`` always refers to the true energy and is
    nonincreasing.
    """
    d = _Descent(f, p, cfg)
    u = f.values.copy()
    surrogate = []
    policy = cfg.resolved_policy(p)
    if policy.mode == EPSILON_SMOOTHING and cfg.surrogate_iters > 0:
        u, _, _, _, _ = d.run(u, smoothing=policy.eps_reg, max_iters=cfg.surrogate_iters,
                              trace=surrogate, stage="surrogate")
    trace, snaps = [], []
    if d.clamp:
        u, e0, n0 = d.snap_sweep(u, d.E(u))
    u, e, gnorm, it, status = d.run(u, trace=trace, snaps=snaps)
    out = f.with_values(u)
    out.meta.update({"energy": e, "status": status})
    resid, _ = el_residual(out, p, d.snap_tol)
    log.debug("minimize: %s after %d iterations, |g| = %.3e", status, it, gnorm)
    return MinimizeResult(out, trace, gnorm, resid, snaps, it, status == "converged", status, surrogate)


def coarsen(f: VectorField, factor: int) -> VectorField:
    """Subsample every ``factor``-th node (grid sizes must be compatible)."""
    if any((e - 1) % factor for e in f.spec.extents):
        raise ValueError(f"extents {f.spec.extents} not coarsenable by {factor}")
    sl = tuple(slice(None, None, factor) for _ in range(f.spec.n))
    spec = GridSpec(f.spec.n, tuple((e - 1) // factor + 1 for e in f.spec.extents), f.spec.h * factor,
                    f.spec.origin)
    return VectorField(spec, f.values[sl], f.dirichlet_mask[sl], dict(f.meta))


def minimize_multilevel(f: VectorField, p: Potential, cfg: MinimizeConfig = MinimizeConfig(),
                        levels: int = 3, coarse_iters: int = None) -> MinimizeResult:
    """Coarse-to-fine continuation: solve on subsampled grids and interpolate up.

    Frozen data at each level is taken from ``f`` itself, so the boundary
    conditions are exact on every level.
    """
    levels = max(1, int(levels))
    while levels > 1 and any((e - 1) % 2 ** (levels - 1) for e in f.spec.extents):
        levels -= 1
    current = None
    for lev in range(levels - 1, 0, -1):
        target = coarsen(f, 2 ** lev)
        if current is not None:
            target = interpolate_onto(current, target)
        scale = 2.0 ** (lev * f.spec.n)
        lcfg = replace(cfg, grad_tol=cfg.grad_tol * scale,
                       max_iters=cfg.max_iters if coarse_iters is None else coarse_iters)
        current = minimize(target, p, lcfg).field
    if current is None:
        return minimize(f, p, cfg)
    # the surrogate stage has already placed the free boundary on the coarse levels;
    # the finest level is only polished on the true energy
    return minimize(interpolate_onto(current, f), p, replace(cfg, surrogate_iters=0))


# -- one-dimensional connections --------------------------------------------------

@dataclass
class Connection:
    x: np.ndarray
    profile: np.ndarray
    support_width: float
    support: tuple
    equipartition_defect: float
    energy: float
    result: MinimizeResult


def connect_1d(p: Potential, i: int, j: int, half_length: float, nodes: int,
               cfg: MinimizeConfig = None, levels: int = 4) -> Connection:
    """Minimize the 1D energy on [-L, L] with ends frozen at a_i and a_j (0-based)."""
    if p.n_wells < 2:
        raise ValueError("connections need at least two wells")
    if i == j:
        raise ValueError("connection endpoints must be distinct wells")
    if cfg is None:
        # a coarse snap distorts the tail, which decays like |x - x0|^kappa
        tight = (1e-14 if p.alpha > 1.0 else 1e-10) * p.r0_well
        # below alpha = 1 the proximal map of t^alpha is nonconvex and rejects long
        # steps in the tail, so 1D layers descend faster on the subgradient
        cfg = MinimizeConfig(grad_tol=1e-13, max_iters=50000, snap_tol=tight,
                             prox=None if p.alpha >= 1.0 else False)
    spec = GridSpec.centered(1, nodes, half_length)
    f0 = init_field(spec, p.m, "radial_connection_bc", values=(p.wells[i], p.wells[j]))
    res = minimize_multilevel(f0, p, cfg, levels=levels)
    u = res.field.values
    snap_tol = cfg.resolved_snap_tol(p)
    _, delta = _contact(u, p)
    inside = np.flatnonzero(delta > snap_tol)
    if inside.size == 0:
        raise DomainTooSmall("no transition layer found")
    lo, hi = int(inside[0]), int(inside[-1])
    if lo <= 1 or hi >= nodes - 2:
        raise DomainTooSmall("transition layer reaches the boundary ring; enlarge half_length")
    h = spec.h
    x = spec.axis_coords(0)
    # centred derivative strictly inside the layer, away from the two free-boundary nodes
    k = np.arange(lo + 1, hi)
    if k.size:
        du = (u[k + 1] - u[k - 1]) / (2 * h)
        defect = float(np.max(np.abs(0.5 * np.sum(du * du, axis=-1) - p.W(u[k]))))
    else:
        defect = 0.0
    return Connection(x, u, (hi - lo + 1) * h, (float(x[lo]), float(x[hi])), defect,
                      energy(res.field, p), res)
