"""Minimize and analyze pipelines behind the command-line subcommands.

Every ``run_*`` function writes its artifacts into ``out_dir`` and returns an
:class:`Outcome` listing them together with the gates evaluated under
``--check``.
"""
from __future__ import annotations

import logging
import math
import os
from dataclasses import dataclass, field, replace

import numpy as np

from . import census as cen
from . import interface as itf
from . import monotonicity as mono
from .config import RunConfig
from .errors import ConfigError
from .grid import GridSpec, VectorField, init_field, load_snapshot, save_snapshot
from .minimizer import (MinimizeConfig, connect_1d, el_residual, energy, minimize,
                        minimize_multilevel)
from .potential import Potential, make_modulation
from .report import label, loglog_svg, lines_svg, write_csv

log = logging.getLogger(__name__)


@dataclass
class Gate:
    name: str
    passed: bool
    value: float
    threshold: str
    blocking: bool = True

    def as_dict(self):
        return {"name": self.name, "passed": bool(self.passed), "value": _plain(self.value),
                "threshold": self.threshold, "blocking": self.blocking}


def _plain(v):
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    v = float(v)
    return v if math.isfinite(v) else str(v)


@dataclass
class Outcome:
    artifacts: list = field(default_factory=list)
    gates: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)

    def gate(self, name, passed, value, threshold, blocking=True):
        self.gates.append(Gate(name, bool(passed), value, threshold, blocking))

    @property
    def failed(self):
        return [g for g in self.gates if g.blocking and not g.passed]


# -- building blocks --------------------------------------------------------------

def build_potential(cfg: RunConfig, alpha=None) -> Potential:
    pc = cfg.potential
    params = dict(pc.modulation_params)
    mod = make_modulation(pc.modulation, **params)
    return Potential(np.asarray(pc.wells, dtype=float), pc.alpha if alpha is None else alpha, mod,
                     pc.g_lower_bound)


def build_spec(cfg: RunConfig, nodes=None) -> GridSpec:
    gc = cfg.grid
    if gc is None:
        raise ConfigError("grid", "required key is missing")
    if nodes is None:
        return GridSpec(gc.n, gc.nodes, gc.h, gc.origin)
    # node-count sweeps keep the physical box fixed
    width = gc.h * (gc.nodes[0] - 1)
    return GridSpec(gc.n, (int(nodes),) * gc.n, width / (int(nodes) - 1), gc.origin)


def solver_config(cfg: RunConfig) -> MinimizeConfig:
    s = cfg.minimize
    return MinimizeConfig(scheme=s.scheme, max_iters=s.max_iters, grad_tol=s.grad_tol, snap_tol=s.snap_tol,
                          snap_every=s.snap_every, seed=cfg.seed, clamp=s.clamp,
                          surrogate_iters=s.surrogate_iters, prox=s.prox)


def _resolve(path, base_dir):
    return path if os.path.isabs(path) or base_dir is None else os.path.join(base_dir, path)


def initial_field(cfg: RunConfig, p: Potential, base_dir=None, spec=None) -> VectorField:
    ic = cfg.init
    if ic.snapshot:
        path = _resolve(ic.snapshot, base_dir)
        if not os.path.exists(path):
            raise ConfigError("init.snapshot", f"no such file: {path}")
        f = load_snapshot(path)
        if cfg.grid is not None:
            want = build_spec(cfg)
            if tuple(f.spec.extents) != tuple(want.extents) or not np.isclose(f.spec.h, want.h):
                raise ConfigError("init.snapshot", "snapshot grid does not match the grid section")
        if f.m != p.m:
            raise ConfigError("init.snapshot", f"snapshot has m={f.m}, wells live in R^{p.m}")
        return f
    spec = build_spec(cfg) if spec is None else spec
    return init_field(spec, p.m, ic.mode, p.wells, well=ic.well, seed=cfg.seed, blend=ic.blend,
                      values=ic.values, spread=ic.spread, offset=ic.offset)


def solve(cfg: RunConfig, p: Potential, base_dir=None, spec=None, polish=False):
    """Minimized field, or the loaded snapshot as is unless ``polish`` is set."""
    f0 = initial_field(cfg, p, base_dir, spec)
    if cfg.init.snapshot and not polish:
        return f0, None
    mcfg = solver_config(cfg)
    if cfg.minimize.levels > 1:
        res = minimize_multilevel(f0, p, mcfg, levels=cfg.minimize.levels)
    else:
        res = minimize(f0, p, mcfg)
    return res.field, res


def _snap_tol(cfg: RunConfig, p: Potential) -> float:
    return solver_config(cfg).resolved_snap_tol(p)


def _center(cfg: RunConfig, spec: GridSpec):
    c = cfg.analysis.center
    return tuple(spec.center()) if c is None else tuple(c)


def _summary_csv(path, pairs):
    return write_csv(path, ["key", "value"], [(k, v) for k, v in pairs])


# -- minimize ------------------------------------------------------------------------------

def run_minimize(cfg: RunConfig, out_dir, base_dir=None) -> Outcome:
    out = Outcome()
    p = build_potential(cfg)
    f, res = solve(cfg, p, base_dir, polish=True)
    snap = os.path.join(out_dir, "field.acfb")
    save_snapshot(f, snap, p)
    out.artifacts.append(snap)
    rows = [(k, e, res.snap_count_trace[k] if k < len(res.snap_count_trace) else -1)
            for k, e in enumerate(res.energy_trace)]
    out.artifacts.append(write_csv(os.path.join(out_dir, "energy_trace.csv"),
                                   ["iteration", "energy", "snap_count"], rows))
    if res.surrogate_trace:
        out.artifacts.append(write_csv(os.path.join(out_dir, "surrogate_trace.csv"),
                                       ["iteration", "energy"], list(enumerate(res.surrogate_trace))))
    delta = p.distances(f.values).min(axis=-1)
    free = f.free
    pairs = [("energy", energy(f, p)), ("final_grad_norm", res.final_grad_norm),
             ("el_residual_interior", res.el_residual_interior), ("iterations", res.iterations),
             ("status", res.status), ("contact_nodes", int(np.count_nonzero(delta[free] == 0.0))),
             ("free_nodes", int(np.count_nonzero(free)))]
    out.gate("converged", res.converged, res.final_grad_norm, f"|g| <= {cfg.minimize.grad_tol:g}")
    ref = cfg.analysis.reference
    if ref is not None:
        pairs += _obstacle_gates(out, f, ref)
    if cfg.analysis.dead_core is not None:
        pairs.append(("dead_core_fraction", _dead_core(out, f, p, cfg, out_dir)))
    out.artifacts.append(_summary_csv(os.path.join(out_dir, "minimize_summary.csv"), pairs))
    out.summary = dict(pairs)
    return out


def _obstacle_gates(out: Outcome, f: VectorField, ref):
    """Compare with (x - c)_+^2 / 2, c fixed by the right boundary value."""
    if f.spec.n != 1 or f.m != 1:
        raise ConfigError("analysis.reference", "obstacle_1d needs a scalar 1D field")
    x = f.spec.axis_coords(0)
    u = f.values[:, 0]
    c = x[-1] - math.sqrt(2.0 * u[-1])
    exact = np.maximum(x - c, 0.0) ** 2 / 2.0
    err = float(np.max(np.abs(u - exact)))
    zero = np.flatnonzero(u == 0.0)
    end = float(x[zero[-1]]) if zero.size else float("nan")
    tol = ref.contact_tol_h * f.spec.h
    out.gate("obstacle_sup_error", err <= ref.sup_tol, err, f"<= {ref.sup_tol:g}")
    out.gate("obstacle_contact_endpoint", abs(end - c) <= tol, abs(end - c), f"<= {tol:g}")
    return [("reference_free_boundary", c), ("sup_error", err), ("contact_endpoint", end)]


# -- analyze -------------------------------------------------------------------------------

def default_radii(spec: GridSpec, center, count=11):
    lo = np.asarray(spec.origin)
    hi = np.asarray(spec.upper())
    c = np.asarray(center, dtype=float)
    r_max = 0.8 * float(np.min(np.minimum(c - lo, hi - c)))
    return tuple(np.geomspace(r_max / 10.0, r_max, count))


def dead_core_fraction(f: VectorField, p: Potential, center, radius):
    ball = itf.node_distance(f.spec, center) <= radius
    delta = p.distances(f.values).min(axis=-1)
    exact = int(np.count_nonzero(delta[ball] == 0.0))
    total = int(np.count_nonzero(ball))
    return exact, total


def _dead_core(out: Outcome, f: VectorField, p: Potential, cfg: RunConfig, out_dir):
    dc = cfg.analysis.dead_core
    spec = f.spec
    half = 0.5 * (spec.upper()[0] - spec.origin[0])
    radius = dc.radius_fraction * half
    exact, total = dead_core_fraction(f, p, _center(cfg, spec), radius)
    frac = exact / total if total else 0.0
    out.artifacts.append(write_csv(os.path.join(out_dir, "dead_core.csv"),
                                   ["radius", "nodes", "exact_nodes", "fraction"],
                                   [[radius, total, exact, frac]]))
    if dc.expect == "attained":
        out.gate("dead_core_fraction", frac >= dc.min_fraction, frac, f">= {dc.min_fraction:g}")
    else:
        out.gate("dead_core_absent", exact == 0, frac, "== 0")
    return frac


def run_analyze(cfg: RunConfig, out_dir, base_dir=None) -> Outcome:
    out = Outcome()
    p = build_potential(cfg)
    f, _ = solve(cfg, p, base_dir)
    spec = f.spec
    n = spec.n
    center = _center(cfg, spec)
    ac = cfg.analysis
    radii = np.asarray(ac.radii if ac.radii is not None else default_radii(spec, center))
    gammas = list(ac.gammas) if ac.gammas is not None else itf.default_gammas(p)
    d = itf.delta_field(f, p)
    labels = itf.contact_labels(d)
    rep = itf.interface_measures(d, center, radii, gammas, p.n_wells)
    blen = itf.boundary_length(labels, spec, center, radii)
    benergy = itf.ball_energy(f, p, center, radii)

    header = ["r", "measure_I0"] + [f"measure_Igamma_{label(g)}" for g in rep.measure_Igamma]
    header += [f"contact_{k + 1}" for k in range(p.n_wells)] + ["boundary_len", "ball_energy"]
    rows = []
    for k, r in enumerate(rep.radii):
        row = [r, rep.measure_I0[k]] + [v[k] for v in rep.measure_Igamma.values()]
        row += list(rep.contact[:, k]) + [blen[k], benergy[k]]
        rows.append(row)
    out.artifacts.append(write_csv(os.path.join(out_dir, "interface.csv"), header, rows))

    lo, hi = ac.slope_range if ac.slope_range is not None else (n - 1 - 0.2, n - 1 + 0.2)
    fit_rows, series = [], []
    for name, vals in (("measure_I0", rep.measure_I0), ("boundary_len", blen), ("ball_energy", benergy)):
        try:
            fit = itf.scaling_fit(rep.radii, vals)
        except Exception as exc:  # DegenerateFit
            log.warning("%s: %s", name, exc)
            fit = itf.Fit(float("nan"), float("nan"), float("nan"), 0, len(vals))
        ok = lo <= fit.slope <= hi
        fit_rows.append([name, fit.slope, fit.intercept, fit.r2, fit.n_used, fit.dropped, lo, hi, ok])
        out.gate(f"slope_{name}", ok, fit.slope, f"in [{lo:g}, {hi:g}]")
        series.append({"name": name, "x": rep.radii, "y": vals, "slope": fit.slope, "intercept": fit.intercept})
        if name == "boundary_len":
            bl_fit = fit
    out.artifacts.append(write_csv(os.path.join(out_dir, "fits.csv"),
                                   ["quantity", "slope", "intercept", "r2", "n_used", "dropped",
                                    "slope_lo", "slope_hi", "passed"], fit_rows))
    out.artifacts.append(loglog_svg(os.path.join(out_dir, "analyze_loglog.svg"), series,
                                    title="scaling about the centre", ylabel="measure"))

    # lower-bound positivity of the free-boundary length
    if math.isfinite(bl_fit.intercept):
        ref = ac.lower_bound_factor * math.exp(bl_fit.intercept) * rep.radii ** (n - 1)
        ratio = float(np.min(blen / ref))
        out.gate("boundary_len_lower_bound", ratio >= 1.0, ratio,
                 f"boundary_len >= {ac.lower_bound_factor:g} exp(intercept) r^{n - 1}")

    if p.n_wells >= 2:
        tp = itf.two_phase_check(labels, spec, center, rep.radii, ac.c_floor, p.n_wells)
        floor = ac.c_floor * tp.radii ** n
        tp_rows = [[r, a, b, fl, b >= fl] for r, a, b, fl in zip(tp.radii, tp.first, tp.second, floor)]
        out.artifacts.append(write_csv(os.path.join(out_dir, "two_phase.csv"),
                                       ["r", "first_phase", "second_phase", "floor", "ok"], tp_rows))
        out.gate("two_phase", tp.passed, tp.first_pass_index, f"second >= {ac.c_floor:g} r^{n} above first pass")

    if ac.dead_core is not None:
        _dead_core(out, f, p, cfg, out_dir)
    out.summary = {g.name: g.value for g in out.gates}
    return out


# -- weiss -------------------------------------------------------------------------------

def _probe_point(f: VectorField, p: Potential, probe, snap_tol):
    if probe.x0 is not None:
        return np.asarray(probe.x0, dtype=float)
    idx = mono.find_free_boundary_node(f, p, probe.near, snap_tol)
    return np.asarray(f.spec.origin) + f.spec.h * np.asarray(idx)


def run_weiss(cfg: RunConfig, out_dir, base_dir=None) -> Outcome:
    wc = cfg.analysis.weiss
    if wc is None:
        raise ConfigError("analysis.weiss", "required for the weiss subcommand")
    out = Outcome()
    p = build_potential(cfg)
    f, _ = solve(cfg, p, base_dir)
    h = f.spec.h
    rows, probe_rows, series = [], [], []
    for k, probe in enumerate(wc.probes):
        x0 = _probe_point(f, p, probe, 0.0)
        well = mono._well_at(f, p, x0)
        r_adm = mono.admissible_radius(f, p, x0, well, wc.admissible_fraction)
        if wc.radii is not None:
            radii = np.asarray(wc.radii)
        else:
            r_max = wc.r_max if wc.r_max is not None else r_adm * (1 - 1e-9)
            radii = mono.radii_ladder(wc.r_min_h * h, r_max, wc.ratio)
        if len(radii) < 2:
            raise ConfigError(f"analysis.weiss.probes[{k}]", "fewer than two admissible radii about the probe")
        tr = mono.weiss_trace(f, p, x0, radii, well, wc.c_q)
        for j, r in enumerate(tr.radii):
            last = j == len(tr.radii) - 1
            rows.append([k, r, tr.values[j], float("nan") if last else tr.discrete_derivative[j],
                         tr.error_budget[j], float("nan") if last else tr.slack[j],
                         float("nan") if last else tr.step_budget[j]])
        defect = float(np.max(np.abs(tr.values - wc.target))) if wc.target is not None else float("nan")
        worst = float(np.min(tr.discrete_derivative + tr.slack)) if len(tr.slack) else 0.0
        worst_b = float(np.min(tr.discrete_derivative + tr.slack + tr.step_budget)) if len(tr.slack) else 0.0
        probe_rows.append([k] + list(np.pad(x0, (0, 2 - len(x0)), constant_values=np.nan)) +
                          [well + 1, r_adm, len(radii), tr.monotone_strict, tr.monotone_with_budget,
                           worst, worst_b, defect])
        if wc.gate == "strict":
            out.gate(f"probe{k}_monotone_strict", tr.monotone_strict, worst, "dW + slack >= 0")
        elif wc.gate == "budget":
            out.gate(f"probe{k}_monotone_budget", tr.monotone_with_budget, worst_b, "dW + slack + budget >= 0")
        else:
            out.gate(f"probe{k}_constancy", defect <= wc.target_tol, defect,
                     f"|W - {wc.target:.17g}| <= {wc.target_tol:g}")
        series.append({"name": f"probe {k}", "x": tr.radii, "y": tr.values})
    out.artifacts.append(write_csv(os.path.join(out_dir, "weiss.csv"),
                                   ["probe", "r", "W", "dW_forward", "error_budget", "slack", "step_budget"],
                                   rows))
    out.artifacts.append(write_csv(os.path.join(out_dir, "weiss_probes.csv"),
                                   ["probe", "x0_1", "x0_2", "well", "r_admissible", "n_radii", "monotone_strict",
                                    "monotone_budget", "min_dW_plus_slack", "min_dW_plus_slack_budget",
                                    "constancy_defect"], probe_rows))
    out.artifacts.append(lines_svg(os.path.join(out_dir, "weiss.svg"), series, title="Weiss energy",
                                   xlabel="r", ylabel="W", logx=True))
    out.summary = {g.name: g.value for g in out.gates}
    return out


# -- growth and connections ----------------------------------------------------------------

def _connection(cfg: RunConfig, p: Potential):
    cc = cfg.analysis.connect
    if cc is None:
        raise ConfigError("analysis.connect", "required for one-dimensional connections")
    if p.m < 1:
        raise ConfigError("potential.wells", "wells must be points")
    mcfg = None
    if "minimize" in cfg.source:
        mcfg = solver_config(cfg)
        if mcfg.snap_tol is None:
            tight = (1e-14 if p.alpha > 1.0 else 1e-10) * p.r0_well
            mcfg = replace(mcfg, snap_tol=tight)
    con = connect_1d(p, cc.i, cc.j, cc.half_length, cc.nodes, mcfg, cc.levels)
    snap = mcfg.snap_tol if mcfg is not None else (1e-14 if p.alpha > 1.0 else 1e-10) * p.r0_well
    return con, snap


def _growth_rows(f, p, gc, snap_tol, out, prefix=""):
    rows, fits, series = [], [], []
    for k, probe in enumerate(gc.probes):
        if probe.x0 is not None:
            idx = f.spec.nearest_node(probe.x0)
        else:
            idx = mono.find_free_boundary_node(f, p, probe.near, snap_tol)
        x0 = np.asarray(f.spec.origin) + f.spec.h * np.asarray(idx)
        radii = mono.default_growth_radii(f, p, x0, gc.cap_fraction, gc.ratio)
        gp = mono.growth_probe(f, p, idx, radii, gc.tol, snap_tol, gc.cap_fraction)
        for r, sd, sg in zip(gp.radii, gp.sup_delta, gp.sup_grad):
            rows.append([k, r, sd, sg])
        fits.append([k, float(x0[0]), float(x0[1]) if len(x0) > 1 else float("nan"), gp.fit_delta.slope,
                     gp.fit_delta.intercept, gp.fit_delta.r2, gp.fit_grad.slope, gp.kappa, gp.tol,
                     gp.grad_at_x0, gp.grad_small, gp.passed])
        out.gate(f"{prefix}probe{k}_exponent", gp.passed, gp.fit_delta.slope,
                 f"|slope - {gp.kappa:.6g}| <= {gp.tol:g}")
        out.gate(f"{prefix}probe{k}_grad_small", gp.grad_small, gp.grad_at_x0, "<= 10 h^(kappa-1)",
                 blocking=False)
        series.append({"name": f"{prefix}probe {k} sup delta", "x": gp.radii, "y": gp.sup_delta,
                       "slope": gp.fit_delta.slope, "intercept": gp.fit_delta.intercept})
    return rows, fits, series


GROWTH_FIT_HEADER = ["probe", "x0_1", "x0_2", "slope_delta", "intercept_delta", "r2_delta", "slope_grad",
                     "kappa", "tol", "grad_at_x0", "grad_small", "passed"]


def run_growth(cfg: RunConfig, out_dir, base_dir=None) -> Outcome:
    gc = cfg.analysis.growth
    if gc is None:
        raise ConfigError("analysis.growth", "required for the growth subcommand")
    out = Outcome()
    p = build_potential(cfg)
    if cfg.analysis.connect is not None:
        con, snap_tol = _connection(cfg, p)
        f = con.result.field
    else:
        f, _ = solve(cfg, p, base_dir)
        snap_tol = 0.0
    rows, fits, series = _growth_rows(f, p, gc, snap_tol, out)
    out.artifacts.append(write_csv(os.path.join(out_dir, "growth.csv"), ["probe", "r", "sup_delta", "sup_grad"],
                                   rows))
    out.artifacts.append(write_csv(os.path.join(out_dir, "growth_fits.csv"), GROWTH_FIT_HEADER, fits))
    out.artifacts.append(loglog_svg(os.path.join(out_dir, "growth.svg"), series, title="growth about x0",
                                    ylabel="sup delta"))
    out.summary = {g.name: g.value for g in out.gates}
    return out


def run_connect1d(cfg: RunConfig, out_dir, base_dir=None) -> Outcome:
    out = Outcome()
    p = build_potential(cfg)
    con, _ = _connection(cfg, p)
    delta = p.distances(con.profile).min(axis=-1)
    header = ["x"] + [f"u_{c + 1}" for c in range(p.m)] + ["delta"]
    rows = [[x] + list(u) + [d] for x, u, d in zip(con.x, con.profile, delta)]
    out.artifacts.append(write_csv(os.path.join(out_dir, "profile.csv"), header, rows))
    res = con.result
    pairs = [("support_lo", con.support[0]), ("support_hi", con.support[1]), ("support_width", con.support_width),
             ("equipartition_defect", con.equipartition_defect), ("energy", con.energy),
             ("status", res.status), ("final_grad_norm", res.final_grad_norm)]
    out.artifacts.append(_summary_csv(os.path.join(out_dir, "connect_summary.csv"), pairs))
    out.artifacts.append(lines_svg(os.path.join(out_dir, "profile.svg"),
                                   [{"name": f"u_{c + 1}", "x": con.x, "y": con.profile[:, c], "style": "-"}
                                    for c in range(p.m)], title="connection profile", xlabel="x"))
    out.gate("converged", res.converged, res.final_grad_norm, "solver converged")
    out.summary = dict(pairs)
    return out


# -- census -------------------------------------------------------------------------------

def t4_contact_measures(f: VectorField, p: Potential, cc: cen.CensusConfig, cs: cen.CubeCensus):
    """Exactly attained contact measure of the dominant well in every cube (nan if none)."""
    p_nodes, starts = cen._layout(f, cc)
    delta_d = itf.delta_field(f, p)
    vol = f.spec.cell_volume
    out = np.full(len(cs.classes), np.nan)
    for q, (idx, dom) in enumerate(zip(cs.index, cs.dominant)):
        if dom < 0:
            continue
        sl = tuple(slice(s + c * p_nodes, s + (c + 1) * p_nodes) for s, c in zip(starts, idx))
        hit = (delta_d.delta[sl] == 0.0) & (delta_d.nearest_well[sl] == dom)
        out[q] = np.count_nonzero(hit) * vol
    return out


def run_census(cfg: RunConfig, out_dir, base_dir=None) -> Outcome:
    cc = cfg.analysis.census
    if cc is None:
        raise ConfigError("analysis.census", "required for the census subcommand")
    out = Outcome()
    p = build_potential(cfg)
    f, _ = solve(cfg, p, base_dir)
    n = f.spec.n
    theta = cc.theta if cc.theta is not None else mono.select_nondegeneracy_constants(p, n)[0]
    if not theta < p.r0_well:
        raise ConfigError("analysis.census.theta", f"theta must be below r0_well = {p.r0_well:.6g}")
    center = _center(cfg, f.spec)
    base = cen.CensusConfig(cc.L, cc.k[0], theta, cc.epsilon, center)
    t4_floor = 0.9 * math.pi ** (n / 2) / math.gamma(n / 2 + 1) * (cc.L / 4) ** n
    totals_rows = []
    for k in cc.k:
        ccfg = replace(base, k=k)
        cs = cen.census(f, p, ccfg)
        contact = t4_contact_measures(f, p, ccfg, cs)
        header = ["index"] + ["i", "j", "l"][:n] + [f"sigma_{w + 1}" for w in range(p.n_wells)]
        header += ["class", "dominant", "dominant_contact"]
        rows = []
        for q in range(len(cs.classes)):
            rows.append([q] + list(cs.index[q]) + list(cs.sigma[q]) +
                        [f"T{cs.classes[q]}", cs.dominant[q] + 1 if cs.dominant[q] >= 0 else 0, contact[q]])
        out.artifacts.append(write_csv(os.path.join(out_dir, f"census_k{k}.csv"), header, rows))
        total = sum(cs.totals.values())
        expect_t1 = (2 * k) ** n - (2 * k - 2) ** n
        t4 = cs.classes == cen.T4
        t4_min = float(np.min(contact[t4])) if np.any(t4) else float("nan")
        t4_ok = bool(np.all(contact[t4] >= t4_floor))
        totals_rows.append([k] + [cs.totals[c] for c in (cen.T1, cen.T2, cen.T3, cen.T4, cen.T5)] +
                           [cs.interface_count, total == (2 * k) ** n, cs.totals[cen.T1] == expect_t1,
                            len(cs.violations), t4_min, t4_floor])
        out.gate(f"k{k}_partition", total == (2 * k) ** n, total, f"== {(2 * k) ** n}")
        out.gate(f"k{k}_T1_count", cs.totals[cen.T1] == expect_t1, cs.totals[cen.T1], f"== {expect_t1}")
        out.gate(f"k{k}_T4_contact", t4_ok, t4_min, f">= {t4_floor:.6g}")
        # T4/T5 cubes leaving the theta ball downgrade the run without failing it
        out.gate(f"k{k}_T45_within_theta", not cs.violations, len(cs.violations), "== 0", blocking=False)
    out.artifacts.append(write_csv(os.path.join(out_dir, "census_totals.csv"),
                                   ["k", "T1", "T2", "T3", "T4", "T5", "interface_count", "partition_ok",
                                    "T1_formula_ok", "theta_violations", "T4_min_contact", "T4_contact_floor"],
                                   totals_rows))
    sc = cen.census_scaling(f, p, base, cc.k)
    bound = sc.bound if cc.max_slope is None else cc.max_slope
    verdict = sc.verdict if cc.max_slope is None or not math.isfinite(sc.slope) else (
        "pass" if sc.slope <= bound else "fail")
    out.artifacts.append(write_csv(os.path.join(out_dir, "census_scaling.csv"),
                                   ["L", "theta", "epsilon", "slope", "intercept", "bound", "verdict"],
                                   [[cc.L, theta, cc.epsilon, sc.slope, sc.intercept, bound, verdict]]))
    out.artifacts.append(loglog_svg(os.path.join(out_dir, "census.svg"),
                                    [{"name": "|T2|+|T3|+|T5|", "x": sc.k_list, "y": sc.counts, "slope": sc.slope,
                                      "intercept": sc.intercept}], title="cube census", xlabel="k",
                                    ylabel="count"))
    out.gate("census_slope", verdict in ("pass", "vacuous pass"), sc.slope, f"<= {bound:g}")
    out.summary = {g.name: g.value for g in out.gates}
    return out


# -- sweep ----------------------------------------------------------------------------------

def run_sweep(cfg: RunConfig, out_dir, base_dir=None) -> Outcome:
    sw = cfg.sweep
    if sw is None:
        raise ConfigError("sweep", "required for the sweep subcommand")
    out = Outcome()
    rows = []
    header = ["parameter", "value", "status", "energy", "final_grad_norm", "el_residual", "contact_fraction",
              "interface_measure", "support_width", "growth_slope", "kappa", "growth_passed"]
    for v in sw.values:
        alpha = v if sw.parameter == "alpha" else None
        p = build_potential(cfg, alpha)
        slope, passed, width = float("nan"), float("nan"), float("nan")
        if sw.target == "connect1d":
            con, snap_tol = _connection(cfg, p)
            f, res = con.result.field, con.result
            width = con.support_width
            if cfg.analysis.growth is not None:
                sub = Outcome()
                _, fits, _ = _growth_rows(f, p, cfg.analysis.growth, snap_tol, sub, prefix=f"{label(v)}_")
                slope = fits[0][3]
                passed = all(g.passed for g in sub.gates if g.blocking)
                out.gates.extend(sub.gates)
        else:
            spec = build_spec(cfg, int(v) if sw.parameter == "nodes" else None)
            f, res = solve(replace(cfg, init=replace(cfg.init, snapshot=None)), p, base_dir, spec)
        delta = p.distances(f.values).min(axis=-1)
        free = f.free
        resid, _ = el_residual(f, p, _snap_tol(cfg, p))
        rows.append([sw.parameter, v, res.status, energy(f, p), res.final_grad_norm, resid,
                     np.count_nonzero(delta[free] == 0.0) / max(np.count_nonzero(free), 1),
                     np.count_nonzero(delta > 0) * f.spec.cell_volume, width, slope, p.kappa, passed])
        out.gate(f"{label(v)}_converged", res.converged, res.final_grad_norm, "solver converged")
    out.artifacts.append(write_csv(os.path.join(out_dir, "sweep.csv"), header, rows))
    series = [{"name": "energy", "x": [r[1] for r in rows], "y": [r[3] for r in rows]}]
    out.artifacts.append(lines_svg(os.path.join(out_dir, "sweep.svg"), series, title=f"sweep over {sw.parameter}",
                                   xlabel=sw.parameter, ylabel="energy"))
    out.summary = {g.name: g.value for g in out.gates}
    return out


SUBCOMMANDS = {
    "minimize": run_minimize,
    "analyze": run_analyze,
    "weiss": run_weiss,
    "growth": run_growth,
    "census": run_census,
    "connect1d": run_connect1d,
    "sweep": run_sweep,
}
