"""JSON run configuration with key-path validation.

A run is described by one JSON document.  Every validation failure raises
:class:`ConfigError` naming the offending key path (``grid.h``,
``analysis.weiss.probes[1].near``, ...).  The only environment input is
``ACFB_OUTPUT_DIR``, which overrides the output directory.
"""
from __future__ import annotations

import hashlib
import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError

OUTPUT_ENV = "ACFB_OUTPUT_DIR"

_MISSING = object()


class _Section:
    """Dict wrapper that records which keys were read and reports key paths."""

    def __init__(self, data, path):
        if not isinstance(data, dict):
            raise ConfigError(path or "<root>", "expected a JSON object")
        self.data = data
        self.path = path
        self.seen = set()

    def sub(self, key):
        return f"{self.path}.{key}" if self.path else key

    def has(self, key):
        return key in self.data

    def raw(self, key, default=_MISSING):
        self.seen.add(key)
        if key not in self.data:
            if default is _MISSING:
                raise ConfigError(self.sub(key), "required key is missing")
            return default
        return self.data[key]

    def section(self, key, required=False):
        val = self.raw(key, _MISSING if required else None)
        return None if val is None else _Section(val, self.sub(key))

    def number(self, key, default=_MISSING, *, positive=False, nonneg=False, lo=None, hi=None):
        val = self.raw(key, default)
        if val is None:
            return None
        if isinstance(val, bool) or not isinstance(val, (int, float)) or not math.isfinite(val):
            raise ConfigError(self.sub(key), f"expected a finite number, got {val!r}")
        val = float(val)
        if positive and not val > 0:
            raise ConfigError(self.sub(key), f"must be positive, got {val!r}")
        if nonneg and val < 0:
            raise ConfigError(self.sub(key), f"must be nonnegative, got {val!r}")
        if lo is not None and val < lo:
            raise ConfigError(self.sub(key), f"must be >= {lo}, got {val!r}")
        if hi is not None and val > hi:
            raise ConfigError(self.sub(key), f"must be <= {hi}, got {val!r}")
        return val

    def integer(self, key, default=_MISSING, *, lo=None):
        val = self.raw(key, default)
        if val is None:
            return None
        if isinstance(val, bool) or not isinstance(val, int):
            raise ConfigError(self.sub(key), f"expected an integer, got {val!r}")
        if lo is not None and val < lo:
            raise ConfigError(self.sub(key), f"must be >= {lo}, got {val!r}")
        return val

    def boolean(self, key, default=_MISSING):
        val = self.raw(key, default)
        if not isinstance(val, bool):
            raise ConfigError(self.sub(key), f"expected true or false, got {val!r}")
        return val

    def choice(self, key, options, default=_MISSING):
        val = self.raw(key, default)
        if val not in options:
            raise ConfigError(self.sub(key), f"expected one of {sorted(options)}, got {val!r}")
        return val

    def string(self, key, default=_MISSING):
        val = self.raw(key, default)
        if val is not None and not isinstance(val, str):
            raise ConfigError(self.sub(key), f"expected a string, got {val!r}")
        return val

    def vector(self, key, default=_MISSING, length=None):
        val = self.raw(key, default)
        if val is None:
            return None
        return _vector(val, self.sub(key), length)

    def numbers(self, key, default=_MISSING, *, positive=False, nonempty=True):
        val = self.raw(key, default)
        if val is None:
            return None
        out = _vector(val, self.sub(key))
        if nonempty and not out:
            raise ConfigError(self.sub(key), "must not be empty")
        if positive and any(not v > 0 for v in out):
            raise ConfigError(self.sub(key), "entries must be positive")
        return out

    def finish(self):
        extra = sorted(set(self.data) - self.seen)
        if extra:
            raise ConfigError(self.sub(extra[0]), "unknown key")


def _vector(val, path, length=None):
    if isinstance(val, (int, float)) and not isinstance(val, bool):
        val = [val]
    if not isinstance(val, list):
        raise ConfigError(path, f"expected a list of numbers, got {val!r}")
    out = []
    for k, v in enumerate(val):
        if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
            raise ConfigError(f"{path}[{k}]", f"expected a finite number, got {v!r}")
        out.append(float(v))
    if length is not None and len(out) != length:
        raise ConfigError(path, f"expected {length} entries, got {len(out)}")
    return out


# -- sections --------------------------------------------------------------------

@dataclass(frozen=True)
class PotentialConfig:
    wells: tuple
    alpha: float
    modulation: str = "constant"
    modulation_params: dict = field(default_factory=dict)
    g_lower_bound: float = 1.0


@dataclass(frozen=True)
class GridConfig:
    n: int
    nodes: tuple
    h: float
    origin: tuple


@dataclass(frozen=True)
class InitConfig:
    mode: str = "sector_wells"
    blend: float = 0.0
    values: tuple = None
    well: int = 0
    offset: float = 0.0
    spread: float = 1.0
    snapshot: str = None


@dataclass(frozen=True)
class SolveConfig:
    scheme: str = "gradient_descent_bb"
    max_iters: int = 20000
    grad_tol: float = 1e-10
    snap_tol: float = None
    snap_every: int = 10
    clamp: bool = True
    surrogate_iters: int = 2000
    levels: int = 1
    prox: bool = None


@dataclass(frozen=True)
class ObstacleReference:
    """1D closed form (x - c)_+^2 / 2 for W = |u| with u(left) = 0."""

    sup_tol: float = 1e-3
    contact_tol_h: float = 2.0


@dataclass(frozen=True)
class DeadCoreConfig:
    radius_fraction: float = 0.4
    expect: str = "attained"  # or "none"
    min_fraction: float = 0.6


@dataclass(frozen=True)
class WeissProbe:
    near: tuple = None
    x0: tuple = None


@dataclass(frozen=True)
class WeissConfig:
    probes: tuple
    radii: tuple = None
    r_min_h: float = 4.0
    ratio: float = 2 ** 0.125
    r_max: float = None  # None: admissible radius about each probe
    admissible_fraction: float = 0.9
    c_q: float = 1.0
    gate: str = "budget"  # "strict", "budget" or "target"
    target: float = None
    target_tol: float = 1e-3


@dataclass(frozen=True)
class GrowthConfig:
    probes: tuple
    cap_fraction: float = 0.1
    tol: float = 0.15
    ratio: float = 2 ** 0.25


@dataclass(frozen=True)
class CensusSection:
    L: float
    k: tuple = (4, 8, 16)
    theta: float = None  # None: non-degeneracy theta
    epsilon: float = 0.05
    max_slope: float = None  # None: n - 1 + 0.3


@dataclass(frozen=True)
class ConnectConfig:
    i: int = 0
    j: int = 1
    half_length: float = 5.0
    nodes: int = 2049
    levels: int = 4


@dataclass(frozen=True)
class AnalysisConfig:
    center: tuple = None
    radii: tuple = None
    gammas: tuple = None
    c_floor: float = 0.15
    slope_range: tuple = None  # None: (n - 1) +- 0.2
    lower_bound_factor: float = 0.5
    reference: ObstacleReference = None
    dead_core: DeadCoreConfig = None
    weiss: WeissConfig = None
    growth: GrowthConfig = None
    census: CensusSection = None
    connect: ConnectConfig = None


@dataclass(frozen=True)
class SweepConfig:
    parameter: str
    values: tuple
    target: str = "minimize"  # or "connect1d"


@dataclass(frozen=True)
class RunConfig:
    potential: PotentialConfig
    grid: GridConfig
    init: InitConfig
    minimize: SolveConfig
    analysis: AnalysisConfig
    sweep: SweepConfig = None
    seed: int = 0
    output_dir: str = None
    meta: dict = field(default_factory=dict)
    source: dict = field(default_factory=dict, compare=False, repr=False)

    @property
    def sha256(self) -> str:
        return config_hash(self.source)

    def output_path(self, override=None) -> str:
        """``--out`` beats ``ACFB_OUTPUT_DIR`` beats ``output_dir`` beats ``./acfb_out``."""
        if override:
            return override
        env = os.environ.get(OUTPUT_ENV)
        if env:
            return env
        return self.output_dir or "acfb_out"


def config_hash(doc) -> str:
    text = json.dumps(doc, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()


# -- parsing --------------------------------------------------------------------------

def _triangle(radius):
    ang = 2.0 * np.pi * np.arange(3) / 3.0
    return [[radius * math.cos(t), radius * math.sin(t)] for t in ang]


def _parse_potential(s: _Section) -> PotentialConfig:
    raw = s.raw("wells")
    if isinstance(raw, dict):
        ws = _Section(raw, s.sub("wells"))
        ws.choice("preset", {"triangle"})
        wells = _triangle(ws.number("radius", 1.0, positive=True))
        ws.finish()
    else:
        if not isinstance(raw, list) or not raw:
            raise ConfigError(s.sub("wells"), "expected a non-empty list of points or a preset")
        wells = [_vector(w, f"{s.sub('wells')}[{k}]") for k, w in enumerate(raw)]
        dims = {len(w) for w in wells}
        if len(dims) != 1 or 0 in dims:
            raise ConfigError(s.sub("wells"), "all wells need the same positive dimension")
        for a in range(len(wells)):
            for b in range(a):
                if wells[a] == wells[b]:
                    raise ConfigError(f"{s.sub('wells')}[{a}]", "duplicate well")
    alpha = s.number("alpha", positive=True, hi=2.0)
    mod = s.section("modulation")
    name, params = "constant", {}
    if mod is not None:
        name = mod.choice("name", {"constant", "quadratic_bump"})
        pr = mod.section("params")
        if pr is not None:
            keys = {"constant": ("value",), "quadratic_bump": ("c0", "b", "center")}[name]
            for key in pr.data:
                if key not in keys:
                    raise ConfigError(pr.sub(key), "unknown modulation parameter")
            for key in keys:
                if not pr.has(key):
                    continue
                params[key] = pr.vector(key) if key == "center" else pr.number(key, positive=key != "b",
                                                                              nonneg=key == "b")
            pr.finish()
        mod.finish()
    g_lb = s.number("g_lower_bound", 1.0, positive=True)
    s.finish()
    return PotentialConfig(tuple(tuple(w) for w in wells), alpha, name, params, g_lb)


def _parse_grid(s: _Section) -> GridConfig:
    n = s.integer("n", lo=1)
    if n > 2:
        raise ConfigError(s.sub("n"), "only n = 1 or 2 is supported")
    raw = s.raw("nodes")
    if isinstance(raw, int) and not isinstance(raw, bool):
        nodes = (raw,) * n
    elif isinstance(raw, list) and len(raw) == n and all(isinstance(v, int) and not isinstance(v, bool)
                                                           for v in raw):
        nodes = tuple(raw)
    else:
        raise ConfigError(s.sub("nodes"), f"expected an integer or {n} integers")
    if min(nodes) < 3:
        raise ConfigError(s.sub("nodes"), "need at least 3 nodes per axis")
    if s.has("half_width"):
        if s.has("h") or s.has("origin"):
            raise ConfigError(s.sub("half_width"), "give either half_width or h/origin, not both")
        hw = s.number("half_width", positive=True)
        if len(set(nodes)) != 1:
            raise ConfigError(s.sub("nodes"), "half_width needs the same node count on every axis")
        h = 2.0 * hw / (nodes[0] - 1)
        origin = (-hw,) * n
    else:
        h = s.number("h", positive=True)
        origin = tuple(s.vector("origin", [0.0] * n, length=n))
    s.finish()
    return GridConfig(n, nodes, h, origin)


def _parse_init(s: _Section, n_wells: int) -> InitConfig:
    if s is None:
        return InitConfig()
    snapshot = s.string("snapshot", None)
    mode = s.choice("mode", {"constant", "sector_wells", "radial_connection_bc", "random"}, "sector_wells")
    blend = s.number("blend", 0.0, lo=0.0, hi=1.0)
    values = s.raw("values", None)
    if values is not None:
        if not isinstance(values, list) or len(values) != 2:
            raise ConfigError(s.sub("values"), "expected two boundary values")
        values = tuple(tuple(_vector(v, f"{s.sub('values')}[{k}]")) for k, v in enumerate(values))
    well = s.integer("well", 0, lo=0)
    if well >= n_wells:
        raise ConfigError(s.sub("well"), f"well index {well} out of range for {n_wells} wells")
    offset = s.number("offset", 0.0)
    spread = s.number("spread", 1.0, positive=True)
    s.finish()
    return InitConfig(mode, blend, values, well, offset, spread, snapshot)


def _parse_minimize(s: _Section) -> SolveConfig:
    if s is None:
        return SolveConfig()
    out = SolveConfig(
        scheme=s.choice("scheme", {"gradient_descent_bb", "semi_implicit"}, "gradient_descent_bb"),
        max_iters=s.integer("max_iters", 20000, lo=0),
        grad_tol=s.number("grad_tol", 1e-10, positive=True),
        snap_tol=s.number("snap_tol", None, positive=True),
        snap_every=s.integer("snap_every", 10, lo=1),
        clamp=s.boolean("clamp", True),
        surrogate_iters=s.integer("surrogate_iters", 2000, lo=0),
        levels=s.integer("levels", 1, lo=1),
        prox=s.raw("prox", None),
    )
    if out.prox is not None and not isinstance(out.prox, bool):
        raise ConfigError(s.sub("prox"), f"expected true, false or null, got {out.prox!r}")
    s.finish()
    return out


def _parse_probes(s: _Section, key, n):
    raw = s.raw(key)
    if not isinstance(raw, list) or not raw:
        raise ConfigError(s.sub(key), "expected a non-empty list of probes")
    out = []
    for k, item in enumerate(raw):
        ps = _Section(item, f"{s.sub(key)}[{k}]")
        near = ps.vector("near", None, length=n)
        x0 = ps.vector("x0", None, length=n)
        if (near is None) == (x0 is None):
            raise ConfigError(ps.path, "give exactly one of 'near' or 'x0'")
        ps.finish()
        out.append(WeissProbe(None if near is None else tuple(near), None if x0 is None else tuple(x0)))
    return tuple(out)


def _parse_analysis(s: _Section, n: int, n_wells: int) -> AnalysisConfig:
    if s is None:
        return AnalysisConfig()
    center = s.vector("center", None, length=n)
    radii = s.raw("radii", None)
    if isinstance(radii, dict):
        rs = _Section(radii, s.sub("radii"))
        lo = rs.number("min", positive=True)
        hi = rs.number("max", positive=True)
        count = rs.integer("count", lo=2)
        rs.finish()
        if hi <= lo:
            raise ConfigError(s.sub("radii.max"), "must exceed radii.min")
        radii = tuple(float(r) for r in np.geomspace(lo, hi, count))
    elif radii is not None:
        radii = tuple(sorted(_vector(radii, s.sub("radii"))))
        if any(r <= 0 for r in radii):
            raise ConfigError(s.sub("radii"), "radii must be positive")
    gammas = s.numbers("gammas", None, positive=True)
    c_floor = s.number("c_floor", 0.15, positive=True)
    slope_range = s.vector("slope_range", None, length=2)
    lbf = s.number("lower_bound_factor", 0.5, positive=True)

    reference = None
    rs = s.section("reference")
    if rs is not None:
        rs.choice("kind", {"obstacle_1d"})
        reference = ObstacleReference(rs.number("sup_tol", 1e-3, positive=True),
                                      rs.number("contact_tol_h", 2.0, positive=True))
        rs.finish()

    dead = None
    ds = s.section("dead_core")
    if ds is not None:
        dead = DeadCoreConfig(ds.number("radius_fraction", 0.4, positive=True, hi=1.0),
                              ds.choice("expect", {"attained", "none"}, "attained"),
                              ds.number("min_fraction", 0.6, lo=0.0, hi=1.0))
        ds.finish()

    weiss = None
    ws = s.section("weiss")
    if ws is not None:
        gate = ws.choice("gate", {"strict", "budget", "target"}, "budget")
        target = ws.number("target", None)
        if gate == "target" and target is None:
            raise ConfigError(ws.sub("target"), "required when gate is 'target'")
        wr = ws.raw("radii", None)
        weiss = WeissConfig(
            probes=_parse_probes(ws, "probes", n),
            radii=None if wr is None else tuple(_vector(wr, ws.sub("radii"))),
            r_min_h=ws.number("r_min_h", 4.0, positive=True),
            ratio=ws.number("ratio", 2 ** 0.125, lo=1.0 + 1e-9),
            r_max=ws.number("r_max", None, positive=True),
            admissible_fraction=ws.number("admissible_fraction", 0.9, positive=True, hi=1.0),
            c_q=ws.number("c_q", 1.0, nonneg=True),
            gate=gate, target=target,
            target_tol=ws.number("target_tol", 1e-3, positive=True),
        )
        if weiss.radii is not None and any(b <= a for a, b in zip(weiss.radii, weiss.radii[1:])):
            raise ConfigError(ws.sub("radii"), "radii must be strictly increasing")
        ws.finish()

    growth = None
    gs = s.section("growth")
    if gs is not None:
        growth = GrowthConfig(_parse_probes(gs, "probes", n),
                              gs.number("cap_fraction", 0.1, positive=True),
                              gs.number("tol", 0.15, positive=True),
                              gs.number("ratio", 2 ** 0.25, lo=1.0 + 1e-9))
        gs.finish()

    census = None
    cs = s.section("census")
    if cs is not None:
        ks = cs.raw("k", [4, 8, 16])
        if (not isinstance(ks, list) or not ks
                or any(isinstance(k, bool) or not isinstance(k, int) or k < 1 for k in ks)):
            raise ConfigError(cs.sub("k"), "expected a list of positive integers")
        if any(b <= a for a, b in zip(ks, ks[1:])):
            raise ConfigError(cs.sub("k"), "must be increasing")
        census = CensusSection(cs.number("L", positive=True), tuple(ks),
                               cs.number("theta", None, positive=True),
                               cs.number("epsilon", 0.05, positive=True, hi=0.4999999),
                               cs.number("max_slope", None))
        cs.finish()

    connect = None
    cn = s.section("connect")
    if cn is not None:
        connect = ConnectConfig(cn.integer("i", 0, lo=0), cn.integer("j", 1, lo=0),
                                cn.number("half_length", 5.0, positive=True),
                                cn.integer("nodes", 2049, lo=5), cn.integer("levels", 4, lo=1))
        for key in ("i", "j"):
            if getattr(connect, key) >= n_wells:
                raise ConfigError(cn.sub(key), f"well index out of range for {n_wells} wells")
        if connect.i == connect.j:
            raise ConfigError(cn.sub("j"), "endpoints must be distinct wells")
        cn.finish()
    s.finish()
    return AnalysisConfig(None if center is None else tuple(center), radii,
                          None if gammas is None else tuple(gammas), c_floor,
                          None if slope_range is None else tuple(slope_range), lbf,
                          reference, dead, weiss, growth, census, connect)


def parse_config(doc) -> RunConfig:
    root = _Section(doc, "")
    pot = _parse_potential(root.section("potential", required=True))
    gs = root.section("grid")
    grid = None if gs is None else _parse_grid(gs)
    init = _parse_init(root.section("init"), len(pot.wells))
    solve = _parse_minimize(root.section("minimize"))
    n = grid.n if grid is not None else 1
    analysis = _parse_analysis(root.section("analysis"), n, len(pot.wells))
    sweep = None
    ss = root.section("sweep")
    if ss is not None:
        param = ss.choice("parameter", {"alpha", "nodes"})
        values = ss.numbers("values")
        if param == "alpha" and any(not 0 < v <= 2 for v in values):
            raise ConfigError(ss.sub("values"), "alpha values must lie in (0, 2]")
        if param == "nodes" and any(v != int(v) or v < 3 for v in values):
            raise ConfigError(ss.sub("values"), "node counts must be integers >= 3")
        sweep = SweepConfig(param, tuple(values), ss.choice("target", {"minimize", "connect1d"}, "minimize"))
        ss.finish()
    seed = root.integer("seed", 0, lo=0)
    out = root.string("output_dir", None)
    meta = root.raw("meta", {})
    if not isinstance(meta, dict):
        raise ConfigError("meta", "expected a JSON object")
    root.finish()
    return RunConfig(pot, grid, init, solve, analysis, sweep, seed, out, meta, doc)


def load_config(path) -> RunConfig:
    try:
        with open(path, "rb") as fh:
            text = fh.read().decode("utf-8")
    except OSError as exc:
        raise ConfigError("<file>", f"cannot read {path}: {exc.strerror}") from None
    except UnicodeDecodeError:
        raise ConfigError("<file>", "config is not valid UTF-8") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError("<json>", f"line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    return parse_config(doc)
