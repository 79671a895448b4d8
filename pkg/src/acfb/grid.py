"""Uniform node grids in one or two dimensions and vector fields on them."""
from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import BadInit, FormatError


@dataclass(frozen=True)
class GridSpec:
    n: int
    extents: tuple
    h: float
    origin: tuple = None

    def __post_init__(self):
        extents = tuple(int(e) for e in np.atleast_1d(self.extents))
        if self.n not in (1, 2, 3):
            raise ValueError(f"n must be 1 or 2 (3 experimental), got {self.n}")
        if len(extents) != self.n:
            raise ValueError("one extent per axis required")
        if min(extents) < 2:
            raise ValueError("extents must be >= 2 on every axis")
        if not self.h > 0:
            raise ValueError("h must be positive")
        origin = (0.0,) * self.n if self.origin is None else tuple(float(o) for o in self.origin)
        if len(origin) != self.n:
            raise ValueError("origin must have one coordinate per axis")
        object.__setattr__(self, "extents", extents)
        object.__setattr__(self, "origin", origin)
        object.__setattr__(self, "h", float(self.h))

    @classmethod
    def centered(cls, n, nodes, half_width):
        """Grid of ``nodes`` per axis covering [-half_width, half_width]^n."""
        h = 2.0 * half_width / (nodes - 1)
        return cls(n, (nodes,) * n, h, (-half_width,) * n)

    @property
    def shape(self):
        return self.extents

    @property
    def cell_volume(self):
        return self.h ** self.n

    def axis_coords(self, axis):
        return self.origin[axis] + self.h * np.arange(self.extents[axis])

    def coords(self):
        """Node positions, shape ``extents + (n,)``."""
        axes = np.meshgrid(*[self.axis_coords(a) for a in range(self.n)], indexing="ij")
        return np.stack(axes, axis=-1)

    def upper(self):
        return tuple(o + self.h * (e - 1) for o, e in zip(self.origin, self.extents))

    def center(self):
        return tuple(0.5 * (lo + hi) for lo, hi in zip(self.origin, self.upper()))

    def nearest_node(self, x):
        idx = np.rint((np.asarray(x, dtype=float) - np.asarray(self.origin)) / self.h).astype(int)
        return tuple(int(np.clip(i, 0, e - 1)) for i, e in zip(idx, self.extents))

    def ring_mask(self):
        """True on the outer ring of nodes."""
        mask = np.zeros(self.extents, dtype=bool)
        for ax in range(self.n):
            sl = [slice(None)] * self.n
            sl[ax] = 0
            mask[tuple(sl)] = True
            sl[ax] = -1
            mask[tuple(sl)] = True
        return mask

    def trapezoid_weights(self):
        """Per-node quadrature weights (1 inside, 1/2 per boundary axis)."""
        w = np.ones(self.extents)
        for ax in range(self.n):
            sl = [slice(None)] * self.n
            sl[ax] = 0
            w[tuple(sl)] *= 0.5
            sl[ax] = -1
            w[tuple(sl)] *= 0.5
        return w

    def refined(self):
        """Same physical box with half the spacing."""
        return GridSpec(self.n, tuple(2 * (e - 1) + 1 for e in self.extents), self.h / 2, self.origin)


@dataclass
class VectorField:
    spec: GridSpec
    values: np.ndarray
    dirichlet_mask: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.ascontiguousarray(self.values, dtype=np.float64)
        if self.values.ndim == self.spec.n:
            self.values = self.values[..., None]
        if self.values.shape[:-1] != self.spec.extents:
            raise ValueError(f"values shape {self.values.shape} does not match grid {self.spec.extents}")
        self.dirichlet_mask = np.asarray(self.dirichlet_mask, dtype=bool)
        if self.dirichlet_mask.shape != self.spec.extents:
            raise ValueError("dirichlet_mask shape does not match grid")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("field values must be finite")
        self.meta.setdefault("field_bound", float(np.max(np.linalg.norm(self.values, axis=-1))))

    @property
    def m(self):
        return self.values.shape[-1]

    @property
    def free(self):
        return ~self.dirichlet_mask

    def copy(self):
        return VectorField(self.spec, self.values.copy(), self.dirichlet_mask.copy(), dict(self.meta))

    def with_values(self, values):
        meta = dict(self.meta)
        meta.pop("field_bound", None)
        return VectorField(self.spec, values, self.dirichlet_mask.copy(), meta)


# -- initialisation ---------------------------------------------------------

def sector_index(angles, n_sectors, offset=0.0):
    """Sector of each angle; sector j is centred on ``offset + 2 pi j / n_sectors``.

    Sectors are half-open on the counter-clockwise side, e.g. for three
    sectors: [-60, 60), [60, 180), [180, 300) degrees.
    """
    width = 2.0 * np.pi / n_sectors
    shifted = np.mod(np.asarray(angles) - offset + 0.5 * width, 2.0 * np.pi)
    idx = np.floor(shifted / width).astype(int)
    return np.clip(idx, 0, n_sectors - 1)


def _node_angles(spec, center):
    x = spec.coords() - np.asarray(center, dtype=float)
    if spec.n == 1:
        return np.where(x[..., 0] >= 0, 0.0, np.pi)
    return np.arctan2(x[..., 1], x[..., 0])


def init_field(spec: GridSpec, m: int, mode: str, wells=None, *, well=0, center=None,
               seed=None, blend=0.0, values=None, spread=1.0, offset=0.0) -> VectorField:
    """Initial fields.

    ``constant``      every node equals ``wells[well]``; outer ring frozen.
    ``sector_wells``  node takes the well of its angular sector about
                      ``center``; outer ring frozen. ``blend`` pulls the
                      free nodes towards the well centroid.
    ``radial_connection_bc``  continuous data: in 1D a linear ramp between
                      ``values`` (default first and last well); in 2D the
                      ring carries piecewise-linear-in-angle interpolation of
                      the sector wells and the interior is a radial blend
                      towards the centroid.
    ``random``        free nodes are random convex combinations of the
                      wells (seeded); ring frozen.
    """
    wells = None if wells is None else np.atleast_2d(np.asarray(wells, dtype=float))
    ring = spec.ring_mask()
    center = spec.center() if center is None else tuple(center)
    shape = spec.extents + (m,)

    def need_wells():
        if wells is None or len(wells) == 0:
            raise BadInit(f"init mode {mode!r} requires wells")
        if wells.shape[1] != m:
            raise BadInit(f"wells live in R^{wells.shape[1]}, field has m={m}")

    if mode == "constant":
        need_wells()
        vals = np.broadcast_to(wells[well], shape).copy()
        return VectorField(spec, vals, ring, {"init": mode})

    if mode == "sector_wells":
        need_wells()
        idx = sector_index(_node_angles(spec, center), len(wells), offset)
        vals = wells[idx]
        if blend:
            centroid = wells.mean(axis=0)
            free = ~ring
            vals[free] = (1.0 - blend) * vals[free] + blend * centroid
        return VectorField(spec, vals, ring, {"init": mode})

    if mode == "radial_connection_bc":
        if spec.n == 1:
            if values is None:
                need_wells()
                left, right = wells[0], wells[-1]
            else:
                left, right = (np.atleast_1d(np.asarray(v, dtype=float)) for v in values)
            t = np.linspace(0.0, 1.0, spec.extents[0])[:, None]
            vals = (1.0 - t) * left + t * right
            return VectorField(spec, vals, ring, {"init": mode})
        need_wells()
        N = len(wells)
        width = 2.0 * np.pi / N
        ang = _node_angles(spec, center)
        pos = np.mod(ang - offset, 2.0 * np.pi) / width
        j0 = np.floor(pos).astype(int) % N
        t = (pos - np.floor(pos))[..., None]
        bc = (1.0 - t) * wells[j0] + t * wells[(j0 + 1) % N]
        x = spec.coords() - np.asarray(center)
        rad = np.sqrt(np.sum(x * x, axis=-1))
        s = np.clip(rad / max(rad[ring].min(), spec.h), 0.0, 1.0)[..., None]
        centroid = wells.mean(axis=0)
        vals = centroid + s * (bc - centroid)
        return VectorField(spec, vals, ring, {"init": mode})

    if mode == "random":
        need_wells()
        rng = np.random.default_rng(seed)
        npts = int(np.prod(spec.extents))
        if len(wells) == 1:
            vals = wells[0] + rng.uniform(-spread, spread, size=(npts, m))
        else:
            weights = rng.dirichlet(np.ones(len(wells)), size=npts)
            vals = weights @ wells
        return VectorField(spec, vals.reshape(shape), ring, {"init": mode, "seed": seed})

    raise BadInit(f"unknown init mode {mode!r}")


def interpolate_onto(coarse: VectorField, target: VectorField) -> VectorField:
    """Multilinear interpolation of ``coarse`` onto the free nodes of ``target``.

    Frozen nodes of ``target`` keep their values, so exact boundary data
    survives grid refinement.
    """
    from scipy.interpolate import RegularGridInterpolator

    axes = [coarse.spec.axis_coords(a) for a in range(coarse.spec.n)]
    pts = target.spec.coords().reshape(-1, target.spec.n)
    lo = np.array([a[0] for a in axes])
    hi = np.array([a[-1] for a in axes])
    pts = np.clip(pts, lo, hi)
    out = target.values.copy()
    flat = out.reshape(-1, out.shape[-1])
    free = target.free.ravel()
    for c in range(coarse.m):
        interp = RegularGridInterpolator(axes, coarse.values[..., c], method="linear")
        flat[free, c] = interp(pts[free])
    return target.with_values(out)


# -- snapshots ----------------------------------------------------------------

MAGIC = b"ACFB"
VERSION = 1


def save_snapshot(f: VectorField, path, potential=None) -> None:
    """Write ``f`` in the little-endian ACFB snapshot format."""
    spec = f.spec
    parts = [MAGIC, struct.pack("<HBB", VERSION, spec.n, f.m)]
    parts.append(struct.pack(f"<{spec.n}I", *spec.extents))
    parts.append(struct.pack("<d", spec.h))
    parts.append(struct.pack(f"<{spec.n}d", *spec.origin))
    if potential is None:
        alpha = float(f.meta.get("alpha", float("nan")))
        wells = np.asarray(f.meta.get("wells", np.zeros((0, f.m))), dtype=float).reshape(-1, f.m)
    else:
        alpha = potential.alpha
        wells = potential.wells
    parts.append(struct.pack("<d", alpha))
    parts.append(struct.pack("<H", len(wells)))
    parts.append(np.ascontiguousarray(wells, dtype="<f8").tobytes())
    parts.append(np.ascontiguousarray(f.values, dtype="<f8").tobytes())
    parts.append(np.packbits(f.dirichlet_mask.ravel(), bitorder="little").tobytes())
    payload = b"".join(parts)
    crc = zlib.crc32(payload) & 0xFFFFFFFF
    Path(path).write_bytes(payload + struct.pack("<I", crc))


class _Reader:
    def __init__(self, data):
        self.data = data
        self.pos = 0

    def take(self, nbytes, what):
        if self.pos + nbytes > len(self.data):
            raise FormatError(f"truncated while reading {what}", offset=len(self.data))
        chunk = self.data[self.pos:self.pos + nbytes]
        self.pos += nbytes
        return chunk

    def unpack(self, fmt, what):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))


def load_snapshot(path) -> VectorField:
    data = Path(path).read_bytes()
    r = _Reader(data)
    if r.take(4, "magic") != MAGIC:
        raise FormatError("bad magic", offset=0)
    version, n, m = r.unpack("<HBB", "header")
    if version != VERSION:
        raise FormatError(f"unsupported version {version}", offset=4)
    extents = r.unpack(f"<{n}I", "extents")
    (h,) = r.unpack("<d", "h")
    origin = r.unpack(f"<{n}d", "origin")
    (alpha,) = r.unpack("<d", "alpha")
    (n_wells,) = r.unpack("<H", "well count")
    wells = np.frombuffer(r.take(8 * m * n_wells, "wells"), dtype="<f8").reshape(n_wells, m)
    count = int(np.prod(extents))
    values = np.frombuffer(r.take(8 * m * count, "values"), dtype="<f8")
    values = values.reshape(tuple(extents) + (m,)).astype(np.float64)
    packed = np.frombuffer(r.take((count + 7) // 8, "dirichlet mask"), dtype=np.uint8)
    mask = np.unpackbits(packed, count=count, bitorder="little").astype(bool).reshape(extents)
    payload_end = r.pos
    (crc,) = r.unpack("<I", "crc32")
    if r.pos != len(data):
        raise FormatError("trailing bytes after crc32", offset=r.pos)
    if zlib.crc32(data[:payload_end]) & 0xFFFFFFFF != crc:
        raise FormatError("crc32 mismatch", offset=payload_end)
    spec = GridSpec(n, extents, h, origin)
    meta = {"alpha": alpha, "wells": wells.copy()}
    return VectorField(spec, values, mask, meta)
