"""Projection onto fields equivariant under the symmetry group of the triangle.

The six-element dihedral group acts on the domain about a grid node and on
the codomain R^2 through the same matrices.  Rotations by 120 degrees do not
map a square lattice onto itself, so the projection is assembled from exact
lattice operations plus interpolation confined to places where it cannot
break idempotence:

1. the wedge |angle| <= 60 degrees is a fundamental domain for the rotations
   and is mapped onto itself by the reflection y -> -y, which *is* a lattice
   map; the reflection average there is exact;
2. wedge values are extended to the rest of the grid by the equivariance
   relation u(R x) = R u(x) (bilinear interpolation inside the wedge) above
   the wedge, and by the exact reflection below it.  The few stencils
   straddling the wedge edges couple unknowns, so the extension is the
   solution of a sparse linear system;
3. before extension, the wedge values are corrected by the interpolated group
   average of the non-equivariant remainder, so that smooth data is mapped
   close to its group average;
4. the value at the centre node is subtracted first.  Every equivariant field
   vanishes there, so this keeps idempotence, and a constant field goes to its
   orbit centroid (zero) exactly rather than through interpolation across the
   jumps of its wedge extension.

The result is linear and exactly idempotent.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .errors import SymmetryMismatch
from .grid import VectorField

NONE = "none"
TRIANGLE_C3V = "triangle_c3v"


@dataclass(frozen=True)
class SymmetryGroup:
    kind: str = TRIANGLE_C3V
    center: tuple = None


def _rot(k):
    t = 2.0 * np.pi * k / 3.0
    c, s = np.cos(t), np.sin(t)
    return np.array([[c, -s], [s, c]])


REFLECT = np.array([[1.0, 0.0], [0.0, -1.0]])


def group_elements():
    """The six matrices: three rotations then the three reflections R_k S."""
    rots = [_rot(k) for k in range(3)]
    return rots + [r @ REFLECT for r in rots]


def well_permutations(wells, tol=1e-12):
    """Permutations of the wells induced by the rotation and the reflection."""
    wells = np.asarray(wells, dtype=float)
    out = {}
    for name, mat in (("rotation", _rot(1)), ("reflection", REFLECT)):
        image = wells @ mat.T
        d = np.linalg.norm(image[:, None, :] - wells[None, :, :], axis=-1)
        perm = np.argmin(d, axis=1)
        if np.max(d[np.arange(len(wells)), perm]) > tol or len(set(perm.tolist())) != len(wells):
            raise SymmetryMismatch(f"wells are not invariant under the {name}")
        out[name] = perm.tolist()
    return out


def check_permutation(wells, well_permutation, tol=1e-12):
    wells = np.asarray(wells, dtype=float)
    for name, mat in (("rotation", _rot(1)), ("reflection", REFLECT)):
        perm = np.asarray(well_permutation[name])
        err = np.max(np.linalg.norm(wells @ mat.T - wells[perm], axis=-1))
        if err > tol:
            raise SymmetryMismatch(f"wells not equivariant under {name} with permutation {perm.tolist()} "
                                   f"(error {err:.3e})")


class _Operators:
    """Sparse operators for one grid shape and centre node."""

    def __init__(self, shape, cidx):
        nx, ny = shape
        ic, jc = cidx
        I, J = np.meshgrid(np.arange(nx), np.arange(ny), indexing="ij")
        X = (I - ic).ravel().astype(float)
        Y = (J - jc).ravel().astype(float)
        total = nx * ny
        ang = np.arctan2(Y, X)
        in_wedge = (np.abs(ang) <= np.pi / 3 + 1e-12) | ((X == 0) & (Y == 0))
        self.shape = shape
        self.total = total
        self.wedge = np.flatnonzero(in_wedge)
        self.bounds = (-ic, nx - 1 - ic, -jc, ny - 1 - jc)
        self.ic, self.jc = ic, jc

        # reflection partner of every wedge node (lattice exact)
        ref = (I * ny + (2 * jc - J)).ravel()
        self.wedge_ref = ref[self.wedge]

        # Nodes above the wedge (angle in (60, 180] degrees) are the unknowns of
        # the extension; nodes below it are their exact mirror images.
        upper = (~in_wedge) & (ang > 0)
        self.upper = np.flatnonzero(upper)
        self.lower = np.flatnonzero((~in_wedge) & (ang < 0))
        self.lower_src = ref[self.lower]
        on_axis = (Y == 0) & (X < 0)

        # v_y - M_y sum_s w_s v_s = 0, M_y = R_1 (projected onto the x-axis on
        # the 180 degree ray); stencil nodes below the wedge enter as D v(sigma s)
        pos_up = np.full(total, -1)
        pos_up[self.upper] = np.arange(len(self.upper))
        mirror_of = np.full(total, -1)
        mirror_of[self.lower] = pos_up[self.lower_src]
        pos_wedge = np.full(total, -1)
        pos_wedge[self.wedge] = np.arange(len(self.wedge))
        nodes = self.upper
        rinv = _rot(-1)
        zx = rinv[0, 0] * X[nodes] + rinv[0, 1] * Y[nodes]
        zy = rinv[1, 0] * X[nodes] + rinv[1, 1] * Y[nodes]
        stencil, weights = self._bilinear(zx, zy)
        rho = _rot(1)
        keep_y = np.where(on_axis[nodes], 0.0, 1.0)
        rows_a, cols_a, vals_a = [], [], []
        rows_b, cols_b, vals_b = [], [], []
        sel = np.arange(len(nodes))
        for s_nodes, w in zip(stencil, weights):
            in_up = pos_up[s_nodes] >= 0
            in_low = mirror_of[s_nodes] >= 0
            known = pos_wedge[s_nodes] >= 0
            for c in range(2):
                row_scale = w * (keep_y if c == 1 else 1.0)
                for d in range(2):
                    coeff = row_scale * rho[c, d]
                    nz = coeff != 0
                    t = nz & in_up
                    rows_a.append(2 * sel[t] + c)
                    cols_a.append(2 * pos_up[s_nodes[t]] + d)
                    vals_a.append(-coeff[t])
                    t = nz & in_low
                    rows_a.append(2 * sel[t] + c)
                    cols_a.append(2 * mirror_of[s_nodes[t]] + d)
                    vals_a.append(-coeff[t] * REFLECT[d, d])
                    t = nz & known
                    rows_b.append(2 * sel[t] + c)
                    cols_b.append(2 * pos_wedge[s_nodes[t]] + d)
                    vals_b.append(coeff[t])
        nu = 2 * len(self.upper)
        nw = 2 * len(self.wedge)
        A = sp.coo_matrix((np.concatenate(vals_a), (np.concatenate(rows_a), np.concatenate(cols_a))),
                          shape=(nu, nu)).tocsc() + sp.identity(nu, format="csc")
        self.lu = splu(A)
        self.B = sp.coo_matrix((np.concatenate(vals_b), (np.concatenate(rows_b), np.concatenate(cols_b))),
                               shape=(nu, nw)).tocsr()

        # interpolated group average evaluated on wedge nodes
        rows, cols, vals = [], [], []
        xw, yw = X[self.wedge], Y[self.wedge]
        widx = np.arange(len(self.wedge))
        for mat in group_elements():
            gx = mat[0, 0] * xw + mat[0, 1] * yw
            gy = mat[1, 0] * xw + mat[1, 1] * yw
            stencil, weights = self._bilinear(gx, gy)
            minv = mat.T / 6.0
            for s_nodes, w in zip(stencil, weights):
                for c in range(2):
                    for d in range(2):
                        coeff = w * minv[c, d]
                        keep = coeff != 0
                        rows.append(2 * widx[keep] + c)
                        cols.append(2 * s_nodes[keep] + d)
                        vals.append(coeff[keep])
        self.avg = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                                 shape=(nw, 2 * total)).tocsr()

    def _bilinear(self, zx, zy):
        xlo, xhi, ylo, yhi = self.bounds
        zx = np.clip(zx, xlo, xhi)
        zy = np.clip(zy, ylo, yhi)
        x0 = np.clip(np.floor(zx), xlo, xhi - 1)
        y0 = np.clip(np.floor(zy), ylo, yhi - 1)
        fx = zx - x0
        fy = zy - y0
        i0 = (x0 + self.ic).astype(int)
        j0 = (y0 + self.jc).astype(int)
        ny = self.shape[1]
        stencil = [i0 * ny + j0, (i0 + 1) * ny + j0, i0 * ny + j0 + 1, (i0 + 1) * ny + j0 + 1]
        weights = [(1 - fx) * (1 - fy), fx * (1 - fy), (1 - fx) * fy, fx * fy]
        return stencil, weights

    def reflect_average(self, g):
        """Exact reflection average of wedge values ``g`` (shape (W, 2))."""
        pos = np.full(self.total, -1)
        pos[self.wedge] = np.arange(len(self.wedge))
        partner = g[pos[self.wedge_ref]] * np.array([1.0, -1.0])
        out = 0.5 * (g + partner)
        # the centre is fixed by every rotation, so an equivariant value there is 0
        out[pos[self.ic * self.shape[1] + self.jc]] = 0.0
        return out

    def extend(self, g):
        out = np.empty((self.total, 2))
        out[self.wedge] = g
        rhs = self.B @ g.ravel()
        out[self.upper] = self.lu.solve(rhs).reshape(-1, 2)
        out[self.lower] = out[self.lower_src] * np.array([1.0, -1.0])
        return out


@lru_cache(maxsize=8)
def _operators(shape, cidx):
    return _Operators(shape, cidx)


def symmetrize(f: VectorField, group: SymmetryGroup, wells, well_permutation=None) -> VectorField:
    if group.kind == NONE:
        return f.copy()
    if group.kind != TRIANGLE_C3V:
        raise SymmetryMismatch(f"unknown symmetry kind {group.kind!r}")
    if f.spec.n != 2 or f.m != 2:
        raise SymmetryMismatch("triangle_c3v needs n = 2 and m = 2")
    if any(e % 2 == 0 for e in f.spec.extents):
        raise SymmetryMismatch("grid extents must be odd so that the centre is a node")
    center = f.spec.center() if group.center is None else group.center
    cidx = f.spec.nearest_node(center)
    node = np.asarray(f.spec.origin) + f.spec.h * np.asarray(cidx)
    if np.max(np.abs(node - np.asarray(center))) > 1e-9 * f.spec.h:
        raise SymmetryMismatch("symmetry centre must coincide with a grid node")
    for c, e in zip(cidx, f.spec.extents):
        if c != (e - 1) // 2:
            raise SymmetryMismatch("symmetry centre must be the middle node of the grid")
    if well_permutation is None:
        well_permutations(wells)
    else:
        check_permutation(wells, well_permutation)

    ops = _operators(f.spec.extents, cidx)
    flat = f.values.reshape(-1, 2) - f.values[tuple(cidx)]
    g = ops.reflect_average(flat[ops.wedge])
    base = ops.extend(g)
    correction = (ops.avg @ (flat - base).ravel()).reshape(-1, 2)
    g = ops.reflect_average(g + correction)
    return f.with_values(ops.extend(g).reshape(f.values.shape))
