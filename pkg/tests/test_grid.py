import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from acfb.errors import BadInit, FormatError, SymmetryMismatch
from acfb.grid import (GridSpec, VectorField, init_field, interpolate_onto, load_snapshot, save_snapshot,
                       sector_index)
from acfb.potential import Potential, triangle_wells
from acfb.symmetry import SymmetryGroup, symmetrize, well_permutations

W3 = triangle_wells()


def test_gridspec_rejects_bad_values():
    with pytest.raises(ValueError):
        GridSpec(2, (1, 5), 0.1)
    with pytest.raises(ValueError):
        GridSpec(2, (5, 5), -0.1)
    with pytest.raises(ValueError):
        GridSpec(1, (5, 5), 0.1)


def test_centered_grid_geometry():
    s = GridSpec.centered(2, 9, 2.0)
    assert s.h == 0.5
    assert s.origin == (-2.0, -2.0)
    assert s.upper() == (2.0, 2.0)
    assert tuple(s.nearest_node((0.0, 0.0))) == (4, 4)


def test_constant_init_freezes_ring():
    s = GridSpec(2, (16, 16), 0.1)
    f = init_field(s, 2, "constant", W3, well=0)
    assert np.all(f.values == W3[0])
    ring = f.dirichlet_mask
    assert ring[0].all() and ring[-1].all() and ring[:, 0].all() and ring[:, -1].all()
    assert not ring[1:-1, 1:-1].any()


def test_sector_at_ten_degrees_is_first_well():
    assert sector_index(np.radians(10.0), 3) == 0
    # half-open on the counter-clockwise side
    assert sector_index(np.radians(60.0), 3) == 1
    assert sector_index(np.radians(-60.0), 3) == 0
    assert sector_index(np.radians(180.0), 3) == 2


def test_sector_wells_node_values():
    s = GridSpec.centered(2, 21, 1.0)
    f = init_field(s, 2, "sector_wells", W3)
    x = s.coords()
    ang = np.degrees(np.arctan2(x[..., 1], x[..., 0]))
    first = (ang >= -60) & (ang < 60)
    assert np.all(f.values[first] == W3[0])


def test_random_init_is_deterministic():
    s = GridSpec.centered(2, 11, 1.0)
    a = init_field(s, 2, "random", W3, seed=7)
    b = init_field(s, 2, "random", W3, seed=7)
    c = init_field(s, 2, "random", W3, seed=8)
    assert np.array_equal(a.values, b.values)
    assert not np.array_equal(a.values, c.values)


def test_random_init_stays_in_convex_hull():
    s = GridSpec.centered(2, 11, 1.0)
    f = init_field(s, 2, "random", W3, seed=3)
    # the hull of the unit triangle is contained in the unit disk
    assert np.max(np.linalg.norm(f.values, axis=-1)) <= 1.0 + 1e-12


def test_missing_wells_is_bad_init():
    with pytest.raises(BadInit):
        init_field(GridSpec(1, (5,), 0.1), 1, "sector_wells")
    with pytest.raises(BadInit):
        init_field(GridSpec(1, (5,), 0.1), 1, "spiral", [[0.0]])


def test_values_must_be_finite():
    s = GridSpec(1, (4,), 1.0)
    with pytest.raises(ValueError):
        VectorField(s, np.array([[0.0], [np.nan], [0.0], [0.0]]), s.ring_mask())


def test_radial_connection_ramp_1d():
    s = GridSpec(1, (5,), 0.25)
    f = init_field(s, 1, "radial_connection_bc", values=([0.0], [1.0]))
    np.testing.assert_allclose(f.values[:, 0], [0, 0.25, 0.5, 0.75, 1.0])


def test_interpolation_is_exact_for_linear_fields():
    coarse_spec = GridSpec.centered(2, 5, 1.0)
    fine_spec = GridSpec.centered(2, 9, 1.0)
    lin = lambda x: np.stack([1 + 2 * x[..., 0] - x[..., 1], 0.5 * x[..., 1]], axis=-1)
    coarse = VectorField(coarse_spec, lin(coarse_spec.coords()), coarse_spec.ring_mask())
    target = VectorField(fine_spec, np.zeros((9, 9, 2)), fine_spec.ring_mask())
    out = interpolate_onto(coarse, target)
    np.testing.assert_allclose(out.values[1:-1, 1:-1], lin(fine_spec.coords())[1:-1, 1:-1], atol=1e-14)


# -- symmetry -------------------------------------------------------------------------

def test_triangle_well_permutations():
    perms = well_permutations(W3)
    assert perms["rotation"] == [1, 2, 0]
    assert perms["reflection"] == [0, 2, 1]


def test_symmetrize_rejects_non_equivariant_wells():
    s = GridSpec.centered(2, 9, 1.0)
    f = init_field(s, 2, "constant", W3)
    with pytest.raises(SymmetryMismatch):
        symmetrize(f, SymmetryGroup(), W3 + np.array([0.1, 0.0]))


def test_symmetrize_needs_odd_extents():
    s = GridSpec(2, (8, 8), 0.25, (-0.875, -0.875))
    f = init_field(s, 2, "constant", W3)
    with pytest.raises(SymmetryMismatch):
        symmetrize(f, SymmetryGroup(), W3)


def test_equivariant_field_is_unchanged():
    # u(x) = x commutes with every orthogonal map, so it is fixed by the projection
    s = GridSpec.centered(2, 33, 2.0)
    x = s.coords()
    f = VectorField(s, x.copy(), s.ring_mask())
    out = symmetrize(f, SymmetryGroup(), W3)
    # rotated stencils leave the square beyond the inscribed disc
    disc = np.linalg.norm(x, axis=-1) <= 2.0 - s.h
    assert np.max(np.abs(out.values - x)[disc]) <= 1e-15


def test_constant_well_field_goes_to_centroid():
    s = GridSpec.centered(2, 17, 1.0)
    f = init_field(s, 2, "constant", W3, well=0)
    out = symmetrize(f, SymmetryGroup(), W3)
    disc = np.linalg.norm(s.coords(), axis=-1) <= 1.0 - s.h
    np.testing.assert_allclose(out.values[disc], np.broadcast_to(W3.mean(axis=0), out.values[disc].shape),
                               atol=1e-14)


def test_symmetrize_is_idempotent_on_random_field():
    s = GridSpec.centered(2, 25, 1.0)
    f = init_field(s, 2, "random", W3, seed=3)
    once = symmetrize(f, SymmetryGroup(), W3)
    twice = symmetrize(once, SymmetryGroup(), W3)
    assert np.max(np.abs(twice.values - once.values)) <= 1e-13


def test_symmetrize_is_linear():
    s = GridSpec.centered(2, 17, 1.0)
    a = init_field(s, 2, "random", W3, seed=1)
    b = init_field(s, 2, "random", W3, seed=2)
    g = SymmetryGroup()
    lhs = symmetrize(a.with_values(2 * a.values - 3 * b.values), g, W3).values
    rhs = 2 * symmetrize(a, g, W3).values - 3 * symmetrize(b, g, W3).values
    np.testing.assert_allclose(lhs, rhs, atol=1e-12)


def test_symmetrized_sector_data_is_rotation_equivariant():
    s = GridSpec.centered(2, 41, 2.0)
    f = init_field(s, 2, "random", W3, seed=5)
    out = symmetrize(f, SymmetryGroup(), W3).values
    # the reflection y -> -y is a lattice map: u(x, -y) = S u(x, y)
    refl = out[:, ::-1] * np.array([1.0, -1.0])
    np.testing.assert_allclose(refl, out, atol=1e-13)


# -- snapshots ------------------------------------------------------------------------

def test_snapshot_round_trip_is_bitwise(tmp_path):
    s = GridSpec.centered(2, 13, 1.5)
    f = init_field(s, 2, "random", W3, seed=1)
    path = tmp_path / "f.acfb"
    save_snapshot(f, path, Potential(W3, 0.5))
    g = load_snapshot(path)
    assert g.values.tobytes() == f.values.tobytes()
    assert np.array_equal(g.dirichlet_mask, f.dirichlet_mask)
    assert g.spec == f.spec
    assert g.meta["alpha"] == 0.5
    assert np.array_equal(g.meta["wells"], W3)


@given(st.integers(2, 9), st.integers(2, 9), st.integers(1, 3), st.integers(0, 2 ** 31))
def test_snapshot_round_trip_property(nx, ny, m, seed):
    import tempfile, os
    rng = np.random.default_rng(seed)
    s = GridSpec(2, (nx, ny), float(rng.uniform(0.01, 2)), tuple(rng.normal(size=2)))
    mask = rng.random((nx, ny)) < 0.5
    f = VectorField(s, rng.normal(size=(nx, ny, m)), mask)
    with tempfile.TemporaryDirectory() as d:
        path = os.path.join(d, "f.acfb")
        save_snapshot(f, path)
        g = load_snapshot(path)
    assert g.values.tobytes() == f.values.tobytes()
    assert np.array_equal(g.dirichlet_mask, mask)


def test_truncated_snapshot_reports_offset(tmp_path):
    s = GridSpec.centered(1, 9, 1.0)
    f = init_field(s, 1, "constant", [[0.0]])
    path = tmp_path / "f.acfb"
    save_snapshot(f, path)
    data = path.read_bytes()
    cut = len(data) - 20
    path.write_bytes(data[:cut])
    with pytest.raises(FormatError) as exc:
        load_snapshot(path)
    assert exc.value.offset == cut


def test_bad_magic(tmp_path):
    path = tmp_path / "f.acfb"
    path.write_bytes(b"XXXX" + bytes(40))
    with pytest.raises(FormatError, match="bad magic"):
        load_snapshot(path)


def test_crc_mismatch(tmp_path):
    s = GridSpec.centered(1, 9, 1.0)
    f = init_field(s, 1, "constant", [[0.0]])
    path = tmp_path / "f.acfb"
    save_snapshot(f, path)
    data = bytearray(path.read_bytes())
    data[-10] ^= 0xFF
    path.write_bytes(bytes(data))
    with pytest.raises(FormatError, match="crc32"):
        load_snapshot(path)
