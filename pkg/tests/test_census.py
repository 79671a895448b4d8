import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from acfb.census import T1, T2, T3, T4, T5, CensusConfig, census, census_scaling, select_cube_side
from acfb.errors import GridTooSmall
from acfb.grid import GridSpec, VectorField, init_field
from acfb.interface import contact_labels, delta_field
from acfb.potential import Potential, triangle_wells

from oracles import census_bruteforce

TWO = Potential([[-1.0], [1.0]], 1.0)
H = 0.125
L = 8 * H


def field_1d_values(values, spec):
    return VectorField(spec, np.asarray(values, dtype=float)[..., None], spec.ring_mask())


def strip(spec, width):
    x = spec.coords()[..., 0]
    return field_1d_values(np.where(np.abs(x) < width / 2, 0.0, np.sign(x)), spec)


def grid(nodes=161):
    return GridSpec.centered(2, nodes, (nodes - 1) / 2 * H)


def test_constant_field_k4():
    spec = grid(65)
    f = init_field(spec, 1, "constant", [[1.0]])
    res = census(f, TWO, CensusConfig(L, 4, 0.9))
    assert res.totals == {T1: 28, T2: 0, T3: 0, T4: 36, T5: 0}
    assert res.violations == []
    assert np.all(res.dominant[res.classes == T4] == 1)


def test_vertical_strip_k4():
    spec = grid(65)
    res = census(strip(spec, 0.1 * L), TWO, CensusConfig(L, 4, 0.9))
    t = res.totals
    assert 6 <= t[T2] + t[T3] + t[T5] <= 30
    # the strip is the single node column x = 0, owned by cube column 4: those cubes lose
    # 1/8 of their nodes (T3) and both neighbouring columns see them (T5)
    assert t[T3] == 6 and t[T5] == 12
    assert t[T4] == 36 - (t[T2] + t[T3] + t[T5])
    assert t[T1] == 28


def test_all_interface_field_is_T3():
    spec = grid(65)
    f = field_1d_values(np.zeros(spec.extents), spec)
    res = census(f, TWO, CensusConfig(L, 4, 0.9))
    assert res.totals[T3] == 36 and res.totals[T1] == 28
    assert np.all(res.sigma == 0.0)


def test_partition_and_boundary_count():
    spec = grid(161)
    res = census(strip(spec, 0.3), TWO, CensusConfig(L, 8, 0.9))
    assert sum(res.totals.values()) == 16 ** 2
    assert res.totals[T1] == 16 ** 2 - 14 ** 2


def test_census_is_deterministic():
    spec = grid(65)
    f = init_field(spec, 2, "random", triangle_wells(), seed=9)
    p = Potential(triangle_wells(), 1.0)
    a = census(f, p, CensusConfig(L, 4, 0.5))
    b = census(f, p, CensusConfig(L, 4, 0.5))
    assert a.sigma.tobytes() == b.sigma.tobytes()
    assert np.array_equal(a.classes, b.classes)


def test_violations_are_recorded():
    spec = grid(65)
    vals = np.ones(spec.extents)
    # one stray node inside an interior cube, far from every well
    vals[32 + 3, 32 + 3] = 0.0
    res = census(field_1d_values(vals, spec), TWO, CensusConfig(L, 4, 0.9))
    assert res.totals[T4] == 36
    assert len(res.violations) == 1
    assert res.violations[0][1] == 1 and res.violations[0][2] == 1.0


def test_grid_too_small():
    spec = grid(65)
    f = init_field(spec, 1, "constant", [[1.0]])
    with pytest.raises(GridTooSmall):
        census(f, TWO, CensusConfig(L, 5, 0.9))
    with pytest.raises(GridTooSmall):
        census(f, TWO, CensusConfig(1.5 * H, 4, 0.9))


def test_bad_epsilon():
    with pytest.raises(ValueError):
        CensusConfig(L, 4, 0.9, epsilon=0.5)


# -- scaling ------------------------------------------------------------------------------

def test_straight_interface_scaling_slope():
    spec = grid(289)
    sc = census_scaling(strip(spec, 0.1 * L), TWO, CensusConfig(L, 4, 0.9), [4, 8, 16])
    # three columns of 2k - 2 interior cubes
    assert list(sc.counts) == [18, 42, 90]
    assert sc.slope == pytest.approx(1.0, abs=0.2)
    assert sc.verdict == "pass"


def test_constant_field_scaling_is_vacuous():
    spec = grid(161)
    sc = census_scaling(init_field(spec, 1, "constant", [[-1.0]]), TWO, CensusConfig(L, 4, 0.9), [4, 8])
    assert sc.verdict == "vacuous pass"
    assert np.all(sc.counts == 0)


def test_scaling_needs_increasing_k():
    spec = grid(161)
    with pytest.raises(ValueError):
        census_scaling(strip(spec, 0.1), TWO, CensusConfig(L, 4, 0.9), [8, 4])


# -- cube side ------------------------------------------------------------------------------

def test_select_cube_side_value():
    assert select_cube_side(TWO, 0.05625, 0.9) == pytest.approx(4 * math.sqrt(32))
    h = 1 / 64
    L_h = select_cube_side(TWO, 0.05625, 0.9, h)
    assert L_h >= 4 * math.sqrt(32)
    assert L_h - 4 * math.sqrt(32) < 4 * h
    assert (L_h / (4 * h)) == pytest.approx(round(L_h / (4 * h)))


def test_select_cube_side_scaling():
    full = select_cube_side(TWO, 0.05625, 0.9)
    assert select_cube_side(TWO, 0.05625, 0.45) == pytest.approx(full / math.sqrt(2))
    p = Potential([[-1.0], [1.0]], 1e-9)
    assert select_cube_side(p, 0.1, 0.8) == pytest.approx(4 * 16, rel=1e-6)
    assert select_cube_side(p, 0.1, 0.4) == pytest.approx(4 * 8, rel=1e-6)


# -- brute-force oracle ---------------------------------------------------------------------

@settings(max_examples=15)
@given(st.integers(0, 2 ** 31), st.integers(1, 4), st.sampled_from([2, 3, 4]))
def test_classes_match_bruteforce(seed, k, p_nodes):
    rng = np.random.default_rng(seed)
    wells = triangle_wells()
    p = Potential(wells, 1.0)
    n_nodes = min(64, 2 * k * p_nodes + 6)
    spec = GridSpec.centered(2, n_nodes if n_nodes % 2 else n_nodes - 1, 1.0)
    h = spec.h
    # blocky well labels with a random diffuse fraction, so every class can occur
    blocks = rng.integers(0, 3, size=(4, 4))
    idx = np.kron(blocks, np.ones((16, 16), dtype=int))[: spec.extents[0], : spec.extents[1]]
    vals = wells[idx].copy()
    noisy = rng.random(spec.extents) < rng.uniform(0, 0.3)
    vals[noisy] = 0.5 * vals[noisy]
    f = VectorField(spec, vals, spec.ring_mask())
    theta, eps = 0.6, 0.05
    cfg = CensusConfig(p_nodes * h, k, theta, eps)
    res = census(f, p, cfg)
    cidx = spec.nearest_node(spec.center())
    start = [c - k * p_nodes for c in cidx]
    tags = census_bruteforce(vals, wells, h, start, p_nodes, k, theta, eps)
    assert res.classes.tolist() == tags


# -- converged fields -------------------------------------------------------------------

def test_t4_cubes_contain_dead_core(small_tj):
    p, res, _ = small_tj
    f = res.field
    Lc = 2.0
    cen = census(f, p, CensusConfig(Lc, 4, 0.9 * p.r0_well))
    assert cen.totals[T4] > 0
    labels = contact_labels(delta_field(f, p))
    p_nodes = cen.nodes_per_side
    cidx = f.spec.nearest_node(f.spec.center())
    start = [c - 4 * p_nodes for c in cidx]
    floor = 0.9 * math.pi * (Lc / 4) ** 2
    for (i, j), cls, dom in zip(cen.index, cen.classes, cen.dominant):
        if cls != T4:
            continue
        sub = labels[start[0] + i * p_nodes: start[0] + (i + 1) * p_nodes,
                     start[1] + j * p_nodes: start[1] + (j + 1) * p_nodes]
        assert np.count_nonzero(sub == dom + 1) * f.spec.cell_volume >= floor
