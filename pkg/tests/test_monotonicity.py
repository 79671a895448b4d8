import math

import numpy as np
import pytest

from acfb.errors import BallOutOfGrid, NotOnFreeBoundary
from acfb.grid import GridSpec, VectorField, init_field
from acfb.minimizer import connect_1d
from acfb.monotonicity import (admissible_radius, default_growth_radii, error_budget,
                               find_free_boundary_node, growth_probe, radii_ladder,
                               select_nondegeneracy_constants, weiss_energy, weiss_trace)
from acfb.potential import Potential, constant_modulation, quadratic_bump, triangle_wells

from oracles import halfplane_weiss_2d, obstacle_profile

ONE = Potential([[0.0]], 1.0)
TWO = Potential([[-1.0], [1.0]], 1.0)


def obstacle(h=1 / 512, x0=0.5, length=1.0, lo=0.0):
    nodes = int(round(length / h)) + 1
    spec = GridSpec(1, (nodes,), h, (lo,))
    x = spec.axis_coords(0)
    return VectorField(spec, obstacle_profile(x, x0)[:, None], spec.ring_mask())


def half_plane(c=3.0, nodes=257, half_width=1.0):
    spec = GridSpec.centered(2, nodes, half_width)
    x1 = spec.coords()[..., 0]
    v = 0.5 * c * np.maximum(x1, 0.0) ** 2
    return VectorField(spec, v[..., None], spec.ring_mask())


# -- Weiss energy ---------------------------------------------------------------------

def test_weiss_of_well_field_is_zero():
    p = Potential(triangle_wells(), 1.0)
    f = init_field(GridSpec.centered(2, 65, 2.0), 2, "constant", p.wells, well=2)
    for r in (0.25, 0.5, 1.0, 1.9):
        assert weiss_energy(f, p, (0.0, 0.0), r) == 0.0


@pytest.mark.parametrize("r", [0.1, 0.2, 0.3, 0.4])
def test_obstacle_weiss_is_one_twelfth(r):
    assert weiss_energy(obstacle(), ONE, (0.5,), r) == pytest.approx(1 / 12, abs=1e-6)


def test_obstacle_weiss_trace_is_flat():
    tr = weiss_trace(obstacle(), ONE, (0.5,), radii_ladder(0.05, 0.45, 2 ** 0.25))
    assert np.all(np.abs(tr.discrete_derivative) <= 1e-6)
    assert tr.monotone_strict and tr.monotone_with_budget
    assert np.all(tr.error_budget == 0.0)
    assert tr.kappa == 2.0


@pytest.mark.parametrize("lam", [2.0, 4.0])
def test_weiss_scale_invariance_1d(lam):
    # u_lam(x) = u(x0 + lam (x - x0)) / lam^2 on a grid lam times finer: nodes correspond one to one
    h = 1 / 256
    base = obstacle(h, x0=0.5, length=1.0, lo=0.0)
    fine_spec = GridSpec(1, base.spec.extents, h / lam, (0.5 - 0.5 / lam,))
    x = fine_spec.axis_coords(0)
    u = obstacle_profile(0.5 + lam * (x - 0.5))[:, None] / lam ** 2
    scaled = VectorField(fine_spec, u, fine_spec.ring_mask())
    for r in (0.1, 0.2, 0.35):
        a = weiss_energy(scaled, ONE, (0.5,), r / lam)
        b = weiss_energy(base, ONE, (0.5,), r)
        assert abs(a - b) <= 1e-8


def test_weiss_scale_invariance_2d():
    p = Potential([[0.0]], 1.0, constant_modulation(3.0), 3.0)
    base = half_plane(nodes=129, half_width=1.0)
    lam = 2.0
    spec = GridSpec.centered(2, 129, 1.0 / lam)
    x1 = spec.coords()[..., 0]
    scaled = VectorField(spec, (1.5 * np.maximum(lam * x1, 0) ** 2 / lam ** 2)[..., None], spec.ring_mask())
    for r in (0.3, 0.6, 0.9):
        assert abs(weiss_energy(scaled, p, (0, 0), r / lam) - weiss_energy(base, p, (0, 0), r)) <= 1e-8


@pytest.mark.parametrize("r", [0.25, 0.5, 0.75])
def test_half_plane_weiss_matches_closed_form(r):
    p = Potential([[0.0]], 1.0, constant_modulation(3.0), 3.0)
    expected = halfplane_weiss_2d(3.0)
    assert expected == pytest.approx(9 * math.pi / 32)
    assert weiss_energy(half_plane(), p, (0.0, 0.0), r) == pytest.approx(expected, rel=2e-3)


def test_ball_out_of_grid():
    with pytest.raises(BallOutOfGrid):
        weiss_energy(obstacle(), ONE, (0.5,), 0.6)


def test_error_budget_vanishes_for_constant_modulation_and_not_for_a_bump():
    f = half_plane()
    flat = Potential([[0.0]], 1.0, constant_modulation(3.0), 3.0)
    bump = Potential([[0.0]], 1.0, quadratic_bump(1.0, 0.5, center=[0.3]), 1.0)
    assert error_budget(f, flat, (0, 0), 0.5, 0) == 0.0
    assert error_budget(f, bump, (0, 0), 0.5, 0) > 0.0


def test_trace_needs_increasing_radii():
    with pytest.raises(ValueError):
        weiss_trace(obstacle(), ONE, (0.5,), [0.2, 0.1, 0.3])


def test_admissible_radius():
    f = obstacle(1 / 256)
    # one well: r0 is infinite so only the grid limits the radius
    assert admissible_radius(f, ONE, (0.5,)) == pytest.approx(0.5)
    spec = GridSpec.centered(1, 201, 1.0)
    x = spec.axis_coords(0)
    g = VectorField(spec, np.clip(x - 1.0, -1.0, 1.0)[:, None], spec.ring_mask())
    # u = x - 1 sits on the well -1 at x0 = 0 and deviates from it by 0.9 r0 at x = 0.9
    rad = admissible_radius(g, TWO, (0.0,), well=0)
    assert rad == pytest.approx(0.9, abs=spec.h)


def test_radii_ladder():
    r = radii_ladder(0.1, 0.8, 2.0)
    np.testing.assert_allclose(r, [0.1, 0.2, 0.4, 0.8])
    assert radii_ladder(1.0, 0.5).size == 0
    assert np.all(np.diff(np.log(radii_ladder(0.01, 1.0))) == pytest.approx(math.log(2) / 4))


# -- growth probes ----------------------------------------------------------------------

def test_obstacle_growth_exponent_and_constant():
    h = 1 / 256
    f = obstacle(h)
    idx = find_free_boundary_node(f, ONE, (0.4,))
    assert idx == (128,)
    radii = h * np.array([8, 12, 16, 24, 32, 48, 64, 96])
    gp = growth_probe(f, ONE, idx, radii)
    assert gp.fit_delta.slope == pytest.approx(2.0, abs=1e-9)
    assert gp.fit_delta.intercept == pytest.approx(math.log(0.5), abs=1e-9)
    assert gp.fit_grad.slope == pytest.approx(1.0, abs=1e-9)
    assert gp.passed and gp.grad_small
    assert np.all(np.diff(gp.sup_delta) >= 0) and np.all(np.diff(gp.sup_grad) >= 0)


def test_interior_contact_node_is_not_on_the_free_boundary():
    with pytest.raises(NotOnFreeBoundary):
        growth_probe(obstacle(1 / 256), ONE, (10,))


def test_field_without_free_boundary():
    spec = GridSpec.centered(1, 33, 1.0)
    f = VectorField(spec, np.full((33, 1), 0.5), spec.ring_mask())
    with pytest.raises(NotOnFreeBoundary):
        find_free_boundary_node(f, TWO, (0.0,))


@pytest.mark.slow
def test_alpha_half_connection_growth_exponent():
    p = Potential([[-1.0], [1.0]], 0.5)
    con = connect_1d(p, 0, 1, half_length=5.0, nodes=2049)
    f = con.result.field
    snap = 1e-10 * p.r0_well
    idx = find_free_boundary_node(f, p, (con.support[0],), snap)
    x0 = np.asarray(f.spec.origin) + f.spec.h * np.asarray(idx)
    gp = growth_probe(f, p, idx, default_growth_radii(f, p, x0, 0.25), 0.15, snap, 0.25)
    assert abs(gp.fit_delta.slope - 4 / 3) <= 0.15


# -- non-degeneracy ------------------------------------------------------------------------

def test_nondegeneracy_constants_two_wells():
    theta, c = select_nondegeneracy_constants(TWO, n=1)
    assert theta == pytest.approx(0.9)
    assert c == pytest.approx(0.05625)


def test_nondegeneracy_dimension_halves_first_bound():
    p = Potential([[-1.0], [1.0]], 0.5)
    _, c1 = select_nondegeneracy_constants(p, n=1)
    _, c2 = select_nondegeneracy_constants(p, n=2)
    assert c1 == pytest.approx(0.9 * 0.5 * 1.5 / 8)
    assert c2 == pytest.approx(c1 / 2)


def test_nondegeneracy_constant_is_linear_for_small_alpha():
    c = [select_nondegeneracy_constants(Potential([[-1.0], [1.0]], a))[1] for a in (0.01, 0.02, 0.04)]
    assert c[1] / c[0] == pytest.approx(2.0, rel=0.02)
    assert c[2] / c[1] == pytest.approx(2.0, rel=0.02)


def test_nondegeneracy_theta_uses_modulation_gradient():
    p = Potential([[-1.0], [1.0]], 1.0, quadratic_bump(1.0, 2.0), 1.0)
    theta, _ = select_nondegeneracy_constants(p)
    assert theta < 0.9
