import numpy as np
import pytest
from hypothesis import given, strategies as st

from surfmpm.errors import ConfigurationError
from surfmpm.kernels import GridGeometry
from surfmpm.shapes import Ball, Box, Ellipsoid, HalfSpace, Intersection, make_shape
from surfmpm.state import (LIQUID_GAS, SOLID_LIQUID, Material, Particles, SurfaceTensionModel, Table,
                           contact_angle, make_rng, seed_particles)


def test_box_seed_counts():
    g = GridGeometry.from_extent([-2.0, -2.0], [5.0, 5.0], 0.5)
    p = seed_particles(Box([0.0, 0.0], [1.0, 1.0]), 4, g, seed=0)
    assert p.n == 16
    np.testing.assert_allclose(p.m, 1.0 / 16)
    np.testing.assert_allclose(p.V0, 1.0 / 16)


def test_seed_determinism_and_streams():
    g = GridGeometry.from_extent([0, 0], [1, 1], 1 / 32)
    a = seed_particles(Ball([0.5, 0.5], 0.2), 8, g, seed=3)
    b = seed_particles(Ball([0.5, 0.5], 0.2), 8, g, seed=3)
    c = seed_particles(Ball([0.5, 0.5], 0.2), 8, g, seed=3, stream=1)
    assert np.array_equal(a.x, b.x)
    assert not np.array_equal(a.x, c.x)


def test_seeded_mass_converges_to_volume():
    shape = Ball([0.5, 0.5], 0.25)
    errs = []
    for n in (16, 32, 64):
        g = GridGeometry.from_extent([0, 0], [1, 1], 1 / n)
        p = seed_particles(shape, 8, g, seed=1, density=2.0)
        errs.append(abs(p.m.sum() - 2.0 * shape.volume()) / (2.0 * shape.volume()))
    assert errs[-1] < 0.02
    assert errs[-1] < errs[0]


def test_seed_outside_safe_region_raises():
    g = GridGeometry.from_extent([0, 0], [1, 1], 1 / 16)
    with pytest.raises(ConfigurationError):
        seed_particles(Box([0.0, 0.2], [0.5, 0.5]), 4, g, seed=0)


def test_seed_temperature_callable_and_velocity():
    g = GridGeometry.from_extent([0, 0], [1, 1], 1 / 16)
    p = seed_particles(Box([0.3, 0.3], [0.6, 0.6]), 4, g, 0, temperature=lambda x: x[:, 0], velocity=[1.0, 2.0])
    np.testing.assert_array_equal(p.T, p.x[:, 0])
    np.testing.assert_array_equal(p.v, np.broadcast_to([1.0, 2.0], p.v.shape))


def test_make_rng_is_keyed():
    assert make_rng(1, 2).random() == make_rng(1, 2).random()
    assert make_rng(1, 2).random() != make_rng(1, 3).random()


def test_particles_concatenate_and_copy():
    g = GridGeometry.from_extent([0, 0], [1, 1], 1 / 16)
    a = seed_particles(Box([0.3, 0.3], [0.5, 0.5]), 4, g, 0)
    both = Particles.concatenate([a, Particles.empty(2), a])
    assert both.n == 2 * a.n
    c = a.copy()
    c.x[0] += 1
    assert not np.array_equal(c.x, a.x)


def test_table_examples():
    t = Table.constant(3.0)
    np.testing.assert_array_equal(t(np.array([-10.0, 0.0, 1e6])), 3.0)
    t = Table([0.0, 1.0], [2.0, 4.0])
    np.testing.assert_allclose(t(np.array([-1.0, 0.25, 2.0])), [2.0, 2.5, 4.0])
    with pytest.raises(ConfigurationError):
        Table([1.0, 0.0], [1.0, 2.0])
    assert Table.coerce([(0.0, 1.0), (1.0, 3.0)])(0.5) == pytest.approx(2.0)


def test_surface_tension_models():
    cavity = SurfaceTensionModel(kind="linear", k0=1.0, slope=-1.0, k_min=0.0, k_max=1.0)
    assert cavity.evaluate(0.3) == pytest.approx(0.7)
    assert cavity.evaluate(1.5) == 0.0
    assert cavity.evaluate(-2.0) == 1.0
    marangoni = SurfaceTensionModel(kind="linear", k0=0.5, slope=4.5 / 50.0, k_min=0.5, k_max=5.0)
    assert marangoni.evaluate(25.0) == pytest.approx(2.75)
    assert marangoni.evaluate(80.0) == pytest.approx(5.0)
    per = SurfaceTensionModel(kind="interface", liquid_gas=2.0, solid_liquid=0.0)
    np.testing.assert_array_equal(per.evaluate(np.zeros(2), np.array([LIQUID_GAS, SOLID_LIQUID])), [2.0, 0.0])
    tab = SurfaceTensionModel(kind="table", table=Table([0.0, 10.0], [1.0, 0.0]))
    assert tab.evaluate(5.0) == pytest.approx(0.5)
    with pytest.raises(ConfigurationError):
        SurfaceTensionModel(kind="bogus")
    with pytest.raises(ConfigurationError):
        SurfaceTensionModel(kind="table")


def test_material_validation():
    m = Material(bulk_modulus=5.0)
    assert m.bulk_modulus(100.0) == 5.0
    with pytest.raises(ConfigurationError):
        Material(viscosity=-1.0)
    with pytest.raises(ConfigurationError):
        Material(density=0.0)


@pytest.mark.parametrize("ratio,deg", [(-np.sqrt(2) / 2, 45.0), (0.0, 90.0), (np.sqrt(2) / 2, 135.0), (1.0, 180.0)])
def test_contact_angle_examples(ratio, deg):
    assert np.degrees(contact_angle(ratio, 1.0)) == pytest.approx(deg)


@given(st.floats(-1.0, 1.0), st.floats(0.01, 100.0))
def test_contact_angle_balances_young(ratio, k_lg):
    theta = contact_angle(ratio * k_lg, k_lg)
    # horizontal force balance at the triple point with no solid-gas tension
    assert 0.0 - ratio * k_lg - k_lg * np.cos(theta) == pytest.approx(0.0, abs=1e-12 * k_lg)


def test_contact_angle_out_of_range():
    with pytest.raises(ConfigurationError):
        contact_angle(1.5, 1.0)


def test_shapes():
    b = Box([0, 0], [1, 2])
    assert b.signed_distance([[0.5, 1.0]])[0] == pytest.approx(-0.5)
    assert b.signed_distance([[2.0, 1.0]])[0] == pytest.approx(1.0)
    e = Ellipsoid([0, 0], [2.0, 1.0])
    assert e.signed_distance([[2.0, 0.0]])[0] == pytest.approx(0.0)
    assert e.signed_distance([[0.0, 0.0]])[0] < 0
    h = HalfSpace([0, 0.1], [0, 1])
    assert h.signed_distance([[3.0, 0.3]])[0] == pytest.approx(0.2)
    cap = Intersection([Ball([0.5, 0.1], 0.2), HalfSpace([0, 0.1], [0, -1])])
    lo, hi = cap.bounds()
    np.testing.assert_allclose(lo, [0.3, 0.1])
    np.testing.assert_allclose(hi, [0.7, 0.3])
    s = make_shape({"type": "intersection", "shapes": [{"type": "ball", "center": [0, 0], "radius": 1},
                                                       {"type": "half_space", "point": [0, 0], "normal": [1, 0]}]}, 2)
    assert s.signed_distance([[-0.5, 0.0]])[0] == pytest.approx(-0.5)
    with pytest.raises(ValueError):
        make_shape({"type": "torus"}, 2)
