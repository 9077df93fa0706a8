import numpy as np
import pytest

from surfmpm.errors import ConfigurationError
from surfmpm.kernels import GridGeometry
from surfmpm.shapes import HalfSpace
from surfmpm.solve_momentum import Collider
from surfmpm.state import LIQUID_GAS, SOLID_LIQUID
from surfmpm.surface import (IsoMesh, LevelSetField, build_level_set, classify_interface, contact_axes,
                             extract_isocontour, level_set_radius, sample_surface, write_obj,
                             write_samples_csv)


def grid2(n=32):
    return GridGeometry.from_extent([0, 0], [1, 1], 1 / n)


def test_single_particle_at_node():
    g = grid2()
    x = g.node_positions()[200]
    field = build_level_set(x[None], g)
    assert field.at_nodes()[200] == pytest.approx(-0.73 * g.dx)


def test_coincident_particles_idempotent():
    g = grid2()
    x = np.array([[0.41, 0.57]])
    a = build_level_set(x, g).phi
    b = build_level_set(np.vstack([x, x]), g).phi
    np.testing.assert_array_equal(a, b)


@pytest.mark.parametrize("d", [2, 3])
def test_isolated_particle_always_has_contour(d):
    n = 32 if d == 2 else 12
    g = GridGeometry.from_extent([0.0] * d, [1.0] * d, 1 / n)
    rng = np.random.default_rng(d)
    count = 100 if d == 2 else 20
    for x in 0.3 + 0.4 * rng.random((count, d)):
        mesh = extract_isocontour(build_level_set(x[None], g))
        assert mesh.n > 0
        assert mesh.total_measure() > 0


def test_flat_contour_from_plane():
    g = grid2(16)
    c = 0.43
    phi = (g.node_positions()[:, 1] - c).reshape(g.shape)
    mesh = extract_isocontour(LevelSetField(g, phi, 0.0))
    np.testing.assert_allclose(mesh.vertices[:, :, 1], c, atol=1e-12)
    np.testing.assert_allclose(mesh.normals, np.broadcast_to([0.0, 1.0], mesh.normals.shape), atol=1e-12)
    assert mesh.total_measure() == pytest.approx(g.dx * (g.shape[0] - 1))


def test_all_positive_field_is_empty():
    g = grid2(8)
    mesh = extract_isocontour(LevelSetField(g, np.ones(g.shape), 0.0))
    assert mesh.n == 0


def test_all_negative_field_raises():
    g = grid2(8)
    with pytest.raises(ConfigurationError):
        extract_isocontour(LevelSetField(g, -np.ones(g.shape), 0.0))


def test_circle_contour_is_closed_and_outward():
    g = grid2(32)
    c, r = np.array([0.5, 0.5]), 0.3
    phi = (np.linalg.norm(g.node_positions() - c, axis=1) - r).reshape(g.shape)
    mesh = extract_isocontour(LevelSetField(g, phi, 0.0))
    assert mesh.total_measure() == pytest.approx(2 * np.pi * r, rel=0.01)
    mid = mesh.vertices.mean(axis=1)
    assert np.all(np.sum(mesh.normals * (mid - c), axis=1) > 0)
    # closed curve: the area-weighted normals sum to zero
    np.testing.assert_allclose((mesh.normals * mesh.measures[:, None]).sum(0), 0.0, atol=1e-12)


def test_sphere_area_3d():
    r = 0.3
    g = GridGeometry.from_extent([0, 0, 0], [1, 1, 1], r / 8)
    c = np.full(3, 0.5)
    phi = (np.linalg.norm(g.node_positions() - c, axis=1) - r).reshape(g.shape)
    mesh = extract_isocontour(LevelSetField(g, phi, 0.0))
    assert mesh.total_measure() == pytest.approx(4 * np.pi * r**2, rel=0.05)
    mid = mesh.vertices.mean(axis=1)
    assert np.all(np.sum(mesh.normals * (mid - c), axis=1) > 0)
    samples = sample_surface(mesh, 2 / g.dx**2, seed=0)
    assert np.linalg.norm(samples.dA, axis=1).sum() == pytest.approx(mesh.total_measure(), rel=1e-12)


def test_one_triangle_four_samples():
    tri = np.array([[[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]])
    mesh = IsoMesh(tri, np.array([[0.0, 0.0, 1.0]]), np.array([0.5]))
    # density 8 per unit area gives exactly four samples on area 1/2
    s = sample_surface(mesh, 8.0, seed=0)
    assert s.n == 4
    np.testing.assert_allclose(s.dA, np.broadcast_to([0, 0, 0.125], (4, 3)))


def _point_on_segment(p, a, b):
    t = np.clip(np.sum((p - a) * (b - a), 1) / np.sum((b - a) ** 2, 1), 0, 1)
    return np.linalg.norm(a + t[:, None] * (b - a) - p, axis=1)


def test_samples_partition_and_lie_on_elements():
    g = grid2(32)
    rng = np.random.default_rng(0)
    x = 0.5 + 0.2 * (rng.random((300, 2)) - 0.5)
    mesh = extract_isocontour(build_level_set(x, g))
    s = sample_surface(mesh, 2 / g.dx, seed=4)
    assert np.linalg.norm(s.dA, axis=1).sum() == pytest.approx(mesh.total_measure(), rel=1e-12)
    # match each sample to the element whose normal it carries and check the distance
    best = np.full(s.n, np.inf)
    for a, b in zip(mesh.vertices[:, 0], mesh.vertices[:, 1]):
        best = np.minimum(best, _point_on_segment(s.s, a[None], b[None]))
    assert best.max() < 1e-10


def test_samples_deterministic():
    g = grid2(32)
    x = np.array([[0.5, 0.5], [0.52, 0.5]])
    mesh = extract_isocontour(build_level_set(x, g))
    a = sample_surface(mesh, 2 / g.dx, seed=1, stream=3)
    b = sample_surface(mesh, 2 / g.dx, seed=1, stream=3)
    np.testing.assert_array_equal(a.s, b.s)
    np.testing.assert_array_equal(a.dA, b.dA)


def test_classify_interface():
    g = grid2()
    floor = Collider(HalfSpace([0, 0.2], [0, 1]))
    wall = Collider(HalfSpace([0.1, 0], [1, 0]))
    s = np.array([[0.5, 0.2], [0.5, 0.2 + 10 * g.dx], [0.1, 0.6]])
    assert np.all(classify_interface(s, [], 0.5 * g.dx) == LIQUID_GAS)
    lab = classify_interface(s, [floor, wall], 0.5 * g.dx)
    np.testing.assert_array_equal(lab, [SOLID_LIQUID, LIQUID_GAS, SOLID_LIQUID])
    np.testing.assert_array_equal(lab, classify_interface(s, [wall, floor], 0.5 * g.dx))


def test_contact_axes_pick_nearest_wall():
    g = grid2()
    floor = Collider(HalfSpace([0, 0.2], [0, 1]))
    wall = Collider(HalfSpace([0.1, 0], [1, 0]))
    s = np.array([[0.5, 0.21], [0.5, 0.6], [0.105, 0.203], [0.102, 0.6]])
    n, d = contact_axes(s, [floor, wall], 0.5 * g.dx)
    np.testing.assert_allclose(n, [[0, 1], [0, 0], [0, 1], [1, 0]], atol=1e-9)
    np.testing.assert_allclose(d, [0.01, 0.0, 0.003, 0.002], atol=1e-12)


def test_level_set_radius():
    assert level_set_radius(grid2(10)) == pytest.approx(0.073)
    g3 = GridGeometry.from_extent([0, 0, 0], [1, 1, 1], 0.1)
    assert level_set_radius(g3) == pytest.approx(0.0867)


def test_writers(tmp_path):
    g = grid2(16)
    mesh = extract_isocontour(build_level_set(np.array([[0.5, 0.5]]), g))
    s = sample_surface(mesh, 2 / g.dx, seed=0)
    write_obj(mesh, tmp_path / "m.obj")
    write_samples_csv(s, tmp_path / "s.csv")
    lines = (tmp_path / "m.obj").read_text().splitlines()
    assert sum(ln.startswith("v ") for ln in lines) == 2 * mesh.n
    assert sum(ln.startswith("l ") for ln in lines) == mesh.n
    assert len((tmp_path / "s.csv").read_text().splitlines()) == s.n + 1
