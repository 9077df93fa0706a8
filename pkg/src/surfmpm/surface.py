"""Per-step boundary reconstruction.

The liquid boundary is the zero isocontour of a union of spheres around
the interior particles, extracted with marching squares (2D) or marching
cubes (3D), and sampled with blue-noise quadrature points that carry
area-weighted normals.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from itertools import product

import numpy as np

from .errors import ConfigurationError
from .kernels import GridGeometry
from .state import LIQUID_GAS, SOLID_LIQUID, SurfaceSamples, make_rng

log = logging.getLogger(__name__)

RADIUS_FACTOR = {2: 0.73, 3: 0.867}


def level_set_radius(grid: GridGeometry) -> float:
    return RADIUS_FACTOR[grid.dim] * grid.dx


@dataclass
class LevelSetField:
    grid: GridGeometry
    phi: np.ndarray          # node values, shape == grid.shape
    radius: float

    def at_nodes(self):
        return self.phi.ravel()


@dataclass
class IsoMesh:
    """Segments (2D) or triangles (3D) with outward unit normals."""

    vertices: np.ndarray     # (E, d, d): element corner coordinates
    normals: np.ndarray      # (E, d)
    measures: np.ndarray     # (E,)

    @property
    def dim(self) -> int:
        return self.normals.shape[1] if self.normals.size else self.vertices.shape[-1]

    @property
    def n(self) -> int:
        return self.measures.size

    def total_measure(self) -> float:
        return float(self.measures.sum())


def build_level_set(x, grid: GridGeometry, radius=None) -> LevelSetField:
    """Exact union-of-spheres distance ``min_p |x_i - x_p| - r`` near the particles."""
    x = np.atleast_2d(np.asarray(x, float))
    if x.shape[0] == 0:
        raise ConfigurationError("level set needs at least one particle")
    d = grid.dim
    r = level_set_radius(grid) if radius is None else float(radius)
    reach = r + grid.dx * np.sqrt(d)
    background = reach + grid.dx
    phi = np.full(grid.num_nodes, background)
    u = (x - grid.origin) / grid.dx - 0.5
    center = np.rint(u).astype(np.int64)
    offs = np.array(list(product(range(-2, 3), repeat=d)), dtype=np.int64)
    idx = center[:, None, :] + offs[None, :, :]                      # (N, 25|125, d)
    inside = np.all((idx >= 0) & (idx < np.asarray(grid.shape)), axis=2)
    pos = grid.origin + (idx + 0.5) * grid.dx
    dist = np.linalg.norm(pos - x[:, None, :], axis=2) - r
    keep = inside & (dist <= reach)
    flat = (idx @ grid.strides)[keep]
    np.minimum.at(phi, flat, dist[keep])
    return LevelSetField(grid, phi.reshape(grid.shape), r)


# Marching squares. Corners counter-clockwise: c0=(0,0) c1=(1,0) c2=(1,1) c3=(0,1);
# edge k joins corner k to corner k+1. A contour segment starts on an edge whose
# first corner is inside and ends on one whose second corner is inside, so the
# liquid is on the left and the outward normal is the right-hand perpendicular.
_CORNERS = np.array([[0, 0], [1, 0], [1, 1], [0, 1]])


def _square_segments(case, center_inside):
    inside = [(case >> k) & 1 for k in range(4)]
    starts = [k for k in range(4) if inside[k] and not inside[(k + 1) % 4]]
    ends = [k for k in range(4) if not inside[k] and inside[(k + 1) % 4]]
    if len(starts) == 1:
        return [(starts[0], ends[0])]
    if len(starts) == 0:
        return []
    # saddle: corners 0,2 or 1,3 inside
    if center_inside:
        # inside region connects through the center; cut off the outside corners
        return [(s, (s + 1) % 4) for s in starts]
    return [(s, (s - 1) % 4) for s in starts]


_MS_TABLE = {(c, ci): _square_segments(c, ci) for c in range(16) for ci in (False, True)}


def _marching_squares(phi, grid: GridGeometry) -> IsoMesh:
    nx, ny = phi.shape
    corner_vals = np.stack([phi[i:nx - 1 + i, j:ny - 1 + j] for i, j in _CORNERS], axis=-1)
    neg = corner_vals < 0
    case = (neg * (1 << np.arange(4))).sum(-1)
    mixed = (case > 0) & (case < 15)
    ci, cj = np.nonzero(mixed)
    vals = corner_vals[ci, cj]                                  # (C, 4)
    cases = case[ci, cj]
    center_in = vals.mean(axis=1) < 0
    base = grid.origin + (np.stack([ci, cj], axis=1) + 0.5) * grid.dx
    corner_pos = base[:, None, :] + _CORNERS[None] * grid.dx   # (C, 4, 2)

    def edge_point(rows, k):
        a, b = k, (k + 1) % 4
        pa, pb = vals[rows, a], vals[rows, b]
        t = pa / (pa - pb)
        return corner_pos[rows, a] + t[:, None] * (corner_pos[rows, b] - corner_pos[rows, a])

    starts, ends = [], []
    for (c, cin), segs in _MS_TABLE.items():
        if not segs:
            continue
        rows = np.flatnonzero((cases == c) & (center_in == cin))
        if rows.size == 0:
            continue
        for ks, ke in segs:
            starts.append(edge_point(rows, ks))
            ends.append(edge_point(rows, ke))
    if not starts:
        return IsoMesh(np.zeros((0, 2, 2)), np.zeros((0, 2)), np.zeros(0))
    p = np.concatenate(starts)
    q = np.concatenate(ends)
    t = q - p
    length = np.linalg.norm(t, axis=1)
    normal = np.stack([t[:, 1], -t[:, 0]], axis=1) / np.where(length > 0, length, 1.0)[:, None]
    return IsoMesh(np.stack([p, q], axis=1), normal, length)


def _marching_cubes(phi, grid: GridGeometry) -> IsoMesh:
    from skimage.measure import marching_cubes

    verts, faces, _, _ = marching_cubes(phi, level=0.0, spacing=(grid.dx,) * 3,
                                        method="lorensen", allow_degenerate=True)
    verts = verts + grid.origin + 0.5 * grid.dx
    tri = verts[faces]                                           # (E, 3, 3)
    cr = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
    area2 = np.linalg.norm(cr, axis=1)
    normal = cr / np.where(area2 > 0, area2, 1.0)[:, None]
    # orient consistently toward increasing phi
    centroid = tri.mean(axis=1)
    grad = _grad_trilinear(phi, grid, centroid)
    if np.sum(np.einsum("ij,ij->i", grad, normal)) < 0:
        tri = tri[:, [0, 2, 1]]
        normal = -normal
    return IsoMesh(tri, normal, 0.5 * area2)


def _grad_trilinear(phi, grid, pts):
    g = np.stack(np.gradient(phi, grid.dx), axis=-1)
    idx = np.clip(np.rint((pts - grid.origin) / grid.dx - 0.5).astype(int), 0, np.asarray(phi.shape) - 1)
    return g[tuple(idx.T)]


def extract_isocontour(field: LevelSetField) -> IsoMesh:
    """Zero isocontour of a node-sampled level set, normals pointing to phi > 0."""
    phi = field.phi
    d = field.grid.dim
    if np.all(phi < 0):
        raise ConfigurationError("liquid fills the whole domain; enlarge the grid")
    if not np.any(phi < 0):
        return IsoMesh(np.zeros((0, d, d)), np.zeros((0, d)), np.zeros(0))
    if d == 2:
        return _marching_squares(phi, field.grid)
    return _marching_cubes(phi, field.grid)


def _sample_in_elements(verts, u1, u2):
    if verts.shape[1] == 2:
        return verts[:, 0] + u1[:, None] * (verts[:, 1] - verts[:, 0])
    r1 = np.sqrt(u1)[:, None]
    r2 = u2[:, None]
    return (1 - r1) * verts[:, 0] + r1 * (1 - r2) * verts[:, 1] + r1 * r2 * verts[:, 2]


def sample_surface(mesh: IsoMesh, target_density: float, seed: int, stream: int = 0,
                   max_attempts: int = 30) -> SurfaceSamples:
    """Blue-noise quadrature samples with area-weighted normals.

    Every element with positive measure keeps at least one sample, and its
    measure is split equally among its samples, so ``sum |dA|`` equals the
    mesh measure.
    """
    good = mesh.measures > 0
    skipped = int(np.sum(~good))
    if skipped:
        log.debug("skipped %d zero-measure elements", skipped)
    verts = mesh.vertices[good]
    normals = mesh.normals[good]
    meas = mesh.measures[good]
    E = meas.size
    d = mesh.dim
    if E == 0:
        return SurfaceSamples.from_points(np.zeros((0, d)), np.zeros((0, d)))
    rng = make_rng(seed, stream)
    expect = target_density * meas
    target = np.maximum(1, np.floor(expect + rng.random(E))).astype(int)
    radius = 0.7 * target_density ** (-1.0 / (d - 1))
    nmax = int(target.max())
    accepted = np.full((E, nmax, d), np.nan)
    count = np.zeros(E, int)
    for attempt in range(nmax * (max_attempts + 1)):
        want = count < target
        if not np.any(want):
            break
        rows = np.flatnonzero(want)
        pts = _sample_in_elements(verts[rows], rng.random(rows.size), rng.random(rows.size))
        dist = np.linalg.norm(accepted[rows] - pts[:, None, :], axis=2)
        ok = ~np.any(dist < radius, axis=1)          # NaN slots compare False
        rows, pts = rows[ok], pts[ok]
        accepted[rows, count[rows]] = pts
        count[rows] += 1
    mask = np.arange(nmax)[None, :] < count[:, None]
    elem = np.repeat(np.arange(E), count)
    s = accepted[mask]
    dA = normals[elem] * (meas[elem] / count[elem])[:, None]
    return SurfaceSamples.from_points(s, dA)


def classify_interface(s, colliders, contact_epsilon: float) -> np.ndarray:
    """SOLID_LIQUID where a sample is within ``contact_epsilon`` of a collider."""
    s = np.atleast_2d(s)
    label = np.full(s.shape[0], LIQUID_GAS, dtype=int)
    for c in colliders:
        label[c.signed_distance(s) <= contact_epsilon] = SOLID_LIQUID
    return label


def contact_axes(s, colliders, contact_epsilon: float):
    """Unit normal and signed distance of the nearest collider within ``contact_epsilon``.

    Rows with no collider in range get a zero normal and zero distance.
    """
    s = np.atleast_2d(s)
    out = np.zeros_like(s, dtype=float)
    best = np.full(s.shape[0], np.inf)
    for c in colliders:
        dist = c.signed_distance(s)
        hit = (dist <= contact_epsilon) & (dist < best)
        if np.any(hit):
            out[hit] = c.normal(s[hit])
            best[hit] = dist[hit]
    return out, np.where(np.isfinite(best), best, 0.0)


def assign_surface_coefficient(interface, model, temperature) -> np.ndarray:
    """Per-sample ``k_sigma`` from a SurfaceTensionModel."""
    return model.evaluate(temperature, interface)


def write_obj(mesh: IsoMesh, path):
    """Wavefront OBJ; 2D segments become ``l`` records with z = 0."""
    with open(path, "w") as fh:
        fh.write("# isocontour\n")
        for el in mesh.vertices:
            for v in el:
                xyz = list(v) + [0.0] * (3 - len(v))
                fh.write("v {:.17g} {:.17g} {:.17g}\n".format(*xyz))
        k = mesh.vertices.shape[1] if mesh.n else 0
        for e in range(mesh.n):
            ids = " ".join(str(e * k + j + 1) for j in range(k))
            fh.write(("l " if k == 2 else "f ") + ids + "\n")


def write_samples_csv(samples: SurfaceSamples, path):
    d = samples.s.shape[1]
    s = np.zeros((samples.n, 3))
    a = np.zeros((samples.n, 3))
    s[:, :d] = samples.s
    a[:, :d] = samples.dA
    with open(path, "w") as fh:
        fh.write("x,y,z,dAx,dAy,dAz,interface\n")
        for row, lab in zip(np.hstack([s, a]), samples.interface):
            fh.write(",".join(f"{v:.17g}" for v in row) + f",{'SL' if lab == SOLID_LIQUID else 'LG'}\n")
