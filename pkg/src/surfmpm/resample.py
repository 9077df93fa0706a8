"""Conservative split and merge of interior particles with their surface samples.

Before P2G every surface sample is attached to its nearest interior
particle, mirrored through it to make a balance sample, and the owner's
mass is shared equally by the owner and all its samples. Because the
group's center of mass stays at the owner, giving every member the owner's
``(v, A)`` conserves linear and angular momentum. After the grid update
the group's share of grid momentum is gathered back into the owner.
"""
from __future__ import annotations

import numpy as np
from scipy.spatial import cKDTree

from .errors import ResolutionError
from .kernels import GridGeometry, spline_stencil
from .state import BalanceSamples, Particles, Split, SurfaceSamples
from .transfer import Bodies


def form_groups(x, s) -> np.ndarray:
    """Owner index per sample: nearest particle, ties to the lowest index."""
    x = np.atleast_2d(x)
    s = np.atleast_2d(s)
    if s.shape[0] == 0:
        return np.zeros(0, dtype=int)
    k = min(4, x.shape[0])
    dist, idx = cKDTree(x).query(s, k=k)
    if k == 1:
        return np.asarray(idx, dtype=int).reshape(-1)
    # exact distances so equal candidates compare equal
    exact = np.linalg.norm(x[idx] - s[:, None, :], axis=2)
    best = exact.min(axis=1, keepdims=True)
    cand = np.where(exact == best, idx, np.iinfo(np.int64).max)
    return cand.min(axis=1).astype(int)


def spawn_balance(s, x_owner, grid: GridGeometry | None = None) -> np.ndarray:
    """Mirror each sample through its owner: ``b = s + 2 (x_p - s)``."""
    b = s + 2.0 * (x_owner - s)
    if grid is not None and b.shape[0]:
        u = (b - grid.origin) / grid.dx - 0.5
        base = np.floor(u - 0.5)
        bad = np.any((base < 0) | (base > np.asarray(grid.shape) - 3), axis=1)
        if np.any(bad):
            r = int(np.flatnonzero(bad)[0])
            raise ResolutionError(
                f"balance particle {r} at {b[r]} left the grid; enlarge the domain or move the material inward")
    return b


def split_mass(m, owner, n_particles):
    """Group sizes and the shared mass ``m_p / (2 |Pi_p| + 1)``."""
    size = np.bincount(owner, minlength=n_particles)
    return size, m / (2 * size + 1)


def split(particles: Particles, samples: SurfaceSamples, grid: GridGeometry | None = None,
          massless: bool = False) -> Split:
    """Form groups, spawn balance samples and share mass.

    With ``massless=True`` the samples get zero mass and no balance
    partners, and owners keep their full mass.
    """
    owner = form_groups(particles.x, samples.s)
    samples.owner = owner
    if massless:
        samples.m_tilde = np.zeros(samples.n)
        size = np.bincount(owner, minlength=particles.n)
        return Split(samples, None, size, particles.m.copy(), massless=True)
    size, mt = split_mass(particles.m, owner, particles.n)
    b = spawn_balance(samples.s, particles.x[owner], grid)
    samples.m_tilde = mt[owner]
    balance = BalanceSamples(b, owner.copy(), mt[owner])
    return Split(samples, balance, size, mt)


def bodies(particles: Particles, sp: Split) -> Bodies:
    """Owners, surface and balance samples as one splat list."""
    own = sp.samples.owner
    parts_q = [particles.x, sp.samples.s]
    parts_m = [sp.m_tilde, sp.samples.m_tilde]
    parts_o = [np.arange(particles.n), own]
    if sp.balance is not None:
        parts_q.append(sp.balance.b)
        parts_m.append(sp.balance.m_tilde)
        parts_o.append(sp.balance.owner)
    owner = np.concatenate(parts_o)
    return Bodies(np.concatenate(parts_q), np.concatenate(parts_m),
                  particles.v[owner], particles.A[owner], owner)


def group_center_of_mass(particles: Particles, sp: Split) -> np.ndarray:
    """Per-particle center of mass of its group (equals x_p by construction)."""
    bd = bodies(particles, sp)
    com = np.stack([np.bincount(bd.owner, weights=bd.m * bd.q[:, a], minlength=particles.n)
                    for a in range(particles.dim)], axis=1)
    return com / particles.m[:, None]


def merge(particles: Particles, sp: Split, velocity, grid: GridGeometry, owners=None):
    """Gather each group's share of grid momentum back into its owner.

    Returns ``(v, A)`` for the requested owners (default: split owners),
    with ``A = 4 / (m_p dx^2) * sum_i p_ip (x_i - x_p)^T``.
    """
    if owners is None:
        owners = sp.split_owners
    owners = np.asarray(owners, dtype=int)
    n = particles.n
    d = particles.dim
    sel = np.zeros(n, bool)
    sel[owners] = True
    bd = bodies(particles, sp)
    keep = sel[bd.owner]
    q, m, own = bd.q[keep], bd.m[keep], bd.owner[keep]
    st = spline_stencil(q, grid)
    p = (m[:, None] * st.weights)[:, :, None] * velocity[st.nodes]          # (B, K, d)
    rel = st.offsets + (q - particles.x[own])[:, None, :]                   # x_i - x_p
    mom = np.stack([np.bincount(own, weights=p[:, :, a].sum(1), minlength=n) for a in range(d)], axis=1)
    moment = np.einsum("bka,bkc->bac", p, rel).reshape(-1, d * d)
    t = np.stack([np.bincount(own, weights=moment[:, c], minlength=n) for c in range(d * d)], axis=1)
    mp = particles.m[owners]
    v = mom[owners] / mp[:, None]
    A = (4.0 / (grid.dx**2)) * t[owners].reshape(-1, d, d) / mp[:, None, None]
    return v, A


def merge_scalar(particles: Particles, sp: Split, field, grid: GridGeometry, owners=None):
    """Mass-weighted gather of a nodal scalar through each owner's group.

    ``phi_p = sum_b m_b sum_i N_i(q_b) phi_i / m_p``, so that
    ``sum_p m_p phi_p = sum_i m_i phi_i`` over the split mass distribution.
    """
    if owners is None:
        owners = sp.split_owners
    owners = np.asarray(owners, dtype=int)
    sel = np.zeros(particles.n, bool)
    sel[owners] = True
    bd = bodies(particles, sp)
    keep = sel[bd.owner]
    st = spline_stencil(bd.q[keep], grid)
    share = bd.m[keep] * np.sum(st.weights * field[st.nodes], axis=1)
    total = np.bincount(bd.owner[keep], weights=share, minlength=particles.n)
    return total[owners] / particles.m[owners]
