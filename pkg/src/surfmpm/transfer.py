"""APIC particle/grid transfers, strain update and advection."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .kernels import EPS_J, GridGeometry, SplineStencil, spline_stencil
from .state import LIQUID, SOLID, GridState, Particles

log = logging.getLogger(__name__)


@dataclass
class Bodies:
    """Everything that splats mass: owners, surface and balance samples.

    Each body carries the velocity and affine velocity of its owner.
    """

    q: np.ndarray
    m: np.ndarray
    v: np.ndarray
    A: np.ndarray
    owner: np.ndarray

    @property
    def n(self):
        return self.q.shape[0]


def scatter(nodes, values, num_nodes):
    """Sum ``values`` (B, K[, d]) into nodes; deterministic fixed-order reduction."""
    flat = nodes.ravel()
    if values.ndim == 2:
        return np.bincount(flat, weights=values.ravel(), minlength=num_nodes)
    d = values.shape[-1]
    vals = values.reshape(-1, d)
    return np.stack([np.bincount(flat, weights=vals[:, a], minlength=num_nodes) for a in range(d)], axis=1)


def p2g_mass_momentum(bodies: Bodies, grid: GridGeometry, stencil: SplineStencil | None = None) -> GridState:
    """APIC splat: ``m_i v_i = sum_b m_b N_i(q_b) (v_b + A_b (x_i - q_b))``."""
    st = stencil if stencil is not None else spline_stencil(bodies.q, grid)
    mw = bodies.m[:, None] * st.weights
    affine = np.einsum("bad,bkd->bka", bodies.A, st.offsets)
    mom = mw[:, :, None] * (bodies.v[:, None, :] + affine)
    state = GridState.zeros(grid)
    state.mass = scatter(st.nodes, mw, grid.num_nodes)
    state.momentum = scatter(st.nodes, mom, grid.num_nodes)
    act = state.mass > 0
    state.velocity[act] = state.momentum[act] / state.mass[act, None]
    state.momentum[~act] = 0.0
    return state


def p2g_temperature(particles: Particles, grid: GridGeometry, support_mass=None, stencil=None):
    """Mass-weighted APIC-style temperature splat from interior particles only.

    Returns ``(T_i, supported)``. Nodes that have momentum mass
    (``support_mass > 0``) but no interior support take the value of the
    nearest supported node.
    """
    st = stencil if stencil is not None else spline_stencil(particles.x, grid)
    mw = particles.m[:, None] * st.weights
    Tq = particles.T[:, None] + np.einsum("bkd,bd->bk", st.offsets, particles.gradT)
    wsum = scatter(st.nodes, mw, grid.num_nodes)
    tsum = scatter(st.nodes, mw * Tq, grid.num_nodes)
    supported = wsum > 0
    T = np.zeros(grid.num_nodes)
    T[supported] = tsum[supported] / wsum[supported]
    if support_mass is not None:
        orphan = (support_mass > 0) & ~supported
        if np.any(orphan):
            _, idx = ndimage.distance_transform_edt(~supported.reshape(grid.shape), return_indices=True)
            nearest = np.ravel_multi_index(tuple(i.ravel() for i in idx), grid.shape)
            T[orphan] = T[nearest[orphan]]
            log.debug("filled %d orphan temperature nodes", int(orphan.sum()))
    return T, supported


def g2p_standard(velocity, x, grid: GridGeometry, stencil=None):
    """``v_p = sum N_i v_i``, ``A_p = 4/dx^2 sum N_i v_i (x_i - x_p)^T``."""
    st = stencil if stencil is not None else spline_stencil(x, grid)
    vi = velocity[st.nodes]                                    # (B, K, d)
    v = np.einsum("bk,bka->ba", st.weights, vi)
    A = (4.0 / grid.dx**2) * np.einsum("bk,bka,bkc->bac", st.weights, vi, st.offsets)
    return v, A


def g2p_temperature(T_grid, x, grid: GridGeometry, stencil=None):
    st = stencil if stencil is not None else spline_stencil(x, grid)
    Ti = T_grid[st.nodes]
    return np.einsum("bk,bk->b", st.weights, Ti), np.einsum("bk,bkd->bd", Ti, st.gradients)


def velocity_gradient(velocity, stencil: SplineStencil):
    """``sum_i v_i (grad N_i)^T`` per particle."""
    return np.einsum("bka,bkc->bac", velocity[stencil.nodes], stencil.gradients)


def update_strain(particles: Particles, velocity, dt, grid: GridGeometry, stencil=None):
    """Advance J (liquid) and F (solid) with the moved-node map ``y = x + dt v``.

    Returns the number of inversion events clamped to EPS_J.
    """
    st = stencil if stencil is not None else spline_stencil(particles.x, grid)
    d = grid.dim
    L = velocity_gradient(velocity, st)
    liq = particles.phase == LIQUID
    sol = ~liq
    events = 0
    if np.any(liq):
        factor = 1.0 + dt * np.trace(L[liq], axis1=1, axis2=2)
        Jn = factor * particles.J[liq]
        bad = Jn <= 0
        events += int(bad.sum())
        particles.J[liq] = np.where(bad, EPS_J, Jn)
    if np.any(sol):
        G = np.eye(d)[None] + dt * L[sol]
        Fn = G @ particles.F[sol]
        det = np.linalg.det(Fn)
        bad = det <= 0
        if np.any(bad):
            events += int(bad.sum())
            log.warning("%d solid particles inverted; resetting", int(bad.sum()))
            Fn[bad] = np.eye(d) * EPS_J ** (1.0 / d)
            det[bad] = EPS_J
        particles.F[sol] = Fn
        particles.J[sol] = det
    if events:
        log.warning("clamped %d inverted particles", events)
    return events


def advect(particles: Particles, dt, grid: GridGeometry) -> int:
    """``x += dt v``; particles leaving the safe region are projected back.

    Returns the number of projected particles.
    """
    particles.x += dt * particles.v
    lo, hi = grid.safe_bounds()
    low = particles.x < lo
    high = particles.x > hi
    hit = low | high
    if np.any(hit):
        particles.x = np.clip(particles.x, lo, hi)
        particles.v[hit] = 0.0
    return int(np.any(hit, axis=1).sum())


def particle_angular_momentum(x, v, A, m, dx):
    """``m x cross v + m dx^2/4 axial(A)``; scalar in 2D, vector in 3D."""
    D = dx**2 / 4.0
    if x.shape[1] == 2:
        orbital = m * (x[:, 0] * v[:, 1] - x[:, 1] * v[:, 0])
        spin = m * D * (A[:, 1, 0] - A[:, 0, 1])
        return orbital + spin
    orbital = m[:, None] * np.cross(x, v)
    axial = np.stack([A[:, 2, 1] - A[:, 1, 2], A[:, 0, 2] - A[:, 2, 0], A[:, 1, 0] - A[:, 0, 1]], axis=1)
    return orbital + m[:, None] * D * axial


def grid_angular_momentum(grid_state: GridState):
    x = grid_state.geometry.node_positions()
    p = grid_state.momentum
    if x.shape[1] == 2:
        return x[:, 0] * p[:, 1] - x[:, 1] * p[:, 0]
    return np.cross(x, p)


__all__ = [
    "Bodies", "scatter", "p2g_mass_momentum", "p2g_temperature", "g2p_standard", "g2p_temperature",
    "velocity_gradient", "update_strain", "advect", "particle_angular_momentum",
    "grid_angular_momentum", "SOLID",
]
