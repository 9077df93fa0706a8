"""Implicit heat transfer on the grid with Robin boundary terms, plus phase change.

The grid temperatures solve

    (C/dt + K_diff + K_robin) T' = C T / dt + robin_rhs + source

where ``C_i = c_p m_i`` and the Robin terms are integrated with the
surface samples of the step.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

from .errors import ConfigurationError
from .kernels import GridGeometry, spline_stencil
from .solve_momentum import pcg
from .state import LIQUID, SOLID, Material, Particles, SurfaceSamples

log = logging.getLogger(__name__)


@dataclass
class Heater:
    """Spherical heat source acting on nearby surface samples.

    Inside ``radius`` the ambient temperature is blended toward
    ``temperature`` and the flux ``flux`` is added, both with a smooth-step
    falloff in distance.
    """

    center: np.ndarray
    radius: float
    temperature: float | None = None
    flux: float = 0.0

    def __post_init__(self):
        self.center = np.asarray(self.center, float)
        if self.radius <= 0:
            raise ConfigurationError("heater radius must be positive")

    def weight(self, x):
        t = np.clip(1.0 - np.linalg.norm(np.atleast_2d(x) - self.center, axis=1) / self.radius, 0.0, 1.0)
        return t * t * (3.0 - 2.0 * t)


@dataclass
class ThermalParams:
    ambient_temperature: float = 0.0
    heaters: list = field(default_factory=list)
    literal_source_h: bool = False   # multiply the volumetric source by h as printed


@dataclass
class ThermalSystem:
    A: sparse.csr_matrix
    rhs: np.ndarray
    active: np.ndarray          # grid node ids of the unknowns
    x0: np.ndarray
    heat_capacity: np.ndarray   # c_p m_i on active nodes

    def full(self, values, num_nodes, fill=0.0):
        out = np.full(num_nodes, fill, float)
        out[self.active] = values
        return out


def evaluate_material_coeffs(materials, particles: Particles) -> dict:
    """Per-particle mechanical coefficients from the temperature tables."""
    n = particles.n
    out = {k: np.zeros(n) for k in ("bulk_modulus", "viscosity", "mu_solid", "lambda_solid",
                                    "specific_heat", "conductivity", "convective_h",
                                    "boundary_heating", "heat_source", "melt_temperature")}
    for mid, mat in enumerate(materials):
        sel = particles.material == mid
        if not np.any(sel):
            continue
        T = particles.T[sel]
        out["bulk_modulus"][sel] = mat.bulk_modulus(T)
        out["viscosity"][sel] = mat.viscosity(T)
        out["mu_solid"][sel] = mat.mu_solid(T)
        out["lambda_solid"][sel] = mat.lambda_solid(T)
        for k in ("specific_heat", "conductivity", "convective_h", "boundary_heating", "heat_source"):
            out[k][sel] = getattr(mat, k)
        out["melt_temperature"][sel] = np.nan if mat.melt_temperature is None else mat.melt_temperature
    return out


def surface_fields(samples: SurfaceSamples, particles: Particles, materials, params: ThermalParams):
    """Per-sample ``(h, T_bar, b)`` from the owner's material and the heaters."""
    own = samples.owner
    mids = particles.material[own]
    h = np.array([materials[m].convective_h for m in mids], float) if own.size else np.zeros(0)
    b = np.array([materials[m].boundary_heating for m in mids], float) if own.size else np.zeros(0)
    Tbar = np.full(samples.n, float(params.ambient_temperature))
    for ht in params.heaters:
        w = ht.weight(samples.s) if samples.n else np.zeros(0)
        if ht.temperature is not None:
            Tbar += w * (ht.temperature - Tbar)
        b = b + w * ht.flux
    return h, Tbar, b


def nodal_specific_heat(particles: Particles, grid: GridGeometry, cp, stencil=None):
    """Mass-weighted average of c_p at the nodes touched by particles."""
    st = stencil if stencil is not None else spline_stencil(particles.x, grid)
    mw = particles.m[:, None] * st.weights
    num = np.bincount(st.nodes.ravel(), weights=(mw * cp[:, None]).ravel(), minlength=grid.num_nodes)
    den = np.bincount(st.nodes.ravel(), weights=mw.ravel(), minlength=grid.num_nodes)
    out = np.full(grid.num_nodes, float(np.mean(cp)) if cp.size else 1.0)
    ok = den > 0
    out[ok] = num[ok] / den[ok]
    return out


def assemble_heat_system(particles: Particles, samples: SurfaceSamples | None, grid: GridGeometry,
                         grid_mass, T_grid, dt, materials, params: ThermalParams | None = None,
                         coeffs=None) -> ThermalSystem:
    """Sparse SPD operator and right-hand side on nodes with mass."""
    params = params or ThermalParams()
    coeffs = coeffs or evaluate_material_coeffs(materials, particles)
    n_nodes = grid.num_nodes
    active = np.flatnonzero(grid_mass > 0)
    local = np.full(n_nodes, -1)
    local[active] = np.arange(active.size)
    st = spline_stencil(particles.x, grid)
    cp = nodal_specific_heat(particles, grid, coeffs["specific_heat"], st)
    C = cp[active] * grid_mass[active]
    Vn = particles.volume()

    rows, cols, vals = [], [], []
    # diffusion
    Kp = coeffs["conductivity"] * Vn
    if np.any(Kp > 0):
        gg = np.einsum("pkd,pld->pkl", st.gradients, st.gradients) * Kp[:, None, None]
        rows.append(np.repeat(st.nodes[:, :, None], st.nodes.shape[1], axis=2).ravel())
        cols.append(np.repeat(st.nodes[:, None, :], st.nodes.shape[1], axis=1).ravel())
        vals.append(gg.ravel())
    rhs_full = np.zeros(n_nodes)
    if samples is not None and samples.n:
        h, Tbar, b = surface_fields(samples, particles, materials, params)
        area = np.linalg.norm(samples.dA, axis=1)
        ss = spline_stencil(samples.s, grid)
        if np.any(h > 0):
            nn = np.einsum("rk,rl->rkl", ss.weights, ss.weights) * (h * area)[:, None, None]
            rows.append(np.repeat(ss.nodes[:, :, None], ss.nodes.shape[1], axis=2).ravel())
            cols.append(np.repeat(ss.nodes[:, None, :], ss.nodes.shape[1], axis=1).ravel())
            vals.append(nn.ravel())
        rhs_full += np.bincount(ss.nodes.ravel(), weights=(ss.weights * ((h * Tbar + b) * area)[:, None]).ravel(),
                                minlength=n_nodes)
    H = coeffs["heat_source"]
    if np.any(H != 0):
        src = H * Vn
        if params.literal_source_h:
            src = src * coeffs["convective_h"]
        rhs_full += np.bincount(st.nodes.ravel(), weights=(st.weights * src[:, None]).ravel(), minlength=n_nodes)

    if rows:
        r = local[np.concatenate(rows)]
        c = local[np.concatenate(cols)]
        v = np.concatenate(vals)
        keep = (r >= 0) & (c >= 0) & (v != 0)
        dropped = np.count_nonzero((r < 0) | (c < 0))
        if dropped:
            log.debug("dropped %d thermal couplings to massless nodes", dropped)
        K = sparse.coo_matrix((v[keep], (r[keep], c[keep])), shape=(active.size, active.size)).tocsr()
    else:
        K = sparse.csr_matrix((active.size, active.size))
    A = (K + sparse.diags(C / dt)).tocsr()
    A = 0.5 * (A + A.T)
    rhs = C * T_grid[active] / dt + rhs_full[active]
    return ThermalSystem(A.tocsr(), rhs, active, T_grid[active].copy(), C)


def solve_temperature(system: ThermalSystem, tol=1e-6, maxiter=500):
    """Jacobi-preconditioned CG from ``x0 = T^n``. Returns ``(T, iters)``."""
    if system.active.size == 0:
        return np.zeros(0), 0
    dinv = 1.0 / system.A.diagonal()
    T, it, ok = pcg(lambda x: system.A @ x, system.rhs, lambda r: dinv * r, x0=system.x0,
                    tol=tol, maxiter=maxiter, atol=1e-14 * np.linalg.norm(system.rhs))
    if not ok:
        log.warning("temperature solve stopped after %d iterations above tolerance", it)
    return T, it


def apply_phase_change(particles: Particles, melt_temperature) -> int:
    """Strict-inequality melting and freezing; returns the number of changes.

    A NaN melt temperature disables phase change for that particle.
    """
    Tm = np.broadcast_to(np.asarray(melt_temperature, float), particles.T.shape)
    d = particles.dim
    melt = (particles.phase == SOLID) & (particles.T > Tm)
    freeze = (particles.phase == LIQUID) & (particles.T < Tm)
    particles.phase[melt] = LIQUID
    particles.J[melt] = 1.0
    particles.F[melt] = np.eye(d)
    particles.phase[freeze] = SOLID
    particles.F[freeze] = np.eye(d)
    particles.J[freeze] = 1.0
    return int(melt.sum() + freeze.sum())


def thermal_energy(particles: Particles, materials) -> float:
    cp = np.array([materials[m].specific_heat for m in particles.material], float) if particles.n else np.zeros(0)
    return float(np.sum(cp * particles.m * particles.T))


__all__ = ["Heater", "ThermalParams", "ThermalSystem", "Material", "evaluate_material_coeffs",
           "surface_fields", "assemble_heat_system", "solve_temperature", "apply_phase_change",
           "thermal_energy", "nodal_specific_heat"]
