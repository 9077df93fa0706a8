"""Time stepping, scene construction and diagnostics.

A step runs four phases:

1. reconstruct and sample the boundary, attach samples to owners, split mass;
2. P2G of momentum and temperature;
3. grid momentum update, then the heat solve on the same grid masses;
4. G2P (merge for split owners), strain update, phase change, advection.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import config as cfgmod
from .energy import EnergyContext
from .errors import ConvergenceError, MPMError, SingularConfigurationError
from .io import DiagnosticsWriter, write_frame
from .kernels import GridGeometry, spline_stencil
from .resample import bodies, merge, merge_scalar, split
from .shapes import make_shape
from .solve_momentum import (Collider, CollisionSet, SolverSettings, compute_cfl_dt, explicit_step,
                             implicit_step, push_out_particles)
from .solve_thermal import (Heater, ThermalParams, apply_phase_change, assemble_heat_system,
                            evaluate_material_coeffs, solve_temperature, thermal_energy)
from .state import (LIQUID, SOLID, SOLID_LIQUID, Material, Particles, SurfaceSamples, SurfaceTensionModel, Table,
                    seed_particles)
from .surface import build_level_set, classify_interface, contact_axes, extract_isocontour, sample_surface, write_obj
from .transfer import (g2p_standard, g2p_temperature, p2g_mass_momentum, p2g_temperature,
                       particle_angular_momentum, update_strain, advect)

log = logging.getLogger(__name__)


@dataclass
class SurfaceParams:
    sample_density: float = 2.0       # per dx of boundary length (per dx^2 of area in 3D)
    contact_epsilon: float = 0.5      # in dx
    radius: float | None = None       # level-set radius in dx
    project_contact: bool = True      # solid-liquid samples count wall footprint only
    snap_contact: bool = True         # and sit on the wall surface
    particle_margin: float | None = 0.25   # dx kept between particles and colliders; None: off


@dataclass
class Prepared:
    """Everything phases 1 and 2 produce; particles are not modified yet."""

    samples: SurfaceSamples
    split: object
    grid_state: object
    ctx: EnergyContext
    coeffs: dict
    mesh: object
    T_grid: np.ndarray | None = None


@dataclass
class StepResult:
    dt: float
    row: dict
    newton_iters: int = 0
    krylov_iters: int = 0
    retries: int = 0


class Simulation:
    def __init__(self, grid: GridGeometry, particles: Particles, materials, *, colliders=(),
                 gravity=None, integrator="explicit", settings: SolverSettings | None = None,
                 surface: SurfaceParams | None = None, thermal: ThermalParams | None = None,
                 thermal_enabled=False, seed=0, massless=False):
        if integrator not in ("explicit", "implicit"):
            raise ValueError(f"unknown integrator {integrator!r}")
        self.grid = grid
        self.particles = particles
        self.materials = list(materials)
        self.colliders = list(colliders)
        self.gravity = np.zeros(grid.dim) if gravity is None else np.asarray(gravity, float)
        self.integrator = integrator
        self.settings = settings or SolverSettings()
        self.surface = surface or SurfaceParams()
        self.thermal = thermal or ThermalParams()
        self.thermal_enabled = thermal_enabled
        self.seed = int(seed)
        self.massless = massless
        self.time = 0.0
        self.step_index = 0
        self.history: list[dict] = []
        self._cset = CollisionSet.build(grid, self.colliders) if self.colliders else None

    # ----------------------------------------------------------- construction
    @classmethod
    def from_config(cls, cfg: cfgmod.SceneConfig, massless=False) -> "Simulation":
        d = cfg.dim
        grid = GridGeometry.from_extent(cfg.grid.origin, cfg.grid.extent, cfg.grid.dx)
        materials = [material_from_spec(m) for m in cfg.materials]
        parts = []
        for i, s in enumerate(cfg.shapes):
            shape = make_shape(cfgmod.shape_dict(s), d)
            parts.append(seed_particles(
                shape, s.particles_per_cell, grid, cfg.seed, density=materials[s.material].density,
                temperature=cfgmod.temperature_function(s.temperature), velocity=s.velocity,
                phase=LIQUID if s.phase == "liquid" else SOLID, material_id=s.material, stream=i))
        colliders = [Collider(make_shape(cfgmod.shape_dict(c), d), kind=c.kind, friction=c.friction,
                              inverted=c.inverted) for c in cfg.colliders]
        settings = SolverSettings(newton_tol=cfg.solver.newton_tol, newton_max_iters=cfg.solver.newton_max_iters,
                                  krylov_tol=cfg.solver.krylov_tol, krylov_max_iters=cfg.solver.krylov_max_iters,
                                  dt_min=cfg.time.dt_min, dt_max=cfg.time.dt_max, cfl_number=cfg.time.cfl)
        thermal = ThermalParams(cfg.thermal.ambient_temperature,
                                [Heater(h.center, h.radius, h.temperature, h.flux) for h in cfg.thermal.heaters],
                                cfg.thermal.literal_source_h)
        surface = SurfaceParams(cfg.surface.sample_density, cfg.surface.contact_epsilon, cfg.surface.level_set_radius,
                                cfg.surface.project_contact, cfg.surface.snap_contact,
                                cfg.surface.particle_margin)
        return cls(grid, Particles.concatenate(parts), materials, colliders=colliders, gravity=cfg.gravity,
                   integrator=cfg.integrator, settings=settings, surface=surface, thermal=thermal,
                   thermal_enabled=cfg.thermal.enabled, seed=cfg.seed, massless=massless)

    # ---------------------------------------------------------------- phases
    def reconstruct(self, stream=None):
        """Boundary mesh and its samples for the current particle positions."""
        g = self.grid
        r = None if self.surface.radius is None else self.surface.radius * g.dx
        mesh = extract_isocontour(build_level_set(self.particles.x, g, r))
        density = self.surface.sample_density / g.dx ** (g.dim - 1)
        samples = sample_surface(mesh, density, self.seed, self.step_index if stream is None else stream)
        samples.interface = classify_interface(samples.s, self.colliders, self.surface.contact_epsilon * g.dx)
        if self.surface.project_contact and self.colliders:
            normal, dist = contact_axes(samples.s, self.colliders, self.surface.contact_epsilon * g.dx)
            wet = samples.interface == SOLID_LIQUID
            normal[~wet] = 0.0
            samples.wall_normal = normal
            if self.surface.snap_contact:
                samples.s[wet] -= dist[wet, None] * normal[wet]
        return mesh, samples

    def prepare(self) -> Prepared:
        p = self.particles
        g = self.grid
        mesh, samples = self.reconstruct()
        sp = split(p, samples, g, massless=self.massless)
        own = samples.owner
        samples.T = p.T[own]
        k = np.zeros(samples.n)
        for mid, mat in enumerate(self.materials):
            sel = p.material[own] == mid
            if np.any(sel):
                k[sel] = mat.surface_tension.evaluate(samples.T[sel], samples.interface[sel])
        k[p.phase[own] == SOLID] = 0.0
        samples.k_sigma = k
        gs = p2g_mass_momentum(bodies(p, sp), g)
        coeffs = evaluate_material_coeffs(self.materials, p)
        ctx = EnergyContext(g, p, samples, bulk_modulus=coeffs["bulk_modulus"], viscosity=coeffs["viscosity"],
                            mu_solid=coeffs["mu_solid"], lambda_solid=coeffs["lambda_solid"], k_sigma=k,
                            contact_axis=samples.wall_normal)
        if not self.massless:
            touched = ctx.sample_nodes()
            if np.any(gs.mass[touched] <= 0):
                raise MPMError("a node receiving surface-tension force has no mass")
        T_grid = None
        if self.thermal_enabled:
            T_grid, _ = p2g_temperature(p, g, support_mass=gs.mass)
        return Prepared(samples, sp, gs, ctx, coeffs, mesh, T_grid)

    def solve(self, prep: Prepared, dt):
        gs = prep.grid_state
        if self.integrator == "explicit":
            return explicit_step(gs.velocity, gs.mass, prep.ctx, dt, self.gravity, cset=self._cset)
        return implicit_step(gs.velocity, gs.mass, prep.ctx, dt, self.gravity, self.settings, cset=self._cset)

    def finish(self, prep: Prepared, velocity, dt):
        p = self.particles
        g = self.grid
        st = spline_stencil(p.x, g)
        v, A = g2p_standard(velocity, p.x, g, st)
        if not self.massless:
            owners = prep.split.split_owners
            if owners.size:
                v[owners], A[owners] = merge(p, prep.split, velocity, g, owners)
        if self.thermal_enabled:
            system = assemble_heat_system(p, prep.samples, g, prep.grid_state.mass, prep.T_grid, dt,
                                          self.materials, self.thermal, prep.coeffs)
            T_act, it = solve_temperature(system, self.settings.krylov_tol, self.settings.krylov_max_iters)
            T_full = system.full(T_act, g.num_nodes)
            p.T, p.gradT = g2p_temperature(T_full, p.x, g, st)
            if not self.massless and prep.split.split_owners.size:
                owners = prep.split.split_owners
                p.T[owners] = merge_scalar(p, prep.split, T_full, g, owners)
        update_strain(p, velocity, dt, g, st)
        p.v, p.A = v, A
        if self.thermal_enabled:
            apply_phase_change(p, prep.coeffs["melt_temperature"])
        advect(p, dt, g)
        if self.colliders and self.surface.particle_margin is not None:
            push_out_particles(p.x, self.colliders, self.surface.particle_margin * g.dx)

    def step(self, dt=None, time_to_frame=None) -> StepResult:
        """Advance one step; implicit failures retry with half the step."""
        if dt is None:
            dt = compute_cfl_dt(self.particles.v, self.grid.dx, self.settings, time_to_frame)
        prep = self.prepare()
        row = self.diagnostics(prep)
        retries = 0
        while True:
            try:
                rep = self.solve(prep, dt)
                break
            except (ConvergenceError, SingularConfigurationError) as e:
                if self.integrator == "explicit" or dt * 0.5 < self.settings.dt_min:
                    raise ConvergenceError(f"step {self.step_index} failed at dt={dt:.3e}: {e}") from e
                retries += 1
                dt *= 0.5
                log.info("step %d rejected (%s); retrying with dt=%.3e", self.step_index, e, dt)
        self.finish(prep, rep.velocity, dt)
        row.update(dt=dt, newton_iters=rep.newton_iters, krylov_iters=rep.krylov_iters)
        self.history.append(row)
        self.time += dt
        self.step_index += 1
        return StepResult(dt, row, rep.newton_iters, rep.krylov_iters, retries)

    # ------------------------------------------------------------ diagnostics
    def diagnostics(self, prep: Prepared | None = None) -> dict:
        """Conservation and energy quantities of the current particle state."""
        prep = prep or self.prepare()
        p = self.particles
        dx = self.grid.dx
        M = float(p.m.sum())
        P = (p.m[:, None] * p.v).sum(0)
        L = particle_angular_momentum(p.x, p.v, p.A, p.m, dx).sum(0)
        com = (p.m[:, None] * p.x).sum(0) / M
        ke = 0.5 * float(np.sum(p.m * (np.sum(p.v**2, axis=1) + dx**2 / 4.0 * np.sum(p.A**2, axis=(1, 2)))))
        e = prep.ctx.energy_terms(np.zeros((self.grid.num_nodes, self.grid.dim)))
        return {
            "time": self.time, "dt": 0.0, "mass": M, "momentum": P, "angular_momentum": L, "com": com,
            "kinetic": ke, "surface": e["surface"], "pressure": e["pressure"], "elastic": e["elastic"],
            "thermal": thermal_energy(p, self.materials), "newton_iters": 0, "krylov_iters": 0,
        }

    # -------------------------------------------------------------------- run
    def run(self, frames: int, frame_rate: float, out_dir=None, fmt="csv", write_diagnostics=True,
            write_mesh=False, progress=None):
        """Advance ``frames`` frames, writing a particle dump after each one."""
        out = Path(out_dir) if out_dir is not None else None
        writer = None
        if out is not None:
            out.mkdir(parents=True, exist_ok=True)
            writer = DiagnosticsWriter(out / "diagnostics.csv", enabled=write_diagnostics)
            write_frame(self.particles, out / frame_name(0, fmt), fmt)
        frame_dt = 1.0 / frame_rate
        for f in range(1, frames + 1):
            t_end = f * frame_dt
            while self.time < t_end - 1e-12 * frame_dt:
                res = self.step(time_to_frame=t_end - self.time)
                if writer is not None:
                    writer.append(res.row)
            if out is not None:
                write_frame(self.particles, out / frame_name(f, fmt), fmt)
                if write_mesh:
                    mesh, _ = self.reconstruct()
                    write_obj(mesh, out / f"surface_{f:05d}.obj")
            if progress is not None:
                progress(f, self.time)
        return self.history


def frame_name(i, fmt):
    return f"frame_{i:05d}." + ("csv" if fmt == "csv" else "bin")


def material_from_spec(m: cfgmod.MaterialSpec) -> Material:
    st = m.surface_tension
    model = SurfaceTensionModel(
        kind=st.kind, value=st.value, liquid_gas=st.liquid_gas, solid_liquid=st.solid_liquid, k0=st.k0,
        slope=st.slope, t_ref=st.t_ref, k_min=-np.inf if st.k_min is None else st.k_min,
        k_max=np.inf if st.k_max is None else st.k_max,
        table=None if st.table is None else Table.coerce(st.table))
    return Material(name=m.name, density=m.density, bulk_modulus=m.bulk_modulus, viscosity=m.viscosity,
                    mu_solid=m.mu_solid, lambda_solid=m.lambda_solid, specific_heat=m.specific_heat,
                    conductivity=m.conductivity, convective_h=m.convective_h, boundary_heating=m.boundary_heating,
                    heat_source=m.heat_source, melt_temperature=m.melt_temperature, surface_tension=model)


def compute_diagnostics(sim: Simulation) -> dict:
    return sim.diagnostics()
