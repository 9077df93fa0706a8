"""Simulation data model and particle seeding.

Particles, temporary samples and grid fields are stored as structures of
numpy arrays; one row per particle, sample or node.
"""
from __future__ import annotations

from dataclasses import dataclass, field, fields, replace

import numpy as np

from .errors import ConfigurationError
from .kernels import GridGeometry

LIQUID = 0
SOLID = 1

LIQUID_GAS = 0
SOLID_LIQUID = 1


def make_rng(seed: int, *stream: int) -> np.random.Generator:
    """Counter-based (Philox) generator keyed by ``(seed, *stream)``."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), *map(int, stream)])))


@dataclass
class Table:
    """Piecewise-linear function of temperature, clamped at the ends."""

    temperatures: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        self.temperatures = np.atleast_1d(np.asarray(self.temperatures, float))
        self.values = np.atleast_1d(np.asarray(self.values, float))
        if self.temperatures.shape != self.values.shape or self.temperatures.size == 0:
            raise ConfigurationError("table needs matching, non-empty temperature/value lists")
        if np.any(np.diff(self.temperatures) <= 0):
            raise ConfigurationError("table temperatures must be strictly increasing")

    @classmethod
    def constant(cls, value: float) -> "Table":
        return cls([0.0], [float(value)])

    @classmethod
    def coerce(cls, value) -> "Table":
        if isinstance(value, Table):
            return value
        if np.isscalar(value):
            return cls.constant(value)
        pts = np.asarray(value, float)
        return cls(pts[:, 0], pts[:, 1])

    def __call__(self, T):
        T = np.asarray(T, float)
        if self.values.size == 1:
            return np.full(T.shape, self.values[0])
        return np.interp(T, self.temperatures, self.values)

    @property
    def min(self):
        return float(self.values.min())


def contact_angle(k_solid_liquid, k_liquid_gas, k_solid_gas=0.0):
    """Equilibrium angle (radians, through the liquid) from the Young relation.

    ``k_SG = k_SL + k_LG cos(theta)``; raises ConfigurationError when the
    ratio admits no angle (complete wetting or dewetting).
    """
    c = (np.asarray(k_solid_gas, float) - np.asarray(k_solid_liquid, float)) / np.asarray(k_liquid_gas, float)
    if np.any(np.abs(c) > 1.0 + 1e-12):
        raise ConfigurationError("surface tension ratio gives |cos(theta)| > 1")
    return np.arccos(np.clip(c, -1.0, 1.0))


@dataclass
class SurfaceTensionModel:
    """Surface tension coefficient as a function of interface and temperature.

    kinds: ``constant`` (value), ``interface`` (liquid_gas, solid_liquid),
    ``linear`` (k0 + slope (T - t_ref) clamped to [k_min, k_max]) and
    ``table``.
    """

    kind: str = "constant"
    value: float = 0.0
    liquid_gas: float = 0.0
    solid_liquid: float = 0.0
    k0: float = 0.0
    slope: float = 0.0
    t_ref: float = 0.0
    k_min: float = -np.inf
    k_max: float = np.inf
    table: Table | None = None

    def __post_init__(self):
        if self.kind not in ("constant", "interface", "linear", "table"):
            raise ConfigurationError(f"unknown surface tension model {self.kind!r}")
        if self.kind == "table" and self.table is None:
            raise ConfigurationError("table surface tension model needs a table")

    def evaluate(self, T, interface=None):
        T = np.asarray(T, float)
        if self.kind == "constant":
            return np.full(T.shape, float(self.value))
        if self.kind == "interface":
            lab = np.zeros(T.shape, int) if interface is None else np.asarray(interface)
            return np.where(lab == SOLID_LIQUID, self.solid_liquid, self.liquid_gas).astype(float)
        if self.kind == "linear":
            return np.clip(self.k0 + self.slope * (T - self.t_ref), self.k_min, self.k_max)
        return self.table(T)


@dataclass
class Material:
    """Material record; every mechanical coefficient is a table in T."""

    name: str = "liquid"
    density: float = 1.0
    bulk_modulus: Table = field(default_factory=lambda: Table.constant(0.0))
    viscosity: Table = field(default_factory=lambda: Table.constant(0.0))
    mu_solid: Table = field(default_factory=lambda: Table.constant(0.0))
    lambda_solid: Table = field(default_factory=lambda: Table.constant(0.0))
    specific_heat: float = 1.0
    conductivity: float = 0.0
    convective_h: float = 0.0
    boundary_heating: float = 0.0
    heat_source: float = 0.0
    melt_temperature: float | None = None     # None: no phase change
    surface_tension: SurfaceTensionModel = field(default_factory=SurfaceTensionModel)

    def __post_init__(self):
        for name in ("bulk_modulus", "viscosity", "mu_solid", "lambda_solid"):
            setattr(self, name, Table.coerce(getattr(self, name)))
            if getattr(self, name).min < 0:
                raise ConfigurationError(f"{self.name}: {name} must be non-negative")
        if self.density <= 0:
            raise ConfigurationError(f"{self.name}: density must be positive")
        if self.specific_heat <= 0:
            raise ConfigurationError(f"{self.name}: specific_heat must be positive")
        if self.conductivity < 0 or self.convective_h < 0:
            raise ConfigurationError(f"{self.name}: conductivity and convective_h must be >= 0")


@dataclass
class Particles:
    """Interior material points (structure of arrays)."""

    x: np.ndarray
    v: np.ndarray
    A: np.ndarray
    m: np.ndarray
    V0: np.ndarray
    J: np.ndarray
    F: np.ndarray
    T: np.ndarray
    gradT: np.ndarray
    phase: np.ndarray
    material: np.ndarray

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def dim(self) -> int:
        return self.x.shape[1]

    def volume(self) -> np.ndarray:
        """Current volume ``V_p^n``."""
        return self.J * self.V0

    def copy(self) -> "Particles":
        return replace(self, **{f.name: getattr(self, f.name).copy() for f in fields(self)})

    @classmethod
    def empty(cls, dim: int) -> "Particles":
        return cls(np.zeros((0, dim)), np.zeros((0, dim)), np.zeros((0, dim, dim)), np.zeros(0),
                   np.zeros(0), np.zeros(0), np.zeros((0, dim, dim)), np.zeros(0),
                   np.zeros((0, dim)), np.zeros(0, int), np.zeros(0, int))

    @classmethod
    def concatenate(cls, parts) -> "Particles":
        parts = list(parts)
        return cls(**{f.name: np.concatenate([getattr(p, f.name) for p in parts]) for f in fields(cls)})


@dataclass
class SurfaceSamples:
    """Temporary quadrature points on the reconstructed boundary."""

    s: np.ndarray
    dA: np.ndarray
    owner: np.ndarray
    interface: np.ndarray
    k_sigma: np.ndarray
    T: np.ndarray
    m_tilde: np.ndarray
    wall_normal: np.ndarray | None = None   # per-sample collider normal for wall-projected area

    @property
    def n(self) -> int:
        return self.s.shape[0]

    @classmethod
    def from_points(cls, s, dA) -> "SurfaceSamples":
        s = np.asarray(s, float)
        r = s.shape[0]
        return cls(s, np.asarray(dA, float), np.full(r, -1), np.zeros(r, int),
                   np.zeros(r), np.zeros(r), np.zeros(r))


@dataclass
class BalanceSamples:
    b: np.ndarray
    owner: np.ndarray
    m_tilde: np.ndarray

    @property
    def n(self) -> int:
        return self.b.shape[0]


@dataclass
class ParticleGroup:
    owner: int
    members: list          # list of (surface index, balance index)
    m_tilde: float


@dataclass
class Split:
    """Result of the conservative split: per-owner group sizes and masses."""

    samples: SurfaceSamples
    balance: BalanceSamples | None
    group_size: np.ndarray     # |Pi_p| per particle
    m_tilde: np.ndarray        # owner mass during the split
    massless: bool = False

    @property
    def split_owners(self) -> np.ndarray:
        return np.flatnonzero(self.group_size > 0)

    def groups(self) -> list:
        order = np.argsort(self.samples.owner, kind="stable")
        out = []
        for p in self.split_owners:
            idx = order[self.samples.owner[order] == p]
            out.append(ParticleGroup(int(p), [(int(r), int(r)) for r in idx], float(self.m_tilde[p])))
        return out


@dataclass
class GridState:
    geometry: GridGeometry
    mass: np.ndarray
    momentum: np.ndarray
    velocity: np.ndarray
    T: np.ndarray
    heat_capacity: np.ndarray

    @property
    def active(self) -> np.ndarray:
        return self.mass > 0

    @classmethod
    def zeros(cls, geometry: GridGeometry) -> "GridState":
        n, d = geometry.num_nodes, geometry.dim
        return cls(geometry, np.zeros(n), np.zeros((n, d)), np.zeros((n, d)), np.zeros(n), np.zeros(n))


def seed_particles(shape, particles_per_cell: int, grid: GridGeometry, seed: int, *,
                   density: float = 1.0, temperature=0.0, velocity=None,
                   phase: int = LIQUID, material_id: int = 0, stream: int = 0) -> Particles:
    """Random per-cell sampling filtered by shape membership.

    Each kept particle gets ``m = density * dx^d / ppc``. ``temperature``
    is a constant or a callable of positions.
    """
    d = grid.dim
    lo, hi = shape.bounds()
    slo, shi = grid.safe_bounds()
    if np.any(lo < slo - 1e-12) or np.any(hi > shi + 1e-12):
        raise ConfigurationError(f"shape bounds {lo}..{hi} leave the safe grid interior {slo}..{shi}")
    c0 = np.floor((lo - grid.origin) / grid.dx + 1e-9).astype(int)
    c1 = np.ceil((hi - grid.origin) / grid.dx - 1e-9).astype(int)
    axes = [np.arange(a, b) for a, b in zip(c0, c1)]
    cells = np.stack([m.ravel() for m in np.meshgrid(*axes, indexing="ij")], axis=1)
    rng = make_rng(seed, stream)
    u = rng.random((cells.shape[0], particles_per_cell, d))
    pts = (grid.origin + (cells[:, None, :] + u) * grid.dx).reshape(-1, d)
    pts = pts[shape.signed_distance(pts) < 0]
    n = pts.shape[0]
    if n == 0:
        raise ConfigurationError("shape produced no particles")
    m = density * grid.dx**d / particles_per_cell
    T = temperature(pts) if callable(temperature) else np.full(n, float(temperature))
    v = np.zeros((n, d)) if velocity is None else np.broadcast_to(np.asarray(velocity, float), (n, d)).copy()
    eye = np.broadcast_to(np.eye(d), (n, d, d)).copy()
    return Particles(
        x=pts, v=v, A=np.zeros((n, d, d)), m=np.full(n, m), V0=np.full(n, m / density),
        J=np.ones(n), F=eye, T=np.asarray(T, float), gradT=np.zeros((n, d)),
        phase=np.full(n, phase, int), material=np.full(n, material_id, int))
