"""Scene files: JSON validated by a strict pydantic schema."""
from __future__ import annotations

import json
from pathlib import Path
from typing import Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .errors import ConfigurationError

SCHEMA_VERSION = 1

TableSpec = Union[float, list[tuple[float, float]]]


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class GridSpec(_Strict):
    origin: list[float]
    extent: list[float]
    dx: float = Field(gt=0)

    @model_validator(mode="after")
    def _dims(self):
        if len(self.origin) not in (2, 3) or len(self.extent) != len(self.origin):
            raise ValueError("grid origin and extent must both have 2 or 3 entries")
        if any(e <= 0 for e in self.extent):
            raise ValueError("grid extent must be positive")
        return self


class TimeSpec(_Strict):
    frame_rate: float = Field(24.0, gt=0)
    frames: int = Field(1, ge=0)
    dt_min: float = Field(1e-6, gt=0)
    dt_max: float = Field(1e-3, gt=0)
    cfl: float = Field(0.5, gt=0)

    @model_validator(mode="after")
    def _order(self):
        if self.dt_min > self.dt_max:
            raise ValueError(f"dt_min ({self.dt_min}) must not exceed dt_max ({self.dt_max})")
        return self


class SolverSpec(_Strict):
    newton_tol: float = Field(1e-4, gt=0)
    newton_max_iters: int = Field(20, gt=0)
    krylov_tol: float = Field(1e-6, gt=0)
    krylov_max_iters: int = Field(500, gt=0)


class SurfaceTensionSpec(_Strict):
    kind: Literal["constant", "interface", "linear", "table"] = "constant"
    value: float = 0.0
    liquid_gas: float = 0.0
    solid_liquid: float = 0.0
    k0: float = 0.0
    slope: float = 0.0
    t_ref: float = 0.0
    k_min: Optional[float] = None
    k_max: Optional[float] = None
    table: Optional[list[tuple[float, float]]] = None


class MaterialSpec(_Strict):
    name: str = "liquid"
    density: float = Field(1.0, gt=0)
    bulk_modulus: TableSpec = 0.0
    viscosity: TableSpec = 0.0
    mu_solid: TableSpec = 0.0
    lambda_solid: TableSpec = 0.0
    specific_heat: float = Field(1.0, gt=0)
    conductivity: float = Field(0.0, ge=0)
    convective_h: float = Field(0.0, ge=0)
    boundary_heating: float = 0.0
    heat_source: float = 0.0
    melt_temperature: Optional[float] = None
    surface_tension: SurfaceTensionSpec = SurfaceTensionSpec()


class TemperatureField(_Strict):
    """``base + gradient . (x - origin)``."""

    base: float = 0.0
    gradient: list[float]
    origin: Optional[list[float]] = None


class ShapeSpec(_Strict):
    type: Literal["box", "ball", "sphere", "circle", "ellipse", "ellipsoid"]
    lo: Optional[list[float]] = None
    hi: Optional[list[float]] = None
    center: Optional[list[float]] = None
    radius: Optional[float] = None
    radii: Optional[list[float]] = None
    material: int = 0
    phase: Literal["liquid", "solid"] = "liquid"
    temperature: Union[float, TemperatureField] = 0.0
    velocity: Optional[list[float]] = None
    particles_per_cell: int = Field(8, gt=0)


class ColliderSpec(_Strict):
    type: Literal["half_space", "box", "ball", "sphere", "circle", "ellipse", "ellipsoid"]
    point: Optional[list[float]] = None
    normal: Optional[list[float]] = None
    lo: Optional[list[float]] = None
    hi: Optional[list[float]] = None
    center: Optional[list[float]] = None
    radius: Optional[float] = None
    radii: Optional[list[float]] = None
    kind: Literal["sticky", "slip", "bilateral"] = "slip"
    friction: float = Field(0.0, ge=0)
    inverted: bool = False


class HeaterSpec(_Strict):
    center: list[float]
    radius: float = Field(gt=0)
    temperature: Optional[float] = None
    flux: float = 0.0


class ThermalSpec(_Strict):
    enabled: bool = False
    ambient_temperature: float = 0.0
    heaters: list[HeaterSpec] = []
    literal_source_h: bool = False


class SurfaceSpec(_Strict):
    sample_density: float = Field(2.0, gt=0)     # samples per dx of boundary (per dx^2 in 3D)
    contact_epsilon: float = Field(0.5, ge=0)    # in units of dx
    project_contact: bool = True
    snap_contact: bool = True
    particle_margin: Optional[float] = Field(0.25, ge=0)   # in units of dx; null disables
    level_set_radius: Optional[float] = None     # in units of dx


class OutputSpec(_Strict):
    directory: str = "output"
    format: Literal["csv", "binary"] = "csv"
    diagnostics: bool = True
    mesh: bool = False


class SceneConfig(_Strict):
    schema_version: int = SCHEMA_VERSION
    grid: GridSpec
    gravity: Optional[list[float]] = None
    time: TimeSpec = TimeSpec()
    integrator: Literal["explicit", "implicit"] = "explicit"
    solver: SolverSpec = SolverSpec()
    materials: list[MaterialSpec] = Field(min_length=1)
    shapes: list[ShapeSpec] = Field(min_length=1)
    colliders: list[ColliderSpec] = []
    thermal: ThermalSpec = ThermalSpec()
    surface: SurfaceSpec = SurfaceSpec()
    seed: int = 0
    output: OutputSpec = OutputSpec()

    @field_validator("schema_version")
    @classmethod
    def _version(cls, v):
        if v != SCHEMA_VERSION:
            raise ValueError(f"unsupported schema_version {v}; expected {SCHEMA_VERSION}")
        return v

    @model_validator(mode="after")
    def _consistency(self):
        d = self.dim
        if self.gravity is not None and len(self.gravity) != d:
            raise ValueError(f"gravity must have {d} components")
        for i, s in enumerate(self.shapes):
            if not 0 <= s.material < len(self.materials):
                raise ValueError(f"shapes[{i}].material {s.material} is not a defined material")
        return self

    @property
    def dim(self) -> int:
        return len(self.grid.origin)


def load_scene(path) -> SceneConfig:
    """Parse and validate a JSON scene file."""
    text = Path(path).read_text()
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigurationError(f"{path}: invalid JSON: {e}") from e
    return parse_scene(raw, source=str(path))


def parse_scene(raw: dict, source="scene") -> SceneConfig:
    try:
        return SceneConfig.model_validate(raw)
    except ValidationError as e:
        raise ConfigurationError(f"{source}: {e}") from e


def shape_dict(spec) -> dict:
    return {k: v for k, v in spec.model_dump().items() if v is not None}


def temperature_function(t):
    if isinstance(t, TemperatureField):
        g = np.asarray(t.gradient, float)
        o = np.zeros_like(g) if t.origin is None else np.asarray(t.origin, float)
        return lambda x: t.base + (np.atleast_2d(x) - o) @ g
    return float(t)
