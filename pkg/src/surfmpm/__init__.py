"""Momentum-conserving MPM for liquids with surface tension, heat transfer and phase change."""
from .config import SceneConfig, load_scene
from .driver import Simulation, SurfaceParams, compute_diagnostics
from .errors import (ConfigurationError, ConvergenceError, DomainError, MPMError, NumericError,
                     ResolutionError, SingularConfigurationError)
from .kernels import GridGeometry
from .solve_momentum import Collider, SolverSettings
from .solve_thermal import Heater, ThermalParams
from .state import LIQUID, SOLID, Material, Particles, SurfaceTensionModel, Table, contact_angle, seed_particles

__version__ = "0.1.0"
