"""Exception hierarchy raised by the simulator."""


class MPMError(Exception):
    """Base class for all simulator errors."""


class DomainError(MPMError, ValueError):
    """A particle or sample left the region where its grid stencil is defined."""


class NumericError(MPMError, ArithmeticError):
    """Non-finite input to a numerical kernel."""


class SingularConfigurationError(MPMError, ArithmeticError):
    """A deformation map collapsed (det below the singularity threshold)."""


class ConfigurationError(MPMError, ValueError):
    """Invalid scene or run configuration."""


class ResolutionError(MPMError):
    """The grid is too small for the temporary particles of this step."""


class ConvergenceError(MPMError):
    """Newton or Krylov iteration failed to converge."""
