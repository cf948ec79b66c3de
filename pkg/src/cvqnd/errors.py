"""Exception types raised by the simulator."""


class CVQNDError(ValueError):
    """Base class for all simulator errors."""


class GridError(CVQNDError):
    """Invalid grid, or states living on mismatched grids."""


class BoundaryLeakError(CVQNDError):
    """A state does not fit inside its quadrature box."""


class NormDriftError(CVQNDError):
    """An operation that should preserve the norm did not (undersampling or truncation)."""


class ParameterError(CVQNDError):
    """A physical parameter is outside its allowed range."""


class ConfigError(CVQNDError):
    """A run configuration could not be parsed or validated."""
