"""Exception types shared across the package.

Contract violations raise specific subclasses so callers (and the CLI) can
distinguish configuration mistakes (exit code 2) from failed numerical
checks (exit code 1).
"""


class EntrolabError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(EntrolabError):
    """Invalid scenario file, unknown key, or inconsistent parameters."""


class GridMismatchError(EntrolabError):
    """Operands live on different grids."""


class DegenerateDensityError(EntrolabError):
    """Density with zero or negative total mass, or negative entries."""


class KernelNotLocalizedError(EntrolabError):
    """Transition kernel envelope does not decay inside the box."""


class AlphaSolveError(EntrolabError):
    """Step-size constraint cannot be met on this grid.

    Carries the achievable moment range when bracketing fails.
    """

    def __init__(self, message, achievable=None):
        super().__init__(message)
        self.achievable = achievable


class StabilityError(EntrolabError):
    """Requested time step exceeds the explicit-scheme stability bound."""

    def __init__(self, message, dt_max):
        super().__init__(message)
        self.dt_max = dt_max
