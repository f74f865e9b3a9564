class FpPropError(Exception):
    """Base class for all fpprop errors."""


class DomainError(FpPropError, ValueError):
    """A time lies outside the domain of a schedule."""


class CoefficientError(FpPropError, ValueError):
    """Coefficients violate a structural requirement (dimension, symmetry, PSD)."""


class DegenerateKernelError(FpPropError):
    """The propagator collapses to a delta and has no density to evaluate."""


class PointMassError(DegenerateKernelError):
    """Solution at this time is a point mass ``weight * delta(x - location)``."""

    def __init__(self, weight, location):
        self.weight = float(weight)
        self.location = location
        super().__init__(
            f"solution is a point mass of weight {self.weight:.17g} at {list(location)}"
        )


class UnsupportedDimensionError(FpPropError, ValueError):
    pass


class ConfigError(FpPropError, ValueError):
    pass


class GridMismatchError(FpPropError, ValueError):
    pass


class StiffnessError(FpPropError, RuntimeError):
    pass


class SpecParseError(FpPropError, ValueError):
    """Problem-spec file is malformed.  ``where`` names the line or key path."""

    def __init__(self, message, where=None):
        self.where = where
        super().__init__(f"{where}: {message}" if where else message)
