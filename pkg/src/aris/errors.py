"""Exception types raised across the simulator."""


class ArisError(Exception):
    """Base class for all simulator errors."""


class ConfigError(ArisError, ValueError):
    """Bad configuration value. The message starts with the offending key."""


class InvalidParameterError(ArisError, ValueError):
    pass


class DegenerateGeometryError(ArisError, ValueError):
    """Two points that must be distinct coincide (zero distance)."""


class InfeasibleInitializationError(ArisError, ValueError):
    """The initial straight-line trajectory breaks a speed or altitude limit."""


class InvalidPhasesError(ArisError, ValueError):
    """RIS phase vector is not unit-modulus."""


class NumericalBreakdownError(ArisError, ArithmeticError):
    """Non-finite or non-positive quantity where the algebra forbids one."""


class RetractionSingularityError(ArisError, ArithmeticError):
    """A retraction step landed on the origin of some complex coordinate."""
