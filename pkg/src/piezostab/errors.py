"""Exception hierarchy shared by the package."""


class PiezoError(Exception):
    """Base class for all errors raised by piezostab."""


class NonEllipticTensor(PiezoError):
    pass


class NonPositiveCoefficient(PiezoError):
    pass


class InvalidDimensions(PiezoError):
    pass


class DimensionMismatch(PiezoError):
    pass


class ResourceLimitError(PiezoError, MemoryError):
    """Problem size exceeds a configured cap."""


class TooLargeForDense(ResourceLimitError):
    pass


class LinearSolveFailure(PiezoError):
    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class InconsistentScenario(PiezoError):
    pass


class CheckpointError(PiezoError, OSError):
    """Unreadable, truncated or malformed checkpoint file."""


class GridMismatch(PiezoError):
    pass


class EmptyTrace(PiezoError):
    pass


class InsufficientData(PiezoError):
    pass


class NonPositiveEnergy(PiezoError):
    pass


class ConfigError(PiezoError):
    """Configuration could not be parsed or validated.

    ``errors`` holds one human readable message per problem found.
    """

    def __init__(self, errors):
        if isinstance(errors, str):
            errors = [errors]
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))
