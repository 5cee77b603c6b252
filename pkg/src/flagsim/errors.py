"""Exception types shared across the package."""


class FlagSimError(Exception):
    pass


class InvalidSize(FlagSimError, ValueError):
    pass


class SchemaViolation(FlagSimError):
    pass


class ProtocolError(FlagSimError):
    """An agent program tried something the model forbids (e.g. sending off the edge)."""


class RunTimeout(FlagSimError):
    """Raised when a run exceeds ``max_rounds``; carries the partial trace."""

    def __init__(self, message, trace):
        super().__init__(message)
        self.trace = trace


class IncompleteColoring(FlagSimError, ValueError):
    pass


class InvalidSpec(FlagSimError, ValueError):
    pass


class SingularityError(FlagSimError, ValueError):
    pass


class InvalidMeasurement(FlagSimError, ValueError):
    pass


class ConstructionError(FlagSimError, ValueError):
    pass


class UnsupportedAspect(FlagSimError, ValueError):
    pass


class InvalidParameter(FlagSimError, ValueError):
    pass


class OverlappingUncertainty(FlagSimError):
    pass


class UsageError(FlagSimError, ValueError):
    pass
