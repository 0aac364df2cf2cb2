"""Exception hierarchy shared by all fracheat modules."""


class FracHeatError(Exception):
    """Base class for every error raised by the package."""


class InvalidParameter(FracHeatError, ValueError):
    pass


class OutOfDomain(FracHeatError, ValueError):
    pass


class ShapeError(FracHeatError, ValueError):
    pass


class FactorizationFailure(FracHeatError, RuntimeError):
    pass


class NumericFailure(FracHeatError, RuntimeError):
    pass


class BlowUpError(NumericFailure):
    """A non-finite field appeared while time stepping."""

    def __init__(self, step, message=None):
        self.step = step
        super().__init__(message or f"non-finite field detected at step {step}")


class NonConvergence(NumericFailure):
    def __init__(self, message, history=None):
        super().__init__(message)
        self.history = list(history or [])


class DegenerateDerivative(FracHeatError, ValueError):
    pass


class EnsembleInvalid(FracHeatError, RuntimeError):
    pass


class ConfigParseError(FracHeatError, ValueError):
    pass


class ConfigValidationError(FracHeatError, ValueError):
    pass
