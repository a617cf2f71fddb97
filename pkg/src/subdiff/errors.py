"""Exception hierarchy shared by every module."""


class SubdiffError(Exception):
    pass


class DomainError(SubdiffError, ValueError):
    """An argument lies outside the operation's domain."""


class UnsupportedOrder(SubdiffError, ValueError):
    pass


class TailUnavailable(SubdiffError, ValueError):
    pass


class MissingDerivative(SubdiffError, KeyError):
    def __init__(self, name, context=""):
        self.name = name
        msg = f"partial derivative {name!r} is required but was not supplied"
        if context:
            msg += f" ({context})"
        super().__init__(msg)

    def __str__(self):
        return self.args[0]


class AssumptionViolation(SubdiffError):
    """Coefficients or parameters do not meet a scheme's standing assumptions."""


class NumericOverflow(SubdiffError, ArithmeticError):
    def __init__(self, step, state, message=None):
        self.step = step
        self.state = state
        super().__init__(message or f"non-finite state at step {step} (x={state!r})")


class ResolutionError(SubdiffError, ValueError):
    pass


class FitError(SubdiffError, ValueError):
    pass


class SimulationLimit(SubdiffError, RuntimeError):
    """A configured iteration cap was exceeded."""
