"""Exception hierarchy shared by all hybridlab modules."""


class HybridLabError(Exception):
    """Base class for every error raised by hybridlab."""


class DomainError(HybridLabError, ValueError):
    """An argument lies outside the domain an operation is defined on."""


class ContractError(HybridLabError, ValueError):
    """A precondition of an operation was violated by the caller."""


class UnsupportedStateError(HybridLabError, ValueError):
    """The state is outside the class an engine can represent."""


class NotPositiveError(HybridLabError, ValueError):
    """A quantity defined only for positive semidefinite states was requested."""


class NumericalError(HybridLabError, ArithmeticError):
    """A numerical procedure failed."""


class StabilityError(NumericalError):
    """The requested time step violates the explicit integrator's stability bound."""

    def __init__(self, message, suggested_dt):
        super().__init__(f"{message}; suggested dt <= {suggested_dt:.6g}")
        self.suggested_dt = suggested_dt


class ConfigError(HybridLabError):
    """Invalid run configuration.

    ``field`` names the offending ``section.key`` and ``line`` the 1-based
    line of the source text, when either is known.
    """

    def __init__(self, message, field=None, line=None):
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field '{field}'")
        prefix = f"[{', '.join(where)}] " if where else ""
        super().__init__(prefix + message)
        self.message = message
        self.field = field
        self.line = line
