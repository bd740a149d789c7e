"""Exception types raised across the toolkit."""


class EstkitError(Exception):
    """Base class for all toolkit errors."""


class InvalidParam(EstkitError, ValueError):
    pass


class Unbounded(EstkitError):
    """Support function is infinite (cone queried outside its polar)."""


class NoRepresentation(EstkitError):
    """Vector is not representable by the dictionary columns."""


class NoClosedForm(EstkitError):
    """Requested quantity has no implemented closed form for this set kind."""


class ZeroVector(EstkitError, ValueError):
    pass


class ZeroMatrix(ZeroVector):
    pass


class InvalidLink(EstkitError, ValueError):
    pass


class NonInformative(EstkitError):
    """Link constant lambda vanishes; observations carry no signal."""


class EmptyIntersection(EstkitError):
    """Alternating projections plateaued with a positive gap."""

    def __init__(self, message, estimate=None, diagnostics=None):
        super().__init__(message)
        self.estimate = estimate
        self.diagnostics = diagnostics


class NotConverged(EstkitError):
    """Iteration budget exhausted; carries the best iterate."""

    def __init__(self, message, estimate=None, diagnostics=None):
        super().__init__(message)
        self.estimate = estimate
        self.diagnostics = diagnostics


class NotFeasible(EstkitError):
    """One-bit feasibility heuristic could not match every sign."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class InsufficientPairs(EstkitError):
    pass


class ConfigError(EstkitError, ValueError):
    pass
