"""Exception types shared across the library."""


class EmlabError(Exception):
    """Base class for all library errors."""


class DomainError(EmlabError):
    """A point lies outside the open natural-parameter domain.

    Carries the offending margin value so callers can report how far
    outside the point is.
    """

    def __init__(self, message: str, margin: float | None = None):
        super().__init__(message)
        self.margin = margin


class DualDomainError(EmlabError):
    """A mean/expectation vector lies outside the open dual domain."""


class NonConvergenceError(EmlabError):
    """An iterative solver exhausted its budget without meeting tolerance.

    The last iterate is attached for post-mortem inspection.
    """

    def __init__(self, message: str, last_iterate=None, residual: float | None = None):
        super().__init__(message)
        self.last_iterate = last_iterate
        self.residual = residual


class InfeasibleError(EmlabError):
    """A constraint set (or a section of one) contains no admissible point."""


class ModelInconsistencyError(EmlabError):
    """A model oracle returned values violating a structural requirement."""


class ConfigError(EmlabError):
    """An experiment configuration is malformed or inconsistent."""
