class SgameError(ValueError):
    """Base class for errors raised by this package."""


class NotPositiveDefiniteError(SgameError):
    pass


class BoundsViolationError(SgameError):
    pass


class EmptyComponentError(SgameError):
    """A mixture component received (numerically) zero total responsibility."""

    def __init__(self, message, component=None, restart=None):
        super().__init__(message)
        self.component = component
        self.restart = restart


class FitFailedError(SgameError):
    """Every restart of a fit raised."""

    def __init__(self, message, errors=()):
        super().__init__(message)
        self.errors = list(errors)


class TheoremHypothesisError(SgameError):
    """A quantity was requested outside the regime where the bound applies."""
