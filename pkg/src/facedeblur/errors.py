"""Exception hierarchy shared by all facedeblur modules."""


class DeblurError(Exception):
    """Base class for every error raised by this package."""


class DimensionError(DeblurError, ValueError):
    pass


class ParameterError(DeblurError, ValueError):
    pass


class InvalidPSFError(DeblurError, ValueError):
    pass


class IllConditionedError(DeblurError, ArithmeticError):
    def __init__(self, message, condition_estimate):
        super().__init__(f"{message} (condition estimate {condition_estimate:.3e})")
        self.condition_estimate = condition_estimate


class ConvergenceError(DeblurError, RuntimeError):
    """Iterative solver stopped without meeting its tolerance.

    ``best`` holds the best iterate found and ``diagnostics`` a dict of
    violation norms / iteration counts, so callers can still inspect it.
    """

    def __init__(self, message, best=None, diagnostics=None):
        super().__init__(message)
        self.best = best
        self.diagnostics = dict(diagnostics or {})


class DegenerateDistributionError(DeblurError, ValueError):
    pass


class EmptyCandidatesError(DeblurError, RuntimeError):
    pass


class FormatError(DeblurError, ValueError):
    """A persisted file does not match the expected format."""
