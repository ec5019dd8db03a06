class LatentSurvError(ValueError):
    """Base class for recoverable errors raised by this package."""


class CohortError(LatentSurvError):
    """Invalid cohort data (bad CSV row, broken invariant, bad split)."""


class NonFiniteError(LatentSurvError):
    """A value that must be finite was not.

    ``index`` carries the offending position when one is known.
    """

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class NoEventsError(LatentSurvError):
    """Partial likelihood or baseline hazard requested without any events."""


class ConvergenceError(LatentSurvError):
    """Optimization diverged or a calibration had no feasible solution."""
