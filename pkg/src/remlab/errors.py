"""Exception hierarchy shared by every module."""


class RemlabError(Exception):
    pass


class DomainError(RemlabError, ValueError):
    """An argument lies outside the domain of the requested quantity."""


class UnsupportedRegime(RemlabError):
    """The (beta, scaling) combination has no closed-form answer here."""


class NumericalFailure(RemlabError):
    """An iterative numerical method failed to reach its tolerance."""


class QuadratureError(NumericalFailure):
    """Adaptive quadrature exhausted its node budget.

    The best estimate reached so far is kept on ``estimate`` together with
    its error estimate, so callers can decide whether it is usable.
    """

    def __init__(self, message, estimate=float("nan"), abs_error=float("inf"), evaluations=0):
        super().__init__(message)
        self.estimate = estimate
        self.abs_error = abs_error
        self.evaluations = evaluations


class ConfigError(RemlabError, ValueError):
    """Invalid run configuration; ``field`` names the offending entry."""

    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field


class InvalidSchedule(DomainError):
    """A scaling schedule is not positive and strictly increasing."""
