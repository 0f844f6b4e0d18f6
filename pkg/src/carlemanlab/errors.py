"""Exception hierarchy.

Two families matter to callers. ``DomainError`` subclasses signal that an
input lies outside the region where a quantity is defined. ``ToleranceError``
subclasses signal that a numerical check ran but did not meet its threshold.
The CLI maps them to distinct exit codes.
"""


class CarlemanLabError(Exception):
    """Base class for all package errors."""


class ConfigError(CarlemanLabError):
    """Invalid or inconsistent run configuration."""


class DomainError(CarlemanLabError):
    """Input lies outside the domain of definition."""


class PointOutsideDomain(DomainError):
    """Coordinates violate the chart or region constraints."""


class DegenerateMetric(DomainError):
    """Metric determinant is zero or nonfinite."""


class DomainViolation(DomainError):
    """Point lies outside the region where the foliation is defined."""


class FOutOfRange(DomainError):
    """Foliation value lies outside the open unit interval."""


class NullLevelSet(DomainError):
    """Level set is not spacelike, so no adapted frame exists."""


class InsideHorizonOrErgoIssue(DomainError):
    """Point lies at or inside the Kerr outer horizon."""


class NoRealSolution(DomainError):
    """Coordinate inversion has no real solution."""


class ToleranceError(CarlemanLabError):
    """A numerical check ran but missed its tolerance."""


class StepTooLarge(ToleranceError):
    """Finite-difference step leaves the domain or misses the error budget."""


class GapViolated(ToleranceError):
    """A smallness ratio exceeds its configured bound."""


class BoundViolated(ToleranceError):
    """A containment bound fails at some sample point."""


class QuadratureUnderresolved(ToleranceError):
    """Quadrature refinement changed an integral by more than allowed."""


class ConstantViolated(ToleranceError):
    """A fitted constant does not hold across the parameter sweep."""


class FitUnstable(ToleranceError):
    """A log-log fit is ill-conditioned or nonfinite."""


class AbsorptionFailed(ToleranceError):
    """Lower-order terms cannot be absorbed by the leading term."""


class ClassViolated(ToleranceError):
    """A fitted decay exponent is worse than the declared class."""


class ToleranceExceeded(ToleranceError):
    """Generic tolerance failure."""
