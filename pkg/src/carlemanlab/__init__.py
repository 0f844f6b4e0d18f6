"""Numerical toolkit for Carleman estimates and unique continuation from infinity.

Modules: ``geometry`` (backgrounds and their differential geometry),
``foliation`` (foliation functions, frames, pseudoconvexity), ``conformal``
(conformal inversion and operator transport), ``carleman`` (conjugated
operator, weighted integrals, vanishing orders), ``kerr`` (comoving Kerr
coordinates) and ``cli`` (batch runner).
"""

from .errors import CarlemanLabError, ConfigError, DomainError, ToleranceError
from .foliation import F1, F2
from .geometry import MetricSpec, Point, catalog, eval_metric
from .kerr import KerrParams
from .modes import PositiveMass, ZeroMass

__version__ = "0.1.0"

__all__ = [
    "CarlemanLabError",
    "ConfigError",
    "DomainError",
    "ToleranceError",
    "F1",
    "F2",
    "MetricSpec",
    "Point",
    "catalog",
    "eval_metric",
    "KerrParams",
    "PositiveMass",
    "ZeroMass",
]
