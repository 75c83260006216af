"""skewsim: numerical laboratory for skew convolution semigroups and
Ornstein-Uhlenbeck type processes over absorbed Brownian motion on (0, oo).

Closed-form characteristic functionals serve as exact oracles for Monte
Carlo simulation output.
"""

__version__ = "0.1.0"

from .grids import BoundaryGridFunction, GridFunction, SpatialGrid, TimeQuadrature
from .measures import CatalystMeasure, SignedAtomicMeasure

__all__ = [
    "BoundaryGridFunction",
    "CatalystMeasure",
    "GridFunction",
    "SignedAtomicMeasure",
    "SpatialGrid",
    "TimeQuadrature",
    "__version__",
]
