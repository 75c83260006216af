"""Default test-function panels.

Eight bounded, integrable, square-integrable functions on (0, oo), all
vanishing at 0 (so that entrance functionals stay square-integrable in time)
and normalised to unit sup-norm: exponentially weighted monomials, products
with the excessive weight h(x) = 1 - exp(-x), and two compactly supported
smooth bumps.
"""

from __future__ import annotations

import numpy as np

from .grids import BoundaryGridFunction, GridFunction, SpatialGrid


def _bump(center: float, radius: float):
    def fn(x):
        x = np.asarray(x, dtype=float)
        r = (x - center) / radius
        out = np.zeros_like(r)
        inside = np.abs(r) < 1.0
        out[inside] = np.exp(1.0 - 1.0 / (1.0 - r[inside] ** 2))
        return out

    return fn


def _hprod(alpha: float, scale: float):
    return lambda x, a=alpha, s=scale: s * (-np.expm1(-np.asarray(x, dtype=float))) * np.exp(-a * np.asarray(x, dtype=float))


# max of h(x) exp(-0.8x) is (5/9) (4/9)^{4/5}, attained at x = ln(9/4)
_H08_SCALE = 1.0 / ((5.0 / 9.0) * (4.0 / 9.0) ** 0.8)

_PANEL_FNS = [
    ("x*exp(1-x)", lambda x: np.asarray(x) * np.exp(1.0 - np.asarray(x))),
    ("2x*exp(1-2x)", lambda x: 2.0 * np.asarray(x) * np.exp(1.0 - 2.0 * np.asarray(x))),
    ("(x/2)^2*exp(2-x)", lambda x: (np.asarray(x) / 2.0) ** 2 * np.exp(2.0 - np.asarray(x))),
    ("4h(x)*exp(-x)", _hprod(1.0, 4.0)),
    ("h(x)*exp(-0.8x) normalised", _hprod(0.8, _H08_SCALE)),
    ("bump(1.5,0.9)", _bump(1.5, 0.9)),
    ("bump(3.0,1.2)", _bump(3.0, 1.2)),
    ("x*exp((1-x^2)/2)", lambda x: np.asarray(x) * np.exp((1.0 - np.asarray(x) ** 2) / 2.0)),
]


def panel_labels(size: int = 8) -> tuple[str, ...]:
    return tuple(name for name, _ in _PANEL_FNS[:size])


def default_panel(grid: SpatialGrid, size: int = 8) -> list[GridFunction]:
    """The standard panel f_1..f_size as grid functions with callables."""
    if not (1 <= size <= len(_PANEL_FNS)):
        raise ValueError(f"panel size must be in 1..{len(_PANEL_FNS)}")
    return [GridFunction.from_callable(grid, fn) for _, fn in _PANEL_FNS[:size]]


def boundary_panel(grid: SpatialGrid, size: int = 8) -> list[BoundaryGridFunction]:
    """Default panel extended to [0, oo) by f(0) = 0."""
    return [BoundaryGridFunction(f, 0.0) for f in default_panel(grid, size)]


def indicator_at_zero(grid: SpatialGrid) -> BoundaryGridFunction:
    """The function 1_{{0}}: boundary value 1, identically 0 on (0, oo)."""
    inner = GridFunction(grid, np.zeros(grid.size), fn=lambda x: np.zeros_like(np.asarray(x, dtype=float)))
    return BoundaryGridFunction(inner, 1.0)
