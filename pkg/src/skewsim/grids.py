"""Spatial grids on the truncated half-line and time quadrature rules.

The half-line (0, oo) is truncated to [lower, upper] and discretised by a
uniform grid with composite-trapezoid weights.  All kernels handled here are
smooth and vanish (or are exponentially small) at both truncation boundaries,
so the trapezoid rule converges far faster than its generic O(h^2) rate; the
dominant error is the truncation itself, which is Gaussian-small.

Time integrals over (0, t] may have sqrt-type endpoint behaviour at s = 0.
``TimeQuadrature`` offers the substitution s = u^2, which turns integrands of
the form a + b*sqrt(s) + ... (and even 1/sqrt(s) singularities) into smooth
functions of u, restoring spectral accuracy of the composite Gauss-Legendre
rule used per panel.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable, Optional

import numpy as np
from numpy.polynomial.legendre import leggauss


def _frozen_array(values) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class SpatialGrid:
    """Uniform quadrature grid on [lower, upper] with trapezoid weights."""

    lower: float
    upper: float
    nodes: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        if not (0.0 < self.lower < self.upper):
            raise ValueError(f"need 0 < lower < upper, got [{self.lower}, {self.upper}]")
        nodes = _frozen_array(self.nodes)
        weights = _frozen_array(self.weights)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "weights", weights)
        if nodes.ndim != 1 or nodes.size < 2 or weights.shape != nodes.shape:
            raise ValueError("nodes/weights must be matching 1-d arrays with >= 2 entries")
        if np.any(np.diff(nodes) <= 0):
            raise ValueError("nodes must be strictly increasing")
        if np.any(weights <= 0):
            raise ValueError("weights must be positive")
        length = self.upper - self.lower
        if abs(weights.sum() - length) > 1e-12 * max(1.0, length):
            raise ValueError("weights do not sum to the interval length")

    @classmethod
    def uniform(cls, lower: float = 1e-4, upper: float = 20.0, n: int = 1024) -> "SpatialGrid":
        nodes = np.linspace(lower, upper, n)
        h = (upper - lower) / (n - 1)
        weights = np.full(n, h)
        weights[0] = weights[-1] = h / 2.0
        return cls(lower, upper, nodes, weights)

    @property
    def size(self) -> int:
        return self.nodes.size

    @property
    def spacing(self) -> float:
        return (self.upper - self.lower) / (self.size - 1)

    def integrate(self, values: np.ndarray) -> float:
        return float(self.weights @ np.asarray(values))

    def refined(self, factor: int = 2) -> "SpatialGrid":
        """Same interval, `factor` times as many intervals (for oracle checks)."""
        return SpatialGrid.uniform(self.lower, self.upper, (self.size - 1) * factor + 1)

    def widened(self) -> "SpatialGrid":
        """Halved lower cut, doubled upper cut, same node density (truncation audits)."""
        n = int(round((2.0 * self.upper - self.lower / 2.0) / self.spacing)) + 1
        return SpatialGrid.uniform(self.lower / 2.0, 2.0 * self.upper, n)


@dataclass(frozen=True)
class GridFunction:
    """Point values of a real function on a SpatialGrid.

    ``fn`` optionally carries the analytic callable the values came from;
    pointwise consumers (entrance functionals at small times, off-grid
    evaluation) prefer it over interpolation.  Functions are extended by the
    convention f(0) = 0 below the grid, matching the test-function spaces in
    use here, and clamped to the last value above it.
    """

    grid: SpatialGrid
    values: np.ndarray
    fn: Optional[Callable[[np.ndarray], np.ndarray]] = None

    def __post_init__(self):
        values = _frozen_array(self.values)
        object.__setattr__(self, "values", values)
        if values.shape != self.grid.nodes.shape:
            raise ValueError("values must match the grid size")
        if not np.all(np.isfinite(values)):
            raise ValueError("values must be finite")

    @classmethod
    def from_callable(cls, grid: SpatialGrid, fn: Callable) -> "GridFunction":
        return cls(grid, np.asarray(fn(grid.nodes), dtype=float), fn=fn)

    def __call__(self, x):
        if self.fn is not None:
            return self.fn(np.asarray(x, dtype=float))
        xs = np.insert(self.grid.nodes, 0, 0.0)
        vs = np.insert(self.values, 0, 0.0)
        return np.interp(x, xs, vs)

    def scaled(self, a: float) -> "GridFunction":
        fn = None if self.fn is None else (lambda x, _f=self.fn, _a=a: _a * np.asarray(_f(x)))
        return GridFunction(self.grid, a * self.values, fn=fn)

    def with_values(self, values: np.ndarray, fn=None) -> "GridFunction":
        return GridFunction(self.grid, values, fn=fn)

    def integral(self) -> float:
        return self.grid.integrate(self.values)

    def sup(self) -> float:
        return float(np.max(np.abs(self.values)))


@dataclass(frozen=True)
class BoundaryGridFunction:
    """A grid function on (0, oo) together with a value at the boundary point 0."""

    interior: GridFunction
    boundary: float = 0.0

    @property
    def grid(self) -> SpatialGrid:
        return self.interior.grid


_GL_CACHE: dict[int, tuple[np.ndarray, np.ndarray]] = {}


def _gl(order: int) -> tuple[np.ndarray, np.ndarray]:
    if order not in _GL_CACHE:
        _GL_CACHE[order] = leggauss(order)
    return _GL_CACHE[order]


@dataclass(frozen=True)
class TimeQuadrature:
    """Composite Gauss-Legendre rule for integrals over (0, t].

    substitution 'sqrt' integrates in u with s = u^2 (removes 1/sqrt(s)
    endpoint behaviour); 'uniform' integrates in s directly.
    """

    t: float
    substitution: str = "sqrt"
    panels: int = 32
    order: int = 8

    def __post_init__(self):
        if self.t <= 0:
            raise ValueError("time horizon must be positive")
        if self.panels < 8:
            raise ValueError("need at least 8 panels")
        if self.substitution not in ("sqrt", "uniform"):
            raise ValueError(f"unknown substitution {self.substitution!r}")

    def with_t(self, t: float) -> "TimeQuadrature":
        return replace(self, t=t)

    def with_panels(self, panels: int) -> "TimeQuadrature":
        return replace(self, panels=panels)

    def nodes_weights(self) -> tuple[np.ndarray, np.ndarray]:
        """Quadrature nodes s_i in (0, t) and weights for ds integration."""
        z, w = _gl(self.order)
        if self.substitution == "sqrt":
            edges = np.linspace(0.0, np.sqrt(self.t), self.panels + 1)
        else:
            edges = np.linspace(0.0, self.t, self.panels + 1)
        mid = (edges[1:] + edges[:-1]) / 2.0
        half = (edges[1:] - edges[:-1]) / 2.0
        u = (mid[:, None] + half[:, None] * z[None, :]).ravel()
        wu = (half[:, None] * w[None, :]).ravel()
        if self.substitution == "sqrt":
            return u * u, 2.0 * u * wu
        return u, wu

    def integrate(self, fn: Callable[[np.ndarray], np.ndarray]):
        """Integrate a vectorised function of s over (0, t]."""
        s, w = self.nodes_weights()
        return w @ np.asarray(fn(s))
