"""Closed-form kernels of Brownian motion absorbed at 0 on (0, oo).

The transition density is the image of the Gaussian kernel under the
reflection principle,

    p_t(x, y) = g_t(x - y) - g_t(x + y),      g_t(x) = exp(-x^2/2t)/sqrt(2 pi t),

and the entrance kernel from the absorbing boundary is

    k_t(y) = (1/2) d/dx p_t(x, y)|_{x=0+} = y g_t(y) / t.

k integrates to one in time: int_0^t k_s(y) ds = erfc(y / sqrt(2t)), which is
also the probability that the motion started at y has been absorbed by t.

Semigroup application P_t f and the entrance functional <k_t, f> are computed
by grid quadrature when the kernel width sqrt(t) is resolved by the grid, and
by exact Gauss-type rules against the function's analytic callable when it is
not (t below ``small_time_threshold``).  The switch keeps every time integral
int_0^t ... ds accurate down to s -> 0.
"""

from __future__ import annotations

import math
from typing import Callable, Optional

import numpy as np
from numpy.polynomial.hermite_e import hermegauss
from numpy.polynomial.legendre import leggauss
from scipy.special import erf, erfc

from .grids import BoundaryGridFunction, GridFunction, SpatialGrid, TimeQuadrature

_SQRT_2PI = math.sqrt(2.0 * math.pi)

# Probabilists' Gauss-Hermite rule for E f(x + sqrt(t) Z); 41 nodes reach
# |z| ~ 8.6, ample for the analytic test functions used here.
_GH_NODES, _GH_W = hermegauss(41)
_GH_W = _GH_W / _SQRT_2PI

# Rule for the small-time entrance functional
#   <k_s, f> = s^{-1/2} int_0^V v phi(v) f(sqrt(s) v) dv,   phi = N(0,1) density,
# where the integrand is smooth in v for smooth f.  V = 12 truncates at
# exp(-72) of the half-Gaussian weight.
_KV_NODES, _KV_W = leggauss(64)
_KV_NODES = 6.0 * (_KV_NODES + 1.0)
_KV_W = 6.0 * _KV_W
_KV_W = _KV_W * _KV_NODES * np.exp(-0.5 * _KV_NODES**2) / _SQRT_2PI


def gaussian_density(t, x):
    """Centered Gaussian density g_t(x) with variance t."""
    t = np.asarray(t, dtype=float)
    if np.any(t <= 0.0):
        raise ValueError("gaussian_density needs t > 0")
    x = np.asarray(x, dtype=float)
    out = np.exp(-(x * x) / (2.0 * t)) / np.sqrt(2.0 * math.pi * t)
    return out if out.ndim else float(out)


def abm_density(t, x, y):
    """Absorbed-Brownian transition density p_t(x, y) on (0, oo)."""
    t = np.asarray(t, dtype=float)
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if np.any(t <= 0.0):
        raise ValueError("abm_density needs t > 0")
    if np.any(x <= 0.0) or np.any(y <= 0.0):
        raise ValueError("abm_density needs x, y > 0")
    out = np.maximum(gaussian_density(t, x - y) - gaussian_density(t, x + y), 0.0)
    return out if out.ndim else float(out)


def entrance_kernel(t, y):
    """Entrance kernel k_t(y) = y g_t(y) / t."""
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    if np.any(t <= 0.0):
        raise ValueError("entrance_kernel needs t > 0")
    if np.any(y <= 0.0):
        raise ValueError("entrance_kernel needs y > 0")
    out = y * gaussian_density(t, y) / t
    return out if out.ndim else float(out)


def absorbed_fraction(t, y):
    """int_0^t k_s(y) ds = erfc(y / sqrt(2t)): mass entered from 0 by time t.

    Equivalently the probability that Brownian motion from y hits 0 by t.
    The complementary tail int_t^oo k_s(y) ds is ``survival_fraction(t, y)``.
    """
    t = np.asarray(t, dtype=float)
    if np.any(t <= 0.0):
        raise ValueError("absorbed_fraction needs t > 0")
    out = erfc(np.asarray(y, dtype=float) / np.sqrt(2.0 * t))
    return out if np.ndim(out) else float(out)


def survival_fraction(t, x):
    """int_0^oo p_t(x, y) dy = erf(x / sqrt(2t))."""
    t = np.asarray(t, dtype=float)
    if np.any(t <= 0.0):
        raise ValueError("survival_fraction needs t > 0")
    out = erf(np.asarray(x, dtype=float) / np.sqrt(2.0 * t))
    return out if np.ndim(out) else float(out)


def h_weight(x):
    """Excessive weight h(x) = 1 - exp(-x)."""
    return -np.expm1(-np.asarray(x, dtype=float))


def small_time_threshold(grid: SpatialGrid) -> float:
    """Below this t the kernel width sqrt(t) is under 3 grid spacings."""
    return (3.0 * grid.spacing) ** 2


def semigroup_matrix(grid: SpatialGrid, t: float) -> np.ndarray:
    """Quadrature matrix of P_t on the grid: M[i, j] = w_j p_t(x_i, x_j)."""
    if t <= 0.0:
        raise ValueError("semigroup_matrix needs t > 0")
    return abm_density(t, grid.nodes[:, None], grid.nodes[None, :]) * grid.weights[None, :]


def apply_semigroup(t: float, f: GridFunction) -> GridFunction:
    """P_t f on the grid of f; P_0 f = f exactly.

    The returned function carries an exact pointwise evaluator so that later
    consumers (entrance functionals at small times, off-grid evaluation) do
    not rely on interpolation.
    """
    if t < 0.0:
        raise ValueError("apply_semigroup needs t >= 0")
    if t == 0.0:
        return f
    vals = semigroup_matrix(f.grid, t) @ f.values
    return GridFunction(f.grid, vals, fn=lambda x, _t=t, _f=f: semigroup_at(_t, _f, x))


def semigroup_at(t: float, f: GridFunction, x):
    """P_t f(x) at arbitrary points x > 0.

    Grid quadrature for resolved t; for t below the grid threshold, an exact
    Gauss-Hermite evaluation of E[f(x + sqrt(t) Z)] - E[f(-x + sqrt(t) Z)]
    against the analytic callable (accurate for x a few sqrt(t) away from 0,
    which is the only regime in which callers take the small-t branch).
    """
    if t < 0.0:
        raise ValueError("semigroup_at needs t >= 0")
    scalar = np.ndim(x) == 0
    shape = np.shape(x)
    xs = np.asarray(x, dtype=float).ravel()
    if np.any(xs <= 0.0):
        raise ValueError("semigroup_at needs x > 0")
    if t == 0.0:
        out = np.asarray(f(xs), dtype=float)
    elif t >= small_time_threshold(f.grid) or f.fn is None:
        wf = f.grid.weights * f.values
        out = np.empty(xs.size)
        for lo in range(0, xs.size, 8192):
            block = xs[lo:lo + 8192]
            out[lo:lo + 8192] = abm_density(t, block[:, None], f.grid.nodes[None, :]) @ wf
    else:
        out = _semigroup_small_t(t, f.fn, xs)
    return float(out[0]) if scalar else out.reshape(shape)


def _semigroup_small_t(t: float, fn: Callable, xs: np.ndarray) -> np.ndarray:
    root = math.sqrt(t)
    direct = xs[:, None] + root * _GH_NODES[None, :]
    mirror = -xs[:, None] + root * _GH_NODES[None, :]
    fd = np.where(direct > 0.0, fn(np.maximum(direct, 1e-300)), 0.0)
    fm = np.where(mirror > 0.0, fn(np.maximum(mirror, 1e-300)), 0.0)
    return (fd - fm) @ _GH_W


def semigroup_at_many(ts: np.ndarray, f: GridFunction, xs: np.ndarray) -> np.ndarray:
    """P_{ts[i]} f(xs[i]) for paired arrays, batching the two evaluation routes."""
    ts = np.asarray(ts, dtype=float)
    xs = np.asarray(xs, dtype=float)
    out = np.empty(ts.shape, dtype=float)
    cut = small_time_threshold(f.grid)
    small = ts < cut
    if f.fn is None:
        small = np.zeros_like(small)
    if np.any(~small):
        idx = np.flatnonzero(~small)
        wf = f.grid.weights * f.values
        for lo in range(0, idx.size, 4096):
            blk = idx[lo:lo + 4096]
            rows = abm_density(ts[blk][:, None], xs[blk][:, None], f.grid.nodes[None, :])
            out[blk] = rows @ wf
    if np.any(small):
        idx = np.flatnonzero(small)
        out[idx] = _semigroup_small_t_many(ts[idx], f.fn, xs[idx])
    return out


def _semigroup_small_t_many(ts: np.ndarray, fn: Callable, xs: np.ndarray) -> np.ndarray:
    root = np.sqrt(ts)
    direct = xs[:, None] + root[:, None] * _GH_NODES[None, :]
    mirror = -xs[:, None] + root[:, None] * _GH_NODES[None, :]
    fd = np.where(direct > 0.0, fn(np.maximum(direct, 1e-300)), 0.0)
    fm = np.where(mirror > 0.0, fn(np.maximum(mirror, 1e-300)), 0.0)
    return (fd - fm) @ _GH_W


def semigroup_at_panel(ts: np.ndarray, xs: np.ndarray,
                       panel: "list[GridFunction]") -> np.ndarray:
    """P_{ts[i]} f_k(xs[i]) for a whole panel at once, sharing the kernel rows."""
    ts = np.asarray(ts, dtype=float)
    xs = np.asarray(xs, dtype=float)
    grid = panel[0].grid
    out = np.empty((ts.size, len(panel)))
    cut = small_time_threshold(grid)
    small = ts < cut
    if any(f.fn is None for f in panel):
        small = np.zeros_like(small)
    if np.any(~small):
        idx = np.flatnonzero(~small)
        wf = np.stack([f.grid.weights * f.values for f in panel], axis=1)
        for lo in range(0, idx.size, 4096):
            blk = idx[lo:lo + 4096]
            rows = abm_density(ts[blk][:, None], xs[blk][:, None], grid.nodes[None, :])
            out[blk] = rows @ wf
    if np.any(small):
        idx = np.flatnonzero(small)
        for k, f in enumerate(panel):
            out[idx, k] = _semigroup_small_t_many(ts[idx], f.fn, xs[idx])
    return out


def entrance_functional(t: float, f: GridFunction) -> float:
    """kappa_t(f) = int k_t(y) f(y) dy."""
    return float(entrance_functional_many(np.array([t]), f)[0])


def entrance_functional_many(ts: np.ndarray, f: GridFunction) -> np.ndarray:
    """kappa_{ts[i]}(f) for an array of times.

    With an analytic callable the substituted rule
    kappa_s(f) = s^{-1/2} int v phi(v) f(sqrt(s) v) dv is machine-exact for
    every s > 0 and is used throughout; grid quadrature is the fallback for
    bare point-value functions (accurate once sqrt(s) clears a few spacings).
    """
    ts = np.asarray(ts, dtype=float)
    if np.any(ts <= 0.0):
        raise ValueError("entrance_functional needs t > 0")
    if f.fn is not None:
        root = np.sqrt(ts)
        args = root[..., None] * _KV_NODES
        return (np.asarray(f.fn(args)) @ _KV_W) / root
    rows = entrance_kernel(ts[..., None], f.grid.nodes)
    return rows @ (f.grid.weights * f.values)


_RHO_NODES, _RHO_W = leggauss(64)


def integrated_entrance_functional(t: float, f: GridFunction) -> float:
    """int_0^t kappa_r(f) dr, exact in time.

    With a callable the substitution r = rho^2 turns the integral into
    2 int_0^sqrt(t) int v phi(v) f(rho v) dv drho, evaluated by nested Gauss
    rules to machine accuracy.  The fallback <f, erfc(./sqrt(2t))> on the grid
    carries the trapezoid's O(h^2 f'(0)) boundary term.
    """
    if t < 0.0:
        raise ValueError("needs t >= 0")
    if t == 0.0:
        return 0.0
    if f.fn is not None:
        half = math.sqrt(t) / 2.0
        rho = half * (_RHO_NODES + 1.0)
        args = rho[:, None] * _KV_NODES[None, :]
        inner = np.asarray(f.fn(args)) @ _KV_W
        return 2.0 * half * float(_RHO_W @ inner)
    return f.grid.integrate(absorbed_fraction(t, f.grid.nodes) * f.values)


def integrated_semigroup_at(t: float, f: GridFunction, x: float,
                            tq: Optional[TimeQuadrature] = None) -> float:
    """int_0^t P_r f(x) dr by time quadrature."""
    if t == 0.0:
        return 0.0
    tq = TimeQuadrature(t) if tq is None else tq.with_t(t)
    s, w = tq.nodes_weights()
    return float(w @ semigroup_at_many(s, f, np.full(s.shape, x)))


def apply_h(f: GridFunction) -> GridFunction:
    """Pointwise product h(x) f(x) with h(x) = 1 - exp(-x)."""
    fn = None
    if f.fn is not None:
        fn = lambda x, _f=f.fn: h_weight(x) * np.asarray(_f(x))
    return GridFunction(f.grid, h_weight(f.grid.nodes) * f.values, fn=fn)


def h_transform_semigroup(t: float, f: BoundaryGridFunction) -> BoundaryGridFunction:
    """The h-transformed semigroup T_t f extended to the boundary point 0.

    Interior: T_t f(x) = h(x)^{-1} P_t(h f)(x).  At x = 0 the closed form
    2 kappa_t(h f) is used; it equals the one-sided derivative of P_t(h f)
    at 0, which is also the limit of the interior values as x -> 0+.
    """
    if t <= 0.0:
        raise ValueError("h_transform_semigroup needs t > 0")
    hf = apply_h(f.interior)
    inner = apply_semigroup(t, hf)
    vals = inner.values / h_weight(f.grid.nodes)
    boundary = 2.0 * entrance_functional(t, hf)
    fn = lambda x, _inner=inner: np.asarray(_inner(x)) / h_weight(x)
    return BoundaryGridFunction(GridFunction(f.grid, vals, fn=fn), boundary)
