"""Path simulation of the Gaussian and compensated-jump stochastic integrals
driving the OU-type families, plus the Markov recursion and signed-measure views.

Simulation policy:

* Gaussian integrals are Euler-Maruyama in time with the kernel evaluated at
  interval midpoints; the last interval is refined geometrically (ratio 2) so
  the near-singular kernel factor at s -> t is sampled where it matters.
* Jump drivers are simulated exactly: Poisson counts, uniform order
  statistics for times, categorical marks.  Compensators are evaluated
  analytically (closed form in time for the entrance kernel, deterministic
  quadrature otherwise), never by Monte Carlo, so CF mismatches isolate the
  time discretisation of the Gaussian parts.
* Every replica draws from its own counter-based stream keyed by
  (seed, driver, replica[, epoch]); outputs are bit-reproducible and
  independent of evaluation order.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Mapping, Optional, Sequence, Union

import numpy as np

from . import rngs
from .grids import BoundaryGridFunction, GridFunction, SpatialGrid, TimeQuadrature
from .kernels import (
    abm_density,
    apply_h,
    apply_semigroup,
    entrance_functional_many,
    entrance_kernel,
    integrated_entrance_functional,
    integrated_semigroup_at,
    semigroup_at_many,
    semigroup_at_panel,
    semigroup_matrix,
)
from .levy_cf import AtomicLevyMeasure
from .measures import CatalystMeasure, SignedAtomicMeasure

REFINE_LEVELS = 6


# ---------------------------------------------------------------------------
# time discretisation


def time_edges(t: float, dt: float, refine_levels: int = REFINE_LEVELS) -> np.ndarray:
    """Euler edges over [0, t]; the final step is split geometrically."""
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    if dt > t:
        raise ValueError("dt must not exceed the horizon")
    n = max(1, int(round(t / dt)))
    edges = np.linspace(0.0, t, n + 1)
    if refine_levels > 0:
        w = edges[-1] - edges[-2]
        tail = t - w / 2.0 ** np.arange(1, refine_levels + 1)
        edges = np.concatenate([edges[:-1], tail, [t]])
    return edges


def _mids_widths(t, dt, refine_levels=REFINE_LEVELS):
    edges = time_edges(t, dt, refine_levels)
    return (edges[1:] + edges[:-1]) / 2.0, np.diff(edges)


# ---------------------------------------------------------------------------
# Gaussian drivers


def _catalyst_rates(c, eta: CatalystMeasure) -> np.ndarray:
    """Variance rates 2 c(x_i) eta_i per catalyst site."""
    if isinstance(c, GridFunction):
        cs = np.asarray(c(eta.sites), dtype=float)
    else:
        cs = np.full(len(eta.atoms), float(c))
    if np.any(cs < 0.0):
        raise ValueError("diffusion coefficient must be nonnegative")
    return 2.0 * cs * eta.masses


def simulate_gaussian_field(c, eta: CatalystMeasure, t: float, dt: float, seed: int,
                            replica: int = 0, grid: Optional[SpatialGrid] = None) -> GridFunction:
    """One sample of the catalyst-driven Gaussian field

        y -> sum_i int_0^t p_{t-s}(x_i, y) dB_i(s),

    where the B_i are independent with variance rates 2 c(x_i) eta_i.
    """
    grid = grid or SpatialGrid.uniform()
    rates = _catalyst_rates(c, eta)
    mids, widths = _mids_widths(t, dt)
    rng = rngs.stream(seed, rngs.GAUSS_CATALYST, replica)
    z = rng.standard_normal((mids.size, rates.size))
    if np.all(rates == 0.0):
        return GridFunction(grid, np.zeros(grid.size))
    scale = np.sqrt(rates[None, :] * widths[:, None])
    kern = abm_density((t - mids)[:, None, None], eta.sites[None, :, None], grid.nodes[None, None, :])
    values = np.einsum("ji,jin->n", z * scale, kern)
    return GridFunction(grid, values)


def simulate_entrance_gaussian(c: float, t: float, dt: float, seed: int,
                               replica: int = 0, grid: Optional[SpatialGrid] = None) -> GridFunction:
    """One sample of the boundary-driven Gaussian field int_0^t k_{t-s}(y) dB(s),
    B with variance rate 2c."""
    grid = grid or SpatialGrid.uniform()
    if c < 0.0:
        raise ValueError("c must be nonnegative")
    mids, widths = _mids_widths(t, dt)
    rng = rngs.stream(seed, rngs.GAUSS_ENTRANCE, replica)
    z = rng.standard_normal(mids.size)
    if c == 0.0:
        return GridFunction(grid, np.zeros(grid.size))
    kern = entrance_kernel((t - mids)[:, None], grid.nodes[None, :])
    values = (z * np.sqrt(2.0 * c * widths)) @ kern
    return GridFunction(grid, values)


def catalyst_functional_matrix(c, eta, t, dt, panel: Sequence[GridFunction]):
    """Per-step loading B[j, i, k] = sqrt(rate_i w_j) P_{t-s_j} f_k (x_i)."""
    rates = _catalyst_rates(c, eta)
    mids, widths = _mids_widths(t, dt)
    scale = np.sqrt(rates[None, :] * widths[:, None])
    a = np.empty((mids.size, rates.size, len(panel)))
    taus = np.repeat(t - mids, rates.size)
    sites = np.tile(eta.sites, mids.size)
    for k, f in enumerate(panel):
        a[:, :, k] = semigroup_at_many(taus, f, sites).reshape(mids.size, rates.size)
    return (a * scale[:, :, None], mids.size, rates.size)


def gaussian_catalyst_samples(c, eta, t, dt, panel, seed, replicas: int) -> np.ndarray:
    """Monte Carlo panel functionals <Z_t, f_k> of the catalyst Gaussian field.

    Exactly the law of ``<simulate_gaussian_field(...), f>`` (same streams,
    with the pairing evaluated pointwise rather than on the grid).
    """
    b, nsteps, nsites = catalyst_functional_matrix(c, eta, t, dt, panel)
    flat = b.reshape(nsteps * nsites, len(panel))
    out = np.empty((replicas, len(panel)))
    for r in range(replicas):
        z = rngs.stream(seed, rngs.GAUSS_CATALYST, r).standard_normal(nsteps * nsites)
        out[r] = z @ flat
    return out


def entrance_functional_matrix(c, t, dt, panel):
    mids, widths = _mids_widths(t, dt)
    scale = np.sqrt(2.0 * c * widths)
    a = np.empty((mids.size, len(panel)))
    for k, f in enumerate(panel):
        a[:, k] = entrance_functional_many(t - mids, f)
    return a * scale[:, None]


def entrance_gaussian_samples(c, t, dt, panel, seed, replicas: int) -> np.ndarray:
    b = entrance_functional_matrix(c, t, dt, panel)
    out = np.empty((replicas, len(panel)))
    for r in range(replicas):
        z = rngs.stream(seed, rngs.GAUSS_ENTRANCE, r).standard_normal(b.shape[0])
        out[r] = z @ b
    return out


def catalyst_gaussian_variance_discrete(c, eta, t, dt, f: GridFunction) -> float:
    """Variance of the Euler functional: the Ito isometry of the scheme."""
    b, nsteps, nsites = catalyst_functional_matrix(c, eta, t, dt, [f])
    return float(np.sum(b[:, :, 0] ** 2))

def catalyst_gaussian_variance_exact(c, eta, t, f: GridFunction, panels: int = 64) -> float:
    """2 sum_i c_i eta_i int_0^t P_s f(x_i)^2 ds by time quadrature."""
    rates = _catalyst_rates(c, eta)
    s, w = TimeQuadrature(t, "sqrt", panels).nodes_weights()
    total = 0.0
    for rate, x in zip(rates, eta.sites):
        vals = semigroup_at_many(s, f, np.full(s.shape, x))
        total += rate * float(w @ (vals * vals))
    return total


def entrance_gaussian_variance_discrete(c, t, dt, f: GridFunction) -> float:
    b = entrance_functional_matrix(c, t, dt, [f])
    return float(np.sum(b[:, 0] ** 2))


def entrance_gaussian_variance_exact(c, t, f: GridFunction, panels: int = 64) -> float:
    s, w = TimeQuadrature(t, "sqrt", panels).nodes_weights()
    vals = entrance_functional_many(s, f)
    return 2.0 * c * float(w @ (vals * vals))


# ---------------------------------------------------------------------------
# jump drivers


@dataclass(frozen=True)
class JumpEvent:
    """One atom of the driving Poisson measure."""

    s: float
    u: float
    x: Optional[float] = None

    def __post_init__(self):
        if not (self.s > 0.0):
            raise ValueError("jump time must be positive")
        if self.u == 0.0:
            raise ValueError("jump mark must be nonzero")


def _draw_marked_poisson(rate: float, jumps: np.ndarray, mark_cdf: np.ndarray,
                         t: float, rng) -> tuple[np.ndarray, np.ndarray]:
    count = rng.poisson(rate * t)
    times = np.maximum(np.sort(rng.uniform(0.0, t, count)), 1e-300)
    if count == 0:
        return times, np.empty(0)
    idx = np.searchsorted(mark_cdf, rng.random(count), side="right")
    return times, jumps[np.minimum(idx, jumps.size - 1)]


def _draw_compound_poisson(m: AtomicLevyMeasure, t: float, rng) -> tuple[np.ndarray, np.ndarray]:
    """Exact jump times (sorted) and categorical marks of a compound Poisson driver."""
    return _draw_marked_poisson(m.rate, m.jumps, m.mark_cdf, t, rng)


@dataclass(frozen=True)
class EntranceJumpPath:
    """One replica of the entrance-kernel jump integral
    int_0^t int u k_{t-s}(y) (N - compensator)(ds, du)."""

    t: float
    times: np.ndarray
    marks: np.ndarray
    measure: AtomicLevyMeasure

    @property
    def events(self) -> tuple[JumpEvent, ...]:
        return tuple(JumpEvent(float(s), float(u)) for s, u in zip(self.times, self.marks))

    def functional(self, f: GridFunction) -> float:
        """Compensated pairing <Z_t, f>; exact in the jump times."""
        total = 0.0
        if self.times.size:
            total = float(self.marks @ entrance_functional_many(self.t - self.times, f))
        return total - self.measure.mean_jump * integrated_entrance_functional(self.t, f)


def draw_entrance_jump_path(m: AtomicLevyMeasure, t: float, seed: int, replica: int = 0) -> EntranceJumpPath:
    if not (m.first_moment_finite and m.second_moment_finite):
        raise ValueError("entrance jump driver needs (1 v |u|) m(du) finite")
    rng = rngs.stream(seed, rngs.JUMP_ENTRANCE, replica)
    times, marks = _draw_compound_poisson(m, t, rng)
    return EntranceJumpPath(t, times, marks, m)


def simulate_jump_functional(m: AtomicLevyMeasure, t: float, panel: Sequence[GridFunction],
                             seed: int, replica: int = 0) -> np.ndarray:
    """Panel functionals <Z_t, f_k> of one entrance-jump replica."""
    path = draw_entrance_jump_path(m, t, seed, replica)
    return np.array([path.functional(f) for f in panel])


def jump_entrance_samples(m: AtomicLevyMeasure, t: float, panel, seed, replicas: int) -> np.ndarray:
    """Batched entrance-jump panel functionals; row r equals
    ``simulate_jump_functional(..., replica=r)``."""
    if not (m.first_moment_finite and m.second_moment_finite):
        raise ValueError("entrance jump driver needs (1 v |u|) m(du) finite")
    all_times, all_marks, counts = [], [], np.empty(replicas, dtype=int)
    for r in range(replicas):
        rng = rngs.stream(seed, rngs.JUMP_ENTRANCE, r)
        times, marks = _draw_compound_poisson(m, t, rng)
        counts[r] = times.size
        all_times.append(times)
        all_marks.append(marks)
    times = np.concatenate(all_times) if all_times else np.empty(0)
    marks = np.concatenate(all_marks) if all_marks else np.empty(0)
    comp = np.array([m.mean_jump * integrated_entrance_functional(t, f) for f in panel])
    out = np.tile(-comp, (replicas, 1))
    if times.size:
        starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
        for k, f in enumerate(panel):
            contrib = marks * entrance_functional_many(t - times, f)
            out[:, k] += _segment_sums(contrib, starts, counts)
    return out


def _segment_sums(contrib: np.ndarray, starts: np.ndarray, counts: np.ndarray) -> np.ndarray:
    sums = np.add.reduceat(np.concatenate([contrib, [0.0]]), starts)
    sums[counts == 0] = 0.0
    return sums


@dataclass(frozen=True)
class CatalystJumpPath:
    """One replica of the space-time jump integral driven by catalyst sites."""

    t: float
    times: np.ndarray
    marks: np.ndarray
    sites: np.ndarray
    eta: CatalystMeasure
    jump_map: Mapping[float, AtomicLevyMeasure]

    @property
    def events(self) -> tuple[JumpEvent, ...]:
        order = np.argsort(self.times, kind="stable")
        return tuple(JumpEvent(float(self.times[i]), float(self.marks[i]), float(self.sites[i]))
                     for i in order)

    def functional(self, f: GridFunction, compensator: Optional[float] = None) -> float:
        total = 0.0
        if self.times.size:
            total = float(self.marks @ semigroup_at_many(self.t - self.times, f, self.sites))
        if compensator is None:
            compensator = catalyst_jump_compensator(self.jump_map, self.eta, self.t, f)
        return total - compensator


def catalyst_jump_compensator(jump_map, eta: CatalystMeasure, t: float, f: GridFunction) -> float:
    """sum_i eta_i (sum_a mass_a u_a)_i int_0^t P_r f(x_i) dr, deterministic."""
    total = 0.0
    for x, w in eta.atoms:
        m = jump_map.get(float(x))
        if m is None or not m.atoms:
            continue
        total += w * m.mean_jump * integrated_semigroup_at(t, f, x)
    return total


def _validate_jump_map(jump_map, eta):
    for x, _ in eta.atoms:
        m = jump_map.get(float(x))
        if m is not None and not (m.first_moment_finite and m.second_moment_finite):
            raise ValueError("signed-measure driver needs |u| m(x, du) bounded")


def _site_tables(jump_map, eta: CatalystMeasure):
    tables = []
    for x, w in eta.atoms:
        m = jump_map.get(float(x))
        if m is None or not m.atoms:
            continue
        tables.append((float(x), w * m.rate, m.jumps, m.mark_cdf))
    return tables


def draw_catalyst_jump_path(jump_map, eta: CatalystMeasure, t: float, seed: int,
                            replica: int = 0, _tables=None) -> CatalystJumpPath:
    """Events of the Poisson measure with intensity ds m(x_i, du) eta_i, exactly."""
    _validate_jump_map(jump_map, eta)
    tables = _tables if _tables is not None else _site_tables(jump_map, eta)
    rng = rngs.stream(seed, rngs.JUMP_CATALYST, replica)
    times, marks, sites = [], [], []
    for x, rate, jumps, cdf in tables:
        ts, us = _draw_marked_poisson(rate, jumps, cdf, t, rng)
        times.append(ts)
        marks.append(us)
        sites.append(np.full(ts.size, x))
    times = np.concatenate(times) if times else np.empty(0)
    marks = np.concatenate(marks) if marks else np.empty(0)
    sites = np.concatenate(sites) if sites else np.empty(0)
    return CatalystJumpPath(t, times, marks, sites, eta, dict(jump_map))


@dataclass(frozen=True)
class SignedMeasureSample:
    """Grid summary of one signed-measure replica Y_t: the event list, the
    density of jumps minus compensator, and the sign-of-mark decomposition."""

    path: CatalystJumpPath
    density: GridFunction
    positive: SignedAtomicMeasure
    negative: SignedAtomicMeasure
    panel_values: np.ndarray


def simulate_signed_measure(jump_map, eta: CatalystMeasure, t: float,
                            panel: Sequence[GridFunction], seed: int, replica: int = 0,
                            grid: Optional[SpatialGrid] = None) -> tuple[SignedMeasureSample, np.ndarray]:
    """One replica of Y_t = sum_j u_j P_{t-s_j}(x_j, .) minus its compensator.

    Panel functionals are evaluated per jump (exact in time); the grid density
    and its Jordan decomposition by sign of the marks are diagnostic views.
    """
    grid = grid or (panel[0].grid if panel else SpatialGrid.uniform())
    path = draw_catalyst_jump_path(jump_map, eta, t, seed, replica)
    values = np.array([path.functional(f) for f in panel])

    pos = np.zeros(grid.size)
    neg = np.zeros(grid.size)
    if path.times.size:
        kern = abm_density((t - path.times)[:, None], path.sites[:, None], grid.nodes[None, :])
        signed = path.marks[:, None] * kern
        pos = np.sum(np.maximum(signed, 0.0), axis=0)
        neg = np.sum(np.maximum(-signed, 0.0), axis=0)
    comp = np.zeros(grid.size)
    for x, w in eta.atoms:
        m = jump_map.get(float(x))
        if m is None or not m.atoms:
            continue
        s, wq = TimeQuadrature(t, "sqrt", 32).nodes_weights()
        comp += w * m.mean_jump * (wq @ abm_density(s[:, None], x, grid.nodes[None, :]))
    pos_d = np.maximum(-comp, 0.0) + pos
    neg_d = np.maximum(comp, 0.0) + neg
    density = GridFunction(grid, pos - neg - comp)
    sample = SignedMeasureSample(
        path=path,
        density=density,
        positive=SignedAtomicMeasure(density=GridFunction(grid, pos_d)),
        negative=SignedAtomicMeasure(density=GridFunction(grid, neg_d)),
        panel_values=values,
    )
    return sample, values


def signed_measure_samples(jump_map, eta, t, panel, seed, replicas: int) -> np.ndarray:
    """Batched panel functionals of the catalyst-driven signed-measure process."""
    _validate_jump_map(jump_map, eta)
    tables = _site_tables(jump_map, eta)
    all_t, all_u, all_x, counts = [], [], [], np.empty(replicas, dtype=int)
    for r in range(replicas):
        path = draw_catalyst_jump_path(jump_map, eta, t, seed, r, _tables=tables)
        counts[r] = path.times.size
        all_t.append(path.times)
        all_u.append(path.marks)
        all_x.append(path.sites)
    times = np.concatenate(all_t) if all_t else np.empty(0)
    marks = np.concatenate(all_u) if all_u else np.empty(0)
    sites = np.concatenate(all_x) if all_x else np.empty(0)
    comp = np.array([catalyst_jump_compensator(jump_map, eta, t, f) for f in panel])
    out = np.tile(-comp, (replicas, 1))
    if times.size:
        starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
        vals = semigroup_at_panel(t - times, sites, list(panel))
        for k in range(len(panel)):
            out[:, k] += _segment_sums(marks * vals[:, k], starts, counts)
    return out


def h_transform_process(path: EntranceJumpPath,
                        panel: Sequence[BoundaryGridFunction]) -> np.ndarray:
    """Functionals Z_t(f) = Y_t(h f) of the h-weighted image of an
    entrance-driven replica; the point mass at 0 never contributes."""
    return np.array([path.functional(apply_h(bf.interior)) for bf in panel])


# ---------------------------------------------------------------------------
# Markov recursion


@dataclass(frozen=True)
class SimParams:
    """Static configuration of one process family."""

    family: str  # 'gauss-catalyst' | 'gauss-entrance' | 'jump-entrance'
    grid: SpatialGrid
    dt: float
    c: Union[float, GridFunction] = 0.0
    eta: Optional[CatalystMeasure] = None
    m: Optional[AtomicLevyMeasure] = None

    def __post_init__(self):
        if self.family not in ("gauss-catalyst", "gauss-entrance", "jump-entrance"):
            raise ValueError(f"unknown family {self.family!r}")
        if self.family == "gauss-catalyst" and self.eta is None:
            raise ValueError("gauss-catalyst needs a catalyst measure")
        if self.family == "jump-entrance" and self.m is None:
            raise ValueError("jump-entrance needs a jump measure")


@dataclass(frozen=True)
class PathState:
    """Marginal state of one replica: Gaussian field on the grid plus the
    absolute-time jump ledger.  ``epoch`` counts advances so each increment
    draws from a fresh stream."""

    t: float
    field: GridFunction
    jumps: tuple[JumpEvent, ...]
    family: str
    seed: int
    replica: int
    epoch: int = 0


def new_state(params: SimParams, seed: int, replica: int = 0) -> PathState:
    zero = GridFunction(params.grid, np.zeros(params.grid.size))
    return PathState(0.0, zero, (), params.family, seed, replica)


_FAMILY_ID = {"gauss-catalyst": rngs.GAUSS_CATALYST,
              "gauss-entrance": rngs.GAUSS_ENTRANCE,
              "jump-entrance": rngs.JUMP_ENTRANCE}

_MATRIX_CACHE: dict = {}


def _cached_semigroup_matrix(grid: SpatialGrid, t: float) -> np.ndarray:
    key = (grid.lower, grid.upper, grid.size, round(t, 15))
    if key not in _MATRIX_CACHE:
        if len(_MATRIX_CACHE) > 16:
            _MATRIX_CACHE.clear()
        _MATRIX_CACHE[key] = semigroup_matrix(grid, t)
    return _MATRIX_CACHE[key]


_INCREMENT_CACHE: dict = {}


def _increment_matrix(params: SimParams, delta: float) -> np.ndarray:
    """Loading matrix M with increment = z @ M, z iid standard normal; cached
    per (family, horizon, dt, grid)."""
    c_key = float(params.c) if not isinstance(params.c, GridFunction) else id(params.c)
    eta_key = params.eta.atoms if params.eta is not None else None
    key = (params.family, round(delta, 15), round(params.dt, 15),
           params.grid.lower, params.grid.upper, params.grid.size, eta_key, c_key)
    if key in _INCREMENT_CACHE:
        return _INCREMENT_CACHE[key]
    mids, widths = _mids_widths(delta, min(params.dt, delta))
    if params.family == "gauss-catalyst":
        rates = _catalyst_rates(params.c, params.eta)
        scale = np.sqrt(rates[None, :] * widths[:, None])
        kern = abm_density((delta - mids)[:, None, None], params.eta.sites[None, :, None],
                           params.grid.nodes[None, None, :])
        mat = (scale[:, :, None] * kern).reshape(mids.size * rates.size, params.grid.size)
    else:
        c = float(params.c)
        kern = entrance_kernel((delta - mids)[:, None], params.grid.nodes[None, :])
        mat = np.sqrt(2.0 * c * widths)[:, None] * kern
    if len(_INCREMENT_CACHE) > 16:
        _INCREMENT_CACHE.clear()
    _INCREMENT_CACHE[key] = mat
    return mat


def _gaussian_increment(params: SimParams, delta: float, rng) -> np.ndarray:
    mat = _increment_matrix(params, delta)
    return rng.standard_normal(mat.shape[0]) @ mat


def advance_markov(state: PathState, delta: float, params: SimParams) -> PathState:
    """One Markov step: decay the field by P_delta, add an independent
    increment over (t, t+delta], extend the jump ledger."""
    if delta <= 0.0:
        raise ValueError("delta must be positive")
    if params.family != state.family:
        raise ValueError("state/params family mismatch")
    epoch = state.epoch + 1
    rng = rngs.stream(state.seed, _FAMILY_ID[state.family], state.replica, epoch)
    if np.any(state.field.values):
        decayed = _cached_semigroup_matrix(params.grid, delta) @ state.field.values
    else:
        decayed = state.field.values.copy()
    jumps = state.jumps
    if state.family in ("gauss-catalyst", "gauss-entrance"):
        field = decayed + _gaussian_increment(params, delta, rng)
    else:
        times, marks = _draw_compound_poisson(params.m, delta, rng)
        jumps = jumps + tuple(JumpEvent(state.t + float(s), float(u))
                              for s, u in zip(times, marks))
        field = decayed
    return PathState(state.t + delta, GridFunction(params.grid, field), jumps,
                     state.family, state.seed, state.replica, epoch)


def state_functionals(state: PathState, params: SimParams,
                      panel: Sequence[GridFunction]) -> np.ndarray:
    """Panel pairings <state, f_k>: grid quadrature of the field plus the
    exact compensated jump ledger."""
    grid = params.grid
    out = np.array([grid.integrate(state.field.values * f.values) for f in panel], dtype=float)
    if state.family == "jump-entrance" and state.t > 0.0:
        for k, f in enumerate(panel):
            jump_part = 0.0
            if state.jumps:
                taus = np.array([state.t - ev.s for ev in state.jumps])
                marks = np.array([ev.u for ev in state.jumps])
                jump_part = float(marks @ entrance_functional_many(np.maximum(taus, 1e-300), f))
            out[k] += jump_part - params.m.mean_jump * integrated_entrance_functional(state.t, f)
    return out


# ---------------------------------------------------------------------------
# metric on signed measures


def r_metric(mu: SignedAtomicMeasure, nu: SignedAtomicMeasure,
             panel: Sequence[GridFunction]) -> float:
    """Truncated weak-convergence metric sum_n 2^{-n} (1 ^ |mu(f_n) - nu(f_n)|).

    The panel is 1-indexed in the weights; the value is bounded by
    1 - 2^{-N} regardless of the measures.
    """
    total = 0.0
    for n, f in enumerate(panel, start=1):
        total += 2.0 ** (-n) * min(1.0, abs(mu(f) - nu(f)))
    return total
