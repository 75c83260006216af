"""Batch entry point: configuration, experiment orchestration, deterministic
replay, result emission.

Experiments read a JSON config (all defaults materialised into the written
manifest, so the manifest alone reproduces the run), write per-replica rows
as CSV and a verdict report as JSON plus a readable table, and exit 0 only
if every check passed.  ``replay`` re-runs a manifest and verifies the rows
hash bit-for-bit.

Exit codes: 0 pass, 2 invalid config or missing input, 3 failed verdict
(first failing cell named on stderr), 4 replay hash mismatch.
"""

from __future__ import annotations

import argparse
import copy
import hashlib
import io
import json
import os
import sys
from typing import Callable, Optional

import numpy as np

from . import __version__, harness, levy_cf, particles, simulate
from .grids import GridFunction, SpatialGrid, TimeQuadrature
from .grids import BoundaryGridFunction
from .kernels import (
    abm_density,
    apply_h,
    apply_semigroup,
    entrance_functional,
    entrance_kernel,
    h_transform_semigroup,
    semigroup_at,
    survival_fraction,
)
from .levy_cf import (
    AtomicLevyMeasure,
    BranchingMechanism,
    cf_gaussian_example,
    cf_jump_example,
    free_heat_shift,
    gaussian_site_entrance_law,
    limit_ou_log_cf,
    sc_from_entrance_law,
    sc_residual,
)
from .measures import CatalystMeasure, SignedAtomicMeasure
from .panels import boundary_panel, default_panel, indicator_at_zero, panel_labels

EXPERIMENTS = ("kernels", "sc-check", "simulate-gauss", "simulate-jump",
               "signed-measure", "h-transform", "fluctuation", "weierstrass")

DEFAULTS = {
    "grid": {"lower": 1e-4, "upper": 20.0, "nodes": 1024},
    "time": {"t": 0.5, "steps": 256, "quad_panels": 32, "substitution": "sqrt"},
    "mechanism": {"c": 1.0, "x0": 1.0,
                  "jumps": [[1.0, 0.6], [-0.5, 0.8], [2.0, 0.1]]},
    "catalyst": {"atoms": [[0.8, 0.7], [1.6, 0.5]]},
    "panel": {"size": 8},
    "points": [0.5, 1.0, 2.0, -0.5, -1.0, -2.0],
    "replicas": 20000,
    "parallelism": 1,
    "fluctuation": {"thetas": [1.0, 0.3, 0.1], "t": 0.4, "steps": 128,
                    "mass_scale": 0.1, "domain_length": 12.0,
                    "c": 0.5, "jumps": [[1.0, 0.5]], "site": 1.0, "site_mass": 1.0},
    "weierstrass": {"trunc": 20, "n_times": 100, "pairs": 4},
}


class ConfigError(ValueError):
    pass


def _merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for key, val in override.items():
        if isinstance(val, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], val)
        else:
            out[key] = val
    return out


def resolve_config(raw: dict) -> dict:
    """Validate a raw config dict and materialise every default."""
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    unknown = set(raw) - {"experiment", "seed", "out_dir"} - set(DEFAULTS)
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    exp = raw.get("experiment")
    if exp not in EXPERIMENTS:
        raise ConfigError(f"experiment must be one of {EXPERIMENTS}, got {exp!r}")
    if "seed" not in raw:
        raise ConfigError("seed is mandatory")
    seed = raw["seed"]
    if not isinstance(seed, int) or seed < 0:
        raise ConfigError("seed must be a nonnegative integer")
    cfg = _merge(DEFAULTS, {k: v for k, v in raw.items()
                            if k not in ("experiment", "seed", "out_dir")})
    cfg["experiment"] = exp
    cfg["seed"] = seed
    cfg["out_dir"] = raw.get("out_dir", f"runs/{exp}")
    g = cfg["grid"]
    if not (0.0 < g["lower"] < g["upper"]):
        raise ConfigError("grid needs 0 < lower < upper")
    if g["nodes"] < 16:
        raise ConfigError("grid needs at least 16 nodes")
    tc = cfg["time"]
    if tc["t"] <= 0.0:
        raise ConfigError("time.t must be positive")
    if tc["steps"] < 1:
        raise ConfigError("time.steps must be >= 1")
    if tc["quad_panels"] < 8:
        raise ConfigError("time.quad_panels must be >= 8")
    if tc["substitution"] not in ("sqrt", "uniform"):
        raise ConfigError("time.substitution must be sqrt or uniform")
    if cfg["replicas"] < 100:
        raise ConfigError("replicas must be >= 100")
    if cfg["parallelism"] < 1:
        raise ConfigError("parallelism must be >= 1")
    if cfg["mechanism"]["c"] < 0.0:
        raise ConfigError("mechanism.c must be nonnegative")
    for u, m in cfg["mechanism"]["jumps"]:
        if u == 0.0 or m <= 0.0:
            raise ConfigError("jump atoms need u != 0 and mass > 0")
    for x, m in cfg["catalyst"]["atoms"]:
        if x <= 0.0 or m <= 0.0:
            raise ConfigError("catalyst atoms need x > 0 and mass > 0")
    if not (1 <= cfg["panel"]["size"] <= 8):
        raise ConfigError("panel.size must be within 1..8")
    fl = cfg["fluctuation"]
    if list(fl["thetas"]) != sorted(fl["thetas"], reverse=True) or min(fl["thetas"]) <= 0:
        raise ConfigError("fluctuation.thetas must be positive and decreasing")
    return cfg


# ---------------------------------------------------------------------------
# shared builders


def _grid(cfg) -> SpatialGrid:
    g = cfg["grid"]
    return SpatialGrid.uniform(g["lower"], g["upper"], g["nodes"])


def _panel(cfg, grid):
    return default_panel(grid, cfg["panel"]["size"])


def _measure(cfg) -> AtomicLevyMeasure:
    return AtomicLevyMeasure(tuple((u, m) for u, m in cfg["mechanism"]["jumps"]))


def _catalyst(cfg) -> CatalystMeasure:
    return CatalystMeasure(tuple((x, m) for x, m in cfg["catalyst"]["atoms"]))


def _rows_bytes(header, rows) -> bytes:
    buf = io.StringIO()
    buf.write(",".join(header) + "\n")
    for row in rows:
        buf.write(",".join(repr(c) if isinstance(c, float) else str(c) for c in row) + "\n")
    return buf.getvalue().encode()


def _sample_rows(seed, t, samples) -> tuple[tuple[str, ...], list]:
    header = ("replica", "seed", "t", "f_index", "value")
    rows = []
    for r in range(samples.shape[0]):
        for k in range(samples.shape[1]):
            rows.append((r, seed, t, k, float(samples[r, k])))
    return header, rows


def _analytic_grid(panel, points, log_cf: Callable[[GridFunction], complex]) -> np.ndarray:
    out = np.empty((len(panel), len(points)), dtype=complex)
    for k, f in enumerate(panel):
        for p, point in enumerate(points):
            out[k, p] = log_cf(f.scaled(point))
    return out


def _check(name, passed, value, tolerance, detail="") -> dict:
    return {"check": name, "pass": bool(passed), "value": float(value),
            "tolerance": float(tolerance), "detail": detail}


# ---------------------------------------------------------------------------
# experiments (each returns (checks, rows_header, rows, extras))


def _run_kernels(cfg):
    grid = _grid(cfg)
    panel = _panel(cfg, grid)
    rng = np.random.default_rng(cfg["seed"])
    checks = []
    for y in (0.25, 1.0, 4.0):
        horizon = 20.0
        s, w = TimeQuadrature(horizon, "sqrt", 64).nodes_weights()
        total = float(w @ entrance_kernel(s, y)) + survival_fraction(horizon, y)
        checks.append(_check(f"entrance-normalisation y={y}", abs(total - 1.0) <= 1e-6,
                             abs(total - 1.0), 1e-6))
    fine = grid.refined(2)
    for i in range(20):
        r, t = rng.uniform(0.05, 0.6, 2)
        x, y = rng.uniform(0.3, 3.0, 2)
        lhs = float((fine.weights * abm_density(r, x, fine.nodes)) @ abm_density(t, fine.nodes, y))
        gap_p = abs(lhs - abm_density(r + t, x, y))
        lhs_k = float((fine.weights * abm_density(t, fine.nodes, y)) @ entrance_kernel(r, fine.nodes))
        gap_k = abs(lhs_k - entrance_kernel(r + t, y))
        checks.append(_check(f"chapman-kolmogorov p #{i}", gap_p <= 1e-6, gap_p, 1e-6,
                             f"r={r:.3f} t={t:.3f} x={x:.3f} y={y:.3f}"))
        checks.append(_check(f"chapman-kolmogorov k #{i}", gap_k <= 1e-6, gap_k, 1e-6))
    for (r, t) in ((0.1, 0.2), (0.25, 0.25), (0.05, 0.45), (0.5, 0.5)):
        worst = 0.0
        for f in panel:
            comp = apply_semigroup(r, apply_semigroup(t, f))
            whole = apply_semigroup(r + t, f)
            worst = max(worst, float(np.max(np.abs(comp.values - whole.values))))
        checks.append(_check(f"semigroup composition r={r} t={t}", worst <= 1e-5, worst, 1e-5))
        sup = max(apply_semigroup(r + t, f).sup() for f in panel)
        checks.append(_check(f"contraction r+t={r+t}", sup <= 1.0 + 1e-9, sup, 1.0 + 1e-9))
    wide = grid.widened()
    worst = 0.0
    for f in panel:
        fw = GridFunction.from_callable(wide, f.fn)
        worst = max(worst, abs(semigroup_at(0.5, f, 1.0) - semigroup_at(0.5, fw, 1.0)))
        worst = max(worst, abs(entrance_functional(0.3, f) - entrance_functional(0.3, fw)))
    checks.append(_check("truncation budget (halve lower, double upper)",
                         worst <= 1e-6, worst, 1e-6))
    header = ("check", "pass", "value", "tolerance")
    rows = [(c["check"], c["pass"], c["value"], c["tolerance"]) for c in checks]
    return checks, header, rows, {}


def _run_sc_check(cfg):
    grid = _grid(cfg)
    panel = _panel(cfg, grid)
    m = _measure(cfg)
    c, x0 = cfg["mechanism"]["c"], cfg["mechanism"]["x0"]
    rng = np.random.default_rng(cfg["seed"])
    checks, rows = [], []
    glog = lambda tt, ff: cf_gaussian_example(c, x0, tt, ff)
    jlog = lambda tt, ff: cf_jump_example(m, tt, ff)
    for i in range(50):
        r, t = rng.uniform(0.05, 0.5, 2)
        f = panel[rng.integers(len(panel))]
        fam, log_cf = (("gauss", glog) if i % 2 == 0 else ("jump", jlog))
        resid = sc_residual(log_cf, r, t, f)
        checks.append(_check(f"sc-residual {fam} #{i}", resid <= 1e-6, resid, 1e-6,
                             f"r={r:.3f} t={t:.3f}"))
        rows.append((i, fam, r, t, resid))
    neg = sc_residual(lambda tt, ff: cf_jump_example(m, tt, ff, panels=64),
                      0.3, 0.4, panel[0], shift=free_heat_shift)
    checks.append(_check("negative control (free heat shift)", neg > 1e-5, neg, 1e-5,
                         "must exceed 10x tolerance"))
    el = gaussian_site_entrance_law(c, x0)
    tq = TimeQuadrature(cfg["time"]["t"], cfg["time"]["substitution"], cfg["time"]["quad_panels"])
    worst = 0.0
    for f in panel:
        gap = abs(sc_from_entrance_law(el, cfg["time"]["t"], f, tq)
                  - cf_gaussian_example(c, x0, cfg["time"]["t"], f))
        worst = max(worst, gap)
    checks.append(_check("entrance-law route vs closed form", worst <= 1e-6, worst, 1e-6))
    header = ("case", "family", "r", "t", "residual")
    return checks, header, rows, {}


def _markov_check(cfg, family, params, panel, labels, points, replicas):
    one, two = [], []
    t = cfg["time"]["t"]
    for rep in range(replicas):
        s1 = simulate.new_state(params, cfg["seed"] + 1, rep)
        s1 = simulate.advance_markov(s1, t, params)
        one.append(simulate.state_functionals(s1, params, panel))
        s2 = simulate.new_state(params, cfg["seed"] + 2, rep)
        s2 = simulate.advance_markov(s2, t / 2.0, params)
        s2 = simulate.advance_markov(s2, t / 2.0, params)
        two.append(simulate.state_functionals(s2, params, panel))
    emp1 = harness.empirical_cf(np.array(one), labels, points)
    emp2 = harness.empirical_cf(np.array(two), labels, points)
    gap, tol = harness.cf_distance(emp1, emp2)
    return _check(f"markov one-shot vs recursive ({family})", gap <= tol + 1e-3,
                  gap, tol + 1e-3, f"{replicas} replicas")


def _run_simulate_gauss(cfg):
    grid = _grid(cfg)
    panel = _panel(cfg, grid)
    labels = panel_labels(cfg["panel"]["size"])
    points = tuple(cfg["points"])
    t = cfg["time"]["t"]
    dt = t / cfg["time"]["steps"]
    c, x0 = cfg["mechanism"]["c"], cfg["mechanism"]["x0"]
    eta = CatalystMeasure(((x0, 1.0),))
    seed, n = cfg["seed"], cfg["replicas"]
    samples = simulate.gaussian_catalyst_samples(c, eta, t, dt, panel, seed, n)
    emp = harness.empirical_cf(samples, labels, points)
    analytic = _analytic_grid(panel, points, lambda f: cf_gaussian_example(c, x0, t, f))
    coarse = _analytic_grid(panel, points, lambda f: complex(
        -0.5 * simulate.catalyst_gaussian_variance_discrete(c, eta, t, dt, f)))
    fine = _analytic_grid(panel, points, lambda f: complex(
        -0.5 * simulate.catalyst_gaussian_variance_discrete(c, eta, t, dt / 2.0, f)))
    budget = harness.richardson_budget(coarse, fine) + 1e-9
    rep = harness.compare_cf(emp, analytic, budget)
    checks = [_check("empirical CF vs closed form", rep.verdict, rep.max_abs_gap,
                     float(np.max(rep.tolerance)), f"worst cell {rep.worst_cell}")]
    f0 = panel[0]
    vd = simulate.catalyst_gaussian_variance_discrete(c, eta, t, dt, f0)
    ve = simulate.catalyst_gaussian_variance_exact(c, eta, t, f0)
    emp_var = float(samples[:, 0].var())
    tol = 3.0 * emp_var * np.sqrt(2.0 / n) + abs(vd - ve)
    checks.append(_check("Ito isometry f1", abs(emp_var - ve) <= tol, abs(emp_var - ve), tol))
    mean_z = float(np.max(np.abs(samples.mean(0)) / (3.0 * samples.std(0) / np.sqrt(n))))
    checks.append(_check("centred field", mean_z <= 1.0, mean_z, 1.0, "max |mean|/3SE"))
    params = simulate.SimParams("gauss-catalyst", grid, dt, c=c, eta=eta)
    checks.append(_markov_check(cfg, "gauss-catalyst", params, panel, labels, points,
                                min(n, 20000)))
    header, rows = _sample_rows(seed, t, samples)
    return checks, header, rows, {"comparison": [r for r in rep.rows()], "note": rep.note}


def _run_simulate_jump(cfg):
    grid = _grid(cfg)
    panel = _panel(cfg, grid)
    labels = panel_labels(cfg["panel"]["size"])
    points = tuple(cfg["points"])
    t = cfg["time"]["t"]
    dt = t / cfg["time"]["steps"]
    c = cfg["mechanism"]["c"]
    m = _measure(cfg)
    seed, n = cfg["seed"], cfg["replicas"]
    checks = []
    # Gaussian-only boundary driver
    gs = simulate.entrance_gaussian_samples(c, t, dt, panel, seed, n)
    emp_g = harness.empirical_cf(gs, labels, points)
    analytic_g = _analytic_grid(panel, points, lambda f: complex(
        -0.5 * simulate.entrance_gaussian_variance_exact(c, t, f)))
    coarse = _analytic_grid(panel, points, lambda f: complex(
        -0.5 * simulate.entrance_gaussian_variance_discrete(c, t, dt, f)))
    fine = _analytic_grid(panel, points, lambda f: complex(
        -0.5 * simulate.entrance_gaussian_variance_discrete(c, t, dt / 2.0, f)))
    rep_g = harness.compare_cf(emp_g, analytic_g, harness.richardson_budget(coarse, fine) + 1e-9)
    checks.append(_check("entrance gaussian CF", rep_g.verdict, rep_g.max_abs_gap,
                         float(np.max(rep_g.tolerance)), f"worst cell {rep_g.worst_cell}"))
    # jump-only driver (exact in law)
    js = simulate.jump_entrance_samples(m, t, panel, seed, n)
    emp_j = harness.empirical_cf(js, labels, points)
    analytic_j = _analytic_grid(panel, points, lambda f: cf_jump_example(m, t, f))
    rep_j = harness.compare_cf(emp_j, analytic_j, 1e-9)
    checks.append(_check("entrance jump CF", rep_j.verdict, rep_j.max_abs_gap,
                         float(np.max(rep_j.tolerance)), f"worst cell {rep_j.worst_cell}"))
    mean_z = float(np.max(np.abs(js.mean(0)) / (3.0 * js.std(0) / np.sqrt(n))))
    checks.append(_check("compensated mean", mean_z <= 1.0, mean_z, 1.0, "max |mean|/3SE"))
    pg = simulate.SimParams("gauss-entrance", grid, dt, c=c)
    pj = simulate.SimParams("jump-entrance", grid, dt, m=m)
    nn = min(n, 20000)
    checks.append(_markov_check(cfg, "gauss-entrance", pg, panel, labels, points, nn))
    checks.append(_markov_check(cfg, "jump-entrance", pj, panel, labels, points, nn))
    header, rows = _sample_rows(seed, t, js)
    return checks, header, rows, {"gauss_note": rep_g.note, "jump_note": rep_j.note}


def _run_signed_measure(cfg):
    grid = _grid(cfg)
    panel = _panel(cfg, grid)
    labels = panel_labels(cfg["panel"]["size"])
    points = tuple(cfg["points"])
    t = cfg["time"]["t"]
    m = _measure(cfg)
    eta = _catalyst(cfg)
    jump_map = {x: m for x, _ in eta.atoms}
    mech = BranchingMechanism(c=0.0, jumps=jump_map)
    seed, n = cfg["seed"], cfg["replicas"]
    samples = simulate.signed_measure_samples(jump_map, eta, t, panel, seed, n)
    emp = harness.empirical_cf(samples, labels, points)
    eta_m = SignedAtomicMeasure.from_catalyst(eta)
    analytic = _analytic_grid(panel, points, lambda f: limit_ou_log_cf(mech, eta_m, None, t, f))
    rep = harness.compare_cf(emp, analytic, 1e-9)
    checks = [_check("signed-measure CF vs analytic", rep.verdict, rep.max_abs_gap,
                     float(np.max(rep.tolerance)), f"worst cell {rep.worst_cell}")]
    mean_z = float(np.max(np.abs(samples.mean(0)) / (3.0 * samples.std(0) / np.sqrt(n))))
    checks.append(_check("compensated mean", mean_z <= 1.0, mean_z, 1.0))
    sample, values = simulate.simulate_signed_measure(jump_map, eta, t, panel, seed, 0)
    pos, neg = sample.positive, sample.negative
    recon = pos.density.values - neg.density.values - sample.density.values
    checks.append(_check("jordan reconstruction", float(np.max(np.abs(recon))) <= 1e-12,
                         float(np.max(np.abs(recon))), 1e-12))
    rm = simulate.r_metric(pos, pos, panel)
    checks.append(_check("r-metric identity", rm == 0.0, rm, 0.0))
    header, rows = _sample_rows(seed, t, samples)
    return checks, header, rows, {"note": rep.note}


def _run_h_transform(cfg):
    grid = _grid(cfg)
    bpanel = boundary_panel(grid, cfg["panel"]["size"])
    labels = panel_labels(cfg["panel"]["size"])
    points = tuple(cfg["points"])
    t = cfg["time"]["t"]
    m = _measure(cfg)
    seed, n = cfg["seed"], cfg["replicas"]
    checks = []
    ones = GridFunction(grid, np.ones(grid.size),
                        fn=lambda x: np.ones_like(np.asarray(x, dtype=float)))
    t_one = h_transform_semigroup(t, BoundaryGridFunction(ones, 1.0))
    sup = max(float(np.max(t_one.interior.values)), t_one.boundary)
    checks.append(_check("h-transform sub-Markov (T_t 1 <= 1)", sup <= 1.0 + 1e-9, sup, 1.0 + 1e-9))
    comp = h_transform_semigroup(0.2, h_transform_semigroup(0.3, bpanel[0]))
    whole = h_transform_semigroup(0.5, bpanel[0])
    gap = max(float(np.max(np.abs(comp.interior.values - whole.interior.values))),
              abs(comp.boundary - whole.boundary))
    checks.append(_check("h-transform semigroup composition", gap <= 1e-6, gap, 1e-6))
    x0, x1 = grid.nodes[0], grid.nodes[1]
    v0, v1 = float(whole.interior.values[0]), float(whole.interior.values[1])
    extrap = v0 - x0 * (v1 - v0) / (x1 - x0)
    edge = abs(whole.boundary - extrap)
    checks.append(_check("boundary consistency", edge <= 1e-6, edge, 1e-6,
                         "closed form vs one-sided extrapolation"))
    # process-level: Z = h-image of the entrance-driven Y
    hf_panel = [apply_h(bf.interior) for bf in bpanel]
    hsamples = simulate.jump_entrance_samples(m, t, hf_panel, seed, n)  # Z(f) = Y(hf)
    path = simulate.draw_entrance_jump_path(m, t, seed, 0)
    z0 = simulate.h_transform_process(path, bpanel)
    y0 = np.array([path.functional(hf) for hf in hf_panel])
    ident = float(np.max(np.abs(z0 - y0) / np.maximum(1e-30, np.abs(y0))))
    checks.append(_check("Z(f) = Y(hf) identity", ident <= 1e-12, ident, 1e-12))
    zero = simulate.h_transform_process(path, [indicator_at_zero(grid)])
    checks.append(_check("no mass at the boundary point", abs(float(zero[0])) == 0.0,
                         abs(float(zero[0])), 0.0))
    emp = harness.empirical_cf(hsamples, labels, points)
    analytic = _analytic_grid(hf_panel, points, lambda f: cf_jump_example(m, t, f))
    rep = harness.compare_cf(emp, analytic, 1e-9)
    checks.append(_check("h-process CF vs analytic", rep.verdict, rep.max_abs_gap,
                         float(np.max(rep.tolerance)), f"worst cell {rep.worst_cell}"))
    header, rows = _sample_rows(seed, t, hsamples)
    return checks, header, rows, {"note": rep.note}


def _run_fluctuation(cfg):
    grid = _grid(cfg)
    panel = _panel(cfg, grid)
    fl = cfg["fluctuation"]
    t = fl["t"]
    dt = t / fl["steps"]
    cat = CatalystMeasure(((fl["site"], fl["site_mass"]),))
    m = AtomicLevyMeasure(tuple((u, mass) for u, mass in fl["jumps"]))
    mech = BranchingMechanism(c=fl["c"], jumps={fl["site"]: m})
    seed, n = cfg["seed"], cfg["replicas"]
    width = 8.0 * np.sqrt(dt)
    sweep = particles.run_theta_sweep(tuple(fl["thetas"]), t, panel, n, seed,
                                      catalyst=cat, mech=mech, dt=dt,
                                      points=tuple(cfg["points"]),
                                      domain_length=fl["domain_length"], width=width,
                                      mass_scale=fl["mass_scale"],
                                      workers=cfg["parallelism"])
    checks = [_check("CF distance nonincreasing in theta", sweep["monotone_within_error"],
                     sweep["rows"][-1]["distance"], sweep["rows"][0]["distance"] + 1e-9,
                     " -> ".join(f"{r['theta']}:{r['distance']:.4f}" for r in sweep["rows"]))]
    # mean conservation at the smallest theta
    theta = fl["thetas"][-1]
    zsamples = particles.run_replicas(theta, t, dt, panel, cat, mech, seed + 7,
                                      min(n, 4000), domain_length=fl["domain_length"],
                                      width=width, mass_scale=fl["mass_scale"])
    lam_trunc = np.array([particles.lambda_truncated(f, fl["domain_length"]) for f in panel])
    y_mean = theta * zsamples.mean(0) + lam_trunc
    y_se = theta * zsamples.std(0) / np.sqrt(zsamples.shape[0])
    lam = np.array([f.integral() for f in panel])
    budget = np.abs(lam - lam_trunc) + np.array(
        [abs(float((grid.weights * apply_semigroup(t, f).values)[grid.nodes > fl["domain_length"]].sum()))
         for f in panel])
    worst = float(np.max((np.abs(y_mean - lam) - budget) / (3.0 * y_se)))
    checks.append(_check("mean conservation (interior panel)", worst <= 1.0, worst, 1.0,
                         "max (|mean-lambda|-budget)/3SE"))
    header = ("theta", "distance", "se", "mean_gap")
    rows = [(r["theta"], r["distance"], r["se"], r["mean_gap"]) for r in sweep["rows"]]
    return checks, header, rows, {"sweep": sweep["rows"]}


def _run_weierstrass(cfg):
    wc = cfg["weierstrass"]
    trunc = wc["trunc"]
    rng = np.random.default_rng(cfg["seed"])
    checks, rows = [], []
    anchor0 = abs(harness.weierstrass_linear_part(trunc, 0.0))
    anchor_pi = abs(harness.weierstrass_linear_part(trunc, np.pi))
    checks.append(_check("anchor t=0", anchor0 <= 1e-12, anchor0, 1e-12))
    checks.append(_check("anchor t=pi", anchor_pi <= 1e-12, anchor_pi, 1e-12))
    grid = harness.weierstrass_grid(trunc)
    m = grid[0]
    worst = 0.0
    for j in rng.integers(1, m, size=wc["n_times"]):
        t = 2.0 * np.pi * j / m
        a = harness.weierstrass_linear_part(trunc, t)
        b = harness.weierstrass_direct_route(trunc, int(j), grid)
        worst = max(worst, abs(a - b))
        rows.append((int(j), t, a, b, abs(a - b)))
    checks.append(_check(f"route equality over {wc['n_times']} times", worst <= 1e-8,
                         worst, 1e-8))
    scale = 2 ** 18
    rs = rng.integers(1, int(2 * np.pi * scale), size=wc["pairs"]) / scale
    ts = rng.integers(1, int(2 * np.pi * scale), size=wc["pairs"]) / scale
    rep = harness.sc_constant_check(ts, rs, trunc)
    checks.append(_check("constant-SC identity in Fourier coordinates",
                         rep.verdict, rep.max_residual, 1e-12,
                         f"{rep.pairs} dyadic (r,t) pairs"))
    header = ("shift_index", "t", "series_route", "direct_route", "gap")
    extras = {"difference_quotients": harness.difference_quotient_scales(trunc)}
    return checks, header, rows, extras


RUNNERS = {
    "kernels": _run_kernels,
    "sc-check": _run_sc_check,
    "simulate-gauss": _run_simulate_gauss,
    "simulate-jump": _run_simulate_jump,
    "signed-measure": _run_signed_measure,
    "h-transform": _run_h_transform,
    "fluctuation": _run_fluctuation,
    "weierstrass": _run_weierstrass,
}


# ---------------------------------------------------------------------------
# artifact plumbing


def _canonical_json(obj) -> bytes:
    return json.dumps(obj, sort_keys=True, indent=1).encode()


def run_experiment(cfg: dict, out_dir: str) -> dict:
    """Execute the configured experiment and write manifest/rows/report."""
    checks, header, rows, extras = RUNNERS[cfg["experiment"]](cfg)
    rows_bytes = _rows_bytes(header, rows)
    report = {
        "experiment": cfg["experiment"],
        "verdict": all(c["pass"] for c in checks),
        "checks": checks,
        "extras": extras,
    }
    report_bytes = _canonical_json(report)
    manifest = {
        "config": cfg,
        "version": __version__,
        "rows_sha256": hashlib.sha256(rows_bytes).hexdigest(),
        "report_sha256": hashlib.sha256(report_bytes).hexdigest(),
    }
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "rows.csv"), "wb") as fh:
        fh.write(rows_bytes)
    with open(os.path.join(out_dir, "report.json"), "wb") as fh:
        fh.write(report_bytes)
    with open(os.path.join(out_dir, "manifest.json"), "wb") as fh:
        fh.write(_canonical_json(manifest))
    with open(os.path.join(out_dir, "report.txt"), "w") as fh:
        fh.write(format_report(report))
    return report


def format_report(report: dict) -> str:
    lines = [f"experiment: {report['experiment']}",
             f"verdict:    {'PASS' if report['verdict'] else 'FAIL'}", ""]
    width = max(len(c["check"]) for c in report["checks"])
    for c in report["checks"]:
        status = "pass" if c["pass"] else "FAIL"
        lines.append(f"  {c['check']:<{width}}  {status}  value={c['value']:<12.4g} "
                     f"tol={c['tolerance']:.4g}  {c['detail']}")
    return "\n".join(lines) + "\n"


def _first_failure(report) -> Optional[dict]:
    for c in report["checks"]:
        if not c["pass"]:
            return c
    return None


def cmd_run(args) -> int:
    try:
        with open(args.config) as fh:
            raw = json.load(fh)
        if args.seed is not None:
            raw["seed"] = args.seed
        if args.replicas is not None:
            raw["replicas"] = args.replicas
        if args.out_dir is not None:
            raw["out_dir"] = args.out_dir
        if args.parallelism is not None:
            raw["parallelism"] = args.parallelism
        cfg = resolve_config(raw)
    except (OSError, json.JSONDecodeError, ConfigError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    report = run_experiment(cfg, cfg["out_dir"])
    print(format_report(report))
    if not report["verdict"]:
        bad = _first_failure(report)
        print(f"failing cell: {bad['check']} value={bad['value']:.4g} "
              f"tol={bad['tolerance']:.4g}", file=sys.stderr)
        return 3
    return 0


def cmd_replay(args) -> int:
    try:
        with open(args.manifest) as fh:
            manifest = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        print(f"manifest error: {exc}", file=sys.stderr)
        return 2
    cfg = manifest["config"]
    checks, header, rows, extras = RUNNERS[cfg["experiment"]](cfg)
    rows_hash = hashlib.sha256(_rows_bytes(header, rows)).hexdigest()
    if rows_hash != manifest["rows_sha256"]:
        print(f"hash mismatch: rows {rows_hash} != manifest {manifest['rows_sha256']}",
              file=sys.stderr)
        return 4
    print(f"replay ok: rows hash {rows_hash}")
    return 0


def cmd_list(_args) -> int:
    for name in EXPERIMENTS:
        print(name)
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="skewsim",
                                     description="simulation lab for OU-type processes "
                                                 "over absorbed Brownian motion")
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="run an experiment from a JSON config")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--seed", type=int)
    p_run.add_argument("--replicas", type=int)
    p_run.add_argument("--out-dir")
    p_run.add_argument("--parallelism", type=int)
    p_run.set_defaults(func=cmd_run)
    p_replay = sub.add_parser("replay", help="re-run a manifest and verify hashes")
    p_replay.add_argument("manifest")
    p_replay.set_defaults(func=cmd_replay)
    p_list = sub.add_parser("list-experiments", help="list experiment names")
    p_list.set_defaults(func=cmd_list)
    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
