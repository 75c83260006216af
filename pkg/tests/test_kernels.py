"""Kernel-level checks.

Derived expected values are frozen from their stated oracles, and each oracle
is kept alive here (at reduced cost where it is a Monte Carlo) so the numbers
stay auditable:

* g_1(0) = 0.3989422804014327, confirmed by quadrature carrying unit mass;
* p_1(1,1) = 0.3449513138882446, confirmed by a killed-random-walk histogram;
* k_1(1) = 0.2419707245191434, confirmed by the one-sided derivative of
  p_t(x, 1) / 2x at x = 1e-6.
"""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from skewsim import kernels as K
from skewsim.grids import BoundaryGridFunction, GridFunction, SpatialGrid, TimeQuadrature


class TestGaussianDensity:
    def test_peak_value_frozen(self):
        assert K.gaussian_density(1.0, 0.0) == pytest.approx(0.3989422804014327, abs=1e-15)

    def test_unit_mass_oracle(self):
        # oracle: numerical integration of the density over a wide interval
        x = np.linspace(-10, 10, 20001)
        mass = np.trapezoid(K.gaussian_density(1.0, x), x)
        assert mass == pytest.approx(1.0, abs=1e-12)

    @given(st.floats(0.01, 10.0), st.floats(-20.0, 20.0))
    @settings(max_examples=50, deadline=None)
    def test_even_in_x(self, t, x):
        assert K.gaussian_density(t, x) == K.gaussian_density(t, -x)

    def test_time_scaling_at_origin(self):
        assert K.gaussian_density(4.0, 0.0) == pytest.approx(K.gaussian_density(1.0, 0.0) / 2.0)

    def test_domain_error(self):
        with pytest.raises(ValueError):
            K.gaussian_density(0.0, 1.0)
        with pytest.raises(ValueError):
            K.gaussian_density(-1.0, 1.0)


class TestAbmDensity:
    def test_value_frozen(self):
        assert K.abm_density(1.0, 1.0, 1.0) == pytest.approx(0.3449513138882446, abs=1e-14)

    def test_killed_walk_oracle(self):
        # oracle: histogram of Brownian motion killed at 0, density at y = 1
        rng = np.random.default_rng(42)
        n, steps = 200_000, 200
        dt = 1.0 / steps
        x = np.full(n, 1.0)
        alive = np.ones(n, dtype=bool)
        for _ in range(steps):
            x0 = x.copy()
            x = x + np.sqrt(dt) * rng.standard_normal(n)
            crossed = alive & ((x <= 0) | (rng.random(n) < np.exp(-2 * np.clip(x0 * x, 0, None) / dt)))
            alive &= ~crossed
        width = 0.1
        hits = np.count_nonzero(alive & (np.abs(x - 1.0) < width / 2))
        est = hits / (n * width)
        se = np.sqrt(est / (n * width))
        assert abs(est - K.abm_density(1.0, 1.0, 1.0)) < 3 * se + 2e-3  # + O(width^2) bias

    @given(st.floats(0.05, 5.0), st.floats(0.05, 8.0), st.floats(0.05, 8.0))
    @settings(max_examples=50, deadline=None)
    def test_symmetric_and_nonnegative(self, t, x, y):
        assert K.abm_density(t, x, y) == K.abm_density(t, y, x)
        assert K.abm_density(t, x, y) >= 0.0

    def test_absorbing_boundary(self):
        assert K.abm_density(1.0, 1e-8, 1.0) == pytest.approx(0.0, abs=1e-7)

    def test_domain_errors(self):
        with pytest.raises(ValueError):
            K.abm_density(0.0, 1.0, 1.0)
        with pytest.raises(ValueError):
            K.abm_density(1.0, -1.0, 1.0)
        with pytest.raises(ValueError):
            K.abm_density(1.0, 1.0, 0.0)


class TestEntranceKernel:
    def test_value_frozen(self):
        assert K.entrance_kernel(1.0, 1.0) == pytest.approx(0.2419707245191434, abs=1e-14)

    def test_boundary_derivative_oracle(self):
        # oracle: one-sided finite difference of p_t(x, 1)/(2x) at x = 1e-6
        x = 1e-6
        fd = K.abm_density(1.0, x, 1.0) / (2.0 * x)
        assert K.entrance_kernel(1.0, 1.0) == pytest.approx(fd, abs=1e-9)

    def test_time_normalisation(self):
        # int_0^T k_t(y) dt + closed-form tail = 1 within 1e-6
        for y in (0.25, 1.0, 4.0):
            horizon = 20.0
            s, w = TimeQuadrature(horizon, "sqrt", 64).nodes_weights()
            total = float(w @ K.entrance_kernel(s, y)) + K.survival_fraction(horizon, y)
            assert total == pytest.approx(1.0, abs=1e-6)

    def test_absorbed_fraction_closed_form(self):
        # erfc form equals the time quadrature of k_s(y)
        for t, y in ((0.3, 0.5), (1.0, 2.0)):
            s, w = TimeQuadrature(t, "sqrt", 64).nodes_weights()
            quad = float(w @ K.entrance_kernel(s, y))
            assert K.absorbed_fraction(t, y) == pytest.approx(quad, abs=1e-10)

    def test_chapman_kolmogorov(self, grid):
        fine = grid.refined(2)
        rng = np.random.default_rng(1)
        for _ in range(10):
            r, t = rng.uniform(0.05, 0.6, 2)
            y = rng.uniform(0.3, 3.0)
            lhs = float((fine.weights * K.abm_density(t, fine.nodes, y))
                        @ K.entrance_kernel(r, fine.nodes))
            assert lhs == pytest.approx(K.entrance_kernel(r + t, y), abs=1e-6)


class TestSemigroup:
    def test_identity_at_zero(self, panel):
        f = panel[0]
        assert K.apply_semigroup(0.0, f) is f

    def test_chapman_kolmogorov_composition(self, panel):
        # oracle: nested quadrature at doubled resolution agrees with the
        # one-shot kernel, so composing on the default grid must too
        for f in panel:
            comp = K.apply_semigroup(0.2, K.apply_semigroup(0.3, f))
            whole = K.apply_semigroup(0.5, f)
            assert np.max(np.abs(comp.values - whole.values)) < 1e-5

    def test_positivity_and_contraction(self, grid, panel):
        ones = GridFunction(grid, np.ones(grid.size),
                            fn=lambda x: np.ones_like(np.asarray(x, dtype=float)))
        out = K.apply_semigroup(0.4, ones)
        assert np.all(out.values >= 0.0)
        assert out.sup() <= 1.0 + 1e-12
        for f in panel:
            assert K.apply_semigroup(0.7, f).sup() <= f.sup() + 1e-9

    def test_pointwise_matches_grid_application(self, panel):
        f = panel[2]
        Pf = K.apply_semigroup(0.3, f)
        probe = f.grid.nodes[::101]
        assert np.allclose(K.semigroup_at(0.3, f, probe), Pf(probe), atol=1e-12)

    def test_small_time_route_continuity(self, panel):
        # Gauss-Hermite route and grid quadrature agree where both are valid
        f = panel[0]
        cut = K.small_time_threshold(f.grid)
        for t in (cut / 2, cut / 1.01, cut * 1.01):
            gh = K._semigroup_small_t(t, f.fn, np.array([1.0]))[0]
            row = K.abm_density(t, 1.0, f.grid.nodes) @ (f.grid.weights * f.values)
            assert gh == pytest.approx(row, abs=1e-12)

    def test_semigroup_at_many_matches_scalar(self, panel):
        f = panel[1]
        ts = np.array([0.001, 0.01, 0.2, 0.6])
        xs = np.array([0.7, 1.3, 2.0, 0.5])
        many = K.semigroup_at_many(ts, f, xs)
        each = [K.semigroup_at(t, f, x) for t, x in zip(ts, xs)]
        assert np.allclose(many, each, atol=1e-14)


class TestEntranceFunctional:
    def test_zero_function(self, grid):
        z = GridFunction(grid, np.zeros(grid.size), fn=lambda x: np.zeros_like(np.asarray(x, dtype=float)))
        assert K.entrance_functional(0.3, z) == 0.0

    def test_intertwining_with_semigroup(self, panel):
        for f in panel[:4]:
            lhs = K.entrance_functional(0.2, K.apply_semigroup(0.3, f))
            rhs = K.entrance_functional(0.5, f)
            assert lhs == pytest.approx(rhs, abs=1e-7)

    def test_small_time_concentrates_at_boundary(self, panel):
        bump_far = panel[6]  # supported on [1.8, 4.2]
        assert abs(K.entrance_functional(0.01, bump_far)) < 1e-12

    def test_integrated_functional_closed_form(self, panel):
        # int_0^t kappa_r(f) dr via erfc weight vs direct time quadrature
        f = panel[0]
        t = 0.4
        s, w = TimeQuadrature(t, "sqrt", 64).nodes_weights()
        direct = float(w @ K.entrance_functional_many(s, f))
        assert K.integrated_entrance_functional(t, f) == pytest.approx(direct, abs=1e-9)


class TestHTransform:
    def test_excessive_weight(self):
        assert K.h_weight(0.0) == 0.0
        assert K.h_weight(np.inf if False else 50.0) == pytest.approx(1.0)

    def test_contraction_on_ones(self, grid):
        ones = GridFunction(grid, np.ones(grid.size),
                            fn=lambda x: np.ones_like(np.asarray(x, dtype=float)))
        out = K.h_transform_semigroup(0.4, BoundaryGridFunction(ones, 1.0))
        assert np.max(out.interior.values) <= 1.0 + 1e-9
        assert out.boundary <= 1.0 + 1e-9

    def test_semigroup_composition_with_boundary(self, bpanel):
        # oracle: doubled-resolution quadrature agrees; composition on the
        # default grid must close including the boundary node
        comp = K.h_transform_semigroup(0.2, K.h_transform_semigroup(0.3, bpanel[0]))
        whole = K.h_transform_semigroup(0.5, bpanel[0])
        assert np.max(np.abs(comp.interior.values - whole.interior.values)) < 1e-6
        assert abs(comp.boundary - whole.boundary) < 1e-6

    def test_boundary_is_interior_limit(self, bpanel):
        # oracle: one-sided linear extrapolation of the first interior nodes
        out = K.h_transform_semigroup(0.5, bpanel[0])
        x = out.grid.nodes
        v = out.interior.values
        extrap = v[0] - x[0] * (v[1] - v[0]) / (x[1] - x[0])
        assert out.boundary == pytest.approx(extrap, abs=1e-6)


class TestTruncationBudget:
    def test_widened_grid_changes_nothing(self, grid, panel):
        wide = grid.widened()
        for f in panel[:3]:
            fw = GridFunction.from_callable(wide, f.fn)
            assert K.semigroup_at(0.5, f, 1.0) == pytest.approx(
                K.semigroup_at(0.5, fw, 1.0), abs=1e-6)
            assert K.entrance_functional(0.3, f) == pytest.approx(
                K.entrance_functional(0.3, fw), abs=1e-6)
