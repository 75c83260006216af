import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from skewsim.grids import GridFunction, SpatialGrid, TimeQuadrature


class TestSpatialGrid:
    def test_trapezoid_weights_sum_to_length(self, grid):
        assert abs(grid.weights.sum() - (grid.upper - grid.lower)) < 1e-12

    def test_nodes_increasing_weights_positive(self, grid):
        assert np.all(np.diff(grid.nodes) > 0)
        assert np.all(grid.weights > 0)

    def test_rejects_bad_bounds(self):
        with pytest.raises(ValueError):
            SpatialGrid.uniform(lower=-1.0)
        with pytest.raises(ValueError):
            SpatialGrid.uniform(lower=2.0, upper=1.0)

    def test_rejects_decreasing_nodes(self):
        nodes = np.array([0.1, 0.3, 0.2])
        with pytest.raises(ValueError):
            SpatialGrid(0.1, 0.3, nodes, np.ones(3))

    def test_integrate_linear_exact(self, grid):
        # trapezoid is exact on affine integrands
        vals = 3.0 * grid.nodes + 1.0
        exact = 1.5 * (grid.upper**2 - grid.lower**2) + (grid.upper - grid.lower)
        assert abs(grid.integrate(vals) - exact) < 1e-9

    def test_refined_and_widened(self, grid):
        fine = grid.refined(2)
        assert fine.size == 2 * (grid.size - 1) + 1
        wide = grid.widened()
        assert wide.lower == grid.lower / 2
        assert wide.upper == grid.upper * 2


class TestGridFunction:
    def test_from_callable_and_eval(self, grid):
        f = GridFunction.from_callable(grid, lambda x: np.asarray(x) ** 2)
        assert f(2.0) == pytest.approx(4.0)
        assert np.allclose(f.values, grid.nodes**2)

    def test_interp_vanishes_at_zero_without_callable(self, grid):
        f = GridFunction(grid, np.ones(grid.size))
        # extension convention: linear to f(0) = 0 below the grid
        assert float(f(grid.lower / 2)) < 1.0

    def test_scaled_keeps_callable(self, grid, panel):
        g = panel[0].scaled(-2.0)
        assert g.fn is not None
        assert float(g(1.0)) == pytest.approx(-2.0 * float(panel[0](1.0)))

    def test_rejects_nonfinite(self, grid):
        vals = np.ones(grid.size)
        vals[3] = np.nan
        with pytest.raises(ValueError):
            GridFunction(grid, vals)


class TestTimeQuadrature:
    def test_validation(self):
        with pytest.raises(ValueError):
            TimeQuadrature(-1.0)
        with pytest.raises(ValueError):
            TimeQuadrature(1.0, panels=4)
        with pytest.raises(ValueError):
            TimeQuadrature(1.0, substitution="cubic")

    def test_weights_sum_to_horizon(self):
        for sub in ("sqrt", "uniform"):
            s, w = TimeQuadrature(0.7, sub).nodes_weights()
            assert np.all((s > 0) & (s < 0.7))
            assert abs(w.sum() - 0.7) < 1e-12

    def test_smooth_integrand(self):
        tq = TimeQuadrature(2.0, "uniform", 16)
        assert tq.integrate(np.cos) == pytest.approx(np.sin(2.0), abs=1e-12)

    def test_sqrt_substitution_handles_inverse_sqrt(self):
        # int_0^1 s^{-1/2} ds = 2; the uniform rule would need thousands of panels
        tq = TimeQuadrature(1.0, "sqrt", 8)
        assert tq.integrate(lambda s: 1.0 / np.sqrt(s)) == pytest.approx(2.0, abs=1e-12)

    @given(st.floats(0.05, 5.0), st.integers(8, 40))
    @settings(max_examples=20, deadline=None)
    def test_constant_integrand_any_horizon(self, t, panels):
        tq = TimeQuadrature(t, "sqrt", panels)
        assert tq.integrate(lambda s: np.ones_like(s)) == pytest.approx(t, rel=1e-12)
