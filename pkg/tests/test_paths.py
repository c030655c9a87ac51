import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from aklab.functions import constant, indicator, piecewise_linear, polynomial, tanh
from aklab.paths import (
    Grid,
    brownian_matrix,
    cumulative_trapezoid,
    make_grid,
    sample_brownian,
    shift_offsets,
    shift_path,
    stochastic_exponential,
    translate,
    wiener_integral,
)

SEED = 20240601
dyadic_times = st.sampled_from([0.0, 0.125, 0.25, 0.375, 0.5, 0.625, 0.75, 0.875, 1.0])


class TestGrid:
    def test_uniform_nodes(self):
        g = make_grid(4)
        assert np.allclose(g.nodes, [0, 0.25, 0.5, 0.75, 1.0])
        assert g.mesh == 0.25 and g.is_uniform

    @pytest.mark.parametrize("n", [0, -3, 2.5])
    def test_bad_n(self, n):
        with pytest.raises(ValueError):
            make_grid(n)

    def test_bad_horizon(self):
        with pytest.raises(ValueError):
            make_grid(4, t_end=1.5)

    def test_index_of_rejects_off_grid_time(self):
        with pytest.raises(ValueError):
            make_grid(4).index_of(0.3)

    def test_refine_contains_coarse(self):
        g = make_grid(8)
        fine = g.refine(2)
        assert np.array_equal(fine.nodes[fine.coarsen_index(g)], g.nodes)

    def test_non_monotone_nodes_rejected(self):
        with pytest.raises(ValueError):
            Grid(np.array([0.0, 0.5, 0.4, 1.0]))


class TestSampling:
    def test_starts_at_zero(self):
        assert sample_brownian(make_grid(16), SEED, 3).values[0] == 0.0

    def test_terminal_variance(self):
        w1 = brownian_matrix(make_grid(1), SEED, 100_000)[:, -1]
        assert 0.97 <= w1.var() <= 1.03

    def test_increment_correlation(self):
        w = brownian_matrix(make_grid(2), SEED, 100_000)
        inc = np.diff(w, axis=1)
        assert abs(np.corrcoef(inc[:, 0], inc[:, 1])[0, 1]) <= 0.01

    def test_reproducible(self):
        a = sample_brownian(make_grid(32), SEED, 5).values
        b = sample_brownian(make_grid(32), SEED, 5).values
        assert np.array_equal(a, b)

    def test_row_matches_single_path(self):
        grid = make_grid(24)
        w = brownian_matrix(grid, SEED, 6, start=10)
        assert np.array_equal(w[3], sample_brownian(grid, SEED, 13).values)

    @pytest.mark.parametrize("coarse,fine", [(1, 64), (4, 32), (3, 48)])
    def test_refinement_keeps_shared_nodes(self, coarse, fine):
        gc, gf = make_grid(coarse), make_grid(fine)
        wc = brownian_matrix(gc, SEED, 20)
        wf = brownian_matrix(gf, SEED, 20)
        assert np.array_equal(wf[:, gf.coarsen_index(gc)], wc)

    def test_bridge_midpoint_law(self):
        w = brownian_matrix(make_grid(2), SEED, 100_000)
        resid = w[:, 1] - 0.5 * w[:, 2]
        assert abs(resid.var() - 0.25) < 0.01
        assert abs(np.corrcoef(resid, w[:, 2])[0, 1]) < 0.01

    def test_non_uniform_grid(self):
        grid = Grid(np.array([0.0, 0.1, 0.5, 1.0]))
        w = brownian_matrix(grid, SEED, 50_000)
        assert abs(w[:, 2].var() - 0.5) < 0.03


class TestWienerIntegral:
    def test_indicator_gives_midpoint_value(self):
        path = sample_brownian(make_grid(64), SEED, 0)
        assert wiener_integral(indicator(0.0, 0.5), path) == pytest.approx(path.at(0.5), abs=1e-14)

    def test_constant_gives_terminal_value(self):
        path = sample_brownian(make_grid(64), SEED, 1)
        assert wiener_integral(constant(2.0), path) == pytest.approx(2 * path.at(1.0), abs=1e-14)

    @settings(max_examples=30, deadline=None)
    @given(a=st.floats(-3, 3), b=st.floats(-3, 3), p=st.integers(0, 100))
    def test_linearity(self, a, b, p):
        path = sample_brownian(make_grid(32), SEED, p)
        f, g = tanh(1.0, 2.0), polynomial([0.5, -1.0])
        lhs = wiener_integral(a * f + b * g, path)
        rhs = a * wiener_integral(f, path) + b * wiener_integral(g, path)
        assert lhs == pytest.approx(rhs, abs=1e-12)

    def test_variance_matches_isometry(self):
        grid = make_grid(64)
        w = brownian_matrix(grid, SEED, 50_000)
        g = piecewise_linear([(0.0, 1.0), (1.0, 2.0)])
        vals = (g(grid.nodes[:-1]) * np.diff(w, axis=1)).sum(axis=1)
        exact = 7.0 / 3.0
        assert abs(vals.var() - exact) < 5 * exact * np.sqrt(2 / vals.size)


class TestShift:
    sigma = piecewise_linear([(0.0, 0.5), (1.0, 1.0)])

    def test_zero_sigma_is_identity(self):
        path = sample_brownian(make_grid(16), SEED, 0)
        assert np.array_equal(shift_path(path, constant(0.0), 0.25, 0.75).values, path.values)

    def test_empty_interval_is_identity(self):
        path = sample_brownian(make_grid(16), SEED, 0)
        assert np.array_equal(shift_path(path, self.sigma, 0.5, 0.5).values, path.values)

    def test_offset_profile(self):
        grid = make_grid(4)
        off = shift_offsets(grid, constant(1.0), 0.25, 0.75)
        assert np.allclose(off, [0, 0, 0.25, 0.5, 0.5])

    @settings(max_examples=40, deadline=None)
    @given(times=st.lists(dyadic_times, min_size=3, max_size=3))
    def test_composition(self, times):
        u, v, r = sorted(times)
        grid = make_grid(8)
        both = shift_offsets(grid, self.sigma, u, v) + shift_offsets(grid, self.sigma, v, r)
        assert np.allclose(both, shift_offsets(grid, self.sigma, u, r), atol=1e-14)

    def test_reversed_interval_raises(self):
        with pytest.raises(ValueError):
            shift_offsets(make_grid(4), self.sigma, 0.75, 0.25)

    def test_translate_requires_zero_start(self):
        with pytest.raises(ValueError):
            translate(np.zeros(3), np.ones(3))


class TestStochasticExponential:
    def test_unit_sigma_single_step(self):
        path = sample_brownian(make_grid(1), SEED, 2)
        assert stochastic_exponential(path, constant(1.0), 0.0, 1.0) == pytest.approx(np.exp(path.at(1.0) - 0.5))

    @settings(max_examples=40, deadline=None)
    @given(times=st.lists(dyadic_times, min_size=3, max_size=3), p=st.integers(0, 50))
    def test_multiplicative(self, times, p):
        u, v, r = sorted(times)
        path = sample_brownian(make_grid(8), SEED, p)
        sig = piecewise_linear([(0.0, 0.5), (1.0, 1.0)])
        lhs = stochastic_exponential(path, sig, u, v) * stochastic_exponential(path, sig, v, r)
        rhs = stochastic_exponential(path, sig, u, r)
        assert lhs == pytest.approx(rhs, rel=1e-12)

    def test_unit_mean(self):
        grid = make_grid(32)
        w = brownian_matrix(grid, SEED, 50_000)
        sig = piecewise_linear([(0.0, 0.5), (1.0, 1.0)])
        s = sig(grid.nodes)
        log_e = (s[:-1] * np.diff(w, axis=1)).sum(axis=1) - 0.5 * cumulative_trapezoid(s**2, grid)[-1]
        vals = np.exp(log_e)
        assert abs(vals.mean() - 1) < 4 * vals.std() / np.sqrt(vals.size) + 2e-3
