import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate

from harmlab import geometry as geo
from harmlab.discretization import (
    Grid, GridFunction, ball_integral, fd_derivative, sobolev_norm, sobolev_terms,
    spatial_multi_indices, time_index, weighted_lp_norm,
)

UNIT = geo.interval(0, 1)


def grid1(m=200):
    return Grid.uniform(UNIT, 1.0 / m)


class TestGrid:
    def test_parabolic_spacing(self):
        D = geo.Cylinder(geo.interval(0, 1), 1.0)
        g = Grid.uniform(D, 0.125)
        assert tuple(g.spacing) == (0.125, 0.125 ** 2)
        assert g.shape == (8, 64)
        assert g.refine().shape == (16, 256)

    def test_window_must_tile(self):
        with pytest.raises(ValueError):
            Grid.uniform(UNIT, 0.3)

    def test_unbounded_needs_window(self):
        half = geo.Box(geo.euclidean(1), (0.0,), (math.inf,))
        with pytest.raises(ValueError):
            Grid.uniform(half, 0.1)
        assert Grid.uniform(half, 0.1, ([0.0], [1.0])).shape == (10,)

    def test_outside_nodes_are_nan(self):
        D = geo.BallRegion(geo.euclidean(2), (0.0, 0.0), 1.0)
        g = Grid.uniform(D, 0.1)
        u = GridFunction.constant(g, 1.0)
        assert np.isnan(u.values[0, 0])
        assert u.valid.sum() == g.mask.sum()

    def test_csv_round_trip(self, tmp_path):
        g = Grid.uniform(geo.unit_cube(2), 0.25)
        u = GridFunction.sample(g, lambda p: p[:, 0] * 3 + p[:, 1])
        u.to_csv(tmp_path / "u.csv")
        v = GridFunction.from_csv(tmp_path / "u.csv", g)
        np.testing.assert_array_equal(u.values, v.values)

    def test_infinite_values_rejected(self):
        g = grid1(10)
        with pytest.raises(ValueError):
            GridFunction(g, np.full(10, np.inf))


class TestDerivatives:
    def test_quadratic_exact(self):
        u = GridFunction.sample(grid1(), lambda p: p[:, 0] ** 2)
        d2 = fd_derivative(u, (2,)).values
        np.testing.assert_allclose(d2[1:-1], 2.0, rtol=1e-8)
        assert np.isnan(d2[0]) and np.isnan(d2[-1])

    def test_sine_second_order(self):
        errs = []
        for m in (20, 40, 80):
            g = Grid.uniform(geo.interval(0, 2), 2.0 / m)
            u = GridFunction.sample(g, lambda p: np.sin(p[:, 0]))
            du = fd_derivative(u, (1,)).values
            x = g.points[..., 0]
            errs.append(np.nanmax(np.abs(du - np.cos(x))))
        assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.05)
        assert errs[1] / errs[2] == pytest.approx(4.0, rel=0.05)

    @given(st.floats(-10, 10), st.sampled_from([(1, 0), (0, 1), (2, 0), (1, 1), (0, 2)]))
    def test_constant_has_zero_derivatives(self, c, gamma):
        g = Grid.uniform(geo.unit_cube(2), 0.1)
        d = fd_derivative(GridFunction.constant(g, c), gamma).values
        assert np.nanmax(np.abs(d)) <= 1e-9 * max(1.0, abs(c))

    def test_mixed_derivative(self):
        g = Grid.uniform(geo.unit_cube(2), 0.05)
        u = GridFunction.sample(g, lambda p: p[:, 0] * p[:, 1])
        np.testing.assert_allclose(fd_derivative(u, (1, 1)).values[1:-1, 1:-1], 1.0, rtol=1e-9)

    def test_order_limit(self):
        with pytest.raises(ValueError):
            fd_derivative(GridFunction.constant(grid1(10), 1.0), (3,))
        with pytest.raises(ValueError):
            fd_derivative(GridFunction.constant(grid1(10), 1.0), (1, 0))

    def test_multi_indices(self):
        assert spatial_multi_indices(geo.euclidean(3), 2) == [
            (2, 0, 0), (1, 1, 0), (1, 0, 1), (0, 2, 0), (0, 1, 1), (0, 0, 2)]
        assert spatial_multi_indices(geo.parabolic(1), 1) == [(1, 0)]
        assert time_index(geo.parabolic(2)) == (0, 0, 1)
        with pytest.raises(ValueError):
            time_index(geo.euclidean(2))


class TestBallIntegral:
    def test_disc_area(self):
        B = geo.Ball((0.3, -0.2), 0.7, geo.euclidean(2))
        assert ball_integral(lambda p: np.ones(len(p)), B) == pytest.approx(math.pi * 0.49, rel=0.01)

    def test_odd_symmetry(self):
        B = geo.Ball(0.0, 0.8, geo.euclidean(1))
        assert abs(ball_integral(lambda p: p[:, 0], B)) < 1e-14

    def test_quadratic(self):
        B = geo.Ball(0.0, 1.0, geo.euclidean(1))
        assert ball_integral(lambda p: p[:, 0] ** 2, B) == pytest.approx(2 / 3, rel=1e-4)

    def test_refinement_converges(self):
        B = geo.Ball((0.0, 0.0, 0.0), 1.0, geo.euclidean(3))
        f = lambda p: np.sum(p * p, axis=1)
        exact = 4 * math.pi / 5
        e32 = abs(ball_integral(f, B, 32) - exact)
        e64 = abs(ball_integral(f, B, 64) - exact)
        assert e64 < e32 < 0.02 * exact

    def test_parabolic_ball_volume(self):
        B = geo.Ball((0.0, 0.0), 0.5, geo.parabolic(1))
        assert ball_integral(lambda p: np.ones(len(p)), B) == pytest.approx(B.volume)

    def test_coarse_sublattice_rejected(self):
        with pytest.raises(ValueError):
            ball_integral(lambda p: p[:, 0], geo.Ball(0.0, 1.0, geo.euclidean(1)), m=8)


class TestNorms:
    def test_unit(self):
        assert weighted_lp_norm(GridFunction.constant(grid1(), 1.0), None, 2) == pytest.approx(1.0)

    def test_delta_weight(self):
        g = grid1(1000)
        u = GridFunction.constant(g, 1.0)
        assert weighted_lp_norm(u, g.delta, 1) == pytest.approx(0.25, rel=1e-4)

    def test_power_weight(self):
        g = grid1(1000)
        u = GridFunction.sample(g, lambda p: p[:, 0])
        val = weighted_lp_norm(u, lambda p: p[:, 0] ** 2, 2)
        assert val == pytest.approx(math.sqrt(0.2), rel=1e-4)

    def test_nonpositive_weight(self):
        u = GridFunction.constant(grid1(10), 1.0)
        with pytest.raises(ValueError):
            weighted_lp_norm(u, lambda p: p[:, 0] - 0.5, 2)
        with pytest.raises(ValueError):
            weighted_lp_norm(u, None, math.inf)

    @given(st.floats(-5, 5).filter(lambda v: v == 0 or abs(v) > 1e-6), st.floats(1.0, 4.0))
    def test_homogeneity(self, lam, p):
        g = Grid.uniform(geo.unit_cube(2), 1 / 16)
        u = GridFunction.sample(g, lambda q: np.sin(3 * q[:, 0]) * q[:, 1])
        w = lambda q: 1 + q[:, 0]
        for norm in (lambda v: weighted_lp_norm(v, w, p), lambda v: sobolev_norm(v, w, p)):
            assert norm(u * lam) == pytest.approx(abs(lam) * norm(u), rel=1e-10, abs=1e-300)

    @given(st.floats(0.05, 0.5), st.floats(0.05, 0.5))
    def test_monotone_in_region(self, r1, r2):
        r1, r2 = sorted((r1, r2))
        g = Grid.uniform(geo.unit_cube(2), 1 / 32)
        u = GridFunction.sample(g, lambda q: np.cos(5 * q[:, 0]) + q[:, 1])
        E2 = geo.euclidean(2)
        small = geo.Ball((0.5, 0.5), r1, E2)
        big = geo.Ball((0.5, 0.5), r2, E2)
        assert weighted_lp_norm(u, None, 2, small) <= weighted_lp_norm(u, None, 2, big)
        assert sobolev_norm(u, None, 2, small) <= sobolev_norm(u, None, 2, big)

    def test_sobolev_zero_and_constant(self):
        g = Grid.uniform(geo.unit_cube(2), 1 / 16)
        assert sobolev_norm(GridFunction.constant(g, 0.0)) == 0.0
        assert sobolev_norm(GridFunction.constant(g, 3.0), None, 3) == pytest.approx(3.0)

    def test_sobolev_oracle(self):
        # x(1-x) on (0,1): three integrals evaluated by adaptive quadrature
        dl = lambda x: min(x, 1 - x)
        parts = [lambda x: (x * (1 - x)) ** 2, lambda x: (dl(x) * (1 - 2 * x)) ** 2,
                 lambda x: (dl(x) ** 2 * 2) ** 2]
        exact = sum(math.sqrt(integrate.quad(f, 0, 1, points=[0.5])[0]) for f in parts)
        u = GridFunction.sample(grid1(2000), lambda p: p[:, 0] * (1 - p[:, 0]))
        assert sobolev_norm(u, None, 2) == pytest.approx(exact, rel=1e-3)

    def test_sobolev_refinement_stable(self):
        D = geo.unit_cube(2)
        vals = []
        for m in (16, 32, 64):
            u = GridFunction.sample(Grid.uniform(D, 1 / m), lambda q: np.sin(np.pi * q[:, 0]) * q[:, 1])
            vals.append(sobolev_norm(u, None, 2))
        assert abs(vals[2] - vals[1]) / vals[2] < 0.02

    def test_parabolic_time_term(self):
        D = geo.Cylinder(geo.interval(0, 1), 1.0)
        u = GridFunction.sample(Grid.uniform(D, 1 / 16), lambda q: q[:, 1])
        terms = sobolev_terms(u)
        assert "t" in terms and terms["t"] > 0
        assert terms[(1, 0)] == 0.0
