import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate

from harmlab import geometry as geo
from harmlab import oscillation as osc
from harmlab.discretization import Grid, GridFunction

UNIT = geo.interval(0, 1)
SYM = geo.interval(-1, 1)
SMALL = osc.BallSampler(16, 4)


class TestWeights:
    def test_constructors(self):
        x = np.array([[0.25], [0.5]])
        np.testing.assert_allclose(osc.constant(2.0)(x), 2.0)
        np.testing.assert_allclose(osc.delta_power(UNIT, 2)(x), [0.0625, 0.25])
        np.testing.assert_allclose(osc.center_power([0.0], 1)(x), [0.25, 0.5])
        w = osc.constant(3.0) * osc.center_power([0.0], 1)
        np.testing.assert_allclose(w(x), [0.75, 1.5])
        np.testing.assert_allclose(osc.center_power([0.0], 1).power(2)(x), [0.0625, 0.25])

    def test_constant_must_be_positive(self):
        with pytest.raises(ValueError):
            osc.constant(0.0)

    def test_grid_sampled(self):
        g = Grid.uniform(UNIT, 0.25)
        w = osc.grid_sampled(GridFunction.sample(g, lambda p: 1 + p[:, 0]))
        np.testing.assert_allclose(w(np.array([[0.1], [0.3], [0.99]])), [1.125, 1.375, 1.875])


class TestAp:
    def test_constant_weight_is_one(self):
        for p in (1.5, 2.0, 4.0):
            est = osc.ap_loc_constant(osc.constant(1.0), UNIT, p, 0.5, SMALL)
            assert est.normalized == pytest.approx(1.0, abs=1e-12)
            assert est.literal == pytest.approx(1.0, abs=1e-12)

    def test_p_must_exceed_one(self):
        with pytest.raises(ValueError):
            osc.ap_loc_constant(osc.constant(1.0), UNIT, 1.0, 0.5)

    @pytest.mark.parametrize("alpha", [-2, -1, 1, 2])
    def test_delta_powers_finite_and_stable(self, alpha):
        rep = osc.ap_refinement(osc.delta_power(UNIT, alpha), UNIT, 2.0, 0.5, sampler=SMALL)
        assert np.all(np.isfinite(rep["estimates"]))
        assert rep["drift"] < 0.05
        assert rep["trend"] == "stable"

    def test_quadratic_weight_diverges(self):
        rep = osc.ap_refinement(osc.center_power([0.0], 2), SYM, 2.0, 0.5, sampler=SMALL)
        assert rep["trend"] == "divergent"
        assert rep["estimates"][-1] > 10 * rep["estimates"][0]

    def test_quadratic_weight_oracle(self):
        # balls B(c, r) avoiding 0: both averages in closed form, cross-checked by quad
        c, r = 0.3, 0.2
        avg_w = integrate.quad(lambda x: x * x, c - r, c + r)[0] / (2 * r)
        avg_inv = integrate.quad(lambda x: x ** -2, c - r, c + r)[0] / (2 * r)
        exact = ((c + r) ** 3 - (c - r) ** 3) / 3 / (2 * r) * (1 / (c - r) - 1 / (c + r)) / (2 * r)
        assert avg_w * avg_inv == pytest.approx(exact, rel=1e-10)
        from harmlab.discretization import ball_average
        B = geo.Ball(c, r, geo.euclidean(1))
        w = osc.center_power([0.0], 2)
        approx = ball_average(w, B, 4096) * ball_average(lambda x: w(x) ** -1, B, 4096)
        assert approx == pytest.approx(exact, rel=1e-4)

    @given(st.floats(-2, 2))
    def test_at_least_one(self, alpha):
        est = osc.ap_loc_constant(osc.delta_power(UNIT, alpha), UNIT, 2.0, 0.5, osc.BallSampler(8, 3))
        assert est.normalized >= 1.0 - 1e-12

    def test_monotone_in_beta(self):
        w = osc.delta_power(UNIT, 1.5)
        a = osc.ap_loc_constant(w, UNIT, 3.0, 0.25, SMALL).normalized
        b = osc.ap_loc_constant(w, UNIT, 3.0, 0.5, SMALL).normalized
        assert a <= b


class TestDoubling:
    def test_lebesgue(self):
        assert osc.doubling_constant(None, UNIT, 0.5, SMALL) == pytest.approx(2.0)
        D = geo.unit_cube(2)
        assert osc.doubling_constant(None, D, 0.5, osc.BallSampler(4, 3)) == pytest.approx(4.0)

    def test_parabolic_lebesgue(self):
        D = geo.Cylinder(geo.interval(0, 1), 1.0)
        assert osc.doubling_constant(None, D, 0.5, osc.BallSampler(4, 3)) == pytest.approx(8.0)

    def test_potential_measure(self):
        D = geo.interval(-1, 1)
        dens = lambda x: np.abs(x[:, 0])
        vals = [osc.doubling_constant(dens, D, 0.5, SMALL.refined(l)) for l in (0, 1)]
        assert np.all(np.isfinite(vals))
        assert osc.drift(vals) < 0.05
        # the worst ball for |y| centred at 0: mu(B(0,r)) / mu(B(0,r/2)) = 4
        assert max(vals) <= 4.0 + 1e-9


class TestBMO:
    E1 = geo.euclidean(1)
    WIN = ([-1.0], [1.0])

    def test_constant(self):
        assert osc.bmo_seminorm(lambda x: np.full(len(x), 3.0), self.E1, self.WIN, 1.0, SMALL) == 0.0

    def test_identity(self):
        val = osc.bmo_seminorm(lambda x: x[:, 0], self.E1, self.WIN, 1.0, SMALL)
        assert val == pytest.approx(0.5, rel=1e-3)

    def test_sign(self):
        val = osc.bmo_seminorm(lambda x: np.sign(x[:, 0]), self.E1, self.WIN, 1.0, SMALL)
        assert val >= 0.5

    @given(st.floats(-10, 10), st.floats(-5, 5))
    def test_shift_and_scale(self, c, lam):
        b = lambda x: np.sin(3 * x[:, 0])
        s = osc.BallSampler(8, 3)
        base = osc.bmo_seminorm(b, self.E1, self.WIN, 0.5, s)
        shifted = osc.bmo_seminorm(lambda x: b(x) + c, self.E1, self.WIN, 0.5, s)
        scaled = osc.bmo_seminorm(lambda x: lam * b(x), self.E1, self.WIN, 0.5, s)
        assert shifted == pytest.approx(base, rel=1e-9, abs=1e-12)
        assert scaled == pytest.approx(abs(lam) * base, rel=1e-9, abs=1e-12)


class TestVMO:
    E1 = geo.euclidean(1)
    WIN = ([-1.0], [1.0])
    RADII = [0.001, 0.01, 0.1, 0.5]

    def test_constant(self):
        rep = osc.vmo_modulus(lambda x: np.zeros(len(x)), self.E1, self.WIN, self.RADII, SMALL)
        assert np.all(rep.eta == 0) and rep.vmo_consistent

    def test_continuous(self):
        rep = osc.vmo_modulus(lambda x: np.sin(x[:, 0]), self.E1, self.WIN, self.RADII, SMALL)
        assert np.all(np.diff(rep.eta) >= 0)
        assert rep.vmo_consistent

    def test_sign(self):
        rep = osc.vmo_modulus(lambda x: np.sign(x[:, 0]), self.E1, self.WIN, self.RADII, osc.BallSampler(16, 4))
        assert rep.eta[0] > 0.4
        assert not rep.vmo_consistent


def test_trend_and_drift():
    assert osc.classify_trend([1, 2, 11]) == "divergent"
    assert osc.classify_trend([1, np.inf]) == "divergent"
    assert osc.classify_trend([1, 1.01, 1.02]) == "stable"
    assert osc.drift([1.0, 1.1, 1.1]) == pytest.approx(0.1)
    assert osc.drift([1.0, np.inf]) == np.inf
