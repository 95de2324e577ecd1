import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate, optimize

from harmlab import potentials as pt
from harmlab.geometry import unit_ball_volume
from harmlab.oscillation import BallSampler
from harmlab.harness.suites import load_fixtures

ONE = pt.constant_potential(1.0, 1)
QUAD = pt.quadratic_potential(1)


class TestCriticalRadius:
    @given(st.floats(-100, 100))
    def test_constant_potential(self, x):
        assert pt.critical_radius(ONE, x) == pytest.approx(1.0, rel=1e-10)

    def test_quadratic_at_origin(self):
        assert pt.critical_radius(QUAD, 0.0) == pytest.approx(3 ** 0.25, rel=1e-10)

    def test_quadratic_fine_scan_oracle(self):
        # g(r) = r^2 (x^2 + r^2/3) on a 10^6-point scan, then linear interpolation
        x = 2.0
        r = np.linspace(1e-3, 2.0, 1_000_000)
        g = r * r * (x * x + r * r / 3)
        i = np.flatnonzero(g <= 1)[-1]
        oracle = r[i] + (1 - g[i]) * (r[i + 1] - r[i]) / (g[i + 1] - g[i])
        assert pt.critical_radius(QUAD, x) == pytest.approx(oracle, rel=1e-6)

    def test_quadrature_path_matches_closed_form(self):
        V = pt.from_callable(lambda y: y[:, 0] ** 2, 1, "y^2 (quadrature)")
        assert pt.critical_radius(V, 0.7) == pytest.approx(pt.critical_radius(QUAD, 0.7), rel=1e-5)

    def test_g_is_one_at_rho(self):
        xs = np.linspace(-3, 3, 13)
        rho = pt.critical_radius(QUAD, xs[:, None])
        np.testing.assert_allclose(QUAD.g(xs[:, None], rho), 1.0, rtol=1e-10)

    def test_vectorised_matches_scalar(self):
        xs = np.array([[-1.0], [0.5], [3.0]])
        vec = pt.critical_radius(QUAD, xs)
        assert list(vec) == [pt.critical_radius(QUAD, x) for x in xs]

    def test_out_of_range(self):
        zero = pt.constant_potential(0.0, 1)
        with pytest.raises(pt.RhoOutOfRange) as e:
            pt.critical_radius(zero, 0.0)
        assert e.value.direction.startswith("above")
        with pytest.raises(pt.RhoOutOfRange) as e:
            pt.critical_radius(pt.constant_potential(1e14, 1), 0.0)
        assert e.value.direction.startswith("below")

    @pytest.mark.parametrize("a", [1.0, 2.0])
    @given(lam=st.floats(0.01, 100))
    def test_dilation(self, a, lam):
        V = pt.power_potential(a, 1)
        ref = pt.critical_radius(V, 0.0)
        assert pt.critical_radius(V.scaled(lam), 0.0) == pytest.approx(ref * lam ** (-1 / (2 + a)), rel=1e-9)

    def test_shen_normalisation(self):
        V = pt.constant_potential(1.0, 3).with_normalization(pt.SHEN)
        assert pt.critical_radius(V, [0.0, 0.0, 0.0]) == pytest.approx(unit_ball_volume(3) ** -0.5, rel=1e-10)

    def test_bad_normalisation(self):
        with pytest.raises(ValueError):
            ONE.with_normalization("other")


class TestRhoIdentity:
    def test_constant_n3(self):
        V = pt.constant_potential(1.0, 3)
        shen = pt.check_rho_identity(V.with_normalization(pt.SHEN), [0.0, 0.0, 0.0])
        assert shen.shen_value == pytest.approx(1.0, rel=1e-9) and shen.shen_holds
        avg = pt.check_rho_identity(V, [0.0, 0.0, 0.0])
        assert avg.average_value == pytest.approx(4 * math.pi / 3, rel=1e-9) and avg.average_holds

    def test_quadratic_n1(self):
        rec = pt.check_rho_identity(QUAD, 0.0)
        assert rec.average_value == pytest.approx(2.0, rel=1e-9)

    @pytest.mark.parametrize("V", [pt.constant_potential(1.0, 1), pt.power_potential(1.0, 1), QUAD])
    def test_lattice_shen(self, V):
        S = V.with_normalization(pt.SHEN)
        for x in np.linspace(-2, 2, 9):
            assert pt.check_rho_identity(S, x).shen_holds

    def test_csv(self, tmp_path):
        rho = pt.rho_lattice_csv(QUAD, [[0.0], [1.0]], tmp_path / "rho.csv")
        lines = (tmp_path / "rho.csv").read_text().splitlines()
        assert lines[0] == "x0,rho"
        assert float(lines[1].split(",")[1]) == rho[0]


class TestRhoComparison:
    def test_constant(self):
        xs = np.linspace(-4, 4, 9)
        X, Y = np.meshgrid(xs, xs)
        rep = pt.fit_rho_comparison(ONE, X.ravel(), Y.ravel())
        assert rep.fitted and rep.k0 == 1 and rep.C == 1.0

    def test_diagonal_pairs(self):
        xs = np.linspace(-4, 4, 17)
        rep = pt.fit_rho_comparison(QUAD, xs, xs)
        assert rep.fitted and rep.k0 == 1 and rep.C == 1.0

    def test_quadratic(self):
        xs = np.linspace(-4, 4, 41)
        X, Y = np.meshgrid(xs, xs)
        rep = pt.fit_rho_comparison(QUAD, X.ravel(), Y.ravel())
        assert rep.fitted and rep.k0 <= 4 and rep.C <= 16

    def test_unfitted(self):
        rep = pt.fit_rho_comparison(QUAD, [0.0, 100.0], [100.0, 0.0], k_max=1, constants=(1.0,))
        assert not rep.fitted and rep.worst_pair


class TestScaleGrowth:
    def test_constant(self):
        for r, R in ((0.1, 1.0), (1.0, 7.0)):
            assert pt.check_scale_growth(ONE, 0.3, r, R).raw_ratio == pytest.approx(1.0)

    def test_abs_closed_form(self):
        # r^-1 int_{-r}^{r} |y| dy = r
        rec = pt.check_scale_growth(pt.power_potential(1.0, 1), 0.0, 0.5, 2.0)
        assert rec.lhs == pytest.approx(0.5) and rec.rhs == pytest.approx(2.0)
        assert rec.ratio == pytest.approx(0.25 / 2.0)

    def test_limit(self):
        rec = pt.check_scale_growth(pt.power_potential(1.0, 1), 0.3, 1.0, 1.0 + 1e-9)
        assert rec.ratio == pytest.approx(1.0, rel=1e-6)

    def test_sweep_regression(self):
        sg = pt.scale_growth_sweep(pt.power_potential(1.0, 1), 0.0, 2.0 ** np.arange(-6, 4))
        assert sg == pytest.approx(2 ** -1.5)
        assert sg <= load_fixtures()["potential.scale_growth.|y|"] * (1 + 1e-6)

    def test_order(self):
        with pytest.raises(ValueError):
            pt.check_scale_growth(ONE, 0.0, 2.0, 1.0)


class TestReverseHolder:
    WIN = ([-1.0], [1.0])

    def test_constant(self):
        assert pt.rh_constant(ONE, 2.0, self.WIN, 1.0).estimate == 1.0

    def test_abs_against_quadrature(self):
        def ratio(t):  # ball B(t, 1); the ratio is dilation invariant
            m2 = integrate.quad(lambda y: y * y, t - 1, t + 1)[0] / 2
            m1 = integrate.quad(abs, t - 1, t + 1, points=[0.0] if abs(t) < 1 else None)[0] / 2
            return math.sqrt(m2) / m1

        best = -optimize.minimize_scalar(lambda t: -ratio(t), bounds=(-3, 3), method="bounded").fun
        V = pt.power_potential(1.0, 1)
        ests = pt.rh_refinement(V, 2.0, self.WIN, 1.0)["estimates"]
        assert max(ests) <= best * (1 + 1e-9)
        assert ests[-1] >= 0.99 * best
        quad_est = pt.rh_constant(V, 2.0, self.WIN, 1.0, BallSampler(16, 4), exact=False).estimate
        assert quad_est == pytest.approx(ests[0], rel=1e-2)

    def test_rough_diverges(self):
        rep = pt.rh_refinement(pt.power_potential(-0.9, 1), 2.0, self.WIN, 1.0)
        assert rep["trend"] == "divergent"

    @given(st.floats(0.01, 100))
    def test_scale_invariant(self, lam):
        V = pt.power_potential(1.0, 1)
        s = BallSampler(8, 3)
        a = pt.rh_constant(V, 2.0, self.WIN, 1.0, s).estimate
        b = pt.rh_constant(V.scaled(lam), 2.0, self.WIN, 1.0, s).estimate
        assert b == pytest.approx(a, rel=1e-10)

    def test_vanishing_balls_skipped(self):
        V = pt.from_callable(lambda y: np.where(y[:, 0] > 0.5, 1.0, 0.0), 1)
        est = pt.rh_constant(V, 2.0, ([-1.0], [1.0]), 0.25, BallSampler(8, 2, sublattice=64))
        assert est.skipped > 0 and est.n_balls > 0
        assert est.n_balls + est.skipped == 16
        none = pt.rh_constant(V, 2.0, ([-1.0], [-0.5]), 0.25, BallSampler(8, 2, sublattice=64))
        assert none.n_balls == 0 and math.isnan(none.estimate)

    def test_q_must_exceed_one(self):
        with pytest.raises(ValueError):
            pt.rh_constant(ONE, 1.0, self.WIN, 1.0)
