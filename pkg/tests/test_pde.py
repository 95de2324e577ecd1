import math

import numpy as np
import pytest
import sympy as sp
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate

from harmlab import geometry as geo
from harmlab import pde
from harmlab.discretization import Grid, GridFunction, fd_derivative
from harmlab.oscillation import center_power
from harmlab.potentials import constant_potential

E2 = geo.euclidean(2)
P1 = geo.parabolic(1)
CYL = geo.Cylinder(geo.interval(0, 1), 1.0)


def interior(a, k=1):
    sl = tuple(slice(k, -k) for _ in range(a.ndim))
    return a[sl]


class TestCoefficients:
    def test_symmetry_enforced(self):
        bad = pde.CoefficientField("bad", 2, lambda x: np.broadcast_to([[1.0, 1.0], [0.0, 1.0]], (len(x), 2, 2)))
        with pytest.raises(ValueError):
            bad(np.zeros((1, 2)))

    def test_ellipticity_examples(self):
        pts = np.random.default_rng(0).uniform(-3, 3, (200, 2))
        rec = pde.ellipticity_check(pde.identity(2), pts)
        assert rec.min == rec.max == 1.0 and rec.ok
        rec = pde.ellipticity_check(pde.constant_matrix(np.diag([2.0, 0.5])), pts)
        assert rec.min == 0.5 and rec.max == 2.0 and rec.ok
        a = pde.diagonal([lambda x: 2 + np.sin(x[:, 0])], C_ell=3.0)
        rec = pde.ellipticity_check(a, np.linspace(-np.pi, np.pi, 4001)[:, None])
        assert rec.min == pytest.approx(1.0, abs=1e-6) and rec.max == pytest.approx(3.0, abs=1e-6)
        assert rec.ok

    def test_ellipticity_directions(self):
        A = pde.constant_matrix([[2.0, 1.0], [1.0, 2.0]])
        rec = pde.ellipticity_check(A, np.zeros((1, 2)), directions=[[1, 0], [1, 1], [1, -1]])
        assert (rec.min, rec.max) == (pytest.approx(1.0), pytest.approx(3.0))

    def test_degenerate_fails(self):
        A = pde.constant_matrix(np.diag([1.0, 0.0]))
        assert not pde.ellipticity_check(A, np.zeros((1, 2))).ok


class TestManufactured:
    def test_derivatives_exact_vs_fd(self):
        u = pde.polynomial("sin(x0) * cos(2*x1)", E2)
        errs = []
        for m in (16, 32):
            g = Grid.uniform(geo.unit_cube(2), 1 / m)
            U = u.sample(g)
            fd = fd_derivative(U, (1, 1)).values
            ex = u.derivative((1, 1))(g.points.reshape(-1, 2)).reshape(g.shape)
            errs.append(np.nanmax(np.abs(fd - ex)))
        assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.1)

    def test_bump_support(self):
        b = pde.bump(E2, (0.1, 0.2), 0.3)
        assert b([0.1, 0.2])[0] == 1.0
        assert b([0.41, 0.2])[0] == 0.0
        assert b.support_within(geo.Ball((0.0, 0.2), 0.41, E2))
        assert not b.support_within(geo.Ball((0.0, 0.2), 0.39, E2))
        g = Grid.uniform(geo.unit_cube(2), 1 / 32)
        assert b.support_violations(g) == 0

    def test_parabolic_bump_support(self):
        b = pde.bump(P1, (0.5, 0.5), 0.2)
        pts = np.random.default_rng(1).uniform([0.2, 0.4], [0.8, 0.6], (20_000, 2))
        outside = P1.distance(pts, [0.5, 0.5]) >= 0.2
        assert np.all(b(pts[outside]) == 0)
        g = Grid.uniform(CYL, 1 / 64)
        assert b.support_violations(g) == 0

    def test_scaled(self):
        b = pde.bump(E2, (0.0, 0.0), 0.5)
        x = np.array([[0.1, 0.2]])
        assert b.scaled(3.0)(x)[0] == pytest.approx(3 * b(x)[0])

    def test_random_bumps_inside(self):
        D = geo.unit_cube(2)
        for b in pde.random_bumps(E2, D, 20, seed=3):
            c = np.asarray(b.support.c)
            assert D.raw_distance(c[None])[0] > b.support.radius


class TestAssembly:
    def test_laplacian_of_half_square(self):
        g = Grid.uniform(geo.unit_cube(3), 1 / 8)
        U = GridFunction.sample(g, lambda p: 0.5 * np.sum(p * p, axis=1))
        A = pde.assemble_elliptic(pde.identity(3), U).values
        np.testing.assert_allclose(interior(A), -3.0, rtol=1e-9)

    def test_linear_vanishes(self):
        g = Grid.uniform(geo.unit_cube(2), 1 / 16)
        U = GridFunction.sample(g, lambda p: 3 * p[:, 0] - 2 * p[:, 1] + 1)
        A = pde.assemble_elliptic(pde.constant_matrix([[2.0, 0.3], [0.3, 1.0]]), U).values
        assert np.nanmax(np.abs(A)) < 1e-9

    def test_variable_coefficient(self):
        g = Grid.uniform(geo.unit_cube(2), 1 / 16)
        a = pde.diagonal([lambda x: 2 + np.sin(x[:, 0]), lambda x: np.ones(len(x))])
        U = GridFunction.sample(g, lambda p: p[:, 0] ** 2)
        A = pde.assemble_elliptic(a, U).values
        x = g.points[..., 0]
        np.testing.assert_allclose(interior(A), interior(-2 * (2 + np.sin(x))), rtol=1e-9)

    def test_parabolic_examples(self):
        g = Grid.uniform(CYL, 1 / 16)
        A = pde.assemble_parabolic(pde.identity(1), GridFunction.sample(g, lambda p: p[:, 1])).values
        np.testing.assert_allclose(interior(A), 1.0, rtol=1e-9)
        A = pde.assemble_parabolic(pde.identity(1), GridFunction.sample(g, lambda p: p[:, 0] ** 2)).values
        np.testing.assert_allclose(interior(A), -2.0, rtol=1e-9)
        with pytest.raises(ValueError):
            pde.assemble_parabolic(pde.identity(2), GridFunction.constant(Grid.uniform(geo.unit_cube(2), 0.25), 1.0))

    def test_heat_solution_second_order(self):
        errs = []
        for m in (16, 32, 64):
            g = Grid.uniform(CYL, 1 / m)
            U = GridFunction.sample(g, lambda p: np.exp(-p[:, 1]) * np.sin(p[:, 0]))
            errs.append(np.nanmax(np.abs(pde.assemble_parabolic(pde.identity(1), U).values)))
        assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.1)
        assert errs[1] / errs[2] == pytest.approx(4.0, rel=0.1)

    @given(st.lists(st.floats(-3, 3), min_size=6, max_size=6),
           st.floats(0.5, 3), st.floats(0.5, 3), st.floats(-0.4, 0.4))
    def test_quadratic_exactness(self, c, a11, a22, a12):
        A = np.array([[a11, a12], [a12, a22]])
        g = Grid.uniform(geo.unit_cube(2), 1 / 8)
        U = GridFunction.sample(g, lambda p: c[0] + c[1] * p[:, 0] + c[2] * p[:, 1] + c[3] * p[:, 0] ** 2
                                + c[4] * p[:, 0] * p[:, 1] + c[5] * p[:, 1] ** 2)
        exact = -(2 * c[3] * a11 + 2 * c[5] * a22 + 2 * a12 * c[4])
        got = interior(pde.assemble_elliptic(pde.constant_matrix(A), U).values)
        np.testing.assert_allclose(got, exact, atol=1e-8 * (1 + abs(exact)) + 1e-9)

    @given(st.integers(0, 10_000), st.floats(-5, 5))
    def test_linearity(self, seed, lam):
        rng = np.random.default_rng(seed)
        g = Grid.uniform(CYL, 1 / 8)
        u, v = (GridFunction(g, rng.normal(size=g.shape)) for _ in range(2))
        V = constant_potential(2.0, 1)
        L = lambda w: pde.assemble_L(pde.identity(1), V, w).values
        np.testing.assert_allclose(L(u * lam + v), lam * L(u) + L(v), rtol=1e-9, atol=1e-6)

    def test_potential_uses_spatial_part(self):
        g = Grid.uniform(CYL, 1 / 8)
        vals = pde.potential_values(lambda y: y[:, 0] + 10, g)
        np.testing.assert_allclose(vals, g.points[..., 0] + 10)


def _xx_oracle():
    dl = lambda x: min(x, 1 - x)
    n_u = math.sqrt(integrate.quad(lambda x: (x * (1 - x)) ** 2, 0, 1)[0])
    n_d = math.sqrt(integrate.quad(lambda x: (dl(x) * (1 - 2 * x)) ** 2, 0, 1, points=[0.5])[0])
    n_d2 = math.sqrt(integrate.quad(lambda x: (2 * dl(x) ** 2) ** 2, 0, 1, points=[0.5])[0])
    return max(n_d / (n_u / e + e * n_d2) for e in pde.EPS_LADDER)


class TestInterpolation:
    def test_constant_zero(self):
        g = Grid.uniform(geo.unit_cube(2), 1 / 16)
        rep = pde.interpolation_check(GridFunction.constant(g, 2.0))
        assert rep.ratio == 0.0 and not rep.skipped

    def test_zero_skipped(self):
        g = Grid.uniform(geo.unit_cube(2), 1 / 16)
        rep = pde.interpolation_check(GridFunction.constant(g, 0.0))
        assert rep.skipped and math.isnan(rep.ratio)

    def test_quadratic_oracle(self):
        oracle = _xx_oracle()
        vals = []
        for m in (256, 1024):
            g = Grid.uniform(geo.interval(0, 1), 1 / m)
            vals.append(pde.interpolation_check(GridFunction.sample(g, lambda p: p[:, 0] * (1 - p[:, 0]))).ratio)
        assert vals[-1] == pytest.approx(oracle, rel=1e-3)
        assert abs(vals[1] - vals[0]) / vals[1] < 0.01

    def test_random_bumps_one_constant(self):
        D = geo.unit_cube(2)
        g = Grid.uniform(D, 1 / 32)
        us = [b.sample(g) for b in pde.random_bumps(E2, D, 20, seed=11)]
        fam = pde.interpolation_family(us, g.delta, 2.0)
        assert np.isfinite(fam["sup"]) and fam["sup"] > 0
        assert all(r.ratio <= fam["sup"] for r in fam["reports"])

    @given(st.floats(0.01, 100))
    def test_scale_invariant(self, lam):
        g = Grid.uniform(geo.unit_cube(2), 1 / 16)
        U = GridFunction.sample(g, lambda p: np.sin(3 * p[:, 0]) * p[:, 1])
        a = pde.interpolation_check(U).ratio
        assert pde.interpolation_check(U * lam).ratio == pytest.approx(a, rel=1e-10)


BIG2 = geo.Box(E2, (-8.0, -8.0), (8.0, 8.0))


class TestLocalEstimate:
    def grid(self, m=64):
        return Grid.uniform(BIG2, 0.8 / m, ((-0.4, -0.4), (0.4, 0.4)))

    def test_zero_potential(self):
        u = pde.bump(E2, (0.0, 0.0), 0.3)
        rep = pde.local_estimate_check(u, self.grid(), pde.identity(2), None, B0=geo.Ball((0, 0), 0.35, E2))
        assert rep.terms["Vu/Lu"] == 0.0 and not rep.skipped

    def test_hypotheses_reported(self):
        u = pde.bump(E2, (0.0, 0.0), 0.3)
        g = self.grid()
        rep = pde.local_estimate_check(u, g, pde.identity(2), None, B0=geo.Ball((0, 0), 0.2, E2))
        assert rep.skipped and "supp" in rep.reason
        rep = pde.local_estimate_check(u, g, pde.identity(2), None, p=3.0, q=2.0, B0=geo.Ball((0, 0), 0.35, E2))
        assert rep.skipped and "exceeds" in rep.reason
        small = Grid.uniform(geo.unit_cube(2), 1 / 32)
        rep = pde.local_estimate_check(pde.bump(E2, (0.5, 0.5), 0.1), small, pde.identity(2), None,
                                       B0=geo.Ball((0.5, 0.5), 0.1, E2))
        assert rep.skipped and "10 B0" in rep.reason

    def test_radial_oracle(self):
        r = 0.3
        u = pde.bump(E2, (0.0, 0.0), r)
        x0, x1 = u.symbols
        e = (1 - (x0 ** 2 + x1 ** 2) / r ** 2) ** 4
        d = {k: sp.lambdify((x0, x1), sp.diff(e, *v)) for k, v in
             {"xx": (x0, 2), "xy": (x0, x1), "yy": (x1, 2)}.items()}

        def l2(f):
            return math.sqrt(integrate.dblquad(lambda s, t: f(s * math.cos(t), s * math.sin(t)) ** 2 * s,
                                               0, 2 * math.pi, 0, r)[0])

        lap = l2(lambda a, b: d["xx"](a, b) + d["yy"](a, b))
        # spatial_multi_indices counts (1,1) once
        oracle = (l2(d["xx"]) + l2(d["xy"]) + l2(d["yy"])) / lap
        rep = pde.local_estimate_check(u, self.grid(160), pde.identity(2), None, B0=geo.Ball((0, 0), 0.35, E2))
        assert rep.terms["D2u/Au"] == pytest.approx(oracle, rel=0.01)

    @given(st.floats(1e-3, 1e3))
    def test_scale_invariance(self, lam):
        u = pde.bump(E2, (0.0, 0.0), 0.3)
        g = self.grid(32)
        B0 = geo.Ball((0, 0), 0.35, E2)
        V = constant_potential(1.0, 2)
        a = pde.local_estimate_check(u, g, pde.identity(2), V, B0=B0)
        b = pde.local_estimate_check(u.scaled(lam), g, pde.identity(2), V, B0=B0)
        for k in ("D2u/Au", "Vu/Lu"):
            assert b.terms[k] == pytest.approx(a.terms[k], rel=1e-8)

    def test_parabolic_ratio(self):
        D = geo.Cylinder(geo.interval(-8, 8), 64.0)
        B0 = geo.Ball((0.0, 32.0), 0.25, P1)
        u = pde.bump(P1, (0.0, 32.0), 0.24)
        out = []
        for m in (16, 32):
            h = 0.5 / m
            g = Grid.uniform(D, h, ((-0.25, 32 - 0.0625), (0.25, 32 + 0.0625)))
            rep = pde.local_estimate_check(u, g, pde.identity(1), constant_potential(1.0, 1), B0=B0)
            assert not rep.skipped
            out.append(rep.terms["ut/APu"])
        assert abs(out[1] - out[0]) / out[1] < 0.1


class TestApriori:
    def grids(self, n=2, levels=(16, 32, 64)):
        D = geo.unit_cube(n)
        return [Grid.uniform(D, 1 / m) for m in levels]

    def test_p_above_q_rejected(self):
        with pytest.raises(ValueError, match="exceeds"):
            pde.verify_apriori(pde.sine_product(E2), self.grids(), pde.identity(2), ps=(3.0,), q=2.0)
        with pytest.raises(ValueError):
            pde.probe_hypotheses(geo.unit_cube(2), pde.identity(2), None, None, 3.0, 2.0)

    def test_zero_skipped(self):
        res = pde.verify_apriori(pde.polynomial("0", E2), self.grids(levels=(8, 16)), pde.identity(2))
        assert all(r.skipped for r in res["reports"])

    def test_bump_stable(self):
        u = pde.bump(E2, (0.5, 0.5), 0.3)
        res = pde.verify_apriori(u, self.grids(), pde.identity(2), constant_potential(1.0, 2),
                                 ws={"delta": pde.delta_weight(1.0)}, ps=(2.0,), q=2.0)
        assert res["status"] == "pass"
        assert max(res["drift"].values()) < 0.10

    def test_boundary_growth_family(self):
        # u'' ~ delta^(-1/2): f = Lu is unbounded near the boundary, delta^2 f is not
        u = pde.polynomial("x0**(3/2) * (1 - x0)**(3/2)", geo.euclidean(1))
        grids = [Grid.uniform(geo.interval(0, 1), 1 / m) for m in (64, 128, 256)]
        res = pde.verify_apriori(u, grids, pde.identity(1), constant_potential(1.0, 1))
        assert res["status"] == "pass"

    def test_hypothesis_failure_distinguished(self):
        D = geo.interval(-1, 1)
        grids = [Grid.uniform(D, 1 / m) for m in (32, 64)]
        w = center_power([0.0], 3.0)
        hyp = pde.probe_hypotheses(D, pde.identity(1), None, w, 2.0, 2.0, check=("ap",))
        assert not hyp.ok and hyp.failed == ["ap"]
        res = pde.verify_apriori(pde.sine_product(geo.euclidean(1), -1, 1), grids, pde.identity(1),
                                 ws={"|x|^3": lambda p: np.abs(p[:, 0]) ** 3 + 1e-300}, hypotheses=hyp)
        assert res["status"] == "hypothesis-failure"

    def test_non_elliptic_fails_probe(self):
        A = pde.diagonal([lambda x: np.ones(len(x)), lambda x: x[:, 0] - 0.5], C_ell=None)
        hyp = pde.probe_hypotheses(geo.unit_cube(2), A, None, None, 2.0, 2.0, check=("ellipticity",))
        assert hyp.failed == ["ellipticity"]

    def test_vmo_probe(self):
        jump = pde.diagonal([lambda x: 1.5 + 0.5 * np.sign(x[:, 0] - 0.5)])
        hyp = pde.probe_hypotheses(geo.interval(0, 1), jump, None, None, 2.0, 2.0, check=("vmo",),
                                   vmo_radii=(0.005, 0.05, 0.2))
        assert not hyp.ok
        smooth = pde.diagonal([lambda x: 2 + np.sin(x[:, 0])])
        hyp = pde.probe_hypotheses(geo.interval(0, 1), smooth, None, None, 2.0, 2.0, check=("vmo",),
                                   vmo_radii=(0.005, 0.05, 0.2))
        assert hyp.ok

    def test_report_rows(self):
        res = pde.verify_apriori(pde.sine_product(E2), self.grids(levels=(8, 16)), pde.identity(2))
        row = res["reports"][0].row()
        assert row["kind"] == "apriori" and "param:p" in row and "term:sobolev" in row
