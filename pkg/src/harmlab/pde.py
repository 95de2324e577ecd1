"""Finite-difference second-order operators and checks of the estimates they satisfy.

Nothing here solves an equation.  A manufactured ``u`` is sampled on a
grid, ``Lu`` is assembled with central differences, and the weighted norms
on both sides of an inequality are compared.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Sequence

import numpy as np
import sympy as sp

from .discretization import (Grid, GridFunction, fd_derivative, spatial_multi_indices,
                             time_index, weighted_lp_norm)
from .geometry import (EUCLIDEAN, PARABOLIC, Ball, BallFamilySpec, Domain, MetricSpace,
                       in_family)
from .oscillation import BallSampler, Weight, ap_refinement, vmo_modulus
from .potentials import Potential, rh_refinement

# --------------------------------------------------------------------------
# Coefficients
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class CoefficientField:
    """Symmetric matrix field a_ij evaluated at points of R^n or R^(n+1).

    ``fn`` maps an (N, dim) array to an (N, n, n) array.  ``C_ell`` is the
    claimed ellipticity constant; ``vmo`` may hold an oscillation report.
    """

    name: str
    n: int
    fn: Callable = field(repr=False, compare=False)
    C_ell: float | None = None
    vmo: object = field(default=None, repr=False, compare=False)

    def __call__(self, pts) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        a = np.asarray(self.fn(pts), dtype=float)
        if a.shape != (len(pts), self.n, self.n):
            raise ValueError(f"coefficient field returned shape {a.shape}")
        if not np.allclose(a, np.swapaxes(a, 1, 2), rtol=0, atol=1e-14):
            raise ValueError("coefficient matrix is not symmetric")
        return a

    def entry(self, i: int, j: int) -> Callable:
        return lambda x: self(x)[:, i, j]


def identity(n: int) -> CoefficientField:
    return CoefficientField("identity", n, lambda x: np.broadcast_to(np.eye(n), (len(x), n, n)).copy(), 1.0)


def constant_matrix(A, name: str | None = None) -> CoefficientField:
    A = np.asarray(A, dtype=float)
    n = A.shape[0]
    ev = np.linalg.eigvalsh(A)
    C = float(max(ev.max(), 1 / ev.min())) if ev.min() > 0 else None
    return CoefficientField(name or f"const{A.tolist()}", n,
                            lambda x: np.broadcast_to(A, (len(x), n, n)).copy(), C)


def diagonal(entries: Sequence[Callable], name: str = "diag", C_ell: float | None = None) -> CoefficientField:
    """diag(e_1(x), ..., e_n(x)) from vectorised scalar evaluators."""
    n = len(entries)

    def fn(x):
        out = np.zeros((len(x), n, n))
        for i, e in enumerate(entries):
            out[:, i, i] = e(x)
        return out

    return CoefficientField(name, n, fn, C_ell)


@dataclass
class EllipticityRecord:
    min: float
    max: float
    C_ell: float | None
    n_points: int

    @property
    def ok(self) -> bool:
        if not self.min > 0:
            return False
        if self.C_ell is None:
            return True
        return bool(self.min >= 1 / self.C_ell - 1e-12 and self.max <= self.C_ell + 1e-12)


def ellipticity_check(coeffs: CoefficientField, pts, directions=None) -> EllipticityRecord:
    """Extreme Rayleigh quotients xi.A xi / |xi|^2 over the sample points.

    With ``directions`` (an (m, n) array) the quotients are taken over those
    directions only; otherwise the exact eigenvalue range is used."""
    A = coeffs(pts)
    if directions is None:
        ev = np.linalg.eigvalsh(A)
        lo, hi = ev[:, 0].min(), ev[:, -1].max()
    else:
        xi = np.atleast_2d(np.asarray(directions, dtype=float))
        q = np.einsum("mi,pij,mj->pm", xi, A, xi) / np.sum(xi * xi, axis=1)[None, :]
        lo, hi = q.min(), q.max()
    return EllipticityRecord(float(lo), float(hi), coeffs.C_ell, len(A))


# --------------------------------------------------------------------------
# Manufactured solutions
# --------------------------------------------------------------------------


def coordinate_symbols(space: MetricSpace) -> tuple:
    xs = sp.symbols(f"x0:{space.n}", real=True)
    if space.kind == PARABOLIC:
        return (*xs, sp.Symbol("t", real=True))
    return tuple(xs)


@dataclass(frozen=True, eq=False)
class ManufacturedSolution:
    """Closed-form u with exact derivatives from sympy.

    ``support`` is a ball containing supp u for compactly supported
    variants, ``None`` otherwise."""

    name: str
    space: MetricSpace
    expr: sp.Expr
    support: Ball | None = None

    @cached_property
    def symbols(self) -> tuple:
        return coordinate_symbols(self.space)

    def _lambdify(self, e: sp.Expr) -> Callable:
        f = sp.lambdify(self.symbols, e, modules="numpy")

        def ev(pts):
            pts = np.atleast_2d(np.asarray(pts, dtype=float))
            v = f(*pts.T)
            return np.broadcast_to(np.asarray(v, dtype=float), (len(pts),)).copy()

        return ev

    def derivative_expr(self, gamma) -> sp.Expr:
        e = self.expr
        for s, k in zip(self.symbols, gamma):
            if k:
                e = sp.diff(e, s, k)
        return e

    def derivative(self, gamma) -> Callable:
        gamma = tuple(int(g) for g in gamma)
        cache = self.__dict__.setdefault("_dcache", {})
        if gamma not in cache:
            cache[gamma] = self._lambdify(self.derivative_expr(gamma))
        return cache[gamma]

    def __call__(self, pts) -> np.ndarray:
        return self.derivative((0,) * self.space.dim)(pts)

    def sample(self, grid: Grid) -> GridFunction:
        return GridFunction.sample(grid, self)

    def scaled(self, lam: float) -> "ManufacturedSolution":
        return ManufacturedSolution(f"{lam:g}*{self.name}", self.space, lam * self.expr, self.support)

    def support_within(self, B: Ball) -> bool:
        """supp u inside B, by the triangle inequality on the support ball."""
        if self.support is None:
            return False
        gap = float(np.ravel(self.space.distance(np.asarray(self.support.c), np.asarray(B.c)))[0])
        return gap + self.support.radius <= B.radius * (1 + 1e-12)

    def support_violations(self, grid: Grid) -> int:
        """Grid nodes outside the support ball where u is nonzero."""
        if self.support is None:
            return 0
        pts = grid.points[grid.mask]
        out = ~self.support.contains(pts)
        return int(np.count_nonzero(self(pts[out])))


def polynomial(expr: str, space: MetricSpace, name: str | None = None) -> ManufacturedSolution:
    """u from a sympy string in x0, x1, ... (and t on parabolic spaces)."""
    syms = coordinate_symbols(space)
    e = sp.sympify(expr, locals={str(s): s for s in syms})
    return ManufacturedSolution(name or expr, space, e)


def bump(space: MetricSpace, center, radius: float, amplitude: float = 1.0) -> ManufacturedSolution:
    """amplitude (1 - s)^4_+, a C^3 bump supported in the closed ball B(center, radius).

    Elliptic gauge s = |x - c|^2 / r^2.  Parabolic gauge
    s = (|x' - c'|^2 / r^2 + (t - c_t)^2 / r^4) / (3/4), whose sublevel set
    {s < 1} lies in the parabolic ball."""
    syms = coordinate_symbols(space)
    c = [sp.nsimplify(v) if float(v).is_integer() else sp.Float(v) for v in np.ravel(center)]
    r = sp.Float(radius)
    sx = sum((syms[i] - c[i]) ** 2 for i in range(space.n)) / r ** 2
    if space.kind == PARABOLIC:
        s = (sx + (syms[-1] - c[-1]) ** 2 / r ** 4) / sp.Rational(3, 4)
    else:
        s = sx
    e = sp.Float(amplitude) * sp.Piecewise(((1 - s) ** 4, s < 1), (0, True))
    B = Ball(tuple(float(v) for v in np.ravel(center)), float(radius), space)
    return ManufacturedSolution(f"bump(c={np.ravel(center).tolist()},r={radius:g})", space, e, B)


def sine_product(space: MetricSpace, lo=0.0, hi=1.0, decay: float = 1.0) -> ManufacturedSolution:
    """prod_i sin(pi (x_i - lo)/(hi - lo)), times exp(-decay t) when parabolic."""
    syms = coordinate_symbols(space)
    L = sp.Float(hi - lo)
    e = sp.Integer(1)
    for s in syms[: space.n]:
        e = e * sp.sin(sp.pi * (s - lo) / L)
    if space.kind == PARABOLIC:
        e = e * sp.exp(-sp.Float(decay) * syms[-1])
    return ManufacturedSolution("sine_product", space, e)


def random_bumps(space: MetricSpace, domain: Domain, count: int, seed: int = 0,
                 r_range=(0.1, 0.3)) -> list[ManufacturedSolution]:
    """Bumps whose support ball lies inside the domain (centres by rejection)."""
    rng = np.random.default_rng(seed)
    lo, hi = domain.bounds()
    out = []
    while len(out) < count:
        c = rng.uniform(lo, hi)
        r = rng.uniform(*r_range)
        d = domain.raw_distance(c[None, :])[0]
        if d > r:
            out.append(bump(space, c, r, amplitude=float(rng.uniform(0.5, 2.0))))
    return out


# --------------------------------------------------------------------------
# Assembly
# --------------------------------------------------------------------------


def _coeff_grid(coeffs: CoefficientField, grid: Grid) -> np.ndarray:
    if coeffs.n != grid.space.n:
        raise ValueError("coefficient dimension does not match the grid")
    pts = grid.points.reshape(-1, grid.dim)
    return coeffs(pts).reshape(*grid.shape, coeffs.n, coeffs.n)


def hessian_contraction(coeffs: CoefficientField, u: GridFunction) -> GridFunction:
    """sum_ij a_ij D_ij u on the spatial axes."""
    g = u.grid
    A = _coeff_grid(coeffs, g)
    n = g.space.n
    out = np.zeros(g.shape)
    for i in range(n):
        for j in range(i, n):
            gamma = [0] * g.dim
            gamma[i] += 1
            gamma[j] += 1
            d = fd_derivative(u, gamma).values
            out = out + (1 if i == j else 2) * A[..., i, j] * d
    return GridFunction(g, out)


def assemble_elliptic(coeffs: CoefficientField, u: GridFunction) -> GridFunction:
    """A_E u = -sum_ij a_ij u_{x_i x_j}."""
    return -hessian_contraction(coeffs, u)


def assemble_parabolic(coeffs: CoefficientField, u: GridFunction) -> GridFunction:
    """A_P u = u_t - sum_ij a_ij u_{x_i x_j}."""
    if u.grid.space.kind != PARABOLIC:
        raise ValueError("parabolic assembly needs a parabolic grid")
    return fd_derivative(u, time_index(u.grid.space)) - hessian_contraction(coeffs, u)


def assemble(coeffs: CoefficientField, u: GridFunction, flavor: str | None = None) -> GridFunction:
    flavor = flavor or ("parabolic" if u.grid.space.kind == PARABOLIC else "elliptic")
    return assemble_parabolic(coeffs, u) if flavor == "parabolic" else assemble_elliptic(coeffs, u)


def potential_values(V: Potential | Callable | None, grid: Grid) -> np.ndarray:
    """V at every node; V acts on the spatial coordinates only."""
    if V is None:
        return np.zeros(grid.shape)
    pts = grid.points.reshape(-1, grid.dim)[:, : grid.space.n]
    return np.asarray(V(pts), dtype=float).reshape(grid.shape)


def assemble_L(coeffs: CoefficientField, V, u: GridFunction, flavor: str | None = None) -> GridFunction:
    """L u = A u + V u."""
    return assemble(coeffs, u, flavor) + GridFunction(u.grid, potential_values(V, u.grid) * u.values)


# --------------------------------------------------------------------------
# Reports
# --------------------------------------------------------------------------


@dataclass
class EstimateReport:
    kind: str
    terms: dict
    ratio: float
    h: float
    params: dict = field(default_factory=dict)
    skipped: bool = False
    reason: str = ""

    def row(self) -> dict:
        r = {"kind": self.kind, "h": self.h, "ratio": self.ratio, "skipped": self.skipped}
        r.update({f"term:{k}": v for k, v in self.terms.items()})
        r.update({f"param:{k}": v for k, v in self.params.items()})
        return r


def _norm_sum(u: GridFunction, gammas, power: int, w, p: float, region=None) -> float:
    dl = u.grid.delta ** power
    return float(sum(weighted_lp_norm(fd_derivative(u, gm) * dl, w, p, region) for gm in gammas))


EPS_LADDER = tuple(2.0 ** -j for j in range(1, 7))


def interpolation_check(u: GridFunction, w=None, p: float = 2.0,
                        eps: Sequence[float] = EPS_LADDER) -> EstimateReport:
    """sup over eps of ||delta D u|| / (eps^-1 ||u|| + eps ||delta^2 D^2 u||).

    D runs over spatial derivatives only (first and second order), each
    multi-index contributing one norm to the sum."""
    g = u.grid
    space = g.space
    lhs = _norm_sum(u, spatial_multi_indices(space, 1), 1, w, p)
    u0 = weighted_lp_norm(u, w, p)
    d2 = _norm_sum(u, spatial_multi_indices(space, 2), 2, w, p)
    terms = {"delta_Du": lhs, "u": u0, "delta2_D2u": d2}
    params = {"p": p, "eps": list(eps)}
    if u0 == 0 and d2 == 0:
        return EstimateReport("interpolation", terms, float("nan"), g.h, params, True, "u vanishes")
    ratios = [lhs / (u0 / e + e * d2) for e in eps]
    i = int(np.argmax(ratios))
    terms["worst_eps"] = float(eps[i])
    return EstimateReport("interpolation", terms, float(ratios[i]), g.h, params)


def interpolation_family(us: Sequence[GridFunction], w=None, p: float = 2.0,
                         eps: Sequence[float] = EPS_LADDER) -> dict:
    reps = [interpolation_check(u, w, p, eps) for u in us]
    vals = [r.ratio for r in reps if not r.skipped]
    return {"sup": float(max(vals)) if vals else 0.0, "reports": reps}


def local_estimate_check(u: ManufacturedSolution, grid: Grid, coeffs: CoefficientField, V=None,
                         w=None, p: float = 2.0, B0: Ball | None = None, beta: float = 0.5,
                         q: float | None = None, require_support: bool = True) -> EstimateReport:
    """Ratios ||D^2 u||/||A u||, ||V u||/||L u|| and (parabolic) ||u_t||/||A_P u||,
    all in L^p_w(B0).

    Hypotheses (supp u in B0, 10 B0 in F_beta, p in (1, q]) are checked
    first; a violation returns a skipped report naming it."""
    space = grid.space
    B0 = B0 or u.support
    params = {"p": p, "beta": beta, "u": u.name, "coeffs": coeffs.name,
              "V": getattr(V, "name", None if V is None else "callable")}
    problems = []
    if not p > 1:
        problems.append("p must exceed 1")
    if q is not None and p > q:
        problems.append(f"p={p} exceeds q={q}")
    if B0 is None:
        problems.append("no ball B0")
    else:
        if require_support and not u.support_within(B0):
            problems.append("supp u not inside B0")
        if not in_family(BallFamilySpec(beta, grid.domain), B0.scaled(10)):
            problems.append("10 B0 not in F_beta")
    if problems:
        return EstimateReport("local", {}, float("nan"), grid.h, params, True, "; ".join(problems))
    U = u.sample(grid)
    parabolic = space.kind == PARABOLIC
    A = assemble(coeffs, U)
    Vu = GridFunction(grid, potential_values(V, grid) * U.values)
    L = A + Vu
    region = B0
    d2 = _norm_sum(U, spatial_multi_indices(space, 2), 0, w, p, region)
    terms = {"D2u": d2, "Au": weighted_lp_norm(A, w, p, region),
             "Vu": weighted_lp_norm(Vu, w, p, region), "Lu": weighted_lp_norm(L, w, p, region)}
    ratios = {"D2u/Au": terms["D2u"] / terms["Au"], "Vu/Lu": terms["Vu"] / terms["Lu"]}
    if parabolic:
        terms["ut"] = weighted_lp_norm(fd_derivative(U, time_index(space)), w, p, region)
        ratios["ut/APu"] = terms["ut"] / terms["Au"]
    terms.update(ratios)
    return EstimateReport("local", terms, float(max(ratios.values())), grid.h, params)


# --------------------------------------------------------------------------
# Global a-priori estimate
# --------------------------------------------------------------------------


@dataclass
class Hypotheses:
    """Outcome of the hypothesis probes: name -> (passed, detail)."""

    results: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return all(v[0] for v in self.results.values())

    @property
    def failed(self) -> list:
        return [k for k, v in self.results.items() if not v[0]]

    def merged(self, other: "Hypotheses", tag: str = "") -> "Hypotheses":
        out = dict(self.results)
        out.update({f"{k}{tag}": v for k, v in other.results.items()})
        return Hypotheses(out)


def probe_hypotheses(domain: Domain, coeffs: CoefficientField, V: Potential | None, w, p: float,
                     q: float, beta: float = 0.5, sampler: BallSampler | None = None,
                     vmo_radii=(0.02, 0.05, 0.1), rh_window=None, rh_radius: float = 0.25,
                     check: Sequence[str] = ("ellipticity", "ap", "rh", "vmo")) -> Hypotheses:
    """Cheap sampled checks of ellipticity, A_{p,loc}, RH_q and VMO.

    A weight given as a plain array cannot be probed and is reported as
    unchecked (passed, with a note)."""
    if p > q:
        raise ValueError(f"p={p} exceeds q={q}")
    sampler = sampler or BallSampler(centers_per_axis=4 if domain.space.dim > 2 else 8,
                                     radius_levels=4, sublattice=8)
    space = domain.space
    lo, hi = domain.bounds()
    res = {}
    pts = np.random.default_rng(0).uniform(lo, hi, size=(512, space.dim))
    pts = pts[domain.contains(pts)]
    if "ellipticity" in check:
        rec = ellipticity_check(coeffs, pts)
        res["ellipticity"] = (rec.ok, f"[{rec.min:.4g}, {rec.max:.4g}]")
    if "ap" in check:
        if w is None:
            res["ap"] = (True, "w = 1")
        elif isinstance(w, Weight) or callable(w):
            wt = w if isinstance(w, Weight) else Weight("w", w)
            r = ap_refinement(wt, domain, p, beta, levels=(0, 1), sampler=sampler)
            res["ap"] = (r["trend"] == "stable" and bool(np.isfinite(r["estimates"][-1])),
                         f"{r['estimates']}")
        else:
            res["ap"] = (True, "unchecked (array weight)")
    if "rh" in check:
        if V is None:
            res["rh"] = (True, "V = 0")
        else:
            win = rh_window or (lo[: space.n], hi[: space.n])
            r = rh_refinement(V, q, win, rh_radius, levels=(0, 1),
                              sampler=BallSampler(6, 4, None))
            res["rh"] = (r["trend"] == "stable", f"{r['estimates']}")
    if "vmo" in check:
        worst = 0.0
        ok = True
        for i in range(coeffs.n):
            for j in range(i, coeffs.n):
                rep = vmo_modulus(coeffs.entry(i, j), space, (lo, hi), vmo_radii,
                                  BallSampler(centers_per_axis=4, sublattice=8))
                ok &= rep.vmo_consistent
                worst = max(worst, float(rep.eta[0]))
        res["vmo"] = (bool(ok), f"eta(r_min) <= {worst:.3g}")
    return Hypotheses(res)


def apriori_terms(U: GridFunction, coeffs: CoefficientField, V, flavor: str | None = None) -> dict:
    """Grid functions entering both sides, computed once per mesh."""
    g = U.grid
    space = g.space
    flavor = flavor or ("parabolic" if space.kind == PARABOLIC else "elliptic")
    dl = g.delta
    parts = {"u": U}
    for order in (1, 2):
        for gm in spatial_multi_indices(space, order):
            parts[gm] = fd_derivative(U, gm) * dl ** order
    if flavor == "parabolic":
        parts["t"] = fd_derivative(U, time_index(space)) * dl ** 2
    Vv = potential_values(V, g)
    parts["delta2_Vu"] = GridFunction(g, dl ** 2 * Vv * U.values)
    parts["delta2_Lu"] = assemble_L(coeffs, V, U, flavor) * dl ** 2
    return parts


def apriori_ratio(parts: dict, w=None, p: float = 2.0) -> tuple[float, dict]:
    """(||u||_{W^{2,p}_{delta,w}} + ||delta^2 V u||) / (||delta^2 L u|| + ||u||)."""
    norms = {str(k): weighted_lp_norm(v, w, p) for k, v in parts.items()}
    sob = sum(v for k, v in norms.items() if k not in ("delta2_Vu", "delta2_Lu"))
    num = sob + norms["delta2_Vu"]
    den = norms["delta2_Lu"] + norms["u"]
    norms["sobolev"] = sob
    return (num / den if den > 0 else float("nan")), norms


def verify_apriori(u: ManufacturedSolution, grids: Sequence[Grid], coeffs: CoefficientField,
                   V=None, ws: dict | None = None, ps: Sequence[float] = (2.0,), q: float = 2.0,
                   flavor: str | None = None, hypotheses: Hypotheses | None = None,
                   drift_tol: float = 0.10) -> dict:
    """Ratio of the global weighted estimate on every mesh, for every (w, p).

    ``ws`` maps a label to a weight (None, callable, or a function of the
    grid returning node values).  ``p > q`` is rejected before any work.
    The status is "pass" only when every hypothesis probe passed and the
    ratio moved by less than ``drift_tol`` between successive meshes."""
    bad = [p for p in ps if p > q]
    if bad:
        raise ValueError(f"p={bad[0]} exceeds q={q}: outside the admissible range (1, q]")
    if any(not p > 1 for p in ps):
        raise ValueError("p must exceed 1")
    ws = ws if ws is not None else {"1": None}
    reports = []
    table: dict = {}
    for g in grids:
        U = u.sample(g)
        parts = apriori_terms(U, coeffs, V, flavor)
        for label, w in ws.items():
            wv = w(g) if (callable(w) and getattr(w, "on_grid", False)) else w
            for p in ps:
                ratio, norms = apriori_ratio(parts, wv, p)
                skipped = not np.isfinite(ratio)
                reports.append(EstimateReport("apriori", norms, ratio, g.h,
                                              {"w": label, "p": p, "q": q, "u": u.name,
                                               "coeffs": coeffs.name}, skipped,
                                              "0/0" if skipped else ""))
                table.setdefault((label, p), []).append(ratio)
    drifts = {k: _drift(v) for k, v in table.items()}
    growing = [k for k, v in table.items() if not np.all(np.isfinite(v)) or v[-1] > 10 * v[0]]
    hyp_ok = hypotheses.ok if hypotheses is not None else True
    if not hyp_ok:
        status = "hypothesis-failure"
    elif growing:
        status = "growing"
    elif max(drifts.values(), default=0.0) < drift_tol:
        status = "pass"
    else:
        status = "unstable"
    return {"status": status, "ratios": table, "drift": drifts, "reports": reports,
            "hypotheses": hypotheses.results if hypotheses is not None else {}}


def _drift(v) -> float:
    v = np.asarray(v, dtype=float)
    if len(v) < 2 or not np.all(np.isfinite(v)):
        return float("nan") if len(v) >= 2 else 0.0
    return float(np.max(np.abs(np.diff(v)) / np.abs(v[:-1])))


def grid_weight(fn: Callable[[Grid], np.ndarray]) -> Callable:
    """Mark a weight as a function of the grid (e.g. delta^a from grid.delta)."""
    fn.on_grid = True
    return fn


def delta_weight(alpha: float) -> Callable:
    return grid_weight(lambda g: g.delta ** alpha)
