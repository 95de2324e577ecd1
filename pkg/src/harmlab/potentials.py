"""Nonnegative potentials, reverse Hoelder ratios and the critical radius.

The critical radius is rho(x) = sup{r > 0 : g(r) <= 1} with

    average normalisation: g(r) = r^2 * avg_{B(x,r)} V
    shen normalisation:    g(r) = r^(2-n) * int_{B(x,r)} V  = c_n * r^2 * avg

where c_n is the unit ball volume.  Ball means come from a closed form when
the potential carries one, otherwise from sub-lattice quadrature.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .discretization import ball_means
from .geometry import euclidean, unit_ball_volume
from .oscillation import BallSampler, classify_trend, drift

AVERAGE = "average"
SHEN = "shen"
SCAN_LOG2 = (-20, 20)
SCAN_PER_OCTAVE = 4
FIT_CONSTANTS = (1.0, 1.5, 2.0, 4.0, 8.0, 16.0)


class RhoOutOfRange(ValueError):
    def __init__(self, x, direction: str):
        super().__init__(f"rho out of range ({direction}) at x={np.asarray(x).tolist()}")
        self.direction = direction


@dataclass(frozen=True)
class Potential:
    """V >= 0 on R^n.

    ``mean`` is an optional closed form (x (N,n), r (N,)) -> avg_{B(x,r)} V
    and ``power_mean`` one for (x, r, s) -> avg_{B(x,r)} V^s, returning inf
    where V^s is not integrable on the ball.
    """

    name: str
    n: int
    fn: Callable = field(repr=False, compare=False)
    mean: Callable | None = field(default=None, repr=False, compare=False)
    q: float = 2.0
    normalization: str = AVERAGE
    m: int | None = None
    power_mean: Callable | None = field(default=None, repr=False, compare=False)
    translation_invariant: bool = False

    def __post_init__(self):
        if self.normalization not in (AVERAGE, SHEN):
            raise ValueError(f"unknown normalisation {self.normalization!r}")

    @property
    def space(self):
        return euclidean(self.n)

    @property
    def c_n(self) -> float:
        return unit_ball_volume(self.n)

    def __call__(self, y) -> np.ndarray:
        y = np.atleast_2d(np.asarray(y, dtype=float))
        return np.asarray(self.fn(y), dtype=float)

    def with_normalization(self, normalization: str) -> "Potential":
        return Potential(self.name, self.n, self.fn, self.mean, self.q, normalization, self.m,
                         self.power_mean, self.translation_invariant)

    def scaled(self, lam: float) -> "Potential":
        mean = None if self.mean is None else (lambda x, r: lam * self.mean(x, r))
        pm = None if self.power_mean is None else (lambda x, r, s: lam ** s * self.power_mean(x, r, s))
        return Potential(f"{lam:g}*{self.name}", self.n, lambda y: lam * self.fn(y), mean,
                         self.q, self.normalization, self.m, pm, self.translation_invariant)

    def ball_mean(self, x, r) -> np.ndarray:
        x = np.asarray(x, dtype=float).reshape(-1, self.n)
        r = np.broadcast_to(np.asarray(r, dtype=float), (len(x),))
        if self.mean is not None:
            return np.asarray(self.mean(x, r), dtype=float)
        m = self.m or (8192 if self.n == 1 else 64 if self.n == 2 else 32)
        return ball_means([self], self.space, x, r, m)[0]

    def g(self, x, r) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        val = r ** 2 * self.ball_mean(x, r)
        return val * self.c_n if self.normalization == SHEN else val

    def rho(self, x, rtol: float = 1e-12) -> np.ndarray:
        return critical_radius(self, x, rtol)


def constant_potential(c: float = 1.0, n: int = 1) -> Potential:
    return Potential(f"const({c:g})", n, lambda y: np.full(len(y), float(c)),
                     lambda x, r: np.full(len(x), float(c)),
                     power_mean=lambda x, r, s: np.full(len(x), float(c) ** s),
                     translation_invariant=True)


def _power_mean_1d(a: float):
    """(x, r, s) -> avg over [x-r, x+r] of |y|^(a s), exact."""

    def pm(x, r, s):
        b = a * s
        x = x[:, 0]
        lo, hi = x - r, x + r
        if b > -1:
            def F(y):
                return np.sign(y) * np.abs(y) ** (b + 1) / (b + 1)

            return (F(hi) - F(lo)) / (2 * r)
        out = np.full(len(x), np.inf)
        off = (lo > 0) | (hi < 0)
        lo, hi = np.abs(lo[off]), np.abs(hi[off])
        a1, a2 = np.minimum(lo, hi), np.maximum(lo, hi)
        if b == -1:
            val = np.log(a2 / a1)
        else:
            val = (a2 ** (b + 1) - a1 ** (b + 1)) / (b + 1)
        out[off] = val / (2 * r[off])
        return out

    return pm


def quadratic_potential(n: int = 1) -> Potential:
    """|y|^2, with avg_{B(x,r)} |y|^2 = |x|^2 + n r^2 / (n + 2)."""
    return Potential("|y|^2", n, lambda y: np.sum(y * y, axis=1),
                     lambda x, r: np.sum(x * x, axis=1) + n * r * r / (n + 2),
                     power_mean=_power_mean_1d(2.0) if n == 1 else None)


def power_potential(a: float, n: int = 1) -> Potential:
    """|y|^a; closed-form ball means in one dimension (a > -1) and for a = 2."""
    if a == 2:
        return quadratic_potential(n)

    def fn(y):
        with np.errstate(divide="ignore"):
            return np.linalg.norm(y, axis=1) ** a

    mean = pm = None
    if n == 1:
        pm = _power_mean_1d(a)
        if a > -1:
            def mean(x, r):
                return pm(x, r, 1.0)

    return Potential(f"|y|^{a:g}", n, fn, mean, power_mean=pm)


def from_callable(fn: Callable, n: int, name: str = "V", **kw) -> Potential:
    return Potential(name, n, fn, None, **kw)


# --------------------------------------------------------------------------
# Critical radius
# --------------------------------------------------------------------------


def scan_radii() -> np.ndarray:
    lo, hi = SCAN_LOG2
    return 2.0 ** np.linspace(lo, hi, (hi - lo) * SCAN_PER_OCTAVE + 1)


def critical_radius(V: Potential, x, rtol: float = 1e-12) -> np.ndarray | float:
    """Vectorised rho(x): last crossing of g = 1 on a dyadic scan, then
    bisection down to relative width ``rtol``.  Scalar input gives a float."""
    x_arr = np.asarray(x, dtype=float)
    scalar = x_arr.ndim <= 1 and x_arr.size == V.n
    pts = x_arr.reshape(-1, V.n)
    if V.translation_invariant and len(pts) > 1:
        return np.full(len(pts), critical_radius(V, pts[0], rtol))
    radii = scan_radii()
    npts, nr = len(pts), len(radii)
    g = V.g(np.repeat(pts, nr, axis=0), np.tile(radii, npts)).reshape(npts, nr)
    below = g <= 1.0
    if not below.any(axis=1).all():
        i = int(np.argmin(below.any(axis=1)))
        raise RhoOutOfRange(pts[i], "below: g > 1 at the smallest scanned radius")
    last = nr - 1 - np.argmax(below[:, ::-1], axis=1)
    if np.any(last == nr - 1):
        i = int(np.argmax(last == nr - 1))
        raise RhoOutOfRange(pts[i], "above: g <= 1 at the largest scanned radius")
    lo = radii[last].copy()
    hi = radii[last + 1].copy()
    for _ in range(200):
        active = (hi - lo) > rtol * lo
        if not active.any():
            break
        mid = 0.5 * (lo + hi)
        gm = V.g(pts[active], mid[active])
        ok = gm <= 1.0
        idx = np.flatnonzero(active)
        lo[idx[ok]] = mid[active][ok]
        hi[idx[~ok]] = mid[active][~ok]
    return float(lo[0]) if scalar else lo


@dataclass
class RhoIdentity:
    rho: float
    shen_value: float
    average_value: float
    shen_holds: bool
    average_holds: bool


def check_rho_identity(V: Potential, x, tol: float = 1e-9) -> RhoIdentity:
    """Evaluate rho^-(n-2) int_{B(x,rho)} V at the rho of V's normalisation.

    Under the Shen normalisation the value is g(rho) <= 1; under the average
    normalisation it equals c_n g(rho) <= c_n.
    """
    rho = float(np.atleast_1d(critical_radius(V, x))[0])
    x = np.asarray(x, dtype=float).reshape(1, V.n)
    integral = V.c_n * rho ** V.n * float(V.ball_mean(x, rho)[0])
    value = rho ** (2 - V.n) * integral
    shen_ok = V.normalization == SHEN and value <= 1 + tol
    average_ok = V.normalization == AVERAGE and value <= V.c_n * (1 + tol)
    return RhoIdentity(rho, value if V.normalization == SHEN else math.nan,
                       value if V.normalization == AVERAGE else math.nan, shen_ok, average_ok)


def rho_lattice_csv(V: Potential, points, path) -> np.ndarray:
    pts = np.asarray(points, dtype=float).reshape(-1, V.n)
    rho = critical_radius(V, pts)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"x{i}" for i in range(V.n)] + ["rho"])
        for p, r in zip(pts, np.atleast_1d(rho)):
            w.writerow([f"{c:.17g}" for c in p] + [f"{r:.17g}"])
    return rho


# --------------------------------------------------------------------------
# Inequalities between rho values and ball averages
# --------------------------------------------------------------------------


@dataclass
class RhoComparisonReport:
    fitted: bool
    k0: int | None
    C: float | None
    n_pairs: int
    worst_pair: tuple
    lower_residual: float
    upper_residual: float


def fit_rho_comparison(V: Potential, xs, ys, k_max: int = 8,
                       constants: Sequence[float] = FIT_CONSTANTS) -> RhoComparisonReport:
    """Smallest k0, then smallest C, with

        (1/C) (1 + |x-y|/rho(y))^(1/k0) <= 1 + |x-y|/rho(x) <= C (1 + |x-y|/rho(y))^k0

    on every pair.  Residuals are the worst log-margins of the fitted pair
    (negative means slack)."""
    xs = np.asarray(xs, dtype=float).reshape(-1, V.n)
    ys = np.asarray(ys, dtype=float).reshape(-1, V.n)
    rx = np.atleast_1d(critical_radius(V, xs))
    ry = np.atleast_1d(critical_radius(V, ys))
    dist = np.linalg.norm(xs - ys, axis=1)
    mid = np.log1p(dist / rx)
    base = np.log1p(dist / ry)
    worst = (None, -np.inf)
    for k0 in range(1, k_max + 1):
        for C in constants:
            lower = base / k0 - math.log(C) - mid
            upper = mid - math.log(C) - k0 * base
            bad = np.maximum(lower, upper)
            if np.all(bad <= 1e-12):
                return RhoComparisonReport(True, k0, C, len(xs), (), float(lower.max()), float(upper.max()))
            j = int(np.argmax(bad))
            if bad[j] > worst[1]:
                worst = ((tuple(xs[j]), tuple(ys[j])), float(bad[j]))
    k0, C = k_max, constants[-1]
    lower = base / k0 - math.log(C) - mid
    upper = mid - math.log(C) - k0 * base
    j = int(np.argmax(np.maximum(lower, upper)))
    return RhoComparisonReport(False, None, None, len(xs), (tuple(xs[j]), tuple(ys[j])),
                               float(lower.max()), float(upper.max()))


@dataclass
class ScaleGrowth:
    r: float
    R: float
    lhs: float
    rhs: float
    raw_ratio: float
    ratio: float


def check_scale_growth(V: Potential, x, r: float, R: float) -> ScaleGrowth:
    """lhs = r^-n int_{B(x,r)} V, rhs = R^-n int_{B(x,R)} V.

    ``raw_ratio`` is lhs/rhs; ``ratio`` divides further by (R/r)^(n/q) and
    is the quantity whose supremum estimates the growth constant."""
    if not 0 < r < R:
        raise ValueError("need 0 < r < R")
    x = np.asarray(x, dtype=float).reshape(1, V.n)
    means = V.ball_mean(np.repeat(x, 2, axis=0), np.array([r, R]))
    lhs, rhs = V.c_n * means
    if lhs == 0 or rhs == 0:
        raise ValueError("zero ball integral")
    raw = lhs / rhs
    return ScaleGrowth(r, R, float(lhs), float(rhs), float(raw), float(raw / (R / r) ** (V.n / V.q)))


def scale_growth_sweep(V: Potential, x, radii: Sequence[float]) -> float:
    radii = sorted(radii)
    return max(check_scale_growth(V, x, r, R).ratio
               for i, r in enumerate(radii) for R in radii[i + 1:])


# --------------------------------------------------------------------------
# Reverse Hoelder
# --------------------------------------------------------------------------


@dataclass
class RHEstimate:
    estimate: float
    n_balls: int
    skipped: int
    level: int


def rh_constant(V: Potential, q: float, window, r_max: float,
                sampler: BallSampler | None = None, exact: bool = True) -> RHEstimate:
    """Sampled sup of (avg V^q)^(1/q) / avg V over balls centred in a window.

    Ball means are exact when V carries closed forms for them (and ``exact``
    is set), otherwise sub-lattice quadrature.  Balls on which V vanishes
    identically are skipped and counted."""
    if not q > 1:
        raise ValueError("q must exceed 1")
    sampler = sampler or BallSampler()
    lo, hi = (np.asarray(v, float) for v in window)
    c, r = sampler.free_plan(V.space, lo, hi, r_max)
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        if exact and V.power_mean is not None:
            a = np.stack([V.power_mean(c, r, 1.0), V.power_mean(c, r, q)])
        else:
            a = ball_means([V, lambda y: V(y) ** q], V.space, c, r, sampler.m(V.space))
        keep = a[0] > 0
        ratio = a[1][keep] ** (1 / q) / a[0][keep]
    ratio = np.where(np.isnan(ratio), np.inf, ratio)
    est = float(np.max(ratio)) if len(ratio) else math.nan
    return RHEstimate(est, int(keep.sum()), int((~keep).sum()), sampler.level)


def rh_refinement(V: Potential, q: float, window, r_max: float, levels=(0, 1, 2),
                  sampler: BallSampler | None = None, exact: bool = True) -> dict:
    sampler = sampler or BallSampler()
    vals = [rh_constant(V, q, window, r_max, sampler.refined(l), exact).estimate for l in levels]
    return {"levels": list(levels), "estimates": vals, "drift": drift(vals), "trend": classify_trend(vals)}
