"""Weights, local A_p constants, doubling constants, BMO and VMO moduli.

All suprema are estimated from a :class:`BallSampler` plan: centres on a
cell-centred lattice, radii on a dyadic ladder, and ball averages from the
midpoint sub-lattice of :mod:`harmlab.discretization`.  Sampled suprema can
only under-estimate, so divergence is judged by trend across sampler levels.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .discretization import DEFAULT_SUBLATTICE, GridFunction, ball_means, balls_points
from .geometry import Domain, MetricSpace, lattice

TREND_FACTOR = 10.0


@dataclass(frozen=True)
class Weight:
    """A strictly positive function given by a vectorised evaluator."""

    name: str
    fn: Callable = field(repr=False, compare=False)

    def __call__(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return np.asarray(self.fn(x), dtype=float)

    def __mul__(self, other: "Weight") -> "Weight":
        return product(self, other)

    def power(self, s: float) -> "Weight":
        return Weight(f"({self.name})^{s:g}", lambda x: self(x) ** s)


def constant(c: float = 1.0) -> Weight:
    if c <= 0:
        raise ValueError("a weight must be positive")
    return Weight(f"const({c:g})", lambda x: np.full(len(x), float(c)))


def delta_power(domain: Domain, alpha: float) -> Weight:
    """delta(x)^alpha with delta = min(1, d(x, complement))."""

    def fn(x):
        d = np.minimum(1.0, domain.raw_distance(x))
        with np.errstate(divide="ignore"):
            return d ** alpha

    return Weight(f"delta^{alpha:g}", fn)


def center_power(x0, alpha: float) -> Weight:
    """|x - x0|^alpha (Euclidean norm over all coordinates)."""
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))

    def fn(x):
        r = np.linalg.norm(x - x0, axis=1)
        with np.errstate(divide="ignore"):
            return r ** alpha

    return Weight(f"|x-{x0.tolist()}|^{alpha:g}", fn)


def product(*ws: Weight) -> Weight:
    def fn(x):
        out = np.ones(len(x))
        for w in ws:
            out = out * w(x)
        return out

    return Weight("*".join(w.name for w in ws), fn)


def grid_sampled(u: GridFunction, name: str = "sampled") -> Weight:
    """Piecewise-constant weight: value of the grid node whose cell holds x."""
    g = u.grid
    vals = u.values

    def fn(x):
        idx = np.floor((x - g.lo) / g.spacing).astype(int)
        idx = np.clip(idx, 0, np.asarray(g.shape) - 1)
        return vals[tuple(idx.T)]

    return Weight(name, fn)


# --------------------------------------------------------------------------
# Ball sampling
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class BallSampler:
    """Sampling plan.  Level l doubles the centre count per axis, adds two
    rungs to the radius ladder and refines the quadrature sub-lattice (by 4
    per level in one dimension, by 2 otherwise)."""

    centers_per_axis: int = 32
    radius_levels: int = 6
    sublattice: int | None = None
    level: int = 0

    def refined(self, level: int) -> "BallSampler":
        return BallSampler(self.centers_per_axis, self.radius_levels, self.sublattice, level)

    def m(self, space: MetricSpace) -> int:
        base = self.sublattice or DEFAULT_SUBLATTICE.get(space.dim, 24)
        growth = 4 if space.dim == 1 else 2
        return base * growth ** self.level

    def centers(self, lo, hi, dim: int) -> np.ndarray:
        k = self.centers_per_axis * 2 ** self.level
        return lattice(np.broadcast_to(lo, dim), np.broadcast_to(hi, dim), [k] * dim)

    def ladder(self, top) -> np.ndarray:
        """Radii top * 2^-j for j < levels; shape (len(top), levels)."""
        j = np.arange(self.radius_levels + 2 * self.level)
        return np.asarray(top, dtype=float)[:, None] * 2.0 ** -j[None, :]

    def family_plan(self, domain: Domain, beta: float, window=None):
        """Centres inside the domain and radii strictly below beta*d."""
        lo, hi = _window(domain, window)
        c = self.centers(lo, hi, domain.space.dim)
        d = domain.raw_distance(c)
        c, d = c[d > 0], d[d > 0]
        top = beta * d * (1 - 1e-9)
        r = self.ladder(top)
        return np.repeat(c, r.shape[1], axis=0), r.ravel()

    def free_plan(self, space: MetricSpace, lo, hi, r_max: float):
        c = self.centers(lo, hi, space.dim)
        r = self.ladder(np.full(len(c), r_max))
        return np.repeat(c, r.shape[1], axis=0), r.ravel()


def _window(domain: Domain, window):
    if window is not None:
        lo, hi = window
        return np.asarray(lo, float), np.asarray(hi, float)
    b = domain.bounds()
    if b is None:
        raise ValueError("unbounded domain: give a sampling window")
    return b


def classify_trend(values: Sequence[float]) -> str:
    v = np.asarray(values, dtype=float)
    if not np.isfinite(v[-1]) or v[-1] > TREND_FACTOR * v[0]:
        return "divergent"
    return "stable"


def drift(values: Sequence[float]) -> float:
    """Largest relative change between successive levels."""
    v = np.asarray(values, dtype=float)
    if len(v) < 2:
        return 0.0
    if not np.all(np.isfinite(v)):
        return float("inf")
    return float(np.max(np.abs(np.diff(v)) / np.abs(v[:-1])))


# --------------------------------------------------------------------------
# A_p, doubling
# --------------------------------------------------------------------------


@dataclass
class ApEstimate:
    weight: str
    p: float
    beta: float
    level: int
    normalized: float
    literal: float
    n_balls: int
    nonintegrable: bool
    worst_center: tuple
    worst_radius: float
    normalization: str = "(avg w)(avg w^(1-p'))^(p-1)"

    @property
    def estimate(self) -> float:
        return self.normalized

    def row(self) -> dict:
        return {"weight": self.weight, "p": self.p, "beta": self.beta, "level": self.level,
                "estimate": self.normalized, "literal": self.literal}


def ap_loc_constant(w: Weight, domain: Domain, p: float, beta: float,
                    sampler: BallSampler | None = None, window=None) -> ApEstimate:
    """Sampled sup over F_beta balls of (avg w)(avg w^(1-p'))^(p-1).

    ``literal`` holds (avg w)^(1/p) (avg w^(1-p))^(1/p'), the other common
    way of writing the same supremum.  A non-finite value of either average
    at some node is reported through ``nonintegrable`` and an infinite
    estimate, never raised.
    """
    if not p > 1:
        raise ValueError("p must exceed 1")
    sampler = sampler or BallSampler()
    pp = p / (p - 1)
    space = domain.space
    c, r = sampler.family_plan(domain, beta, window)
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        a = ball_means([w, lambda x: w(x) ** (1 - pp), lambda x: w(x) ** (1 - p)],
                       space, c, r, sampler.m(space))
        norm = a[0] * a[1] ** (p - 1)
        lit = a[0] ** (1 / p) * a[2] ** (1 / pp)
    bad = ~np.isfinite(norm)
    norm = np.where(np.isnan(norm), np.inf, norm)
    i = int(np.argmax(norm))
    return ApEstimate(w.name, p, beta, sampler.level, float(norm[i]),
                      float(np.nanmax(np.where(np.isnan(lit), np.inf, lit))),
                      len(r), bool(bad.any()), tuple(c[i]), float(r[i]))


def ap_refinement(w: Weight, domain: Domain, p: float, beta: float,
                  levels: Sequence[int] = (0, 1, 2), sampler: BallSampler | None = None,
                  window=None) -> dict:
    sampler = sampler or BallSampler()
    ests = [ap_loc_constant(w, domain, p, beta, sampler.refined(l), window) for l in levels]
    vals = [e.normalized for e in ests]
    return {"levels": list(levels), "estimates": vals, "drift": drift(vals),
            "trend": classify_trend(vals), "reports": ests}


def doubling_constant(density: Callable | None, domain: Domain, beta: float,
                      sampler: BallSampler | None = None, window=None) -> float:
    """Sampled sup of mu(B)/mu(B/2) over F_beta balls, d mu = density dx."""
    sampler = sampler or BallSampler()
    space = domain.space
    c, r = sampler.family_plan(domain, beta, window)
    dens = density or (lambda x: np.ones(len(x)))
    m = sampler.m(space)
    big = ball_means([dens], space, c, r, m)[0] * space.ball_volume(r)
    small = ball_means([dens], space, c, r / 2, m)[0] * space.ball_volume(r / 2)
    if np.any(small <= 0):
        raise ValueError("a sampled half ball has zero measure")
    return float(np.max(big / small))


# --------------------------------------------------------------------------
# BMO / VMO
# --------------------------------------------------------------------------


def _mean_oscillation(b: Callable, space: MetricSpace, centers, radii, m: int) -> np.ndarray:
    centers = np.asarray(centers, float).reshape(-1, space.dim)
    out = np.empty(len(radii))
    step = max(1, 2_000_000 // m ** space.dim)
    for s in range(0, len(radii), step):
        pts = balls_points(space, centers[s:s + step], radii[s:s + step], m)
        nb, nn, dim = pts.shape
        v = np.asarray(b(pts.reshape(-1, dim)), dtype=float).reshape(nb, nn)
        out[s:s + nb] = np.mean(np.abs(v - v.mean(axis=1, keepdims=True)), axis=1)
    return out


def bmo_seminorm(b: Callable, space: MetricSpace, window, r_max: float,
                 sampler: BallSampler | None = None) -> float:
    """Sampled sup of avg_B |b - b_B| over balls centred in the window."""
    sampler = sampler or BallSampler()
    lo, hi = (np.asarray(v, float) for v in window)
    c, r = sampler.free_plan(space, lo, hi, r_max)
    return float(np.max(_mean_oscillation(b, space, c, r, sampler.m(space))))


@dataclass
class OscillationReport:
    radii: np.ndarray
    eta: np.ndarray
    bmo: float
    eps: float
    vmo_consistent: bool
    n_balls: int


def vmo_modulus(b: Callable, space: MetricSpace, window, r_grid: Sequence[float],
                sampler: BallSampler | None = None, eps: float | None = None,
                eps_factor: float = 0.05) -> OscillationReport:
    """eta(r) = sampled sup of the mean oscillation over balls of radius <= r."""
    sampler = sampler or BallSampler()
    lo, hi = (np.asarray(v, float) for v in window)
    radii = np.sort(np.asarray(r_grid, dtype=float))
    m = sampler.m(space)
    per_r, n_balls = [], 0
    for r in radii:
        c = _centers_for_radius(sampler, lo, hi, space.dim, r)
        per_r.append(np.max(_mean_oscillation(b, space, c, np.full(len(c), r), m)))
        n_balls += len(c)
    eta = np.maximum.accumulate(np.asarray(per_r))
    eps = eps_factor * eta[-1] if eps is None else eps
    ok = bool(eta[0] < eps or eta[-1] == 0.0)
    return OscillationReport(radii, eta, float(eta[-1]), float(eps), ok, n_balls)


def _centers_for_radius(sampler: BallSampler, lo, hi, dim: int, r: float,
                        max_centers: int = 20_000) -> np.ndarray:
    # centre spacing at most r, so every point of the window lies in some
    # sampled ball of radius r (up to the budget)
    base = sampler.centers_per_axis * 2 ** sampler.level
    need = int(np.ceil(np.max(np.asarray(hi) - np.asarray(lo)) / r))
    k = max(base, min(need, int(max_centers ** (1.0 / dim))))
    return lattice(np.broadcast_to(lo, dim), np.broadcast_to(hi, dim), [k] * dim)
