"""Uniform grids, grid functions, finite differences, ball quadrature and
weighted norms.

Grids are cell centred.  On parabolic grids the time spacing is the square
of the spatial spacing, so a single parameter h refines both.  Grid values
outside the domain, or where a difference stencil leaves the valid set, are
NaN and carry no weight in any norm.
"""
from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np

from .geometry import EUCLIDEAN, PARABOLIC, Ball, Domain, MetricSpace

DEFAULT_SUBLATTICE = {1: 256, 2: 64, 3: 32}


@dataclass(frozen=True, eq=False)
class Grid:
    domain: Domain
    lo: np.ndarray
    spacing: np.ndarray
    counts: tuple

    @classmethod
    def uniform(cls, domain: Domain, h: float, window=None) -> "Grid":
        """Grid of spacing h (time spacing h^2 when parabolic) over a window."""
        space = domain.space
        if window is None:
            b = domain.bounds()
            if b is None:
                raise ValueError("unbounded domain: give a window")
            lo, hi = b
        else:
            lo, hi = (np.asarray(w, float) for w in window)
        spacing = np.full(space.dim, float(h))
        if space.kind == PARABOLIC:
            spacing[-1] = h * h
        ratio = (hi - lo) / spacing
        counts = np.rint(ratio).astype(int)
        if np.any(np.abs(counts - ratio) > 1e-6 * np.maximum(ratio, 1)) or np.any(counts < 1):
            raise ValueError(f"window {lo}..{hi} is not a whole number of cells of size {spacing}")
        return cls(domain, np.asarray(lo, float), spacing, tuple(int(c) for c in counts))

    @property
    def space(self) -> MetricSpace:
        return self.domain.space

    @property
    def dim(self) -> int:
        return self.space.dim

    @property
    def shape(self) -> tuple:
        return self.counts

    @property
    def h(self) -> float:
        return float(self.spacing[0])

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    def axes(self) -> list[np.ndarray]:
        return [self.lo[a] + (np.arange(m) + 0.5) * self.spacing[a] for a, m in enumerate(self.counts)]

    @property
    def points(self) -> np.ndarray:
        """Node coordinates, shape counts + (dim,)."""
        return _grid_points(self)

    @property
    def dist(self) -> np.ndarray:
        return _grid_dist(self)

    @property
    def mask(self) -> np.ndarray:
        return self.dist > 0

    @property
    def delta(self) -> np.ndarray:
        """min{1, d(x, complement)} at nodes, NaN outside."""
        d = self.dist
        return np.where(d > 0, np.minimum(1.0, d), np.nan)

    def refine(self) -> "Grid":
        b = self.lo + self.spacing * np.asarray(self.counts)
        return Grid.uniform(self.domain, self.h / 2, (self.lo, b))

    def region_mask(self, region) -> np.ndarray:
        if region is None:
            return self.mask
        if isinstance(region, Ball):
            return self.mask & region.contains(self.points)
        if isinstance(region, Domain):
            return self.mask & region.contains(self.points)
        region = np.asarray(region, bool)
        if region.shape != self.shape:
            raise ValueError("region mask has the wrong shape")
        return self.mask & region


@lru_cache(maxsize=64)
def _grid_points(grid: Grid) -> np.ndarray:
    mesh = np.meshgrid(*grid.axes(), indexing="ij")
    pts = np.stack(mesh, axis=-1)
    pts.setflags(write=False)
    return pts


@lru_cache(maxsize=64)
def _grid_dist(grid: Grid) -> np.ndarray:
    d = grid.domain.raw_distance(grid.points)
    d.setflags(write=False)
    return d


class GridFunction:
    """Values at grid nodes; NaN marks nodes that carry no value."""

    def __init__(self, grid: Grid, values):
        values = np.array(values, dtype=float)
        if values.shape != grid.shape:
            raise ValueError(f"values shape {values.shape} != grid shape {grid.shape}")
        values[~grid.mask] = np.nan
        if np.any(np.isinf(values)):
            raise ValueError("grid function values must be finite")
        self.grid = grid
        self.values = values

    @classmethod
    def sample(cls, grid: Grid, f: Callable) -> "GridFunction":
        vals = np.full(grid.shape, np.nan)
        m = grid.mask
        vals[m] = np.asarray(f(grid.points[m]), dtype=float)
        return cls(grid, vals)

    @classmethod
    def constant(cls, grid: Grid, c: float) -> "GridFunction":
        return cls(grid, np.full(grid.shape, float(c)))

    @property
    def valid(self) -> np.ndarray:
        return np.isfinite(self.values)

    def restrict(self, region) -> "GridFunction":
        keep = self.grid.region_mask(region)
        return GridFunction(self.grid, np.where(keep, self.values, np.nan))

    def _combine(self, other, op):
        if isinstance(other, GridFunction):
            if other.grid is not self.grid:
                raise ValueError("grid functions live on different grids")
            other = other.values
        return GridFunction(self.grid, op(self.values, other))

    def __add__(self, other):
        return self._combine(other, np.add)

    __radd__ = __add__

    def __sub__(self, other):
        return self._combine(other, np.subtract)

    def __mul__(self, other):
        return self._combine(other, np.multiply)

    __rmul__ = __mul__

    def __neg__(self):
        return GridFunction(self.grid, -self.values)

    def abs(self) -> "GridFunction":
        return GridFunction(self.grid, np.abs(self.values))

    def to_csv(self, path) -> None:
        pts = self.grid.points[self.valid]
        vals = self.values[self.valid]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([f"x{i}" for i in range(self.grid.dim)] + ["value"])
            for p, v in zip(pts, vals):
                w.writerow([f"{c:.17g}" for c in p] + [f"{v:.17g}"])

    @classmethod
    def from_csv(cls, path, grid: Grid) -> "GridFunction":
        vals = np.full(grid.shape, np.nan)
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))[1:]
        for row in rows:
            p = np.asarray([float(c) for c in row[:-1]])
            idx = np.rint((p - grid.lo) / grid.spacing - 0.5).astype(int)
            if np.any(idx < 0) or np.any(idx >= np.asarray(grid.shape)):
                raise ValueError(f"node {p} is not on the grid")
            vals[tuple(idx)] = float(row[-1])
        return cls(grid, vals)


# --------------------------------------------------------------------------
# Finite differences
# --------------------------------------------------------------------------


def _shift(a: np.ndarray, axis: int, k: int) -> np.ndarray:
    """out[i] = a[i + k] along axis, NaN where i + k falls off the array."""
    out = np.full_like(a, np.nan)
    n = a.shape[axis]
    if abs(k) >= n:
        return out
    src = [slice(None)] * a.ndim
    dst = [slice(None)] * a.ndim
    if k >= 0:
        src[axis] = slice(k, n)
        dst[axis] = slice(0, n - k)
    else:
        src[axis] = slice(0, n + k)
        dst[axis] = slice(-k, n)
    out[tuple(dst)] = a[tuple(src)]
    return out


def fd_derivative(u: GridFunction, gamma) -> GridFunction:
    """Second-order central difference D^gamma u for |gamma| <= 2.

    ``gamma`` is a multi-index over all grid axes (the time axis last on
    parabolic grids).  Nodes whose stencil touches an invalid node are
    dropped.
    """
    gamma = tuple(int(g) for g in gamma)
    g = u.grid
    if len(gamma) != g.dim or any(v < 0 for v in gamma):
        raise ValueError(f"multi-index {gamma} does not match grid dimension {g.dim}")
    if sum(gamma) > 2:
        raise ValueError("only derivatives of order <= 2 are supported")
    a = u.values
    hs = g.spacing
    axes = [i for i, v in enumerate(gamma) if v > 0]
    if sum(gamma) == 0:
        out = a.copy()
    elif sum(gamma) == 1:
        i = axes[0]
        out = (_shift(a, i, 1) - _shift(a, i, -1)) / (2 * hs[i])
    elif len(axes) == 1:
        i = axes[0]
        out = (_shift(a, i, 1) - 2 * a + _shift(a, i, -1)) / hs[i] ** 2
    else:
        i, j = axes
        pp = _shift(_shift(a, i, 1), j, 1)
        pm = _shift(_shift(a, i, 1), j, -1)
        mp = _shift(_shift(a, i, -1), j, 1)
        mm = _shift(_shift(a, i, -1), j, -1)
        out = (pp - pm - mp + mm) / (4 * hs[i] * hs[j])
    out = np.where(np.isfinite(out), out, np.nan)
    return GridFunction(g, out)


def spatial_multi_indices(space: MetricSpace, order: int) -> list[tuple]:
    """Distinct spatial multi-indices of the given order (time entry 0)."""
    n = space.n
    out = []
    for combo in itertools.combinations_with_replacement(range(n), order):
        gamma = [0] * space.dim
        for c in combo:
            gamma[c] += 1
        out.append(tuple(gamma))
    return out


def time_index(space: MetricSpace) -> tuple:
    if space.kind != PARABOLIC:
        raise ValueError("time derivative requires a parabolic grid")
    return (0,) * space.n + (1,)


# --------------------------------------------------------------------------
# Quadrature
# --------------------------------------------------------------------------


@lru_cache(maxsize=32)
def unit_ball_nodes(kind: str, n: int, m: int) -> np.ndarray:
    """Midpoint sub-lattice of the unit ball: m cells per axis of its
    bounding box, keeping the cell centres inside the ball."""
    dim = n + 1 if kind == PARABOLIC else n
    ax = -1.0 + (np.arange(m) + 0.5) * (2.0 / m)
    mesh = np.meshgrid(*([ax] * dim), indexing="ij")
    z = np.stack([c.ravel() for c in mesh], axis=-1)
    if kind == EUCLIDEAN:
        keep = np.sum(z * z, axis=1) < 1.0
    else:
        keep = np.sum(z[:, :-1] ** 2, axis=1) + np.abs(z[:, -1]) < 1.0
    z = z[keep]
    z.setflags(write=False)
    return z


def ball_points(B: Ball, m: int | None = None) -> np.ndarray:
    sp = B.space
    if m is None:
        m = DEFAULT_SUBLATTICE.get(sp.dim, 24)
    z = unit_ball_nodes(sp.kind, sp.n, m)
    scale = np.full(sp.dim, B.radius)
    if sp.kind == PARABOLIC:
        scale[-1] = B.radius ** 2
    return B.c + z * scale


def balls_points(space: MetricSpace, centers, radii, m: int | None = None) -> np.ndarray:
    """Sub-lattices of many balls at once, shape (n_balls, n_nodes, dim)."""
    if m is None:
        m = DEFAULT_SUBLATTICE.get(space.dim, 24)
    z = unit_ball_nodes(space.kind, space.n, m)
    centers = np.asarray(centers, float).reshape(-1, space.dim)
    radii = np.asarray(radii, float).reshape(-1)
    scale = np.repeat(radii[:, None], space.dim, axis=1)
    if space.kind == PARABOLIC:
        scale[:, -1] = radii ** 2
    return centers[:, None, :] + z[None, :, :] * scale[:, None, :]


def ball_means(fs: Sequence[Callable], space: MetricSpace, centers, radii, m: int,
               chunk_nodes: int = 2_000_000) -> np.ndarray:
    """Sub-lattice means of each f over each ball; shape (len(fs), n_balls)."""
    centers = np.asarray(centers, float).reshape(-1, space.dim)
    radii = np.asarray(radii, float)
    out = np.empty((len(fs), len(radii)))
    per_ball = len(balls_points(space, centers[:1], radii[:1], m)[0]) if len(radii) else 1
    step = max(1, chunk_nodes // max(per_ball, 1))
    for s in range(0, len(radii), step):
        pts = balls_points(space, centers[s:s + step], radii[s:s + step], m)
        nb, nn, dim = pts.shape
        flat = pts.reshape(-1, dim)
        for i, f in enumerate(fs):
            v = np.asarray(f(flat), dtype=float).reshape(nb, nn)
            out[i, s:s + nb] = v.mean(axis=1)
    return out


def ball_average(f: Callable, B: Ball, m: int | None = None) -> float:
    return float(np.mean(np.asarray(f(ball_points(B, m)), dtype=float)))


def ball_integral(f: Callable, B: Ball, m: int | None = None) -> float:
    """Midpoint rule on an m-per-axis sub-lattice of B.

    The node weights are normalised so they sum to the exact |B|; constants
    and ball averages of constants are therefore reproduced exactly.
    """
    if m is not None and m < 32:
        raise ValueError("the sub-lattice needs at least 32 points per axis")
    return B.volume * ball_average(f, B, m)


# --------------------------------------------------------------------------
# Norms
# --------------------------------------------------------------------------


def _weight_values(grid: Grid, w, keep: np.ndarray) -> np.ndarray:
    if w is None:
        return np.ones(int(keep.sum()))
    if isinstance(w, np.ndarray):
        wv = w[keep]
    elif callable(w):
        wv = np.asarray(w(grid.points[keep]), dtype=float)
    else:
        wv = np.full(int(keep.sum()), float(w))
    if np.any(~(wv > 0)):
        raise ValueError("weight must be strictly positive at every node")
    return wv


def weighted_lp_norm(u: GridFunction, w=None, p: float = 2.0, region=None) -> float:
    """(sum over valid nodes of |u|^p w h^dim)^(1/p)."""
    if not (1 <= p < np.inf):
        raise ValueError("p must lie in [1, inf)")
    keep = u.grid.region_mask(region) & u.valid
    if not np.any(keep):
        return 0.0
    wv = _weight_values(u.grid, w, keep)
    s = np.sum(np.abs(u.values[keep]) ** p * wv) * u.grid.cell_volume
    return float(s ** (1.0 / p))


def sobolev_terms(u: GridFunction, w=None, p: float = 2.0, region=None, flavor: str | None = None) -> dict:
    """Individual terms ||delta^|g| D^g u||_{L^p_w} keyed by multi-index,
    plus key 't' for delta^2 D_t u on parabolic grids."""
    g = u.grid
    flavor = flavor or ("parabolic" if g.space.kind == PARABOLIC else "elliptic")
    dl = g.delta
    terms = {}
    for order in (0, 1, 2):
        for gamma in spatial_multi_indices(g.space, order):
            du = fd_derivative(u, gamma) if order else u
            terms[gamma] = weighted_lp_norm(du * dl ** order, w, p, region)
    if flavor == "parabolic":
        du = fd_derivative(u, time_index(g.space))
        terms["t"] = weighted_lp_norm(du * dl ** 2, w, p, region)
    return terms


def sobolev_norm(u: GridFunction, w=None, p: float = 2.0, region=None, flavor: str | None = None) -> float:
    return float(sum(sobolev_terms(u, w, p, region, flavor).values()))
