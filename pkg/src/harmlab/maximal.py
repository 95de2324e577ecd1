"""Local and sharp maximal functions on grids.

Balls are enumerated with centres at grid nodes and radii on a geometric
ladder ``r_j = 0.6 h 2^(j / per_octave)``.  The factor 0.6 keeps every
radius off the lattice of node distances, so ``d < r`` never ties, and the
smallest ball holds only its own centre node.  A discrete ball average is
``sum |f| mu / sum mu`` over the nodes of the ball.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy import ndimage, signal

from .discretization import Grid, GridFunction, weighted_lp_norm
from .geometry import PARABOLIC, Ball, Domain
from .oscillation import classify_trend, drift

LEBESGUE = "lebesgue"
WEIGHTED = "weighted"
POTENTIAL = "potential"


@dataclass(frozen=True)
class MeasureSpec:
    kind: str = LEBESGUE
    density: Callable | None = None

    def __post_init__(self):
        if self.kind not in (LEBESGUE, WEIGHTED, POTENTIAL):
            raise ValueError(f"unknown measure kind {self.kind!r}")
        if self.kind != LEBESGUE and self.density is None:
            raise ValueError("a weighted measure needs a density")

    def values(self, grid: Grid) -> np.ndarray:
        m = grid.mask
        out = np.zeros(grid.shape)
        if self.kind == LEBESGUE:
            out[m] = 1.0
        else:
            dv = np.asarray(self.density(grid.points[m]), dtype=float)
            if np.any(dv < 0):
                raise ValueError("measure density must be nonnegative")
            out[m] = dv
        return out


@dataclass(frozen=True)
class BallEnumeration:
    per_octave: int = 1
    base: float = 0.6
    r_max: float | None = None

    def radii(self, grid: Grid, upper: float) -> np.ndarray:
        top = upper if self.r_max is None else min(upper, self.r_max)
        r0 = self.base * grid.h
        if top <= r0:
            return np.array([r0])
        j = np.arange(int(math.floor(self.per_octave * math.log2(top / r0))) + 2)
        return r0 * 2.0 ** (j / self.per_octave)

    def refined(self) -> "BallEnumeration":
        return BallEnumeration(2 * self.per_octave, self.base, self.r_max)


def footprint(grid: Grid, r: float) -> np.ndarray:
    """Offsets (in nodes) whose metric length is < r, as a boolean stencil."""
    sp = grid.spacing
    if grid.space.kind == PARABOLIC:
        ext = [int(math.ceil(r / s)) for s in sp[:-1]] + [int(math.ceil(r * r / sp[-1]))]
    else:
        ext = [int(math.ceil(r / s)) for s in sp]
    axes = [np.arange(-e, e + 1) * s for e, s in zip(ext, sp)]
    mesh = np.meshgrid(*axes, indexing="ij")
    if grid.space.kind == PARABOLIC:
        d2 = sum(m * m for m in mesh[:-1]) + np.abs(mesh[-1])
    else:
        d2 = sum(m * m for m in mesh)
    return np.sqrt(d2) < r


def _abs_values(f: GridFunction) -> np.ndarray:
    return np.where(f.valid, np.abs(f.values), 0.0)


def ball_average_fields(f: GridFunction, mu: MeasureSpec, radii) -> list[np.ndarray]:
    """For each radius, the discrete mu-average of |f| on B(node, r) at every node."""
    g = f.grid
    mv = mu.values(g)
    fv = _abs_values(f) * mv
    out = []
    for r in radii:
        fp = footprint(g, r).astype(float)
        num, den = _correlate(fv, fp), _correlate(mv, fp)
        with np.errstate(invalid="ignore", divide="ignore"):
            out.append(np.where(den > 0.5 * np.min(mv[mv > 0], initial=1.0), num / den, np.nan))
    return out


def _correlate(a: np.ndarray, fp: np.ndarray) -> np.ndarray:
    """Zero-padded correlation with a symmetric stencil; FFT for big stencils."""
    if fp.size <= 343:
        return ndimage.correlate(a, fp, mode="constant", cval=0.0)
    out = signal.fftconvolve(a, fp, mode="same")
    return np.where(np.abs(out) < 1e-13 * max(np.abs(a).max(), 1e-300), 0.0, out)


def inside_window(grid: Grid, r: float) -> np.ndarray:
    """Nodes c whose ball B(c, r) lies in the grid's bounding box."""
    pts = grid.points
    hi = grid.lo + grid.spacing * np.asarray(grid.shape)
    reach = np.full(grid.dim, r)
    if grid.space.kind == PARABOLIC:
        reach[-1] = r * r
    return np.all((pts - grid.lo >= reach) & (hi - pts >= reach), axis=-1)


def _upper(grid: Grid, beta: float) -> float:
    return beta * float(np.max(grid.dist))


def local_maximal_field(f: GridFunction, beta: float, mu: MeasureSpec | None = None,
                        enum: BallEnumeration | None = None) -> GridFunction:
    """M_{mu,beta} f at every node: max over enumerated F_beta balls containing the node."""
    mu = mu or MeasureSpec()
    enum = enum or BallEnumeration()
    g = f.grid
    radii = enum.radii(g, _upper(g, beta))
    best = np.full(g.shape, -np.inf)
    for r, A in zip(radii, ball_average_fields(f, mu, radii)):
        ok = g.mask & (r < beta * g.dist) & np.isfinite(A) & inside_window(g, r)
        if not ok.any():
            continue
        Am = np.where(ok, A, -np.inf)
        best = np.maximum(best, ndimage.maximum_filter(Am, footprint=footprint(g, r), mode="constant",
                                                       cval=-np.inf))
    best[~g.mask] = np.nan
    if np.any(np.isneginf(best)):
        best[np.isneginf(best)] = np.nan
    return GridFunction(g, best)


def local_maximal(f: GridFunction, beta: float, x, mu: MeasureSpec | None = None,
                  enum: BallEnumeration | None = None) -> float:
    """M_{mu,beta} f(x) for an arbitrary point x of the domain."""
    mu = mu or MeasureSpec()
    enum = enum or BallEnumeration()
    g = f.grid
    x = np.asarray(x, dtype=float).reshape(1, g.dim)
    if not g.domain.contains(x)[0]:
        raise ValueError("x lies outside the domain")
    radii = enum.radii(g, _upper(g, beta))
    pts = g.points
    dx = g.space.distance(pts, x)
    best = -np.inf
    for r, A in zip(radii, ball_average_fields(f, mu, radii)):
        ok = g.mask & (r < beta * g.dist) & (dx < r) & np.isfinite(A) & inside_window(g, r)
        if ok.any():
            best = max(best, float(np.max(A[ok])))
    if best == -np.inf:
        raise ValueError("no enumerated ball contains x")
    return best


def local_maximal_q(f: GridFunction, qp: float, beta: float, x=None, mu: MeasureSpec | None = None,
                    enum: BallEnumeration | None = None):
    """(M_{beta}(|f|^q'))^(1/q'), at x or (x None) as a field."""
    fq = GridFunction(f.grid, np.abs(f.values) ** qp)
    if x is None:
        return GridFunction(f.grid, local_maximal_field(fq, beta, mu, enum).values ** (1.0 / qp))
    return local_maximal(fq, beta, x, mu, enum) ** (1.0 / qp)


# --------------------------------------------------------------------------
# Sharp maximal function on a ball X = B0
# --------------------------------------------------------------------------


@dataclass
class SharpFields:
    X: np.ndarray          # node mask of B0
    sharp: np.ndarray      # M^#_X f on X (NaN elsewhere)
    oscillation: np.ndarray
    global_term: float
    MX: np.ndarray         # M_X f on X


def _x_radii(grid: Grid, B0: Ball, enum: BallEnumeration) -> np.ndarray:
    r = BallEnumeration(enum.per_octave, enum.base).radii(grid, 2.0 * B0.radius)
    return r


def sharp_maximal_fields(f: GridFunction, B0: Ball, mu: MeasureSpec | None = None,
                         enum: BallEnumeration | None = None) -> SharpFields:
    """Sharp and plain maximal functions relative to X = B0.

    Balls P are centred at nodes of X and carry the radius ladder up to
    past diam(X); averages are over P intersected with X.  The oscillation
    is taken around the mean over P cap X, and the global term is the mean
    of f over X (in absolute value, so the result is nonnegative)."""
    mu = mu or MeasureSpec()
    enum = enum or BallEnumeration()
    g = f.grid
    X = g.mask & B0.contains(g.points) & f.valid
    if not X.any():
        raise ValueError("B0 holds no grid node")
    mv = np.where(X, mu.values(g), 0.0)
    fv = np.where(X, f.values, 0.0)
    gl = float(np.sum(fv * mv) / np.sum(mv))

    idx = np.argwhere(X)
    lo_i, hi_i = idx.min(axis=0), idx.max(axis=0)
    sub = tuple(slice(a, b + 1) for a, b in zip(lo_i, hi_i))
    Xs, ms, fs = X[sub], mv[sub], fv[sub]
    cidx = np.argwhere(Xs)
    shape = np.asarray(Xs.shape)

    osc_best = np.full(Xs.shape, -np.inf)
    mx_best = np.full(Xs.shape, -np.inf)
    for r in _x_radii(g, B0, enum):
        fp = footprint(g, r)
        half = (np.asarray(fp.shape) - 1) // 2
        offs = np.argwhere(fp) - half
        offs = offs[np.all(np.abs(offs) < shape, axis=1)]
        nb = cidx[:, None, :] + offs[None, :, :]
        inside = np.all((nb >= 0) & (nb < shape), axis=2)
        nbc = np.where(inside[..., None], nb, 0)
        tup = tuple(nbc[..., a] for a in range(g.dim))
        w = np.where(inside, ms[tup], 0.0)
        v = fs[tup]
        wsum = w.sum(axis=1)
        mean = (w * v).sum(axis=1) / wsum
        osc = (w * np.abs(v - mean[:, None])).sum(axis=1) / wsum
        avg_abs = (w * np.abs(v)).sum(axis=1) / wsum
        O = np.full(Xs.shape, -np.inf)
        A = np.full(Xs.shape, -np.inf)
        O[tuple(cidx.T)] = osc
        A[tuple(cidx.T)] = avg_abs
        fpr = fp[tuple(slice(max(0, h - s + 1), h + s) for h, s in zip(half, shape))]
        osc_best = np.maximum(osc_best, ndimage.maximum_filter(O, footprint=fpr, mode="constant", cval=-np.inf))
        mx_best = np.maximum(mx_best, ndimage.maximum_filter(A, footprint=fpr, mode="constant", cval=-np.inf))

    def embed(a):
        out = np.full(g.shape, np.nan)
        out[sub] = np.where(Xs, a, np.nan)
        return out

    osc_full = embed(osc_best)
    return SharpFields(X, osc_full + abs(gl), osc_full, abs(gl), embed(mx_best))


def sharp_maximal(f: GridFunction, B0: Ball, x, mu: MeasureSpec | None = None,
                  enum: BallEnumeration | None = None) -> float:
    """M^#_X f(x) at a node x of B0."""
    g = f.grid
    x = np.asarray(x, dtype=float).reshape(g.dim)
    i = tuple(np.rint((x - g.lo) / g.spacing - 0.5).astype(int))
    if not np.allclose(g.points[i], x, rtol=0, atol=1e-9 * g.h):
        raise ValueError("x must be a grid node")
    sf = sharp_maximal_fields(f, B0, mu, enum)
    if not sf.X[i]:
        raise ValueError("x lies outside B0")
    return float(sf.sharp[i])


def fefferman_stein_check(f: GridFunction, w, p: float, B0: Ball, mu: MeasureSpec | None = None,
                          enum: BallEnumeration | None = None) -> float:
    """||M_X f||_{L^p(w)} / ||M^#_X f||_{L^p(w)} over the nodes of X = B0."""
    sf = sharp_maximal_fields(f, B0, mu, enum)
    g = f.grid
    num = weighted_lp_norm(GridFunction(g, sf.MX), w, p, sf.X)
    den = weighted_lp_norm(GridFunction(g, sf.sharp), w, p, sf.X)
    if den == 0:
        raise ValueError("zero sharp maximal norm (f vanishes on X)")
    return num / den


# --------------------------------------------------------------------------
# Boundedness probe
# --------------------------------------------------------------------------


def probe_family(grid: Grid, beta: float, spikes: Sequence | None = None,
                kinds: Sequence[str] = ("indicator", "spike", "oscillatory")) -> dict:
    """Named grid functions: F_beta ball indicators, single-node spikes and
    sine samples along the first axis."""
    dom = grid.domain
    lo, hi = dom.bounds()
    pts = grid.points
    out = {}
    if "indicator" in kinds:
        for t in (0.25, 0.5, 0.7):
            c = lo + t * (hi - lo)
            if not dom.contains(c[None])[0]:
                continue
            r = 0.5 * beta * float(dom.raw_distance(c[None])[0])
            B = Ball(tuple(c), r, dom.space)
            out[f"ball@{t}"] = GridFunction(grid, B.contains(pts).astype(float))
    if "spike" in kinds:
        locs = spikes if spikes is not None else [lo + t * (hi - lo) for t in (0.3, 0.5)]
        for loc in locs:
            loc = np.broadcast_to(np.asarray(loc, float), (grid.dim,))
            d = np.linalg.norm(pts - loc, axis=-1)
            d = np.where(grid.mask, d, np.inf)
            i = np.unravel_index(np.argmin(d), grid.shape)
            v = np.zeros(grid.shape)
            v[i] = 1.0
            out[f"spike@{np.round(loc, 6).tolist()}"] = GridFunction(grid, v)
    if "oscillatory" in kinds:
        L = hi[0] - lo[0]
        for k in (1, 4, 16):
            out[f"sin{k}"] = GridFunction(grid, np.sin(2 * np.pi * k * (pts[..., 0] - lo[0]) / L))
    return out


def maximal_boundedness_probe(w, p: float, beta: float, domain: Domain, hs: Sequence[float],
                              spikes: Sequence | None = None,
                              kinds: Sequence[str] = ("indicator", "spike", "oscillatory"),
                              enum: BallEnumeration | None = None) -> dict:
    """Empirical sup ||M_beta f||_{L^p_w} / ||f||_{L^p_w} over a test family, per mesh."""
    sups, worst = [], []
    for h in hs:
        g = Grid.uniform(domain, h)
        best, arg = 0.0, None
        for name, f in probe_family(g, beta, spikes, kinds).items():
            nf = weighted_lp_norm(f, w, p)
            if nf == 0:
                continue
            Mf = local_maximal_field(f, beta, enum=enum)
            ratio = weighted_lp_norm(Mf, w, p) / nf
            if ratio > best:
                best, arg = ratio, name
        sups.append(best)
        worst.append(arg)
    return {"hs": list(hs), "norms": sups, "worst": worst, "drift": drift(sups),
            "trend": classify_trend(sups)}


# --------------------------------------------------------------------------
# Time-slab maximal function
# --------------------------------------------------------------------------


def time_slab_maximal(f: GridFunction, x, r_P: float) -> float:
    """sup over sigma = r_P 2^-j (sigma^2 at least one time cell) of
    sigma^-2 int_{t - sigma^2}^{t + sigma^2} |f(x', s)| ds, with f taken
    piecewise constant on time cells."""
    g = f.grid
    if g.space.kind != PARABOLIC:
        raise ValueError("time slabs need a parabolic grid")
    x = np.asarray(x, dtype=float).reshape(g.dim)
    i = np.rint((x[:-1] - g.lo[:-1]) / g.spacing[:-1] - 0.5).astype(int)
    col = np.abs(f.values[tuple(i)])
    k = g.spacing[-1]
    t0 = g.lo[-1]
    edges = t0 + np.arange(g.shape[-1] + 1) * k
    t = x[-1]
    best = 0.0
    sigma = r_P
    while sigma * sigma >= k * (1 - 1e-12):
        a, b = t - sigma * sigma, t + sigma * sigma
        if a < edges[0] - 1e-12 * k or b > edges[-1] + 1e-12 * k:
            raise ValueError("time slab leaves the grid window")
        overlap = np.clip(np.minimum(edges[1:], b) - np.maximum(edges[:-1], a), 0.0, None)
        vals = np.where(overlap > 0, col, 0.0)
        if np.any(np.isnan(vals)):
            raise ValueError("time slab leaves the domain")
        best = max(best, float(np.sum(vals * overlap)) / sigma ** 2)
        sigma /= 2
    return best
