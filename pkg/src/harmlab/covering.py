"""Whitney-type coverings by local balls and the cutoff family built on them.

Bands are Lambda_0 = {d > 1} and Lambda_k = {2^-k < d <= 2^-k+1} for k >= 1,
where d is the distance to the complement.  In each band a maximal
r0 2^-k separated set is chosen greedily from a candidate lattice scanned in
lexicographic order, and every chosen point carries the ball
B(x, r0 2^-k).  Band 0 balls form the family tagged ``G``; the others are
tagged ``Gtilde``.

Only the region {d > 2^-k_max} inside a bounded window is covered; the thin
layer below it and balls reaching outside the window are reported, not
asserted on.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np
from scipy.spatial import cKDTree

from .geometry import EUCLIDEAN, PARABOLIC, Domain, MetricSpace, OutsideDomainError, lattice

TAG_G = "G"
TAG_GT = "Gtilde"

_MAX_CANDIDATES = 6_000_000


def band_index(domain: Domain, x) -> int | np.ndarray:
    """Band k of x: 0 if d > 1, else the k >= 1 with 2^-k < d <= 2^-k+1."""
    d = domain.raw_distance(x)
    if np.any(d <= 0):
        raise OutsideDomainError("point outside the domain")
    mant, expo = np.frexp(d)
    k = np.where(mant == 0.5, 2 - expo, 1 - expo)
    k = np.where(d > 1.0, 0, k).astype(int)
    return int(k) if np.ndim(k) == 0 else k


def band_separation(r0: float, k) -> np.ndarray:
    return r0 * np.power(2.0, -np.asarray(k, dtype=float))


@dataclass
class CoveringReport:
    n_points: int
    n_excluded: int
    coverage_fraction: float
    max_overlap: int
    property3_violations: int
    family_violations: int
    radius_violations: int
    separation_violations: int
    n_pairs_checked: int

    @property
    def ok(self) -> bool:
        return (self.coverage_fraction == 1.0 and self.property3_violations == 0
                and self.family_violations == 0 and self.radius_violations == 0
                and self.separation_violations == 0)

    def as_dict(self) -> dict:
        return dict(self.__dict__, ok=self.ok)


@dataclass
class Covering:
    domain: Domain
    r0: float
    beta: float
    k_max: int
    window: tuple
    centers: np.ndarray
    radii: np.ndarray
    bands: np.ndarray
    edge: np.ndarray
    report: CoveringReport | None = None

    @property
    def space(self) -> MetricSpace:
        return self.domain.space

    @property
    def tags(self) -> list[str]:
        return [TAG_G if k == 0 else TAG_GT for k in self.bands]

    @property
    def M_hat(self) -> int | None:
        return None if self.report is None else self.report.max_overlap

    def __len__(self):
        return len(self.radii)

    def to_text(self) -> str:
        """One ball per line: ``tag k center... radius``."""
        lines = []
        for tag, k, c, r in zip(self.tags, self.bands, self.centers, self.radii):
            coords = " ".join(f"{v:.17g}" for v in c)
            lines.append(f"{tag} {int(k)} {coords} {r:.17g}")
        return "\n".join(lines) + ("\n" if lines else "")


def parse_covering_text(text: str, dim: int):
    """Inverse of Covering.to_text: returns (tags, bands, centers, radii)."""
    tags, bands, centers, radii = [], [], [], []
    for line in text.splitlines():
        if not line.strip():
            continue
        parts = line.split()
        if len(parts) != dim + 3:
            raise ValueError(f"malformed covering line: {line!r}")
        tags.append(parts[0])
        bands.append(int(parts[1]))
        centers.append([float(v) for v in parts[2:2 + dim]])
        radii.append(float(parts[-1]))
    return tags, np.asarray(bands, int), np.asarray(centers, float).reshape(-1, dim), np.asarray(radii)


def _cell_scale(space: MetricSpace, s: float) -> np.ndarray:
    """Per-axis cell edge so that points within distance s sit in adjacent cells."""
    scale = np.full(space.dim, s)
    if space.kind == PARABOLIC:
        scale[-1] = s * s
    return scale


class _Greedy:
    """Sequential maximal separated selection inside one band."""

    def __init__(self, space: MetricSpace, sep: float):
        self.space = space
        self.sep = sep
        self.scale = _cell_scale(space, sep)
        self.cells: dict[tuple, list] = {}
        self.offsets = list(np.ndindex(*(3,) * space.dim))
        self.parabolic = space.kind == PARABOLIC
        self.chosen: list = []

    def _too_close(self, p, key) -> bool:
        sep2 = self.sep * self.sep
        for off in self.offsets:
            nb = tuple(k + o - 1 for k, o in zip(key, off))
            for q in self.cells.get(nb, ()):
                if self.parabolic:
                    d2 = sum((a - b) ** 2 for a, b in zip(p[:-1], q[:-1])) + abs(p[-1] - q[-1])
                else:
                    d2 = sum((a - b) ** 2 for a, b in zip(p, q))
                if d2 < sep2:
                    return True
        return False

    def offer(self, p) -> bool:
        p = tuple(float(v) for v in p)
        key = tuple(int(math.floor(v / s)) for v, s in zip(p, self.scale))
        if self._too_close(p, key):
            return False
        self.cells.setdefault(key, []).append(p)
        self.chosen.append(p)
        return True


def _default_k_max(space: MetricSpace) -> int:
    return {1: 10, 2: 4}.get(space.dim, 3)


def default_verification_lattice(domain: Domain, window, space: MetricSpace) -> np.ndarray:
    counts = {1: 10_000, 2: 100, 3: 30}.get(space.dim, 12)
    return lattice(window[0], window[1], [counts] * space.dim)


def _resolve_window(domain: Domain, window):
    if window is None:
        b = domain.bounds()
        if b is None:
            raise ValueError("unbounded domain: a bounded window is required")
        return np.asarray(b[0], float), np.asarray(b[1], float)
    lo, hi = (np.asarray(w, float) for w in window)
    if lo.shape != (domain.space.dim,) or np.any(lo >= hi):
        raise ValueError("bad window")
    return lo, hi


def _band_candidates(domain: Domain, window, r0: float, k: int, factor: float) -> np.ndarray:
    space = domain.space
    sep = float(band_separation(r0, k))
    spacing = _cell_scale(space, sep / factor)
    lo, hi = window
    counts = np.maximum(1, np.ceil((hi - lo) / spacing).astype(int))
    if np.prod(counts.astype(float)) > _MAX_CANDIDATES:
        raise ValueError(f"band {k} needs {int(np.prod(counts.astype(float)))} candidates; lower k_max")
    pts = lattice(lo, hi, counts)
    d = domain.raw_distance(pts)
    pts = pts[d > 0]
    if len(pts) == 0:
        return pts
    kk = band_index(domain, pts)
    return pts[kk == k]


def build_covering(domain: Domain, r0: float, beta: float, window=None, k_max: int | None = None,
                   verification: np.ndarray | None = None, candidate_factor: float = 2.5,
                   verify: bool = True, strict: bool = True) -> Covering:
    """Greedy Whitney covering of {x in window : d(x) > 2^-k_max}.

    The candidate spacing sep/candidate_factor with a half-integer factor
    makes exact ties sep == |x - y| between lattice points impossible.
    Verification points left uncovered after the lattice pass are offered
    to their band's greedy selector as additional candidates, which keeps the
    family separated and maximal over the enlarged candidate set.

    ``strict=False`` lets r0 >= beta/10 through so that the resulting
    admissibility failures can be measured instead of refused.
    """
    if not 0 < beta < 1:
        raise ValueError("beta must lie in (0, 1)")
    if not r0 > 0 or (strict and not r0 < beta / 10):
        raise ValueError(f"r0 must satisfy 0 < r0 < beta/10 = {beta / 10}")
    space = domain.space
    window = _resolve_window(domain, window)
    if k_max is None:
        k_max = _default_k_max(space)
    if verification is None:
        verification = default_verification_lattice(domain, window, space)
    verification = np.asarray(verification, float).reshape(-1, space.dim)

    probe = lattice(window[0], window[1], [64] * space.dim if space.dim < 3 else [24] * space.dim)
    if not np.any(domain.raw_distance(probe) > 0) and not np.any(domain.raw_distance(verification) > 0):
        raise ValueError("domain window is empty")

    selectors = {}
    for k in range(k_max + 1):
        cand = _band_candidates(domain, window, r0, k, candidate_factor)
        if len(cand) == 0:
            continue
        g = _Greedy(space, float(band_separation(r0, k)))
        for p in cand:
            g.offer(p)
        selectors[k] = g

    def assemble():
        cs, ks = [], []
        for k in sorted(selectors):
            cs.extend(selectors[k].chosen)
            ks.extend([k] * len(selectors[k].chosen))
        cs = np.asarray(cs, float).reshape(-1, space.dim)
        ks = np.asarray(ks, int)
        return cs, ks

    centers, bands = assemble()
    vpts = _covered_region(domain, verification, k_max)
    if len(vpts):
        counts = _overlap_counts(space, centers, band_separation(r0, bands), vpts)
        missing = vpts[counts == 0]
        if len(missing):
            mk = band_index(domain, missing)
            for k in sorted(set(mk.tolist())):
                g = selectors.setdefault(k, _Greedy(space, float(band_separation(r0, k))))
                for p in missing[mk == k]:
                    g.offer(p)
            centers, bands = assemble()

    radii = band_separation(r0, bands)
    edge = _edge_flags(domain, window, centers, radii)
    cov = Covering(domain, r0, beta, k_max, (window[0], window[1]), centers, radii, bands, edge)
    if verify:
        cov.report = verify_covering(cov, verification)
    return cov


def _covered_region(domain: Domain, pts: np.ndarray, k_max: int) -> np.ndarray:
    d = domain.raw_distance(pts)
    return pts[d > 2.0 ** (-k_max)]


def _edge_flags(domain, window, centers, radii):
    """Balls whose double reaches outside the window while the domain continues."""
    if len(centers) == 0:
        return np.zeros(0, bool)
    lo, hi = window
    reach = np.tile(2 * radii[:, None], (1, domain.space.dim))
    if domain.space.kind == PARABOLIC:
        reach[:, -1] = (2 * radii) ** 2
    b = domain.bounds()
    dlo = np.full(domain.space.dim, -np.inf) if b is None else b[0]
    dhi = np.full(domain.space.dim, np.inf) if b is None else b[1]
    out_lo = (centers - reach < lo) & (lo > dlo)
    out_hi = (centers + reach > hi) & (hi < dhi)
    return np.any(out_lo | out_hi, axis=1)


def _scaled_tree_coords(space: MetricSpace, pts: np.ndarray, r: float) -> np.ndarray:
    if space.kind == PARABOLIC:
        pts = pts.copy()
        pts[:, -1] = pts[:, -1] / r
    return pts


def _overlap_counts(space: MetricSpace, centers, radii, pts) -> np.ndarray:
    """Number of balls B(c, r) with d(x, c) < r for each x in pts."""
    counts = np.zeros(len(pts), int)
    if len(centers) == 0:
        return counts
    for r in np.unique(radii):
        sel = centers[radii == r]
        p_norm = np.inf if space.kind == PARABOLIC else 2
        tree = cKDTree(_scaled_tree_coords(space, sel, r))
        hits = tree.query_ball_point(_scaled_tree_coords(space, pts, r), r, p=p_norm)
        for i, idx in enumerate(hits):
            if idx:
                d = space.distance(pts[i], sel[idx])
                counts[i] += int(np.count_nonzero(d < r))
    return counts


def verify_covering(c: Covering, points: Iterable) -> CoveringReport:
    """Certify the covering properties on a verification lattice.

    Points below the covered layer d <= 2^-k_max are excluded and counted.
    Balls flagged as window-edge balls are left out of the family, radius and
    containment checks.
    """
    space = c.space
    pts = np.asarray(points, float).reshape(-1, space.dim)
    inside = pts[c.domain.raw_distance(pts) > 0]
    vpts = _covered_region(c.domain, inside, c.k_max)
    n_excl = len(inside) - len(vpts)
    counts = _overlap_counts(space, c.centers, c.radii, vpts)
    coverage = float(np.mean(counts > 0)) if len(vpts) else 1.0
    max_overlap = int(counts.max()) if len(vpts) else 0

    keep = ~c.edge
    cen, rad, bands = c.centers[keep], c.radii[keep], c.bands[keep]
    d = c.domain.raw_distance(cen) if len(cen) else np.zeros(0)
    family_viol = int(np.count_nonzero(~(10 * rad < c.beta * d)))
    g = bands == 0
    rad_viol = int(np.count_nonzero(g & ((rad != c.r0) | ~(d > 1))))
    gt = ~g
    rad_viol += int(np.count_nonzero(gt & ((d > 1) | (rad < 0.5 * c.r0 * d) | (rad > c.r0 * d))))

    p3, npairs = _containment_violations(space, cen, rad)
    sep_viol = 0
    for k in np.unique(c.bands):
        sel = c.centers[c.bands == k]
        s = float(band_separation(c.r0, k))
        sep_viol += _close_pairs(space, sel, s)
    return CoveringReport(len(vpts), n_excl, coverage, max_overlap, p3, family_viol, rad_viol,
                          sep_viol, npairs)


def _close_pairs(space: MetricSpace, pts: np.ndarray, s: float) -> int:
    """Count pairs at distance < s (the greedy guarantees >= s)."""
    if len(pts) < 2:
        return 0
    p_norm = np.inf if space.kind == PARABOLIC else 2
    tree = cKDTree(_scaled_tree_coords(space, pts, s))
    pairs = tree.query_pairs(s, p=p_norm, output_type="ndarray")
    if len(pairs) == 0:
        return 0
    d = space.distance(pts[pairs[:, 0]], pts[pairs[:, 1]])
    return int(np.count_nonzero(d < s))


def _containment_violations(space: MetricSpace, centers, radii) -> tuple[int, int]:
    """Pairs that may intersect but fail B in 5B' or B' in 5B.

    Containment is certified through d(x_B, x_B') + r_B <= 5 r_B', which is
    exact for Euclidean balls and sufficient for parabolic ones.
    """
    if len(centers) < 2:
        return 0, 0
    viol = 0
    npairs = 0
    rmax = float(radii.max())
    # scale time by the largest radius so a Chebyshev box bounds every parabolic ball
    coords = _scaled_tree_coords(space, centers, rmax)
    p_norm = np.inf if space.kind == PARABOLIC else 2
    tree = cKDTree(coords)
    for r in np.unique(radii):
        idx = np.nonzero(radii == r)[0]
        # any intersecting partner lies within r + rmax
        reach = r + rmax
        if space.kind == PARABOLIC:
            reach = max(reach, reach * reach / rmax)
        hits = tree.query_ball_point(coords[idx], reach, p=p_norm)
        for i, nb in zip(idx, hits):
            nb = np.asarray([j for j in nb if j > i], int)
            if len(nb) == 0:
                continue
            dd = space.distance(centers[i], centers[nb])
            meet = dd < radii[i] + radii[nb]
            nb, dd = nb[meet], dd[meet]
            npairs += len(nb)
            bad = (dd + radii[i] > 5 * radii[nb]) | (dd + radii[nb] > 5 * radii[i])
            viol += int(np.count_nonzero(bad))
    return viol, npairs


# --------------------------------------------------------------------------
# Cutoff functions
# --------------------------------------------------------------------------


def smoothstep5(t):
    """Degree-5 smoothstep: value 0/1 with vanishing first and second
    derivatives at t = 0 and t = 1."""
    t = np.clip(t, 0.0, 1.0)
    return t * t * t * (10.0 - 15.0 * t + 6.0 * t * t)


PARABOLIC_OUTER = 2.0 ** 0.75


@dataclass
class BumpFamily:
    """eta_i = 1 on B_i, 0 outside 2B_i, smooth in between.

    Euclidean bumps are radial in |y - x_i| / r_i.  Parabolic bumps use the
    smooth gauge (|y' - x'|^4 + (s - t)^2)^{1/4}, which lies between
    2^{-1/4} d and d, with the transition placed on [1, 2^{3/4}] in units of
    r_i so that the support stays inside 2B_i.
    """
    space: MetricSpace
    centers: np.ndarray
    radii: np.ndarray
    derivative_bounds: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.radii)

    def _gauge(self, i, y):
        diff = np.asarray(y, float) - self.centers[i]
        if self.space.kind == EUCLIDEAN:
            return np.sqrt(np.sum(diff * diff, axis=-1))
        sp = np.sum(diff[..., :-1] ** 2, axis=-1)
        return (sp * sp + diff[..., -1] ** 2) ** 0.25

    def eval(self, i: int, y) -> np.ndarray:
        u = self._gauge(i, y) / self.radii[i]
        outer = 2.0 if self.space.kind == EUCLIDEAN else PARABOLIC_OUTER
        return 1.0 - smoothstep5((u - 1.0) / (outer - 1.0))

    def total(self, y) -> np.ndarray:
        y = np.asarray(y, float).reshape(-1, self.space.dim)
        out = np.zeros(len(y))
        for i in range(len(self)):
            out += self.eval(i, y)
        return out

    def measure_derivative_bounds(self, samples_per_ball: int = 64, step_frac: float = 1e-3,
                                  max_balls: int | None = None, seed: int = 0) -> dict:
        """Finite-difference sweep of sup_i |D^a eta_i| r_i^{|a|} for |a| <= 2
        (time derivatives scaled by r_i^2)."""
        rng = np.random.default_rng(seed)
        dim = self.space.dim
        n_sp = self.space.n
        parab = self.space.kind == PARABOLIC
        sup = {0: 0.0, 1: 0.0, 2: 0.0, "t": 0.0}
        idx = np.arange(len(self))
        if max_balls is not None and len(idx) > max_balls:
            idx = rng.choice(idx, max_balls, replace=False)
        for i in idx:
            r = self.radii[i]
            # samples in the transition shell and slightly beyond
            dirs = rng.normal(size=(samples_per_ball, dim))
            dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
            rad = r * rng.uniform(0.9, 2.1, size=(samples_per_ball, 1))
            pts = self.centers[i] + dirs * rad
            if parab:
                pts[:, -1] = self.centers[i][-1] + dirs[:, -1] * rad[:, 0] ** 2
            hs = np.full(dim, step_frac * r)
            if parab:
                hs[-1] = step_frac * r * r
            f0 = self.eval(i, pts)
            sup[0] = max(sup[0], float(np.max(np.abs(f0))))
            for a in range(n_sp):
                ea = np.zeros(dim)
                ea[a] = hs[a]
                fp, fm = self.eval(i, pts + ea), self.eval(i, pts - ea)
                d1 = (fp - fm) / (2 * hs[a])
                sup[1] = max(sup[1], float(np.max(np.abs(d1))) * r)
                for b in range(a, n_sp):
                    if a == b:
                        d2 = (fp - 2 * f0 + fm) / hs[a] ** 2
                    else:
                        eb = np.zeros(dim)
                        eb[b] = hs[b]
                        d2 = (self.eval(i, pts + ea + eb) - self.eval(i, pts + ea - eb)
                              - self.eval(i, pts - ea + eb) + self.eval(i, pts - ea - eb)) / (4 * hs[a] * hs[b])
                    sup[2] = max(sup[2], float(np.max(np.abs(d2))) * r * r)
            if parab:
                et = np.zeros(dim)
                et[-1] = hs[-1]
                dt = (self.eval(i, pts + et) - self.eval(i, pts - et)) / (2 * hs[-1])
                sup["t"] = max(sup["t"], float(np.max(np.abs(dt))) * r * r)
        sup["C"] = max(v for k, v in sup.items() if k != 0)
        self.derivative_bounds = sup
        return sup


def bump_family(c: Covering) -> BumpFamily:
    return BumpFamily(c.space, c.centers.copy(), c.radii.copy())
