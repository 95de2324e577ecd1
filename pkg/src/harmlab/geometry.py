"""Metric spaces, domains with exact distance-to-complement, balls and the
local ball families F_beta.

Points are numpy arrays whose last axis holds coordinates.  In the parabolic
space R^{n+1} the last coordinate is time, so a point is ``(x'_1, ..., x'_n, t)``.
Every distance routine broadcasts over leading axes.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

EUCLIDEAN = "euclidean"
PARABOLIC = "parabolic"


class OutsideDomainError(ValueError):
    """A point that had to lie inside the domain does not."""


def unit_ball_volume(n: int) -> float:
    return math.pi ** (n / 2) / math.gamma(n / 2 + 1)


@dataclass(frozen=True)
class MetricSpace:
    kind: str
    n: int

    def __post_init__(self):
        if self.kind not in (EUCLIDEAN, PARABOLIC):
            raise ValueError(f"unknown metric kind {self.kind!r}")
        if self.n < 1:
            raise ValueError("spatial dimension must be positive")

    @property
    def dim(self) -> int:
        """Number of coordinates of a point."""
        return self.n + 1 if self.kind == PARABOLIC else self.n

    @property
    def homogeneous_dim(self) -> int:
        return self.n + 2 if self.kind == PARABOLIC else self.n

    @property
    def volume_constant(self) -> float:
        """c with |B(x, r)| = c r^Q."""
        if self.kind == EUCLIDEAN:
            return unit_ball_volume(self.n)
        return 4.0 * unit_ball_volume(self.n) / (self.n + 2)

    def ball_volume(self, r):
        return self.volume_constant * np.asarray(r, dtype=float) ** self.homogeneous_dim

    def check(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.ndim == 0 or x.shape[-1] != self.dim:
            raise ValueError(
                f"point of shape {x.shape} incompatible with {self.kind} space of dim {self.dim}")
        return x

    def distance(self, x, y) -> np.ndarray:
        x = self.check(x)
        y = self.check(y)
        diff = x - y
        if self.kind == EUCLIDEAN:
            return np.sqrt(np.sum(diff * diff, axis=-1))
        sp = diff[..., :-1]
        return np.sqrt(np.sum(sp * sp, axis=-1) + np.abs(diff[..., -1]))


def euclidean(n: int) -> MetricSpace:
    return MetricSpace(EUCLIDEAN, n)


def parabolic(n: int) -> MetricSpace:
    return MetricSpace(PARABOLIC, n)


def distance(space: MetricSpace, x, y):
    d = space.distance(x, y)
    return float(d) if np.ndim(d) == 0 else d


# --------------------------------------------------------------------------
# Domains
# --------------------------------------------------------------------------


class Domain:
    """Open set described through its exact distance to the complement."""

    space: MetricSpace

    def _dist(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def raw_distance(self, x) -> np.ndarray:
        """Signed-free distance to the complement, 0 for points outside."""
        x = self.space.check(x)
        return np.maximum(self._dist(x), 0.0)

    def contains(self, x) -> np.ndarray:
        return self.raw_distance(x) > 0

    def bounds(self) -> tuple[np.ndarray, np.ndarray] | None:
        """Axis-aligned bounding box if finite, else None."""
        return None

    def describe(self) -> str:
        return type(self).__name__


@dataclass(frozen=True)
class Box(Domain):
    """Open box prod (lo_i, hi_i); bounds may be infinite.

    In the parabolic space the time faces are at parabolic distance
    sqrt(|t - face|).
    """
    space: MetricSpace
    lo: tuple
    hi: tuple

    def __post_init__(self):
        lo = tuple(float(v) for v in self.lo)
        hi = tuple(float(v) for v in self.hi)
        if len(lo) != self.space.dim or len(hi) != self.space.dim:
            raise ValueError("box bounds do not match the space dimension")
        if any(a >= b for a, b in zip(lo, hi)):
            raise ValueError("empty box")
        if all(math.isinf(a) and math.isinf(b) for a, b in zip(lo, hi)):
            raise ValueError("box is the whole space, not a proper subset")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    def _dist(self, x):
        gaps = np.minimum(x - np.asarray(self.lo), np.asarray(self.hi) - x)
        if self.space.kind == PARABOLIC:
            gaps = gaps.copy()
            t = gaps[..., -1]
            gaps[..., -1] = np.sign(t) * np.sqrt(np.abs(t))
        return np.min(gaps, axis=-1)

    def bounds(self):
        lo, hi = np.asarray(self.lo), np.asarray(self.hi)
        if np.all(np.isfinite(lo)) and np.all(np.isfinite(hi)):
            return lo, hi
        return None

    def describe(self):
        return f"Box({list(self.lo)}, {list(self.hi)})"


@dataclass(frozen=True)
class BallRegion(Domain):
    """Open Euclidean ball."""
    space: MetricSpace
    center: tuple
    radius: float

    def __post_init__(self):
        if self.space.kind != EUCLIDEAN:
            raise ValueError("ball regions are only exact in the Euclidean space")
        object.__setattr__(self, "center", tuple(float(v) for v in self.center))

    def _dist(self, x):
        return self.radius - self.space.distance(x, np.asarray(self.center))

    def bounds(self):
        c = np.asarray(self.center)
        return c - self.radius, c + self.radius


@dataclass(frozen=True)
class HalfSpace(Domain):
    """{x : <normal, x> > offset} in the Euclidean space."""
    space: MetricSpace
    normal: tuple
    offset: float = 0.0

    def __post_init__(self):
        if self.space.kind != EUCLIDEAN:
            raise ValueError("half spaces are only exact in the Euclidean space")
        nrm = np.asarray(self.normal, dtype=float)
        norm = float(np.linalg.norm(nrm))
        if norm == 0:
            raise ValueError("zero normal")
        object.__setattr__(self, "normal", tuple(float(v) for v in nrm / norm))
        object.__setattr__(self, "offset", float(self.offset) / norm)

    def _dist(self, x):
        return x @ np.asarray(self.normal) - self.offset


@dataclass(frozen=True)
class Exterior(Domain):
    """Complement of the closed Euclidean ball; radius 0 punctures one point."""
    space: MetricSpace
    center: tuple
    radius: float = 0.0

    def __post_init__(self):
        if self.space.kind != EUCLIDEAN:
            raise ValueError("exterior regions are only exact in the Euclidean space")
        object.__setattr__(self, "center", tuple(float(v) for v in self.center))

    def _dist(self, x):
        return self.space.distance(x, np.asarray(self.center)) - self.radius


@dataclass(frozen=True)
class Intersection(Domain):
    """Intersection; the complement is a union so the minimum is exact."""
    parts: tuple

    def __post_init__(self):
        object.__setattr__(self, "parts", tuple(self.parts))
        if not self.parts:
            raise ValueError("empty intersection")
        if len({p.space for p in self.parts}) != 1:
            raise ValueError("parts live in different spaces")

    @property
    def space(self):
        return self.parts[0].space

    def _dist(self, x):
        return np.min(np.stack([p._dist(x) for p in self.parts]), axis=0)

    def bounds(self):
        bs = [p.bounds() for p in self.parts if p.bounds() is not None]
        if not bs:
            return None
        return np.max([b[0] for b in bs], axis=0), np.min([b[1] for b in bs], axis=0)


@dataclass(frozen=True)
class Union(Domain):
    """Finite union.

    The maximum of the parts' distances is a lower bound for the distance to
    the complement and is exact when the parts have disjoint closures, which
    is the case used for multi-component test domains.
    """
    parts: tuple

    def __post_init__(self):
        object.__setattr__(self, "parts", tuple(self.parts))
        if not self.parts:
            raise ValueError("empty union")
        if len({p.space for p in self.parts}) != 1:
            raise ValueError("parts live in different spaces")

    @property
    def space(self):
        return self.parts[0].space

    def _dist(self, x):
        return np.max(np.stack([p._dist(x) for p in self.parts]), axis=0)

    def bounds(self):
        bs = [p.bounds() for p in self.parts]
        if any(b is None for b in bs):
            return None
        return np.min([b[0] for b in bs], axis=0), np.max([b[1] for b in bs], axis=0)


@dataclass(frozen=True)
class Cylinder(Domain):
    """Omega_T = Omega x (0, T) in the parabolic space over a Euclidean Omega."""
    base: Domain
    T: float

    def __post_init__(self):
        if self.base.space.kind != EUCLIDEAN:
            raise ValueError("cylinder base must be Euclidean")
        if not self.T > 0:
            raise ValueError("T must be positive")

    @property
    def space(self):
        return parabolic(self.base.space.n)

    def _dist(self, x):
        t = x[..., -1]
        tgap = np.minimum(t, self.T - t)
        tdist = np.sign(tgap) * np.sqrt(np.abs(tgap))
        return np.minimum(self.base._dist(x[..., :-1]), tdist)

    def bounds(self):
        b = self.base.bounds()
        if b is None:
            return None
        return np.append(b[0], 0.0), np.append(b[1], self.T)


@dataclass(frozen=True)
class Implicit(Domain):
    """User-supplied distance evaluator (trusted to be exact)."""
    space: MetricSpace
    fn: Callable = field(compare=False)
    name: str = "implicit"
    box: tuple | None = None

    def _dist(self, x):
        return np.asarray(self.fn(x), dtype=float)

    def bounds(self):
        if self.box is None:
            return None
        return np.asarray(self.box[0], float), np.asarray(self.box[1], float)


def interval(a: float, b: float) -> Box:
    return Box(euclidean(1), (a,), (b,))


def unit_cube(n: int) -> Box:
    return Box(euclidean(n), (0.0,) * n, (1.0,) * n)


def dist_to_complement(domain: Domain, x):
    """Exact d(x, Lambda^c); raises OutsideDomainError for points outside."""
    x = domain.space.check(x)
    d = domain._dist(x)
    if np.any(d <= 0):
        raise OutsideDomainError("point outside the domain")
    return float(d) if np.ndim(d) == 0 else d


def delta(domain: Domain, x):
    """min{1, d(x, Lambda^c)}."""
    d = np.minimum(1.0, dist_to_complement(domain, x))
    return float(d) if np.ndim(d) == 0 else d


# --------------------------------------------------------------------------
# Balls and local families
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Ball:
    center: tuple
    radius: float
    space: MetricSpace

    def __post_init__(self):
        c = tuple(float(v) for v in np.atleast_1d(self.center))
        if len(c) != self.space.dim:
            raise ValueError("ball center does not match the space dimension")
        if not self.radius > 0:
            raise ValueError("ball radius must be positive")
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "radius", float(self.radius))

    @property
    def c(self) -> np.ndarray:
        return np.asarray(self.center)

    def scaled(self, factor: float) -> "Ball":
        return Ball(self.center, factor * self.radius, self.space)

    def contains(self, x) -> np.ndarray:
        return self.space.distance(x, self.c) < self.radius

    @property
    def volume(self) -> float:
        return float(self.space.ball_volume(self.radius))


@dataclass(frozen=True)
class BallFamilySpec:
    """F_beta = {B : r_B < beta d(x_B, Lambda^c)}."""
    beta: float
    domain: Domain

    def __post_init__(self):
        if not 0 < self.beta < 1:
            raise ValueError("beta must lie in (0, 1)")

    def radius_cap(self, centers) -> np.ndarray:
        return self.beta * self.domain.raw_distance(centers)

    def admits(self, centers, radii) -> np.ndarray:
        """Vectorised membership test on (center, radius) arrays."""
        return np.asarray(radii) < self.radius_cap(centers)


def in_family(spec: BallFamilySpec, B: Ball) -> bool:
    d = dist_to_complement(spec.domain, B.c)
    return bool(B.radius < spec.beta * d)


@dataclass(frozen=True)
class ShrinkResult:
    bound_holds: bool
    derived_ball: Ball
    lhs: float
    rhs: float


def shrink_lemma_check(domain: Domain, alpha: float, beta: float, B0: Ball, x) -> ShrinkResult:
    """For alpha*B0 in F_beta and x in B0, check r0 < beta/(alpha-beta) d(x)
    and that B(x, (alpha-beta) r0) is again in F_beta."""
    if not alpha > 1:
        raise ValueError("alpha must exceed 1")
    spec = BallFamilySpec(beta, domain)
    if not in_family(spec, B0.scaled(alpha)):
        raise ValueError("precondition violated: alpha*B0 not in F_beta")
    x = domain.space.check(x)
    if not B0.contains(x):
        raise ValueError("precondition violated: x not in B0")
    dx = dist_to_complement(domain, x)
    rhs = beta / (alpha - beta) * dx
    derived = Ball(tuple(x), (alpha - beta) * B0.radius, domain.space)
    ok = B0.radius < rhs and in_family(spec, derived)
    return ShrinkResult(bool(ok), derived, B0.radius, float(rhs))


def lattice(lo: Sequence[float], hi: Sequence[float], counts: Sequence[int]) -> np.ndarray:
    """Cell-centred lattice of prod(counts) points in the box [lo, hi]."""
    axes = [lo_i + (np.arange(m) + 0.5) * (hi_i - lo_i) / m
            for lo_i, hi_i, m in zip(lo, hi, counts)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=-1)
