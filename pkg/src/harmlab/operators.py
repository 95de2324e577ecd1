"""Schroedinger-type kernels and the positive integral operators built on them.

The basic kernel is

    W(x, y) = V(y) (1 + d(x,y)/rho(xi))^(-k) d(x,y)^(-s)

with s = n - 2 (elliptic, Euclidean distance) or s = n (parabolic distance,
V and rho read at the spatial part).  ``rho_at`` picks xi = x or xi = y.
With the default ``rho_at="y"`` the operators below are

    S*_k f(x) = int W(x, y) f(y) dy,      S_k f(x) = int W(y, x) f(y) dy,

and S_{k,a}, S*_{k,a} carry the extra factor |a(y) - a(x)|.  All operators
use one discrete kernel (midpoint rule, singular cell integrated exactly in
polar coordinates adapted to the cell), so S_k and S*_k are exact
transposes of each other on a grid.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np
from numpy.polynomial.legendre import leggauss

from .discretization import Grid, GridFunction, weighted_lp_norm
from .geometry import EUCLIDEAN, PARABOLIC, Ball, MetricSpace, euclidean, parabolic
from .maximal import BallEnumeration, local_maximal_q, sharp_maximal_fields
from .oscillation import drift
from .potentials import Potential

BLOCK = 256
DENSE_MAX = 16 ** 3


@dataclass(frozen=True)
class KernelSpec:
    flavor: str
    n: int
    potential: Potential
    k: int | None = None
    rho_at: str = "y"
    rho_const: float | None = None

    def __post_init__(self):
        if self.flavor not in (EUCLIDEAN, PARABOLIC, "elliptic"):
            raise ValueError(f"unknown flavor {self.flavor!r}")
        if self.flavor == "elliptic":
            object.__setattr__(self, "flavor", EUCLIDEAN)
        if self.flavor == EUCLIDEAN and self.n < 3:
            raise ValueError("the elliptic kernel needs n >= 3")
        if self.k is None:
            object.__setattr__(self, "k", self.n + 3)
        if self.k < 1:
            raise ValueError("k must be a positive integer")
        if self.rho_at not in ("x", "y"):
            raise ValueError("rho_at must be 'x' or 'y'")
        if self.potential.n != self.n:
            raise ValueError("potential dimension does not match the kernel")

    @property
    def space(self) -> MetricSpace:
        return euclidean(self.n) if self.flavor == EUCLIDEAN else parabolic(self.n)

    @property
    def singular_exponent(self) -> int:
        return self.n - 2 if self.flavor == EUCLIDEAN else self.n

    def spatial(self, pts) -> np.ndarray:
        pts = np.asarray(pts, dtype=float).reshape(-1, self.space.dim)
        return pts[:, : self.n]

    def V(self, pts) -> np.ndarray:
        return self.potential(self.spatial(pts))

    def rho(self, pts) -> np.ndarray:
        sp = self.spatial(pts)
        if self.rho_const is not None:
            return np.full(len(sp), float(self.rho_const))
        return _rho_cached(self.potential, sp)

    def with_(self, **kw) -> "KernelSpec":
        d = dict(flavor=self.flavor, n=self.n, potential=self.potential, k=self.k,
                 rho_at=self.rho_at, rho_const=self.rho_const)
        d.update(kw)
        return KernelSpec(**d)


def _rho_cached(V: Potential, sp: np.ndarray) -> np.ndarray:
    uniq, inv = np.unique(np.round(sp, 14), axis=0, return_inverse=True)
    return np.atleast_1d(V.rho(uniq))[inv.reshape(-1)]


def kernel_eval(spec: KernelSpec, x, y) -> np.ndarray | float:
    """W(x, y); raises on x = y."""
    xa = np.asarray(x, dtype=float).reshape(-1, spec.space.dim)
    ya = np.asarray(y, dtype=float).reshape(-1, spec.space.dim)
    d = spec.space.distance(xa, ya)
    if np.any(d == 0):
        raise ValueError("kernel is singular at x = y")
    xa, ya = np.broadcast_arrays(xa, ya)
    rho = spec.rho(xa if spec.rho_at == "x" else ya)
    out = spec.V(ya) * (1 + d / rho) ** (-spec.k) * d ** (-spec.singular_exponent)
    return float(out[0]) if out.size == 1 and np.ndim(x) <= 1 and np.ndim(y) <= 1 else out


# --------------------------------------------------------------------------
# Hoermander partial sums
# --------------------------------------------------------------------------


def sphere_rule(n: int, m: int = 24):
    """Nodes and weights on S^(n-1) for n = 1, 2, 3."""
    if n == 1:
        return np.array([[-1.0], [1.0]]), np.array([1.0, 1.0])
    if n == 2:
        phi = 2 * np.pi * (np.arange(2 * m) + 0.5) / (2 * m)
        return np.stack([np.cos(phi), np.sin(phi)], axis=1), np.full(2 * m, np.pi / m)
    if n == 3:
        z, wz = leggauss(m)
        phi = 2 * np.pi * (np.arange(2 * m) + 0.5) / (2 * m)
        Z, P = np.meshgrid(z, phi, indexing="ij")
        s = np.sqrt(1 - Z ** 2)
        om = np.stack([s * np.cos(P), s * np.sin(P), Z], axis=-1).reshape(-1, 3)
        w = (wz[:, None] * np.full(2 * m, np.pi / m)[None, :]).ravel()
        return om, w
    raise ValueError("annulus quadrature is implemented for n <= 3")


def annulus_rule(space: MetricSpace, x0, R: float, m_r: int = 24, m_s: int = 48, m_sph: int = 24):
    """Points and weights for {y : R <= d(x0, y) <= 2R}."""
    x0 = np.asarray(x0, dtype=float)
    n = space.n
    om, wom = sphere_rule(n, m_sph)
    tr, wr = leggauss(m_r)
    Rp = 1.5 * R + 0.5 * R * tr
    wR = 0.5 * R * wr
    if space.kind == EUCLIDEAN:
        pts = x0 + Rp[:, None, None] * om[None, :, :]
        w = (wR * Rp ** (n - 1))[:, None] * wom[None, :]
        return pts.reshape(-1, n), w.ravel()
    ts, ws = leggauss(m_s)
    s = 0.5 + 0.5 * ts
    ws = 0.5 * ws
    RR, SS, OO = np.meshgrid(np.arange(m_r), np.arange(m_s), np.arange(len(om)), indexing="ij")
    Rv, sv, ov = Rp[RR.ravel()], s[SS.ravel()], om[OO.ravel()]
    wv = wR[RR.ravel()] * ws[SS.ravel()] * wom[OO.ravel()] * (Rv * sv) ** (n - 1) * 2 * Rv ** 2
    sp = x0[:n] + (Rv * sv)[:, None] * ov
    tau = Rv ** 2 * (1 - sv ** 2)
    pts = np.concatenate([np.column_stack([sp, x0[n] + tau]), np.column_stack([sp, x0[n] - tau])])
    return pts, np.concatenate([wv, wv])


@dataclass
class HormanderTrace:
    partial_sums: np.ndarray
    increments: np.ndarray
    tail_ratios: np.ndarray

    def converging(self, j0: int = 5) -> bool:
        return bool(np.all(self.tail_ratios[j0:] < 1))


def hormander_partial_sums(spec: KernelSpec, q: float, x, x0, r: float, J_max: int = 20,
                           **rule) -> HormanderTrace:
    """S_J = sum_{j<=J} j |B_j|^(1/q') (int_{annulus j} |W(x,y) - W(x0,y)|^q dy)^(1/q).

    |B_j| is the Euclidean ball volume (elliptic) or (2^j r)^(n+2)
    (parabolic); the annulus is 2^j r <= d(x0, y) <= 2^(j+1) r."""
    space = spec.space
    x = np.asarray(x, dtype=float)
    x0 = np.asarray(x0, dtype=float)
    if not float(np.ravel(space.distance(x, x0))[0]) < r:
        raise ValueError("need d(x, x0) < r")
    qp = q / (q - 1)
    inc = np.empty(J_max)
    for j in range(1, J_max + 1):
        R = 2.0 ** j * r
        pts, w = annulus_rule(space, x0, R, **rule)
        diff = np.abs(kernel_eval(spec, x, pts) - kernel_eval(spec, x0, pts))
        integral = float(np.sum(w * diff ** q))
        vol = space.ball_volume(R) if space.kind == EUCLIDEAN else R ** (space.n + 2)
        inc[j - 1] = j * vol ** (1 / qp) * integral ** (1 / q)
    S = np.cumsum(inc)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = np.where(inc[:-1] > 0, inc[1:] / inc[:-1], 0.0)
    return HormanderTrace(S, inc, np.concatenate([[np.nan], ratios]))


# --------------------------------------------------------------------------
# Singular cell
# --------------------------------------------------------------------------


@lru_cache(maxsize=16)
def _cell_rule(kind: str, n: int, halfwidths: tuple, m_f: int = 10, m_s: int = 16):
    """Nodes (d(v), s, weight) for int_cell F(z) dz = sum w F(delta_s v)
    over the faces of the cell, with the factor s^(Q-1) folded into w."""
    dim = len(halfwidths)
    a = np.asarray(halfwidths)
    tf, wf = leggauss(m_f)
    ts, ws = leggauss(m_s)
    s = 0.5 + 0.5 * ts
    ws = 0.5 * ws
    Q = n + 2 if kind == PARABOLIC else n
    dv_all, w_all = [], []
    for i in range(dim):
        others = [j for j in range(dim) if j != i]
        grids = np.meshgrid(*[a[j] * tf for j in others], indexing="ij")
        wgrid = np.ones_like(grids[0]) if others else np.ones(1)
        for jj, j in enumerate(others):
            shape = [1] * len(others)
            shape[jj] = m_f
            wgrid = wgrid * (a[j] * wf).reshape(shape)
        for sign in (-1.0, 1.0):
            v = np.zeros((wgrid.size, dim))
            v[:, i] = sign * a[i]
            for jj, j in enumerate(others):
                v[:, j] = grids[jj].ravel()
            if kind == PARABOLIC:
                dv = np.sqrt(np.sum(v[:, :n] ** 2, axis=1) + np.abs(v[:, n]))
                lam = 2.0 if i == n else 1.0
            else:
                dv = np.linalg.norm(v, axis=1)
                lam = 1.0
            dv_all.append(dv)
            w_all.append(wgrid.ravel() * lam * a[i])
    dv = np.concatenate(dv_all)
    wv = np.concatenate(w_all)
    D, S = np.meshgrid(dv, s, indexing="ij")
    W = (wv[:, None] * ws[None, :]) * S ** (Q - 1)
    return D.ravel(), S.ravel(), W.ravel()


def cell_integral(spec: KernelSpec, spacing, rho) -> np.ndarray:
    """int over the grid cell centred at 0 of (1 + d(z)/rho)^-k d(z)^-s dz."""
    half = tuple(float(h) / 2 for h in spacing)
    D, S, W = _cell_rule(spec.space.kind, spec.n, half)
    rho = np.atleast_1d(np.asarray(rho, dtype=float))
    uniq, inv = np.unique(rho, return_inverse=True)
    dist = S * D
    base = W * dist ** (-spec.singular_exponent)
    return _profile_sums(base, dist, uniq, spec.k)[inv.reshape(-1)]


def _profile_sums(base: np.ndarray, d: np.ndarray, rhos: np.ndarray, k: int,
                  chunk: int = 4_000_000) -> np.ndarray:
    """sum_i base_i (1 + d_i / rho)^-k for every rho."""
    out = np.empty(len(rhos))
    step = max(1, chunk // max(len(d), 1))
    for s0 in range(0, len(rhos), step):
        r = rhos[s0:s0 + step, None]
        out[s0:s0 + step] = ((1 + d[None, :] / r) ** (-k)) @ base
    return out


NEAR = 2


class NearField:
    """Exact cell integrals of the kernel profile on the cells within
    NEAR nodes (sup norm) of the singular point, one row per rho value."""

    def __init__(self, spec: KernelSpec, spacing, rhos, m: int = 6):
        dim = spec.space.dim
        self.width = 2 * NEAR + 1
        offs = np.array(list(itertools.product(range(-NEAR, NEAR + 1), repeat=dim)))
        t, w = leggauss(m)
        sp = np.asarray(spacing, dtype=float)
        mesh = np.meshgrid(*[t] * dim, indexing="ij")
        unit = np.stack([g.ravel() for g in mesh], axis=1)
        wt = np.prod(np.meshgrid(*[w] * dim, indexing="ij"), axis=0).ravel() * np.prod(sp / 2)
        zero = np.zeros(dim)
        rhos = np.atleast_1d(np.asarray(rhos, dtype=float))
        table = np.empty((len(rhos), len(offs)))
        for j, o in enumerate(offs):
            if not o.any():
                table[:, j] = cell_integral(spec, sp, rhos)
                continue
            z = (o + unit / 2) * sp
            d = spec.space.distance(z, zero)
            base = wt * d ** (-spec.singular_exponent)
            table[:, j] = _profile_sums(base, d, rhos, spec.k)
        self.table = table

    def code(self, offs: np.ndarray) -> np.ndarray:
        c = np.zeros(offs.shape[:-1], dtype=np.int64)
        for a in range(offs.shape[-1]):
            c = c * self.width + (offs[..., a] + NEAR)
        return c

    def value(self, offs: np.ndarray, rho_index: np.ndarray) -> np.ndarray:
        return self.table[rho_index, self.code(offs)]


def radial_reference(spec: KernelSpec, R: float, rho: float = 1.0, m: int = 4000) -> float:
    """int_{|z| < R} (1 + |z|/rho)^-k |z|^-(n-2) dz by 1-D radial quadrature (elliptic)."""
    if spec.flavor != EUCLIDEAN:
        raise ValueError("radial reference is elliptic only")
    n = spec.n
    t, w = leggauss(m)
    r = 0.5 * R * (t + 1)
    area = 2 * math.pi ** (n / 2) / math.gamma(n / 2)
    return float(area * np.sum(0.5 * R * w * (1 + r / rho) ** (-spec.k) * r))


# --------------------------------------------------------------------------
# Discrete operators
# --------------------------------------------------------------------------


@dataclass
class DiscreteKernel:
    """Quadrature weights W(x_i, y_j) * cell volume on a node set.  Cells
    within NEAR nodes of x_i (including the singular one) get exact cell
    integrals of the kernel instead of the midpoint value."""

    spec: KernelSpec
    grid: Grid
    nodes: np.ndarray      # (N, dim) node coordinates
    index: tuple           # grid indices of the nodes

    @classmethod
    def on(cls, spec: KernelSpec, grid: Grid, region=None) -> "DiscreteKernel":
        if grid.space != spec.space:
            raise ValueError("grid and kernel live on different spaces")
        keep = grid.region_mask(region)
        idx = np.nonzero(keep)
        return cls(spec, grid, grid.points[idx], idx)

    def __post_init__(self):
        s = self.spec
        self.Vn = s.V(self.nodes)
        self.rhon = s.rho(self.nodes)
        uniq, self.rho_id = np.unique(self.rhon, return_inverse=True)
        self.rho_id = self.rho_id.reshape(-1)
        self.near = NearField(s, self.grid.spacing, uniq)
        self.ijk = np.stack(self.index, axis=1).astype(np.int32)
        self.vol = self.grid.cell_volume

    def block(self, rows: slice) -> np.ndarray:
        """Rows x_i, columns y_j of W(x_i, y_j) * cellvol."""
        s = self.spec
        X = self.nodes[rows]
        d = s.space.distance(X[:, None, :], self.nodes[None, :, :])
        rho = self.rhon[rows][:, None] if s.rho_at == "x" else self.rhon[None, :]
        with np.errstate(divide="ignore"):
            K = self.Vn[None, :] * (1 + d / rho) ** (-s.k) * d ** (-s.singular_exponent) * self.vol
        O = self.ijk[None, :, :] - self.ijk[rows][:, None, :]
        ri, cj = np.nonzero(np.all(np.abs(O) <= NEAR, axis=2))
        rid = self.rho_id[rows][ri] if s.rho_at == "x" else self.rho_id[cj]
        K[ri, cj] = self.Vn[cj] * self.near.value(O[ri, cj], rid)
        return K

    def dense(self, a: np.ndarray | None = None) -> np.ndarray:
        """The full weight matrix (only for at most DENSE_MAX nodes)."""
        N = len(self.nodes)
        if N > DENSE_MAX:
            raise MemoryError(f"{N} nodes: use matvec")
        if getattr(self, "_dense", None) is None:
            self._dense = np.zeros((0, 0)) if N == 0 else np.vstack([self.block(slice(s0, min(s0 + BLOCK, N))) for s0 in range(0, N, BLOCK)])
        if a is None:
            return self._dense
        return self._dense * np.abs(a[None, :] - a[:, None])

    def matvec(self, f: np.ndarray, transpose: bool = False, a: np.ndarray | None = None) -> np.ndarray:
        """sum_j W(x_i, y_j) f_j (or the transpose), times |a_j - a_i| if given."""
        N = len(self.nodes)
        if N <= DENSE_MAX:
            K = self.dense(a)
            return K.T @ f if transpose else K @ f
        out = np.zeros(N)
        for s0 in range(0, N, BLOCK):
            rows = slice(s0, min(s0 + BLOCK, N))
            K = self.block(rows)
            if a is not None:
                K = K * np.abs(a[None, :] - a[rows][:, None])
            if transpose:
                out += K.T @ f[rows]
            else:
                out[rows] = K @ f
        return out


def _values(kern: DiscreteKernel, f) -> np.ndarray:
    if isinstance(f, GridFunction):
        v = f.values[kern.index]
        return np.where(np.isfinite(v), v, 0.0)
    if callable(f):
        return np.asarray(f(kern.nodes), dtype=float).reshape(-1)
    return np.asarray(f, dtype=float)


def _a_values(kern: DiscreteKernel, a) -> np.ndarray | None:
    if a is None:
        return None
    return np.asarray(a(kern.nodes), dtype=float).reshape(-1)


def adjoint_field(kern: DiscreteKernel, f, a: Callable | None = None) -> np.ndarray:
    """S*_k f (or S*_{k,a} f) at every node of the kernel."""
    return kern.matvec(_values(kern, f), transpose=False, a=_a_values(kern, a))


def sk_field(kern: DiscreteKernel, f, a: Callable | None = None) -> np.ndarray:
    """S_k f (or S_{k,a} f) at every node of the kernel."""
    return kern.matvec(_values(kern, f), transpose=True, a=_a_values(kern, a))


def commutator_field(kern: DiscreteKernel, b: Callable, f) -> np.ndarray:
    """T_b f(x) = sum_y |b(x) - b(y)| W(x,y) f(y) over the kernel's nodes."""
    return kern.matvec(_values(kern, f), transpose=False, a=_a_values(kern, b))


def _point_row(spec: KernelSpec, grid: Grid, nodes: np.ndarray, x, V_at: str, a=None) -> np.ndarray:
    x = np.asarray(x, dtype=float).reshape(1, spec.space.dim)
    d = spec.space.distance(nodes, x)
    rel = (nodes - x) / grid.spacing
    offs = np.rint(rel).astype(np.int64)
    hit = np.all(np.abs(rel - offs) < 1e-6, axis=1) & np.all(np.abs(offs) <= NEAR, axis=1)
    dd = np.where(d == 0, 1.0, d)
    if V_at == "y":  # W(x, y_j)
        V = spec.V(nodes)
        rho = spec.rho(np.repeat(x, len(nodes), 0)) if spec.rho_at == "x" else spec.rho(nodes)
    else:  # W(y_j, x)
        V = np.full(len(nodes), spec.V(x)[0])
        rho = spec.rho(nodes) if spec.rho_at == "x" else np.full(len(nodes), spec.rho(x)[0])
    row = V * (1 + dd / rho) ** (-spec.k) * dd ** (-spec.singular_exponent) * grid.cell_volume
    if hit.any():
        uniq, inv = np.unique(rho[hit], return_inverse=True)
        row[hit] = V[hit] * NearField(spec, grid.spacing, uniq).value(offs[hit], inv.reshape(-1))
    if a is not None:
        row = row * np.abs(np.asarray(a(nodes)).reshape(-1) - np.asarray(a(x)).reshape(-1)[0])
    return row


def _support(f: GridFunction):
    idx = np.nonzero(f.valid & (f.values != 0))
    return f.grid.points[idx], f.values[idx]


def apply_Sk(spec: KernelSpec, f: GridFunction, x) -> float:
    nodes, v = _support(f)
    return float(_point_row(spec, f.grid, nodes, x, "x") @ v)


def apply_Ska(spec: KernelSpec, a: Callable, f: GridFunction, x) -> float:
    nodes, v = _support(f)
    return float(_point_row(spec, f.grid, nodes, x, "x", a) @ v)


def apply_adjoint(spec: KernelSpec, f: GridFunction, x, a: Callable | None = None) -> float:
    nodes, v = _support(f)
    return float(_point_row(spec, f.grid, nodes, x, "y", a) @ v)


def apply_commutator(spec: KernelSpec, b: Callable, f: GridFunction, x, B0: Ball | None = None) -> float:
    if B0 is not None:
        f = f.restrict(B0)
    nodes, v = _support(f)
    return float(_point_row(spec, f.grid, nodes, x, "y", b) @ v)


def duality_gap(kern: DiscreteKernel, f: np.ndarray, g: np.ndarray, a: Callable | None = None) -> float:
    """|<S f, g> - <f, S* g>| relative to the larger of the two."""
    lhs = float(np.dot(sk_field(kern, f, a), g))
    rhs = float(np.dot(f, adjoint_field(kern, g, a)))
    return abs(lhs - rhs) / max(abs(lhs), abs(rhs), 1e-300)


# --------------------------------------------------------------------------
# Probes
# --------------------------------------------------------------------------


def domination_check(spec: KernelSpec, f: GridFunction, qp: float, beta: float, B0: Ball,
                     samples: np.ndarray | None = None, enum: BallEnumeration | None = None) -> dict:
    """sup over sample nodes of S*_k f(x) / M_{q',loc} f(x).

    Points where both vanish are excluded; a positive operator value over a
    zero maximal value is flagged."""
    if np.any(f.values[f.valid] < 0):
        raise ValueError("f must be nonnegative")
    g = f.grid
    M = local_maximal_q(f, qp, beta, enum=enum).values
    fB = f.restrict(B0)
    kern = DiscreteKernel.on(spec, g, B0)
    S = adjoint_field(kern, fB)
    Mn = M[kern.index]
    if samples is not None:
        sel = np.isin(np.arange(len(S)), samples)
        S, Mn = S[sel], Mn[sel]
    zero = (S == 0) & (Mn == 0)
    flag = bool(np.any((S > 0) & ~(Mn > 0)))
    ratio = S[~zero] / Mn[~zero]
    return {"sup": float(np.max(ratio)) if ratio.size else 0.0, "n_points": int((~zero).sum()),
            "excluded": int(zero.sum()), "coarse_flag": flag}


def probe_functions(kern: DiscreteKernel, seed: int = 0) -> dict:
    """Nonnegative test vectors on the kernel nodes."""
    pts = kern.nodes
    rng = np.random.default_rng(seed)
    c = pts.mean(axis=0)
    r = np.max(kern.grid.space.distance(pts, c))
    dist = kern.grid.space.distance(pts, c)
    fam = {"one": np.ones(len(pts)), "random": rng.uniform(0.0, 1.0, len(pts)),
           "core": (dist < 0.5 * r).astype(float), "shell": (dist >= 0.5 * r).astype(float)}
    spike = np.zeros(len(pts))
    spike[int(np.argmin(dist))] = 1.0
    fam["spike"] = spike
    return {k: v for k, v in fam.items() if v.any()}


def power_norm(apply: Callable, apply_t: Callable, N: int, iters: int = 30, seed: int = 0) -> float:
    """Largest singular value of a nonnegative matrix-free operator."""
    v = np.random.default_rng(seed).uniform(0.5, 1.0, N)
    v /= np.linalg.norm(v)
    s = 0.0
    for _ in range(iters):
        u = apply_t(apply(v))
        nu = np.linalg.norm(u)
        if nu == 0:
            return 0.0
        s = np.sqrt(nu)
        v = u / nu
    return float(s)


def operator_norm_probe(kern: DiscreteKernel, which: str, w=None, p: float = 2.0,
                        a: Callable | None = None, seed: int = 0, power: bool = True) -> dict:
    """sup ||Op f||_{L^p_w(B0)} / ||f||_{L^p_w(B0)} over probe functions
    (plus a power-iteration vector when p = 2 and w = 1)."""
    av = _a_values(kern, a)
    if len(kern.nodes) <= DENSE_MAX:
        K = kern.dense(av)
        ops = {"Sk": lambda v: K.T @ v, "adjoint": lambda v: K @ v}
    else:
        ops = {"Sk": lambda v: kern.matvec(v, True, av), "adjoint": lambda v: kern.matvec(v, False, av)}
    op = ops[which]
    op_t = ops["adjoint" if which == "Sk" else "Sk"]
    wv = np.ones(len(kern.nodes)) if w is None else np.asarray(w(kern.nodes), float)

    def norm(v):
        return float(np.sum(np.abs(v) ** p * wv) ** (1 / p))

    best, arg = 0.0, None
    for name, f in probe_functions(kern, seed).items():
        nf = norm(f)
        if nf > 0:
            r = norm(op(f)) / nf
            if r > best:
                best, arg = r, name
    if power and p == 2 and w is None:
        s = power_norm(op, op_t, len(kern.nodes), seed=seed)
        if s > best:
            best, arg = s, "power"
    return {"norm": best, "argmax": arg}


def vmo_smallness_curve(spec: KernelSpec, a: Callable, z0, r0s: Sequence[float],
                        nodes_per_radius: int = 16, iters: int = 30) -> dict:
    """||S_{k,a}|| on L^2(B(z0, r0)) along a decreasing r0 ladder, raw and
    divided by ||S_k|| on the same ball.  The grid spacing is r0 /
    nodes_per_radius, so every ball carries the same node pattern."""
    from .geometry import Box

    space = spec.space
    z0 = np.asarray(z0, dtype=float)
    raw, base = [], []
    for r0 in r0s:
        h = r0 / nodes_per_radius
        half = np.full(space.dim, r0)
        if space.kind == PARABOLIC:
            half[-1] = r0 * r0
        box = Box(space, tuple(z0 - half), tuple(z0 + half))
        g = Grid.uniform(box, h)
        B0 = Ball(tuple(z0), r0, space)
        kern = DiscreteKernel.on(spec, g, B0)
        av = _a_values(kern, a)
        N = len(kern.nodes)
        K = kern.dense()
        Ka = kern.dense(av)
        raw.append(power_norm(lambda v: Ka.T @ v, lambda v: Ka @ v, N, iters))
        base.append(power_norm(lambda v: K.T @ v, lambda v: K @ v, N, iters))
    raw = np.asarray(raw)
    base = np.asarray(base)
    return {"r0": list(r0s), "raw": raw, "Sk": base, "normalized": raw / base}


def commutator_sharp_check(kern: DiscreteKernel, b: Callable, f, B0: Ball, s: float,
                           bmo: float) -> float:
    """sup over nodes of M#_X(T_b f) / (||b||_BMO [M_s(T f) + M_s(f)]), X = B0,
    with M_s(g) = (M_X |g|^s)^(1/s)."""
    g = kern.grid
    fv = _values(kern, f)

    def embed(v):
        out = np.full(g.shape, np.nan)
        out[kern.index] = v
        return GridFunction(g, out)

    Tb = embed(commutator_field(kern, b, fv))
    T = embed(adjoint_field(kern, fv))
    F = embed(fv)
    sharp = sharp_maximal_fields(Tb, B0).sharp
    MT = sharp_maximal_fields(embed(np.abs(T.values[kern.index]) ** s), B0).MX ** (1 / s)
    MF = sharp_maximal_fields(embed(np.abs(fv) ** s), B0).MX ** (1 / s)
    den = bmo * (MT + MF)
    ok = np.isfinite(sharp) & (den > 0)
    return float(np.max(sharp[ok] / den[ok]))


def refinement_drift(values: Sequence[float]) -> float:
    return drift(values)
