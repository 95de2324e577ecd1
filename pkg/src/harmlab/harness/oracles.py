"""Reference computations that share no quadrature with the library.

They are only run by ``harmlab --freeze`` to produce the fixtures file.
"""
from __future__ import annotations

import numpy as np
from scipy.stats import qmc

from ..geometry import EUCLIDEAN
from ..operators import KernelSpec, kernel_eval


def hormander_qmc(spec: KernelSpec, q: float, x, x0, r: float, J_max: int = 20,
                  log2_points: int = 17, seed: int = 0) -> np.ndarray:
    """Partial sums S_J by scrambled Sobol sampling of each annulus's bounding box."""
    space = spec.space
    x = np.asarray(x, dtype=float)
    x0 = np.asarray(x0, dtype=float)
    qp = q / (q - 1)
    inc = np.empty(J_max)
    sob = qmc.Sobol(space.dim, scramble=True, seed=seed)
    u = sob.random_base2(log2_points)
    for j in range(1, J_max + 1):
        R = 2.0 ** j * r
        half = np.full(space.dim, 2 * R)
        if space.kind != EUCLIDEAN:
            half[-1] = 4 * R * R
        pts = x0 + (2 * u - 1) * half
        d = space.distance(pts, x0)
        inside = (d >= R) & (d <= 2 * R)
        p = pts[inside]
        diff = np.abs(kernel_eval(spec, x, p) - kernel_eval(spec, x0, p))
        box = float(np.prod(2 * half))
        integral = box * np.sum(diff ** q) / len(u)
        vol = space.ball_volume(R) if space.kind == EUCLIDEAN else R ** (space.n + 2)
        inc[j - 1] = j * vol ** (1 / qp) * integral ** (1 / q)
    return np.cumsum(inc)
