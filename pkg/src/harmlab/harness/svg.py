"""Deterministic SVG pictures of 2-D coverings and critical-radius fields."""
from __future__ import annotations

import numpy as np

from ..covering import TAG_G, Covering
from ..potentials import Potential, critical_radius

SIZE = 512
PALETTE = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"]


def _fmt(v: float) -> str:
    return f"{v:.4f}"


def _header(title: str) -> list[str]:
    return [f'<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{SIZE}" '
            f'viewBox="0 0 {SIZE} {SIZE}">', f"<title>{title}</title>"]


def render_covering_svg(cov: Covering | None, window=((0.0, 0.0), (1.0, 1.0))) -> str:
    """Balls as circles, coloured by band; G-tagged balls drawn solid."""
    if cov is not None:
        if cov.space.dim != 2:
            raise ValueError("covering pictures need a 2-D domain")
        window = cov.window
    lo, hi = (np.asarray(v, float) for v in window)
    scale = SIZE / float(np.max(hi - lo))
    out = _header("covering")
    out.append(f'<rect x="0" y="0" width="{_fmt((hi - lo)[0] * scale)}" '
               f'height="{_fmt((hi - lo)[1] * scale)}" fill="none" stroke="black"/>')
    if cov is not None:
        for tag, k, c, r in zip(cov.tags, cov.bands, cov.centers, cov.radii):
            cx, cy = (c - lo) * scale
            colour = PALETTE[int(k) % len(PALETTE)]
            dash = "" if tag == TAG_G else ' stroke-dasharray="2,1"'
            out.append(f'<circle cx="{_fmt(cx)}" cy="{_fmt(SIZE - cy)}" r="{_fmt(r * scale)}" '
                       f'fill="none" stroke="{colour}"{dash} data-band="{int(k)}"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def render_rho_heatmap(V: Potential, window, resolution: int = 32) -> str:
    """rho on a resolution x resolution cell grid, grey level by value."""
    if V.n != 2:
        raise ValueError("heat maps need a 2-D potential")
    lo, hi = (np.asarray(v, float) for v in window)
    k = int(resolution)
    t = (np.arange(k) + 0.5) / k
    X, Y = np.meshgrid(lo[0] + t * (hi[0] - lo[0]), lo[1] + t * (hi[1] - lo[1]), indexing="ij")
    rho = np.atleast_1d(critical_radius(V, np.column_stack([X.ravel(), Y.ravel()]))).reshape(k, k)
    span = rho.max() - rho.min()
    level = np.full_like(rho, 0.5) if span <= 1e-12 * max(rho.max(), 1e-300) else (rho - rho.min()) / span
    cell = SIZE / k
    out = _header(f"rho {V.name}")
    for i in range(k):
        for j in range(k):
            g = int(round(255 * level[i, j]))
            out.append(f'<rect x="{_fmt(i * cell)}" y="{_fmt(SIZE - (j + 1) * cell)}" '
                       f'width="{_fmt(cell)}" height="{_fmt(cell)}" fill="rgb({g},{g},{g})"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
