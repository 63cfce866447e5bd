"""Minimal dependency-free SVG output for quiver and trajectory figures."""
from __future__ import annotations

import numpy as np

__all__ = ["svg_quiver", "svg_scatter_trajectory"]

_HEADER = (
    '<?xml version="1.0" encoding="UTF-8"?>\n'
    '<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" '
    'viewBox="0 0 {w} {h}">\n'
    '<rect width="{w}" height="{h}" fill="white"/>\n'
)


def _scale(points, size, margin):
    pts = np.asarray(points, dtype=float)
    lo = pts.min(axis=0)
    hi = pts.max(axis=0)
    span = np.maximum(hi - lo, 1e-12)
    s = (size - 2 * margin) / span.max()
    mid = (lo + hi) / 2

    def to_px(p):
        q = (np.asarray(p) - mid) * s
        return q[..., 0] + size / 2, size / 2 - q[..., 1]

    return to_px


def svg_quiver(path, u, v, gu, gv, size=640, color="#1f4e9c", marker=None):
    """Arrow plot of a 2D vector field sampled on a grid.

    NaN vectors (for example at singular kernel points) are drawn as red dots."""
    u, v, gu, gv = (np.asarray(a, dtype=float).ravel() for a in (u, v, gu, gv))
    to_px = _scale(np.stack([u, v], axis=1), size, 40)
    norms = np.hypot(gu, gv)
    finite = np.isfinite(norms)
    gmax = norms[finite].max() if finite.any() and norms[finite].max() > 0 else 1.0
    # normalize the longest arrow to roughly one grid cell
    cell = size / max(np.sqrt(u.size), 2.0)
    parts = [_HEADER.format(w=size, h=size)]
    for i in range(u.size):
        x0, y0 = to_px(np.array([u[i], v[i]]))
        if not finite[i]:
            parts.append(f'<circle cx="{x0:.1f}" cy="{y0:.1f}" r="3" fill="#c22"/>\n')
            continue
        dx = gu[i] / gmax * cell * 0.9
        dy = -gv[i] / gmax * cell * 0.9
        x1, y1 = x0 + dx, y0 + dy
        parts.append(
            f'<line x1="{x0:.1f}" y1="{y0:.1f}" x2="{x1:.1f}" y2="{y1:.1f}" '
            f'stroke="{color}" stroke-width="1"/>\n'
        )
        # simple arrowhead
        ang = np.arctan2(dy, dx)
        for da in (2.6, -2.6):
            hx = x1 + 4 * np.cos(ang + da)
            hy = y1 + 4 * np.sin(ang + da)
            parts.append(
                f'<line x1="{x1:.1f}" y1="{y1:.1f}" x2="{hx:.1f}" y2="{hy:.1f}" '
                f'stroke="{color}" stroke-width="1"/>\n'
            )
    if marker is not None:
        mx, my = to_px(np.asarray(marker, dtype=float))
        parts.append(f'<circle cx="{mx:.1f}" cy="{my:.1f}" r="5" fill="#0a0"/>\n')
    parts.append("</svg>\n")
    with open(path, "w") as fh:
        fh.write("".join(parts))


def svg_scatter_trajectory(path, snapshots, target=None, size=640):
    """Particle snapshots (fading blue) over the target cloud (green)."""
    clouds = [pts[:, :2] for _, pts in snapshots]
    every = np.vstack(clouds + ([target[:, :2]] if target is not None else []))
    to_px = _scale(every, size, 40)
    parts = [_HEADER.format(w=size, h=size)]
    if target is not None:
        xs, ys = to_px(target[:, :2])
        for x, y in zip(np.atleast_1d(xs), np.atleast_1d(ys)):
            parts.append(f'<circle cx="{x:.1f}" cy="{y:.1f}" r="2.5" fill="#2a2"/>\n')
    n = len(clouds)
    for i, pts in enumerate(clouds):
        alpha = 0.15 + 0.85 * (i + 1) / n
        xs, ys = to_px(pts)
        for x, y in zip(np.atleast_1d(xs), np.atleast_1d(ys)):
            parts.append(
                f'<circle cx="{x:.1f}" cy="{y:.1f}" r="2" fill="#1f4e9c" '
                f'fill-opacity="{alpha:.2f}"/>\n'
            )
    parts.append("</svg>\n")
    with open(path, "w") as fh:
        fh.write("".join(parts))
