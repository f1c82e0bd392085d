"""Minimal SVG drawings: patch rectangles, agent paths, trash markers."""
from __future__ import annotations

from xml.sax.saxutils import escape

import numpy as np

PALETTE = ("#d62728", "#1f77b4", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2",
           "#17becf")


def trajectory_svg(log, patches, path, size: int = 640, max_points: int = 1500) -> None:
    xs = [p.x_bounds for p in patches]
    ys = [p.y_bounds for p in patches]
    x_lo = min(min(b) for b in xs) - 0.1
    x_hi = max(max(b) for b in xs) + 0.1
    y_lo = min(min(b) for b in ys) - 0.1
    y_hi = max(max(b) for b in ys) + 0.1
    scale = size / max(x_hi - x_lo, y_hi - y_lo)
    W, H = (x_hi - x_lo) * scale, (y_hi - y_lo) * scale

    def tx(x):
        return (np.asarray(x) - x_lo) * scale

    def ty(y):
        return (y_hi - np.asarray(y)) * scale

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{W:.0f}" height="{H:.0f}" '
           f'viewBox="0 0 {W:.2f} {H:.2f}">',
           f'<rect width="{W:.2f}" height="{H:.2f}" fill="white"/>']
    for p in patches:
        out.append(f'<rect x="{tx(p.x_bounds[0]):.2f}" y="{ty(p.y_bounds[1]):.2f}" '
                   f'width="{(p.x_bounds[1] - p.x_bounds[0]) * scale:.2f}" '
                   f'height="{(p.y_bounds[1] - p.y_bounds[0]) * scale:.2f}" '
                   f'fill="none" stroke="black" stroke-width="2"/>')
    if log.trash is not None:
        for (x, y), t in zip(log.trash.xy, log.trash.collected_at):
            colour = "green" if t >= 0 else "black"
            out.append(f'<circle cx="{tx(x):.2f}" cy="{ty(y):.2f}" r="2.5" fill="{colour}"/>')
    stride = max(1, len(log.t) // max_points)
    labels = log.labels or [str(i) for i in range(log.n_agents)]
    for i in range(log.n_agents):
        colour = PALETTE[i % len(PALETTE)]
        px, py = tx(log.x[::stride, i]), ty(log.y[::stride, i])
        pts = " ".join(f"{a:.2f},{b:.2f}" for a, b in zip(px, py))
        out.append(f'<polyline points="{pts}" fill="none" stroke="{colour}" '
                   f'stroke-width="1.2" opacity="0.8"/>')
        out.append(f'<circle cx="{tx(log.x[-1, i]):.2f}" cy="{ty(log.y[-1, i]):.2f}" r="5" '
                   f'fill="{colour}"><title>{escape(labels[i])}</title></circle>')
    out.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(out) + "\n")
