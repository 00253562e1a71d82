"""Dependency-free SVG violin plots of per-method estimate distributions."""

from __future__ import annotations

from xml.sax.saxutils import escape

import numpy as np

WIDTH = 640
HEIGHT = 420
MARGIN_L, MARGIN_R, MARGIN_T, MARGIN_B = 70, 20, 40, 50

_COLORS = ("#4878a8", "#e49444", "#5ba053", "#b65fa6", "#85b6b2")


def _kde(values: np.ndarray, grid: np.ndarray) -> np.ndarray:
    """Gaussian kernel density with Silverman's bandwidth."""
    n = len(values)
    sd = float(np.std(values, ddof=1)) if n > 1 else 0.0
    scale = max(abs(float(np.mean(values))), 1.0)
    bw = 0.9 * sd * n ** (-0.2) if sd > 0 else 1e-3 * scale
    diffs = (grid[:, None] - values[None, :]) / bw
    return np.exp(-0.5 * diffs**2).sum(axis=1) / (n * bw * np.sqrt(2 * np.pi))


def violin_svg(
    method_estimates: dict[str, np.ndarray],
    reference: float,
    title: str,
    reference_label: str = "ground truth",
) -> str:
    """Render one violin per method with a dashed reference line.

    Output is a complete, well-formed SVG document: one <g> element per
    method (id ``violin-<method>``) and one <line> with class
    ``reference-line`` at the reference value.
    """
    methods = list(method_estimates)
    all_vals = np.concatenate([np.asarray(v, dtype=np.float64) for v in method_estimates.values()])
    lo = min(float(all_vals.min()), reference)
    hi = max(float(all_vals.max()), reference)
    pad = 0.08 * (hi - lo) if hi > lo else max(abs(hi), 1e-6) * 0.1
    lo, hi = lo - pad, hi + pad

    plot_w = WIDTH - MARGIN_L - MARGIN_R
    plot_h = HEIGHT - MARGIN_T - MARGIN_B

    def y_px(v: float) -> float:
        return MARGIN_T + (hi - v) / (hi - lo) * plot_h

    slot = plot_w / max(len(methods), 1)
    half_w = 0.38 * slot

    parts = [
        f'<?xml version="1.0" encoding="UTF-8"?>\n'
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif">',
        f'<text x="{WIDTH / 2:.1f}" y="22" text-anchor="middle" font-size="15">{escape(title)}</text>',
        f'<line x1="{MARGIN_L}" y1="{MARGIN_T}" x2="{MARGIN_L}" '
        f'y2="{MARGIN_T + plot_h}" stroke="#333" stroke-width="1"/>',
    ]
    for tick in np.linspace(lo, hi, 6):
        ty = y_px(float(tick))
        parts.append(
            f'<line x1="{MARGIN_L - 4}" y1="{ty:.2f}" x2="{MARGIN_L}" y2="{ty:.2f}" stroke="#333"/>'
            f'<text x="{MARGIN_L - 8}" y="{ty + 4:.2f}" text-anchor="end" font-size="11">'
            f"{tick:.4g}</text>"
        )

    for k, method in enumerate(methods):
        vals = np.asarray(method_estimates[method], dtype=np.float64)
        cx = MARGIN_L + (k + 0.5) * slot
        color = _COLORS[k % len(_COLORS)]
        grid = np.linspace(float(vals.min()), float(vals.max()), 64)
        if grid[0] == grid[-1]:
            grid = np.array([grid[0] - 1e-9, grid[0] + 1e-9])
        dens = _kde(vals, grid)
        widths = half_w * dens / dens.max() if dens.max() > 0 else np.zeros_like(dens)

        pts_right = [(cx + w, y_px(g)) for g, w in zip(grid, widths)]
        pts_left = [(cx - w, y_px(g)) for g, w in zip(grid[::-1], widths[::-1])]
        path = " ".join(f"{x:.2f},{y:.2f}" for x, y in pts_right + pts_left)
        parts.append(f'<g id="violin-{escape(method)}">')
        parts.append(f'<polygon points="{path}" fill="{color}" fill-opacity="0.45" '
                     f'stroke="{color}" stroke-width="1"/>')
        # deterministic low-discrepancy jitter for the raw points
        for i, v in enumerate(vals):
            jit = ((i * 0.61803398875) % 1.0 - 0.5) * 0.5 * half_w
            parts.append(f'<circle cx="{cx + jit:.2f}" cy="{y_px(float(v)):.2f}" r="2" '
                         f'fill="#222" fill-opacity="0.6"/>')
        parts.append(f'<text x="{cx:.1f}" y="{HEIGHT - 26}" text-anchor="middle" '
                     f'font-size="12">{escape(method)}</text>')
        parts.append("</g>")

    ry = y_px(reference)
    parts.append(
        f'<line class="reference-line" x1="{MARGIN_L}" y1="{ry:.2f}" '
        f'x2="{MARGIN_L + plot_w}" y2="{ry:.2f}" stroke="#111" '
        f'stroke-dasharray="6,4" stroke-width="1.2"/>'
    )
    parts.append(
        f'<text x="{MARGIN_L + plot_w - 4}" y="{ry - 6:.2f}" text-anchor="end" '
        f'font-size="11">{escape(reference_label)}</text>'
    )
    parts.append("</svg>")
    return "\n".join(parts)
