"""Hand-emitted SVG views of robustness fields.

Points are drawn as depth-sorted circles under a fixed axonometric
camera. Finite values sweep a dark-purple-to-yellow ramp (lighter is
higher); unbounded points are pure black, which the ramp never reaches.
Output bytes depend only on the inputs, so rendered reports diff
cleanly across runs.
"""

from __future__ import annotations

import numpy as np

# dark purple -> yellow; pure black stays reserved for +inf
RAMP = np.array([(33, 12, 74), (87, 16, 110), (138, 34, 106),
                 (188, 55, 84), (228, 90, 49), (249, 142, 9),
                 (249, 203, 53), (252, 255, 164)], dtype=float)

WIDTH = 620
HEIGHT = 460
MARGIN = 28.0
AZIMUTH = np.deg2rad(-55.0)
ELEVATION = np.deg2rad(32.0)


def ramp_color(x):
    """rgb string for x in [0, 1] along the finite-value ramp."""
    x = min(max(float(x), 0.0), 1.0)
    pos = x * (len(RAMP) - 1)
    i = min(int(pos), len(RAMP) - 2)
    frac = pos - i
    r, g, b = np.rint(RAMP[i] * (1.0 - frac) + RAMP[i + 1] * frac)
    return f"rgb({int(r)},{int(g)},{int(b)})"


def _project(points):
    ca, sa = np.cos(AZIMUTH), np.sin(AZIMUTH)
    ce, se = np.cos(ELEVATION), np.sin(ELEVATION)
    x, y, z = points[:, 0], points[:, 1], points[:, 2]
    u = -sa * x + ca * y
    v = -se * ca * x - se * sa * y + ce * z
    depth = ce * ca * x + ce * sa * y + se * z
    return u, v, depth


def render_field_svg(points, values, path, title=None):
    """Write an SVG heatmap of per-point robustness; returns the path."""
    points = np.asarray(points, dtype=float)
    values = np.asarray(values, dtype=float)
    u, v, depth = _project(points)
    finite = np.isfinite(values)
    if finite.any():
        lo, hi = values[finite].min(), values[finite].max()
    else:
        lo, hi = 0.0, 1.0
    span = hi - lo

    spread_u = max(u.max() - u.min(), 1e-9)
    spread_v = max(v.max() - v.min(), 1e-9)
    scale = min((WIDTH - 2 * MARGIN) / spread_u,
                (HEIGHT - 2 * MARGIN - 40) / spread_v)
    cx = MARGIN + (WIDTH - 2 * MARGIN - scale * spread_u) / 2.0
    cy = HEIGHT - MARGIN - 40

    lines = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" '
        f'height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">',
        f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
    ]
    if title:
        lines.append(f'<text x="{MARGIN:.0f}" y="20" font-family="monospace" '
                     f'font-size="14">{title}</text>')
    for i in np.argsort(depth, kind="stable"):
        px = cx + scale * (u[i] - u.min())
        py = cy - scale * (v[i] - v.min())
        if finite[i]:
            frac = (values[i] - lo) / span if span > 0.0 else 1.0
            color = ramp_color(frac)
        else:
            color = "rgb(0,0,0)"
        lines.append(f'<circle cx="{px:.2f}" cy="{py:.2f}" r="2.3" '
                     f'fill="{color}"/>')

    # legend: finite ramp left to right, then the infinity swatch
    lx, ly, sw = MARGIN, HEIGHT - 26.0, 18.0
    for j in range(8):
        lines.append(f'<rect x="{lx + j * sw:.1f}" y="{ly:.1f}" '
                     f'width="{sw:.1f}" height="12" '
                     f'fill="{ramp_color(j / 7.0)}"/>')
    lines.append(f'<text x="{lx:.1f}" y="{ly - 4:.1f}" '
                 f'font-family="monospace" font-size="11">'
                 f'{lo:.2f} N to {hi:.2f} N</text>')
    lines.append(f'<rect x="{lx + 8 * sw + 12:.1f}" y="{ly:.1f}" '
                 f'width="{sw:.1f}" height="12" fill="rgb(0,0,0)"/>')
    lines.append(f'<text x="{lx + 9 * sw + 16:.1f}" y="{ly + 10:.1f}" '
                 f'font-family="monospace" font-size="11">unbounded</text>')
    lines.append("</svg>")
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
    return path
