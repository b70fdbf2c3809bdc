"""Minimal SVG curve plots: one axis box, ticks, a single polyline.

Output contains no timestamps or other volatile metadata, so identical
curves always produce identical bytes.
"""

WIDTH, HEIGHT = 640, 480
MARGIN_L, MARGIN_R, MARGIN_T, MARGIN_B = 70, 20, 40, 50


def _fmt(x):
    return f"{x:.2f}".rstrip("0").rstrip(".")


def curve_svg(points, title, xlabel="neighbors deleted (%)", ylabel="value"):
    """SVG document for one (percent, value) curve; y axis fixed to [0, 1]."""
    x_lo, x_hi = points[0][0], points[-1][0]
    span = (x_hi - x_lo) or 1.0
    plot_w = WIDTH - MARGIN_L - MARGIN_R
    plot_h = HEIGHT - MARGIN_T - MARGIN_B

    def sx(p):
        return MARGIN_L + (p - x_lo) / span * plot_w

    def sy(v):
        return MARGIN_T + (1.0 - v) * plot_h

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" '
        f'height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">',
        f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<text x="{WIDTH // 2}" y="24" text-anchor="middle" '
        f'font-family="sans-serif" font-size="16">{title}</text>',
        f'<rect x="{MARGIN_L}" y="{MARGIN_T}" width="{plot_w}" '
        f'height="{plot_h}" fill="none" stroke="black"/>',
    ]
    for percent, _ in points:
        x = sx(percent)
        parts.append(f'<line x1="{_fmt(x)}" y1="{MARGIN_T + plot_h}" '
                     f'x2="{_fmt(x)}" y2="{MARGIN_T + plot_h + 5}" stroke="black"/>')
        parts.append(f'<text x="{_fmt(x)}" y="{MARGIN_T + plot_h + 20}" '
                     f'text-anchor="middle" font-family="sans-serif" '
                     f'font-size="11">{int(percent)}</text>')
    for tick in (0.0, 0.25, 0.5, 0.75, 1.0):
        y = sy(tick)
        parts.append(f'<line x1="{MARGIN_L - 5}" y1="{_fmt(y)}" '
                     f'x2="{MARGIN_L}" y2="{_fmt(y)}" stroke="black"/>')
        parts.append(f'<text x="{MARGIN_L - 10}" y="{_fmt(y + 4)}" '
                     f'text-anchor="end" font-family="sans-serif" '
                     f'font-size="11">{_fmt(tick)}</text>')
    coords = " ".join(f"{_fmt(sx(p))},{_fmt(sy(v))}" for p, v in points)
    parts.append(f'<polyline points="{coords}" fill="none" '
                 f'stroke="steelblue" stroke-width="2"/>')
    parts.append(f'<text x="{MARGIN_L + plot_w // 2}" y="{HEIGHT - 10}" '
                 f'text-anchor="middle" font-family="sans-serif" '
                 f'font-size="13">{xlabel}</text>')
    parts.append(f'<text x="18" y="{MARGIN_T + plot_h // 2}" text-anchor="middle" '
                 f'font-family="sans-serif" font-size="13" '
                 f'transform="rotate(-90 18 {MARGIN_T + plot_h // 2})">{ylabel}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def write_curve_svg(points, title, path, ylabel="value"):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(curve_svg(points, title, ylabel=ylabel))
