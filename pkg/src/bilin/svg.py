"""Tiny deterministic SVG line-chart emitter (no GUI, no plotting deps).

Produces a fixed-size chart with axes, tick labels, one polyline per
series and a circle marker per data point.  Coordinates are formatted
to two decimals so identical inputs yield identical bytes.
"""

import math

WIDTH, HEIGHT = 640, 440
MARGIN_L, MARGIN_R, MARGIN_T, MARGIN_B = 70, 20, 40, 50


def _fmt(x):
    return f"{x:.2f}"


def _linear_ticks(lo, hi, n=5):
    if hi <= lo:
        hi = lo + 1.0
    return [lo + (hi - lo) * i / (n - 1) for i in range(n)]


def _decade_ticks(lo, hi):
    ticks = []
    e = math.floor(math.log10(lo))
    while 10.0**e <= hi * 1.0001:
        if 10.0**e >= lo * 0.9999:
            ticks.append(10.0**e)
        e += 1
    return ticks or [lo, hi]


def line_chart(series, title="", x_label="", y_label="", x_log=False):
    """Render series = [(name, xs, ys), ...] to an SVG string.

    With ``x_log`` the x axis is log-scaled and points with x <= 0 are
    dropped (they have no finite position on that axis).
    """
    cleaned = []
    for name, xs, ys in series:
        pts = [
            (float(x), float(y))
            for x, y in zip(xs, ys)
            if math.isfinite(x) and math.isfinite(y) and (not x_log or x > 0)
        ]
        if pts:
            cleaned.append((name, pts))
    if not cleaned:
        raise ValueError("nothing to plot")

    all_x = [x for _, pts in cleaned for x, _ in pts]
    all_y = [y for _, pts in cleaned for _, y in pts]
    x_lo, x_hi = min(all_x), max(all_x)
    y_lo, y_hi = min(all_y), max(all_y)
    if x_log:
        x_ticks = _decade_ticks(x_lo, x_hi)
        x_lo, x_hi = math.log10(x_lo), math.log10(x_hi)
        if x_hi == x_lo:
            x_lo, x_hi = x_lo - 0.5, x_hi + 0.5
    else:
        if x_hi == x_lo:
            x_lo, x_hi = x_lo - 0.5, x_hi + 0.5
        x_ticks = _linear_ticks(x_lo, x_hi)
    if y_hi == y_lo:
        y_lo, y_hi = y_lo - 0.5, y_hi + 0.5
    y_ticks = _linear_ticks(y_lo, y_hi)

    plot_w = WIDTH - MARGIN_L - MARGIN_R
    plot_h = HEIGHT - MARGIN_T - MARGIN_B

    def sx(x):
        v = math.log10(x) if x_log else x
        return MARGIN_L + (v - x_lo) / (x_hi - x_lo) * plot_w

    def sy(y):
        return MARGIN_T + (y_hi - y) / (y_hi - y_lo) * plot_h

    colors = ["#1f6fb2", "#c44e52", "#55a868", "#8172b2", "#ccb974"]
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" '
        f'height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">',
        f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<text x="{WIDTH // 2}" y="24" text-anchor="middle" '
        f'font-family="sans-serif" font-size="16">{title}</text>',
    ]
    axis = (
        f'<path d="M {_fmt(MARGIN_L)} {_fmt(MARGIN_T)} '
        f'L {_fmt(MARGIN_L)} {_fmt(MARGIN_T + plot_h)} '
        f'L {_fmt(MARGIN_L + plot_w)} {_fmt(MARGIN_T + plot_h)}" '
        f'fill="none" stroke="black"/>'
    )
    out.append(axis)
    for t in x_ticks:
        px = sx(t)
        out.append(
            f'<line x1="{_fmt(px)}" y1="{_fmt(MARGIN_T + plot_h)}" '
            f'x2="{_fmt(px)}" y2="{_fmt(MARGIN_T + plot_h + 5)}" stroke="black"/>'
        )
        label = f"{t:g}"
        out.append(
            f'<text x="{_fmt(px)}" y="{_fmt(MARGIN_T + plot_h + 20)}" '
            f'text-anchor="middle" font-family="sans-serif" '
            f'font-size="11">{label}</text>'
        )
    for t in y_ticks:
        py = sy(t)
        out.append(
            f'<line x1="{_fmt(MARGIN_L - 5)}" y1="{_fmt(py)}" '
            f'x2="{_fmt(MARGIN_L)}" y2="{_fmt(py)}" stroke="black"/>'
        )
        out.append(
            f'<text x="{_fmt(MARGIN_L - 9)}" y="{_fmt(py + 4)}" '
            f'text-anchor="end" font-family="sans-serif" '
            f'font-size="11">{t:.3g}</text>'
        )
    out.append(
        f'<text x="{MARGIN_L + plot_w // 2}" y="{HEIGHT - 10}" '
        f'text-anchor="middle" font-family="sans-serif" '
        f'font-size="13">{x_label}</text>'
    )
    out.append(
        f'<text x="16" y="{MARGIN_T + plot_h // 2}" text-anchor="middle" '
        f'font-family="sans-serif" font-size="13" '
        f'transform="rotate(-90 16 {MARGIN_T + plot_h // 2})">{y_label}</text>'
    )
    for i, (name, pts) in enumerate(cleaned):
        color = colors[i % len(colors)]
        coords = " ".join(f"{_fmt(sx(x))},{_fmt(sy(y))}" for x, y in pts)
        out.append(
            f'<polyline points="{coords}" fill="none" stroke="{color}" '
            f'stroke-width="1.5"/>'
        )
        for x, y in pts:
            out.append(
                f'<circle class="pt" cx="{_fmt(sx(x))}" cy="{_fmt(sy(y))}" '
                f'r="2.5" fill="{color}"/>'
            )
        if name:
            out.append(
                f'<text x="{MARGIN_L + plot_w - 8}" '
                f'y="{MARGIN_T + 16 + 16 * i}" text-anchor="end" '
                f'font-family="sans-serif" font-size="12" '
                f'fill="{color}">{name}</text>'
            )
    out.append("</svg>")
    return "\n".join(out) + "\n"
