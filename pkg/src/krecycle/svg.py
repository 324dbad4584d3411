"""Minimal SVG line charts for convergence histories and benchmark curves."""
import math
from xml.sax.saxutils import escape

__all__ = ["line_chart"]

_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2",
           "#7f7f7f")


def _fmt(v):
    return f"{v:.2f}"


def _ticks(lo, hi, count=5):
    if hi <= lo:
        return [lo]
    return [lo + (hi - lo) * k / (count - 1) for k in range(count)]


def line_chart(series, path=None, title="", xlabel="", ylabel="", logy=False,
               width=640, height=400):
    """Render ``series`` as an SVG document.

    :param series: iterable of ``(label, xs, ys)``.
    :param path: file to write; the SVG text is returned in any case.
    :param logy: logarithmic y axis; non-positive values are skipped.
    """
    margin = dict(left=70, right=160, top=40, bottom=50)
    pw = width - margin["left"] - margin["right"]
    ph = height - margin["top"] - margin["bottom"]
    cleaned = []
    for label, xs, ys in series:
        pts = []
        for x, y in zip(xs, ys):
            x, y = float(x), float(y)
            if not (math.isfinite(x) and math.isfinite(y)) or (logy and y <= 0):
                continue
            pts.append((x, math.log10(y) if logy else y))
        cleaned.append((str(label), pts))
    allx = [p[0] for _, pts in cleaned for p in pts] or [0.0, 1.0]
    ally = [p[1] for _, pts in cleaned for p in pts] or [0.0, 1.0]
    x0, x1 = min(allx), max(allx)
    y0, y1 = min(ally), max(ally)
    if logy:
        y0, y1 = math.floor(y0), math.ceil(y1)
    if x1 == x0:
        x1 = x0 + 1.0
    if y1 == y0:
        y1 = y0 + 1.0

    def sx(x):
        return margin["left"] + pw * (x - x0) / (x1 - x0)

    def sy(y):
        return margin["top"] + ph * (1.0 - (y - y0) / (y1 - y0))

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">',
           f'<rect width="{width}" height="{height}" fill="white"/>',
           f'<text x="{width / 2:.1f}" y="20" text-anchor="middle" font-size="14">'
           f'{escape(title)}</text>',
           f'<rect x="{margin["left"]}" y="{margin["top"]}" width="{pw}" height="{ph}" '
           'fill="none" stroke="black"/>']
    for t in _ticks(x0, x1):
        out.append(f'<text x="{_fmt(sx(t))}" y="{margin["top"] + ph + 18}" '
                   f'text-anchor="middle">{t:.3g}</text>')
    yt = range(int(y0), int(y1) + 1) if logy and y1 - y0 <= 20 else _ticks(y0, y1)
    for t in yt:
        label = f"1e{int(t)}" if logy else f"{t:.3g}"
        out.append(f'<line x1="{margin["left"]}" x2="{margin["left"] + pw}" '
                   f'y1="{_fmt(sy(t))}" y2="{_fmt(sy(t))}" stroke="#dddddd"/>')
        out.append(f'<text x="{margin["left"] - 6}" y="{_fmt(sy(t) + 4)}" '
                   f'text-anchor="end">{label}</text>')
    out.append(f'<text x="{margin["left"] + pw / 2:.1f}" y="{height - 10}" '
               f'text-anchor="middle">{escape(xlabel)}</text>')
    out.append(f'<text x="15" y="{margin["top"] + ph / 2:.1f}" text-anchor="middle" '
               f'transform="rotate(-90 15 {margin["top"] + ph / 2:.1f})">{escape(ylabel)}</text>')
    for k, (label, pts) in enumerate(cleaned):
        color = _COLORS[k % len(_COLORS)]
        if pts:
            coords = " ".join(f"{_fmt(sx(x))},{_fmt(sy(y))}" for x, y in pts)
            out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" '
                       f'points="{coords}"/>')
        ly = margin["top"] + 16 * k + 10
        lx = margin["left"] + pw + 10
        out.append(f'<line x1="{lx}" x2="{lx + 20}" y1="{ly}" y2="{ly}" stroke="{color}" '
                   'stroke-width="2"/>')
        out.append(f'<text x="{lx + 25}" y="{ly + 4}">{escape(label)}</text>')
    out.append("</svg>")
    text = "\n".join(out) + "\n"
    if path is not None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
    return text
