"""Deterministic report formatting, curve CSVs, tiny SVG plots and atomic writes."""
import csv
import io
import json
import math
import os
import tempfile

import numpy as np

SIG = 12


def fmt(x, sig=SIG):
    return format(float(x), f".{sig}g")


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_clean(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if not math.isfinite(x):
            return "nan" if math.isnan(x) else ("inf" if x > 0 else "-inf")
        x = float(fmt(x))
        return 0.0 if x == 0 else x
    return obj


def dumps(report) -> str:
    """Sorted keys, floats rounded to 12 significant digits."""
    return json.dumps(_clean(report), sort_keys=True, indent=2) + "\n"


def write_atomic(path, text: str):
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def table_csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([fmt(v) if isinstance(v, (float, np.floating)) else v for v in r])
    return buf.getvalue()


def curve_csv(curve) -> str:
    """Vertices of a thermomajorization curve; the origin has level_index -1."""
    rows = []
    for k in range(len(curve.x)):
        lvl = -1 if k == 0 else int(curve.order[k - 1])
        rows.append([float(curve.x[k]), float(curve.y[k]), lvl, float(curve.E_tot),
                     float(curve.beta), float(curve.gamma)])
    return table_csv(["x", "y", "level_index", "E_tot", "beta", "gamma"], rows)


def svg_lines(series, title="", xlabel="x", ylabel="y", w=480, h=360) -> str:
    """Minimal line plot. series: list of (label, xs, ys)."""
    xs = np.concatenate([np.asarray(s[1], float) for s in series])
    ys = np.concatenate([np.asarray(s[2], float) for s in series])
    ok = np.isfinite(xs) & np.isfinite(ys)
    x0, x1 = (xs[ok].min(), xs[ok].max()) if ok.any() else (0.0, 1.0)
    y0, y1 = (ys[ok].min(), ys[ok].max()) if ok.any() else (0.0, 1.0)
    if x1 == x0:
        x1 = x0 + 1
    if y1 == y0:
        y1 = y0 + 1
    m = 50
    sx = lambda x: m + (x - x0) / (x1 - x0) * (w - 2 * m)
    sy = lambda y: h - m - (y - y0) / (y1 - y0) * (h - 2 * m)
    colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"]
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}">',
           f'<rect width="{w}" height="{h}" fill="white"/>',
           f'<line x1="{m}" y1="{h - m}" x2="{w - m}" y2="{h - m}" stroke="black"/>',
           f'<line x1="{m}" y1="{m}" x2="{m}" y2="{h - m}" stroke="black"/>',
           f'<text x="{w / 2}" y="20" text-anchor="middle">{title}</text>',
           f'<text x="{w / 2}" y="{h - 10}" text-anchor="middle">{xlabel}</text>',
           f'<text x="12" y="{h / 2}" transform="rotate(-90 12 {h / 2})" '
           f'text-anchor="middle">{ylabel}</text>',
           f'<text x="{m}" y="{h - m + 15}" font-size="10">{fmt(x0, 4)}</text>',
           f'<text x="{w - m}" y="{h - m + 15}" font-size="10" text-anchor="end">{fmt(x1, 4)}</text>',
           f'<text x="{m - 4}" y="{h - m}" font-size="10" text-anchor="end">{fmt(y0, 4)}</text>',
           f'<text x="{m - 4}" y="{m + 4}" font-size="10" text-anchor="end">{fmt(y1, 4)}</text>']
    for k, (label, X, Y) in enumerate(series):
        pts = " ".join(f"{sx(a):.2f},{sy(b):.2f}" for a, b in zip(X, Y)
                       if math.isfinite(a) and math.isfinite(b))
        c = colors[k % len(colors)]
        out.append(f'<polyline fill="none" stroke="{c}" stroke-width="1.5" points="{pts}"/>')
        out.append(f'<text x="{w - m}" y="{m + 14 * k}" font-size="11" fill="{c}" '
                   f'text-anchor="end">{label}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
