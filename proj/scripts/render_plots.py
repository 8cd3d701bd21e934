#!/usr/bin/env python3
"""Render static SVG plots from a run directory's CSV logs.

Reads metrics.csv and eval.csv, writes plots/*.svg next to them. Pure
standard library; the plots are a convenience view, every number lives in
the CSVs.
"""

import argparse
import csv
import pathlib
import sys

PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"]
W, H = 640, 400
ML, MR, MT, MB = 60, 20, 30, 45  # margins


def read_csv(path):
    with open(path, newline="") as f:
        rows = list(csv.DictReader(f))
    return rows


def col(rows, name):
    return [float(r[name]) for r in rows]


def ticks(lo, hi, n=5):
    if hi <= lo:
        hi = lo + 1.0
    span = hi - lo
    return [lo + span * i / (n - 1) for i in range(n)]


def fmt(v):
    if v == int(v) and abs(v) < 1e6:
        return str(int(v))
    return f"{v:.4g}"


def svg_plot(series, title, xlabel, ylabel):
    """series: list of (label, xs, ys)"""
    xs_all = [x for _, xs, _ in series for x in xs]
    ys_all = [y for _, _, ys in series for y in ys]
    if not xs_all:
        return None
    x0, x1 = min(xs_all), max(xs_all)
    y0, y1 = min(ys_all), max(ys_all)
    if x1 == x0:
        x1 = x0 + 1.0
    if y1 == y0:
        y0, y1 = y0 - 0.5, y1 + 0.5
    pad = 0.05 * (y1 - y0)
    y0, y1 = y0 - pad, y1 + pad

    def px(x):
        return ML + (W - ML - MR) * (x - x0) / (x1 - x0)

    def py(y):
        return H - MB - (H - MT - MB) * (y - y0) / (y1 - y0)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" '
        f'viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">',
        f'<rect width="{W}" height="{H}" fill="white"/>',
        f'<text x="{W/2}" y="18" text-anchor="middle" font-size="14">{title}</text>',
    ]
    for t in ticks(x0, x1):
        x = px(t)
        parts.append(f'<line x1="{x:.1f}" y1="{MT}" x2="{x:.1f}" y2="{H-MB}" '
                     f'stroke="#e0e0e0"/>')
        parts.append(f'<text x="{x:.1f}" y="{H-MB+16}" text-anchor="middle">{fmt(t)}</text>')
    for t in ticks(y0, y1):
        y = py(t)
        parts.append(f'<line x1="{ML}" y1="{y:.1f}" x2="{W-MR}" y2="{y:.1f}" '
                     f'stroke="#e0e0e0"/>')
        parts.append(f'<text x="{ML-6}" y="{y+4:.1f}" text-anchor="end">{fmt(t)}</text>')
    parts.append(f'<rect x="{ML}" y="{MT}" width="{W-ML-MR}" height="{H-MT-MB}" '
                 f'fill="none" stroke="#444"/>')
    parts.append(f'<text x="{W/2}" y="{H-8}" text-anchor="middle">{xlabel}</text>')
    parts.append(f'<text x="16" y="{H/2}" text-anchor="middle" '
                 f'transform="rotate(-90 16 {H/2})">{ylabel}</text>')

    for i, (label, xs, ys) in enumerate(series):
        color = PALETTE[i % len(PALETTE)]
        pts = " ".join(f"{px(x):.1f},{py(y):.1f}" for x, y in zip(xs, ys))
        parts.append(f'<polyline points="{pts}" fill="none" stroke="{color}" '
                     f'stroke-width="1.5"/>')
        ly = MT + 16 + 16 * i
        parts.append(f'<line x1="{W-MR-110}" y1="{ly-4}" x2="{W-MR-90}" y2="{ly-4}" '
                     f'stroke="{color}" stroke-width="2"/>')
        parts.append(f'<text x="{W-MR-84}" y="{ly}">{label}</text>')
    parts.append("</svg>")
    return "\n".join(parts)


def render_run(run_dir):
    run = pathlib.Path(run_dir)
    out = run / "plots"
    written = []

    metrics = run / "metrics.csv"
    if metrics.exists():
        rows = read_csv(metrics)
        if rows:
            out.mkdir(exist_ok=True)
            it = col(rows, "iter")
            svg = svg_plot(
                [("total", it, col(rows, "total")),
                 ("sup1", it, col(rows, "sup1")),
                 ("sup2", it, col(rows, "sup2")),
                 ("uscs1", it, col(rows, "uscs1")),
                 ("uscs2", it, col(rows, "uscs2"))],
                "training losses", "iteration", "loss")
            (out / "losses.svg").write_text(svg)
            written.append(out / "losses.svg")
            svg = svg_plot(
                [("mean weight", it, col(rows, "mean_w"))],
                "mean pseudo-label weight", "iteration", "mean W")
            (out / "mean_weight.svg").write_text(svg)
            written.append(out / "mean_weight.svg")

    evals = run / "eval.csv"
    if evals.exists():
        rows = read_csv(evals)
        if rows:
            out.mkdir(exist_ok=True)
            it = col(rows, "iter")
            series = [("mIoU", it, col(rows, "miou"))]
            iou_cols = [k for k in rows[0] if k.startswith("iou_")]
            for k in sorted(iou_cols, key=lambda s: int(s[4:])):
                series.append((k, it, col(rows, k)))
            svg = svg_plot(series, "validation IoU", "iteration", "IoU")
            (out / "validation.svg").write_text(svg)
            written.append(out / "validation.svg")
            svg = svg_plot(
                [("non-overlap", it, col(rows, "branch_non_overlap"))],
                "branch disagreement", "iteration", "fraction of pixels")
            (out / "non_overlap.svg").write_text(svg)
            written.append(out / "non_overlap.svg")

    return written


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("run_dirs", nargs="+", help="run directories holding metrics.csv / eval.csv")
    args = ap.parse_args()
    any_written = False
    for d in args.run_dirs:
        files = render_run(d)
        for f in files:
            print(f)
        any_written = any_written or bool(files)
    if not any_written:
        print("no CSV logs found", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
