"""Hand-written SVG so that identical inputs give identical bytes."""
from __future__ import annotations

from pathlib import Path

import numpy as np

from latentcond.harness.metrics import fmt

WIDTH, HEIGHT, PAD = 640, 420, 50
PALETTE = ("#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf")


def curve_values(records) -> dict[str, np.ndarray]:
    """Mean energy per step for each method, pooled over runs and chains."""
    by_method: dict[str, list] = {}
    for r in records:
        by_method.setdefault(r.method, []).append(np.asarray(r.energies, dtype=np.float64))
    out = {}
    for m, es in by_method.items():
        n = min(len(e) for e in es)
        out[m] = np.concatenate([e[:n] for e in es], axis=1).mean(axis=1)
    return out


def _n(v: float) -> str:
    return f"{v:.2f}"


def _frame(title: str, xlabel: str, ylabel: str, lo, hi) -> list[str]:
    x0, y0, x1, y1 = PAD, HEIGHT - PAD, WIDTH - PAD, PAD
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">',
        f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<text x="{WIDTH // 2}" y="20" text-anchor="middle" font-size="14">{title}</text>',
        f'<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="black"/>',
        f'<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="black"/>',
        f'<text x="{WIDTH // 2}" y="{HEIGHT - 10}" text-anchor="middle" font-size="12">{xlabel}</text>',
        f'<text x="14" y="{HEIGHT // 2}" text-anchor="middle" font-size="12" transform="rotate(-90 14 {HEIGHT // 2})">{ylabel}</text>',
    ]
    for i in range(5):
        t = i / 4
        xv, yv = lo[0] + t * (hi[0] - lo[0]), lo[1] + t * (hi[1] - lo[1])
        px, py = x0 + t * (x1 - x0), y0 + t * (y1 - y0)
        parts.append(f'<text x="{_n(px)}" y="{y0 + 16}" text-anchor="middle" font-size="10">{xv:.3g}</text>')
        parts.append(f'<text x="{x0 - 6}" y="{_n(py + 3)}" text-anchor="end" font-size="10">{yv:.3g}</text>')
    return parts


def _scaler(lo, hi):
    span = np.where(np.asarray(hi) > np.asarray(lo), np.asarray(hi) - np.asarray(lo), 1.0)

    def to_px(x, y):
        px = PAD + (x - lo[0]) / span[0] * (WIDTH - 2 * PAD)
        py = HEIGHT - PAD - (y - lo[1]) / span[1] * (HEIGHT - 2 * PAD)
        return px, py

    return to_px


def energy_curves_svg(curves: dict[str, np.ndarray]) -> str:
    steps = max(len(v) for v in curves.values())
    ys = np.concatenate([np.asarray(v) for v in curves.values()])
    lo, hi = (0.0, float(ys.min())), (float(max(steps - 1, 1)), float(ys.max()))
    to_px = _scaler(lo, hi)
    parts = _frame("Mean energy per step", "step", "energy", lo, hi)
    for i, (m, vals) in enumerate(curves.items()):
        color = PALETTE[i % len(PALETTE)]
        pts = " ".join(f"{_n(px)},{_n(py)}" for px, py in (to_px(t, v) for t, v in enumerate(vals)))
        data = " ".join(fmt(v) for v in vals)
        if len(vals) == 1:
            px, py = to_px(0, vals[0])
            parts.append(f'<circle cx="{_n(px)}" cy="{_n(py)}" r="3" fill="{color}" data-method="{m}" data-values="{data}"/>')
        else:
            parts.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{pts}" data-method="{m}" data-values="{data}"/>')
        parts.append(f'<text x="{WIDTH - PAD - 4}" y="{PAD + 14 * i}" text-anchor="end" font-size="11" fill="{color}">{m}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def scatter_svg(points: np.ndarray, labels: np.ndarray, title: str) -> str:
    pts = np.asarray(points, dtype=np.float64)[:, :2]
    lo = tuple(float(v) for v in pts.min(axis=0))
    hi = tuple(float(v) for v in pts.max(axis=0))
    to_px = _scaler(lo, hi)
    parts = _frame(title, "x0", "x1", lo, hi)
    for (x, y), c in zip(pts, labels):
        px, py = to_px(x, y)
        parts.append(f'<circle cx="{_n(px)}" cy="{_n(py)}" r="2" fill="{PALETTE[int(c) % len(PALETTE)]}" data-class="{int(c)}"/>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def emit_plots(records, out_dir, curves: dict | None = None) -> list[Path]:
    """Write ``scatter.svg`` (samples of the first method, colored by intended class)
    and, when any curve is nonempty, ``energy_curves.svg``."""
    records = list(records)
    if not records:
        raise ValueError("nothing to plot")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    if curves is None:
        curves = curve_values(records)
    curves = {m: v for m, v in curves.items() if len(v)}
    if curves:
        path = out / "energy_curves.svg"
        path.write_text(energy_curves_svg(curves))
        written.append(path)
    first = records[0].method
    mine = [r for r in records if r.method == first]
    pts = np.concatenate([r.samples for r in mine])
    labels = np.concatenate([np.full(len(r.samples), r.condition) for r in mine])
    path = out / "scatter.svg"
    path.write_text(scatter_svg(pts, labels, f"Samples ({first}) by intended class"))
    written.append(path)
    return written
