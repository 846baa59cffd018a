"""Metrics files, run summaries and SVG accuracy curves."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

from .alloop import AggregateRow, CycleRecord

TRIAL_COLUMNS = [
    "trial", "cycle", "labeled_count", "test_accuracy", "selected_wrong",
    "selected_correct", "effective_lr", "wall_time_s",
]
AGGREGATE_COLUMNS = ["cycle", "labeled_count", "acc_mean", "acc_std", "unknown_ratio_mean"]


class ReportError(ValueError):
    pass


def fmt(x: float) -> str:
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return f"{x:.6f}"


def trial_row(trial: int, rec: CycleRecord, record_wall_time: bool) -> list[str]:
    return [
        str(trial), str(rec.cycle), str(rec.labeled_count), fmt(rec.test_accuracy),
        str(rec.selected_wrong), str(rec.selected_correct), fmt(rec.effective_lr),
        fmt(rec.wall_time_s if record_wall_time else 0.0),
    ]


def aggregate_row(row: AggregateRow) -> list[str]:
    return [
        str(row.cycle), str(row.labeled_count), fmt(row.acc_mean), fmt(row.acc_std),
        fmt(row.unknown_ratio_mean),
    ]


def write_csv(path, header: list[str], rows: list[list[str]]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def read_csv(path) -> list[dict[str, str]]:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


# run directories ----------------------------------------------------------------


@dataclass
class RunSummary:
    path: Path
    label: str
    strategy: str
    labeled: np.ndarray
    acc_mean: np.ndarray
    acc_std: np.ndarray
    raw_rows: list[dict[str, str]]


def series_label(manifest: dict) -> str:
    label = manifest.get("strategy", "?")
    if manifest.get("mode") == "frozen":
        label += " [frozen]"
    if manifest.get("balanced") is False:
        label += " (agnostic)"
    return label


def load_run(path) -> RunSummary:
    path = Path(path)
    manifest_path = path / "manifest.json"
    agg_path = path / "aggregate.csv"
    if not path.is_dir():
        raise ReportError(f"{path}: not a run directory")
    if (path / "FAILED").exists():
        raise ReportError(f"{path}: run failed (see {path / 'FAILED'})")
    if not manifest_path.exists() or not agg_path.exists():
        raise ReportError(f"{path}: incomplete run (missing manifest.json or aggregate.csv)")
    manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    if manifest.get("status") != "complete":
        raise ReportError(f"{path}: run status is {manifest.get('status')!r}")
    rows = read_csv(agg_path)
    if not rows:
        raise ReportError(f"{path}: aggregate.csv has no rows")
    return RunSummary(
        path=path,
        label=series_label(manifest),
        strategy=manifest.get("strategy", "?"),
        labeled=np.array([int(r["labeled_count"]) for r in rows]),
        acc_mean=np.array([float(r["acc_mean"]) for r in rows]),
        acc_std=np.array([float(r["acc_std"]) for r in rows]),
        raw_rows=rows,
    )


def samples_to_reach(labeled, acc_mean, target: float) -> int | None:
    """Labeled count at the first cycle whose mean accuracy reaches ``target``."""
    for n, a in zip(labeled, acc_mean):
        if a >= target:
            return int(n)
    return None


def curve_auc(labeled, acc) -> float:
    """Trapezoidal area under accuracy vs labeled count, normalized by the labeled range."""
    x = np.asarray(labeled, dtype=np.float64)
    y = np.asarray(acc, dtype=np.float64)
    if len(x) < 2:
        return float(y[0]) if len(y) else float("nan")
    return float(np.sum(0.5 * (y[1:] + y[:-1]) * np.diff(x)) / (x[-1] - x[0]))


def summary_table(runs: list[RunSummary], target: float) -> str:
    labels = [r.label for r in runs]
    counts = sorted({int(n) for r in runs for n in r.labeled})
    width = max([12] + [len(l) + 2 for l in labels])
    lines = ["labeled".ljust(10) + "".join(l.rjust(width) for l in labels)]
    for n in counts:
        cells = []
        for r in runs:
            hit = np.flatnonzero(r.labeled == n)
            cells.append(r.raw_rows[hit[0]]["acc_mean"] if hit.size else "-")
        lines.append(str(n).ljust(10) + "".join(c.rjust(width) for c in cells))
    reach = []
    for r in runs:
        n = samples_to_reach(r.labeled, r.acc_mean, target)
        reach.append("never" if n is None else str(n))
    lines.append(f"reach {target:g}".ljust(10) + "".join(c.rjust(width) for c in reach))
    lines.append("auc".ljust(10) + "".join(fmt(curve_auc(r.labeled, r.acc_mean)).rjust(width) for r in runs))
    return "\n".join(lines)


def _attr(text: str) -> str:
    return escape(text, {'"': "&quot;"})


_PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"]


def render_svg(runs: list[RunSummary], title: str = "Test accuracy vs labeled samples") -> str:
    w, h = 640, 420
    left, right, top, bottom = 60, 170, 40, 50
    pw, ph = w - left - right, h - top - bottom
    xs = np.concatenate([r.labeled for r in runs]).astype(float)
    x0, x1 = float(xs.min()), float(xs.max())
    if x1 == x0:
        x1 = x0 + 1.0
    lo = min(float(np.min(r.acc_mean - r.acc_std)) for r in runs)
    hi = max(float(np.max(r.acc_mean + r.acc_std)) for r in runs)
    y0, y1 = max(0.0, math.floor(lo * 10) / 10), min(1.0, math.ceil(hi * 10) / 10)
    if y1 <= y0:
        y0, y1 = 0.0, 1.0

    def px(x):
        return left + (x - x0) / (x1 - x0) * pw

    def py(y):
        return top + (1 - (y - y0) / (y1 - y0)) * ph

    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">',
        f'<rect width="{w}" height="{h}" fill="white"/>',
        f'<text x="{left + pw / 2:.1f}" y="22" text-anchor="middle" font-size="14">{escape(title)}</text>',
        f'<line x1="{left}" y1="{top + ph}" x2="{left + pw}" y2="{top + ph}" stroke="black"/>',
        f'<line x1="{left}" y1="{top}" x2="{left}" y2="{top + ph}" stroke="black"/>',
        f'<text x="{left + pw / 2:.1f}" y="{h - 12}" text-anchor="middle" font-size="12">labeled samples</text>',
        f'<text x="16" y="{top + ph / 2:.1f}" text-anchor="middle" font-size="12" '
        f'transform="rotate(-90 16 {top + ph / 2:.1f})">test accuracy</text>',
    ]
    for k in range(6):
        yv = y0 + (y1 - y0) * k / 5
        out.append(f'<text x="{left - 6}" y="{py(yv) + 4:.1f}" text-anchor="end" font-size="10">{yv:.2f}</text>')
    for xv in sorted({int(x) for x in xs}):
        out.append(f'<text x="{px(xv):.1f}" y="{top + ph + 16}" text-anchor="middle" font-size="10">{xv}</text>')

    for i, r in enumerate(runs):
        color = _PALETTE[i % len(_PALETTE)]
        upper = [(px(x), py(min(y1, m + s))) for x, m, s in zip(r.labeled, r.acc_mean, r.acc_std)]
        lower = [(px(x), py(max(y0, m - s))) for x, m, s in zip(r.labeled, r.acc_mean, r.acc_std)]
        band = " ".join(f"{a:.2f},{b:.2f}" for a, b in upper + lower[::-1])
        line = " ".join(f"{px(x):.2f},{py(m):.2f}" for x, m in zip(r.labeled, r.acc_mean))
        out.append(f'<g class="series" data-label="{_attr(r.label)}">')
        out.append(f'<polygon points="{band}" fill="{color}" fill-opacity="0.15" stroke="none"/>')
        out.append(f'<polyline points="{line}" fill="none" stroke="{color}" stroke-width="2"/>')
        for row, x, m in zip(r.raw_rows, r.labeled, r.acc_mean):
            out.append(
                f'<circle cx="{px(x):.2f}" cy="{py(m):.2f}" r="3" fill="{color}" '
                f'data-labeled="{row["labeled_count"]}" data-acc-mean="{row["acc_mean"]}" '
                f'data-acc-std="{row["acc_std"]}"/>'
            )
        out.append("</g>")
        ly = top + 14 + 18 * i
        out.append(f'<line x1="{left + pw + 12}" y1="{ly}" x2="{left + pw + 32}" y2="{ly}" stroke="{color}" stroke-width="2"/>')
        out.append(f'<text class="legend" x="{left + pw + 38}" y="{ly + 4}" font-size="11">{escape(r.label)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
