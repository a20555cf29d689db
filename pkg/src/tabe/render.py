"""Human-readable outputs: mask overlays and metric tables."""

from __future__ import annotations

import json

import numpy as np

from .core import ValidationError
from .metrics import CATEGORY_COLUMNS, METRIC_COLUMNS

# default layer colors: ground-truth amodal, ground-truth visible, prediction
PALETTE = {
    "green": (0.0, 0.8, 0.0),
    "red": (0.9, 0.1, 0.1),
    "magenta": (0.85, 0.1, 0.85),
    "blue": (0.15, 0.3, 0.9),
    "yellow": (0.9, 0.85, 0.1),
    "cyan": (0.1, 0.8, 0.8),
    "white": (1.0, 1.0, 1.0),
    "black": (0.0, 0.0, 0.0),
}

COLUMN_TITLES = {
    "mean_iou": "Mean IoU",
    "occlusion_iou": "Occlusion IoU",
    "full_occlusion_iou": "Full Occlusion IoU",
    "non_visible_pixel_iou": "Non Visible Pixel IoU",
}

ABSENT = "—"  # em dash placeholder for aggregates with no qualifying frames


def parse_color(spec: str) -> tuple[float, float, float]:
    if spec in PALETTE:
        return PALETTE[spec]
    if spec.startswith("#") and len(spec) == 7:
        return tuple(int(spec[i : i + 2], 16) / 255.0 for i in (1, 3, 5))
    raise ValidationError(f"unknown color {spec!r}; use a palette name or #rrggbb")


def render_overlay(
    frame: np.ndarray,
    layers: list[tuple[np.ndarray, tuple[float, float, float], float]],
) -> np.ndarray:
    """Alpha-blend mask layers over a frame, in order."""
    out = np.asarray(frame, dtype=np.float64).copy()
    for mask, color, opacity in layers:
        if mask.shape != out.shape[:2]:
            raise ValidationError(
                f"layer mask shape {mask.shape} != frame shape {out.shape[:2]}"
            )
        if not (0.0 <= opacity <= 1.0):
            raise ValidationError(f"layer opacity must be in [0, 1], got {opacity}")
        tint = np.asarray(color, dtype=np.float64)
        out[mask] = (1.0 - opacity) * out[mask] + opacity * tint
    return np.clip(out, 0.0, 1.0)


def _fmt(value) -> str:
    return ABSENT if value is None else f"{value:.3f}"


def _metric_row(label: str, metrics: dict) -> list[str]:
    return [label] + [_fmt(metrics.get(col)) for col in METRIC_COLUMNS]


def emit_report_table(report: dict) -> str:
    """Fixed-width text table mirroring the report JSON's metric columns.

    Accepts a single-sequence report or a combined multi-sequence report
    (which gets one row per aggregation level).
    """
    header = [""] + [COLUMN_TITLES[c] for c in METRIC_COLUMNS]
    if "pooled" in report:
        rows = [
            _metric_row("mean of sequences", report["mean_of_sequences"]),
            _metric_row("pooled frames", report["pooled"]),
        ]
        counts = report.get("counts", {})
    else:
        rows = [_metric_row("sequence", report)]
        counts = report.get("counts", {})
    widths = [max(len(r[i]) for r in [header] + rows) for i in range(len(header))]
    lines = []
    for row in [header] + rows:
        lines.append("  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip())
    if counts:
        shown = {k: counts[k] for k in ("sequences", *CATEGORY_COLUMNS) if k in counts}
        lines.append("")
        lines.append("counts: " + json.dumps(shown, sort_keys=True))
    return "\n".join(lines) + "\n"
