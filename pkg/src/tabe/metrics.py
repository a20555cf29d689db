"""Evaluation metrics for amodal segmentation.

Plain IoU rewards visible-pixel segmentation, so the report splits out the
frames that actually exercise amodal completion:

- occlusion IoU: amodal IoU averaged over frames with any occlusion
  (ground-truth visible area below the amodal area);
- full occlusion IoU: averaged over frames with no visible pixels at all;
- non-visible-pixel IoU: ground-truth visible pixels are removed from both
  prediction and ground truth, scoring only the hidden pixels.

Frames whose ground-truth amodal mask is empty are excluded from every
aggregate, and an aggregate with no qualifying frames is reported as
absent rather than zero.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import ValidationError, mask_area

METRIC_COLUMNS = ("mean_iou", "occlusion_iou", "full_occlusion_iou", "non_visible_pixel_iou")
CATEGORY_COLUMNS = ("frames", "occluded", "heavily_occluded", "fully_occluded")

HEAVY_OCCLUSION_FRACTION = 0.5  # strictly more than half the object hidden


def iou(a: np.ndarray, b: np.ndarray) -> float | None:
    """Intersection over union; None (skipped) when both masks are empty."""
    if a.shape != b.shape:
        raise ValidationError(f"mask shapes differ: {a.shape} vs {b.shape}")
    union = int(np.count_nonzero(a | b))
    if union == 0:
        return None
    return int(np.count_nonzero(a & b)) / union


def non_visible_pixel_iou(
    pred: np.ndarray, gt_amodal: np.ndarray, gt_visible: np.ndarray
) -> float | None:
    """IoU restricted to hidden pixels.

    Ground-truth visible pixels are removed from both masks first; frames
    with no hidden ground-truth pixels are skipped (None).
    """
    if not (pred.shape == gt_amodal.shape == gt_visible.shape):
        raise ValidationError("pred / gt_amodal / gt_visible shapes differ")
    if np.any(gt_visible & ~gt_amodal):
        raise ValidationError("gt_visible must be a subset of gt_amodal")
    hidden_gt = gt_amodal & ~gt_visible
    if mask_area(hidden_gt) == 0:
        return None
    return iou(pred & ~gt_visible, hidden_gt)


@dataclass
class FrameEval:
    frame_index: int
    iou: float | None
    non_visible_pixel_iou: float | None
    occlusion_fraction: float | None
    occluded: bool
    heavily_occluded: bool
    fully_occluded: bool
    evaluated: bool  # false when the GT amodal mask is empty

    def to_json(self) -> dict:
        return {
            "frame": self.frame_index,
            "iou": self.iou,
            "non_visible_pixel_iou": self.non_visible_pixel_iou,
            "occlusion_fraction": self.occlusion_fraction,
            "occluded": self.occluded,
            "heavily_occluded": self.heavily_occluded,
            "fully_occluded": self.fully_occluded,
            "evaluated": self.evaluated,
        }


@dataclass
class EvalReport:
    mean_iou: float | None
    occlusion_iou: float | None
    full_occlusion_iou: float | None
    non_visible_pixel_iou: float | None
    frames: list[FrameEval]
    counts: dict[str, int]

    def to_json(self) -> dict:
        return {
            "mean_iou": self.mean_iou,
            "occlusion_iou": self.occlusion_iou,
            "full_occlusion_iou": self.full_occlusion_iou,
            "non_visible_pixel_iou": self.non_visible_pixel_iou,
            "counts": dict(self.counts),
            "frames": [f.to_json() for f in self.frames],
        }


def _mean(values: list[float]) -> float | None:
    return sum(values) / len(values) if values else None


def evaluate_frame(
    pred: np.ndarray, gt_amodal: np.ndarray, gt_visible: np.ndarray, frame_index: int = 0
) -> FrameEval:
    amodal_area = mask_area(gt_amodal)
    visible_area = mask_area(gt_visible)
    if amodal_area == 0:
        return FrameEval(frame_index, None, None, None, False, False, False, evaluated=False)
    fraction = 1.0 - visible_area / amodal_area
    return FrameEval(
        frame_index=frame_index,
        iou=iou(pred, gt_amodal),
        non_visible_pixel_iou=non_visible_pixel_iou(pred, gt_amodal, gt_visible),
        occlusion_fraction=fraction,
        occluded=visible_area < amodal_area,
        heavily_occluded=fraction > HEAVY_OCCLUSION_FRACTION,
        fully_occluded=visible_area == 0,
        evaluated=True,
    )


def evaluate_sequence(
    pred: list[np.ndarray],
    gt_amodal: list[np.ndarray],
    gt_visible: list[np.ndarray],
) -> EvalReport:
    if not (len(pred) == len(gt_amodal) == len(gt_visible)):
        raise ValidationError("pred / gt_amodal / gt_visible lengths differ")
    frames = [
        evaluate_frame(p, a, v, i)
        for i, (p, a, v) in enumerate(zip(pred, gt_amodal, gt_visible))
    ]
    scored = [f for f in frames if f.evaluated]
    return EvalReport(
        mean_iou=_mean([f.iou for f in scored if f.iou is not None]),
        occlusion_iou=_mean([f.iou for f in scored if f.occluded and f.iou is not None]),
        full_occlusion_iou=_mean(
            [f.iou for f in scored if f.fully_occluded and f.iou is not None]
        ),
        non_visible_pixel_iou=_mean(
            [f.non_visible_pixel_iou for f in scored if f.non_visible_pixel_iou is not None]
        ),
        frames=frames,
        counts={
            "frames": len(frames),
            "evaluated": len(scored),
            "occluded": sum(f.occluded for f in scored),
            "heavily_occluded": sum(f.heavily_occluded for f in scored),
            "fully_occluded": sum(f.fully_occluded for f in scored),
        },
    )


def gt_stats(gt_amodal: list[np.ndarray], gt_visible: list[np.ndarray]) -> dict[str, int]:
    """Dataset category counts from ground truth alone."""
    report = evaluate_sequence(gt_amodal, gt_amodal, gt_visible)
    return {k: report.counts[k] for k in CATEGORY_COLUMNS}


def combine_reports(reports: list[EvalReport]) -> dict:
    """Aggregate several sequences two ways: mean of sequence means, and pooled.

    The two coincide only for equal-length sequences; both are reported.
    """
    if not reports:
        raise ValidationError("no reports to combine")
    per_sequence = [r.to_json() for r in reports]
    mean_of_sequences = {
        col: _mean([r.to_json()[col] for r in reports if r.to_json()[col] is not None])
        for col in METRIC_COLUMNS
    }
    all_frames = [f for r in reports for f in r.frames if f.evaluated]
    pooled = {
        "mean_iou": _mean([f.iou for f in all_frames if f.iou is not None]),
        "occlusion_iou": _mean([f.iou for f in all_frames if f.occluded and f.iou is not None]),
        "full_occlusion_iou": _mean(
            [f.iou for f in all_frames if f.fully_occluded and f.iou is not None]
        ),
        "non_visible_pixel_iou": _mean(
            [f.non_visible_pixel_iou for f in all_frames if f.non_visible_pixel_iou is not None]
        ),
    }
    counts = {
        "sequences": len(reports),
        "frames": sum(r.counts["frames"] for r in reports),
        "evaluated": sum(r.counts["evaluated"] for r in reports),
        "occluded": sum(r.counts["occluded"] for r in reports),
        "heavily_occluded": sum(r.counts["heavily_occluded"] for r in reports),
        "fully_occluded": sum(r.counts["fully_occluded"] for r in reports),
    }
    return {
        "mean_of_sequences": mean_of_sequences,
        "pooled": pooled,
        "counts": counts,
        "per_sequence": per_sequence,
    }


def save_report(report: EvalReport | dict, path: str | Path) -> None:
    obj = report.to_json() if isinstance(report, EvalReport) else report
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")
