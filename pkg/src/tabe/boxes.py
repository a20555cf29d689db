"""Amodal bounding-box estimation from visible masks.

Boxes are axis-aligned, half-open in pixel units: (x0, y0, x1, y1) with
x0 < x1 and y0 < y1, so a single pixel (u, v) has box (u, v, u+1, v+1).
Boxes are stored unclamped — extrapolation may carry them beyond the image,
which is exactly what signals an out-of-frame object downstream — and are
clamped only at consumption time.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path

import numpy as np

from .core import ValidationError, VideoGeometry, mask_area
from .occlusion import OcclusionLabel, OcclusionVerdict


class BoxProvenance(str, Enum):
    OBSERVED = "observed"
    INTERPOLATED = "interpolated"
    EXTRAPOLATED = "extrapolated"
    GROWN = "grown"


@dataclass(frozen=True)
class AmodalBox:
    frame_index: int
    x0: float
    y0: float
    x1: float
    y1: float
    provenance: BoxProvenance

    def __post_init__(self):
        if not (self.x0 < self.x1 and self.y0 < self.y1):
            raise ValidationError(
                f"box must have positive extent, got ({self.x0}, {self.y0},"
                f" {self.x1}, {self.y1})"
            )

    @property
    def width(self) -> float:
        return self.x1 - self.x0

    @property
    def height(self) -> float:
        return self.y1 - self.y0

    @property
    def area(self) -> float:
        return self.width * self.height

    @property
    def center(self) -> tuple[float, float]:
        return ((self.x0 + self.x1) / 2.0, (self.y0 + self.y1) / 2.0)

    def to_json(self) -> dict:
        return {
            "frame": self.frame_index,
            "x0": self.x0,
            "y0": self.y0,
            "x1": self.x1,
            "y1": self.y1,
            "provenance": self.provenance.value,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "AmodalBox":
        return cls(
            frame_index=int(obj["frame"]),
            x0=float(obj["x0"]),
            y0=float(obj["y0"]),
            x1=float(obj["x1"]),
            y1=float(obj["y1"]),
            provenance=BoxProvenance(obj["provenance"]),
        )


@dataclass(frozen=True)
class BoxGrowthConfig:
    """When to consider growing an occluded frame's box.

    A drop of more than ``area_drop_fraction`` against the running maximum
    of recent unoccluded observed areas (over ``window`` frames) marks a
    potential occlusion worth growing for; an entirely missing observed box
    always qualifies.
    """

    area_drop_fraction: float = 0.25
    window: int = 5


def observed_box(mask: np.ndarray, frame_index: int = 0) -> AmodalBox | None:
    """Tight box over the mask's true pixels; None for an empty mask."""
    if mask_area(mask) == 0:
        return None
    vs, us = np.nonzero(mask)
    return AmodalBox(
        frame_index=frame_index,
        x0=float(us.min()),
        y0=float(vs.min()),
        x1=float(us.max() + 1),
        y1=float(vs.max() + 1),
        provenance=BoxProvenance.OBSERVED,
    )


def _lerp(a: AmodalBox, b: AmodalBox, i: int, provenance: BoxProvenance) -> AmodalBox:
    # per-corner linear interpolation on frame index; endpoints are valid
    # boxes, so every in-between box has positive extent
    t = (i - a.frame_index) / (b.frame_index - a.frame_index)
    return AmodalBox(
        frame_index=i,
        x0=a.x0 + t * (b.x0 - a.x0),
        y0=a.y0 + t * (b.y0 - a.y0),
        x1=a.x1 + t * (b.x1 - a.x1),
        y1=a.y1 + t * (b.y1 - a.y1),
        provenance=provenance,
    )


def _extrapolate(a: AmodalBox, b: AmodalBox, anchor: AmodalBox, i: int) -> AmodalBox:
    # constant center velocity with the anchor's extents held fixed.
    # Observed boxes shrink while an object slides behind an occluder, so
    # per-corner extrapolation would collapse to non-positive extents on
    # trailing gaps; rigid motion keeps every box valid.
    vx = (b.center[0] - a.center[0]) / (b.frame_index - a.frame_index)
    vy = (b.center[1] - a.center[1]) / (b.frame_index - a.frame_index)
    cx = anchor.center[0] + vx * (i - anchor.frame_index)
    cy = anchor.center[1] + vy * (i - anchor.frame_index)
    return AmodalBox(
        frame_index=i,
        x0=cx - anchor.width / 2.0,
        y0=cy - anchor.height / 2.0,
        x1=cx + anchor.width / 2.0,
        y1=cy + anchor.height / 2.0,
        provenance=BoxProvenance.EXTRAPOLATED,
    )


def fill_missing_boxes(
    boxes: list[AmodalBox | None], geometry: VideoGeometry
) -> list[AmodalBox]:
    """Fill gaps in an observed-box sequence by interpolation/extrapolation.

    Interior gaps interpolate per corner between the bracketing observed
    boxes; leading/trailing gaps extrapolate at the constant center
    velocity of the two nearest observed boxes with the nearest box's
    extents held (or copy, when only one box was observed). Results are
    not clamped to the image.
    """
    if len(boxes) != geometry.frame_count:
        raise ValidationError(
            f"{len(boxes)} boxes vs frame_count {geometry.frame_count}"
        )
    observed = [i for i, b in enumerate(boxes) if b is not None]
    if not observed:
        raise ValidationError("cannot fill boxes: no frame has an observed box")
    out: list[AmodalBox] = []
    first, last = observed[0], observed[-1]
    for i in range(geometry.frame_count):
        if boxes[i] is not None:
            out.append(replace(boxes[i], frame_index=i))
        elif i < first:
            if len(observed) == 1:
                out.append(replace(boxes[first], frame_index=i, provenance=BoxProvenance.EXTRAPOLATED))
            else:
                a, b = boxes[observed[0]], boxes[observed[1]]
                out.append(_extrapolate(a, b, a, i))
        elif i > last:
            if len(observed) == 1:
                out.append(replace(boxes[last], frame_index=i, provenance=BoxProvenance.EXTRAPOLATED))
            else:
                a, b = boxes[observed[-2]], boxes[observed[-1]]
                out.append(_extrapolate(a, b, b, i))
        else:
            prev = max(j for j in observed if j < i)
            nxt = min(j for j in observed if j > i)
            out.append(_lerp(boxes[prev], boxes[nxt], i, BoxProvenance.INTERPOLATED))
    return out


def grow_for_occlusion(
    box: AmodalBox, verdict: OcclusionVerdict, reference_area: float
) -> AmodalBox:
    """Scale an occluded frame's box about its center up to a reference area.

    Aspect ratio is preserved; boxes already at or above the reference are
    returned unchanged. The reference is the observed-box area of the most
    recent unoccluded frame.
    """
    if verdict.label is not OcclusionLabel.OCCLUDED:
        raise ValidationError("grow_for_occlusion applies to occluded frames only")
    if reference_area <= 0:
        raise ValidationError(f"reference area must be positive, got {reference_area}")
    if box.area >= reference_area:
        return box
    s = math.sqrt(reference_area / box.area)
    cx, cy = box.center
    return AmodalBox(
        frame_index=box.frame_index,
        x0=cx - s * box.width / 2.0,
        y0=cy - s * box.height / 2.0,
        x1=cx + s * box.width / 2.0,
        y1=cy + s * box.height / 2.0,
        provenance=BoxProvenance.GROWN,
    )


def adjust_box(box: AmodalBox, expansion_percent: float) -> AmodalBox:
    """Expand (positive) or contract (negative percent) a box about its center."""
    if expansion_percent <= -100.0:
        raise ValidationError("expansion_percent must exceed -100")
    s = 1.0 + expansion_percent / 100.0
    cx, cy = box.center
    return AmodalBox(
        frame_index=box.frame_index,
        x0=cx - s * box.width / 2.0,
        y0=cy - s * box.height / 2.0,
        x1=cx + s * box.width / 2.0,
        y1=cy + s * box.height / 2.0,
        provenance=box.provenance,
    )


def clamp_box_to_image(
    box: AmodalBox, width: int, height: int
) -> tuple[float, float, float, float] | None:
    """Intersect with the image rectangle; None when nothing remains."""
    x0, y0 = max(box.x0, 0.0), max(box.y0, 0.0)
    x1, y1 = min(box.x1, float(width)), min(box.y1, float(height))
    if x0 >= x1 or y0 >= y1:
        return None
    return (x0, y0, x1, y1)


def box_pixel_region(box: AmodalBox, width: int, height: int) -> np.ndarray | None:
    """Bool image of pixels geometrically inside the clamped box.

    Fractional edges round outward (floor/ceil) so the box never cuts off
    pixels it partially covers.
    """
    clamped = clamp_box_to_image(box, width, height)
    if clamped is None:
        return None
    x0, y0, x1, y1 = clamped
    u0, v0 = int(math.floor(x0)), int(math.floor(y0))
    u1, v1 = min(int(math.ceil(x1)), width), min(int(math.ceil(y1)), height)
    region = np.zeros((height, width), dtype=bool)
    region[v0:v1, u0:u1] = True
    return region


def grow_boxes(
    boxes: list[AmodalBox],
    verdicts: list[OcclusionVerdict],
    observed: list[AmodalBox | None],
    config: BoxGrowthConfig | None = None,
) -> list[AmodalBox]:
    """Sequence pass applying area-preserving growth on occluded frames.

    Growth targets the observed area of the most recent unoccluded frame
    (falling back to the first observed box before any unoccluded frame is
    seen) and triggers when the frame has no observed box or its observed
    area dropped more than the configured fraction below the running
    maximum of recent unoccluded areas.
    """
    config = config or BoxGrowthConfig()
    if not (len(boxes) == len(verdicts) == len(observed)):
        raise ValidationError("boxes, verdicts and observed sequences must align")
    fallback = next((b.area for b in observed if b is not None), None)
    recent_unoccluded: list[float] = []
    reference = fallback
    out = []
    for box, verdict, obs in zip(boxes, verdicts, observed):
        if verdict.label is OcclusionLabel.UNOCCLUDED and obs is not None:
            recent_unoccluded.append(obs.area)
            reference = obs.area
            out.append(box)
            continue
        if verdict.label is not OcclusionLabel.OCCLUDED or reference is None:
            out.append(box)
            continue
        window = recent_unoccluded[-config.window:]
        triggered = obs is None or (
            window and obs.area < (1.0 - config.area_drop_fraction) * max(window)
        )
        out.append(grow_for_occlusion(box, verdict, reference) if triggered else box)
    return out


def boxes_to_json(boxes: list[AmodalBox]) -> list[dict]:
    return [b.to_json() for b in boxes]


def save_boxes(boxes: list[AmodalBox], path: str | Path) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(json.dumps(boxes_to_json(boxes), indent=2, sort_keys=True) + "\n")


def load_boxes(path: str | Path) -> list[AmodalBox]:
    path = Path(path)
    if not path.is_file():
        raise ValidationError(f"boxes file not found: {path}")
    return [AmodalBox.from_json(obj) for obj in json.loads(path.read_text())]
