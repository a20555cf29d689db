"""Target region masks: where the outpainter is allowed to generate.

Combines two cues per frame: pixels nearer than the object itself (their
nearness exceeds the mean nearness over the visible mask — such pixels can
hide the object) and the amodal bounding box. The visible mask is unioned
back in so the outpainter may always keep what is actually seen.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .boxes import AmodalBox, box_pixel_region
from .core import ValidationError, mask_area


@dataclass
class TargetRegion:
    frame_index: int
    mask: np.ndarray


def build_target_region(
    visible: np.ndarray,
    nearness: np.ndarray,
    box: AmodalBox,
    reference_stat: str = "mean",
) -> np.ndarray:
    """Per-frame target region: ((nearness > mu) | visible) & box pixels.

    mu is the mean (or median) nearness over the visible mask, or over the
    clamped box interior when the frame has no visible pixels. The strict
    inequality keeps a constant field from flagging anything.
    """
    if visible.shape != nearness.shape:
        raise ValidationError(
            f"visible shape {visible.shape} != nearness shape {nearness.shape}"
        )
    if reference_stat not in ("mean", "median"):
        raise ValidationError(f"unknown reference_stat {reference_stat!r}")
    h, w = visible.shape
    region = box_pixel_region(box, w, h)
    if region is None:
        raise ValidationError(
            f"frame {box.frame_index}: amodal box lies entirely outside the image"
        )
    stat = np.mean if reference_stat == "mean" else np.median
    if mask_area(visible) > 0:
        mu = float(stat(nearness[visible]))
    else:
        mu = float(stat(nearness[region]))
    return ((nearness > mu) | visible) & region
