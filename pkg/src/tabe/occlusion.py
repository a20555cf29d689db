"""Occlusion reasoning from visible masks and nearness maps.

At each visible-mask boundary pixel we probe the nearness field a short
distance along the outward normal. A positive outward derivative means the
scene gets *closer* just outside the mask, i.e. a nearer surface truncates
the object there: a likely occlusion boundary. The occlusion measure f_occ
is the arc-length-weighted fraction of boundary samples flagged this way,
and per-frame verdicts (unoccluded / occluded / out-of-frame) follow from
it plus bounding-box extrapolation for frames with no visible pixels.

Discretization, fixed here so f_occ has one concrete meaning:

- boundary pixel: a mask pixel with at least one non-mask neighbor under
  the configured connectivity (pixels beyond the image count as outside);
- outward normal: normalized gradient of the mask's signed distance field
  (negative inside, positive outside), computed on a one-pixel padded grid
  so image borders behave like outside;
- arc weight: 1 / max(|n_u|, |n_v|) per sample, i.e. 1 on axis-aligned
  runs and sqrt(2) on diagonal runs, approximating true perimeter;
- derivative: forward finite difference over ``probe_distance`` pixels
  with bilinear sampling, probes clamped to the image;
- samples whose probe was clamped at the image border and still lands
  inside the mask get flag = False: the image edge is not occlusion
  evidence.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy import ndimage

from .core import ValidationError, mask_area

_CROSS = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool)
_FULL = np.ones((3, 3), dtype=bool)


class OcclusionLabel(str, Enum):
    UNOCCLUDED = "unoccluded"
    OCCLUDED = "occluded"
    OUT_OF_FRAME = "out_of_frame"


@dataclass(frozen=True)
class OcclusionConfig:
    """Thresholds and discretization knobs for occlusion reasoning.

    ``derivative_threshold`` applies after optional per-frame min-max
    normalization of the nearness field to [0, 1], which lets one default
    serve heterogeneous depth sources. ``verdict_threshold`` is the single
    f_occ cut separating unoccluded from occluded frames.
    """

    derivative_threshold: float = 0.05
    verdict_threshold: float = 0.2
    probe_distance: float = 2.0
    boundary_connectivity: int = 4
    normalize_nearness: bool = True

    def __post_init__(self):
        if self.derivative_threshold < 0:
            raise ValidationError("derivative_threshold must be >= 0")
        if not (0.0 < self.verdict_threshold < 1.0):
            raise ValidationError("verdict_threshold must lie in (0, 1)")
        if self.probe_distance < 1:
            raise ValidationError("probe_distance must be >= 1 pixel")
        if self.boundary_connectivity not in (4, 8):
            raise ValidationError("boundary_connectivity must be 4 or 8")


@dataclass
class BoundarySample:
    """One boundary pixel with its outward normal and arc contribution."""

    u: int
    v: int
    normal: tuple[float, float]
    arc_weight: float
    directional_derivative: float = 0.0
    flag: bool = False


@dataclass
class OcclusionVerdict:
    """Per-frame occlusion verdict; V is 1 exactly for unoccluded frames."""

    frame_index: int
    f_occ: float | None
    label: OcclusionLabel
    V: int = 0

    def __post_init__(self):
        self.V = 1 if self.label is OcclusionLabel.UNOCCLUDED else 0

    def to_json(self) -> dict:
        return {
            "frame": self.frame_index,
            "f_occ": self.f_occ,
            "label": self.label.value,
            "V": self.V,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "OcclusionVerdict":
        return cls(
            frame_index=int(obj["frame"]),
            f_occ=None if obj.get("f_occ") is None else float(obj["f_occ"]),
            label=OcclusionLabel(obj["label"]),
        )


def signed_distance_field(mask: np.ndarray) -> np.ndarray:
    """Signed pixel distance to the mask boundary, negative inside.

    Computed on a one-pixel false-padded grid and cropped back, so masks
    touching the image border see "outside" beyond it.
    """
    padded = np.pad(mask, 1, constant_values=False)
    outside = ndimage.distance_transform_edt(~padded)
    inside = ndimage.distance_transform_edt(padded)
    return (outside - inside)[1:-1, 1:-1]


def boundary_pixels(mask: np.ndarray, connectivity: int = 4) -> np.ndarray:
    """Mask pixels with a non-mask neighbor (image border counts as outside)."""
    structure = _CROSS if connectivity == 4 else _FULL
    interior = ndimage.binary_erosion(mask, structure=structure, border_value=0)
    return mask & ~interior


def extract_boundary(mask: np.ndarray, config: OcclusionConfig) -> list[BoundarySample]:
    """Boundary samples with outward normals and arc weights for a mask."""
    if mask_area(mask) == 0:
        raise ValidationError("cannot extract the boundary of an empty mask")
    sdf = np.pad(signed_distance_field(mask), 1, mode="edge")
    grad_v, grad_u = np.gradient(sdf)
    border = boundary_pixels(mask, config.boundary_connectivity)
    vs, us = np.nonzero(border)
    # centroid fallback direction for degenerate (thin-structure) gradients
    cu, cv = float(us.mean()), float(vs.mean())
    samples = []
    for v, u in zip(vs.tolist(), us.tolist()):
        gu, gv = float(grad_u[v + 1, u + 1]), float(grad_v[v + 1, u + 1])
        norm = float(np.hypot(gu, gv))
        if norm < 1e-9:
            gu, gv = u - cu, v - cv
            norm = float(np.hypot(gu, gv))
            if norm < 1e-9:
                gu, gv, norm = 1.0, 0.0, 1.0
        nu, nv = gu / norm, gv / norm
        samples.append(
            BoundarySample(
                u=u,
                v=v,
                normal=(nu, nv),
                arc_weight=1.0 / max(abs(nu), abs(nv)),
            )
        )
    return samples


def bilinear_sample(field: np.ndarray, u: float, v: float) -> float:
    """Bilinear interpolation with coordinates clamped to the image."""
    h, w = field.shape
    u = min(max(u, 0.0), w - 1.0)
    v = min(max(v, 0.0), h - 1.0)
    u0, v0 = int(u), int(v)
    u1, v1 = min(u0 + 1, w - 1), min(v0 + 1, h - 1)
    fu, fv = u - u0, v - v0
    top = field[v0, u0] * (1.0 - fu) + field[v0, u1] * fu
    bottom = field[v1, u0] * (1.0 - fu) + field[v1, u1] * fu
    return float(top * (1.0 - fv) + bottom * fv)


def directional_depth_derivative(
    nearness: np.ndarray, sample: BoundarySample, config: OcclusionConfig
) -> float:
    """Outward finite-difference derivative of nearness at a boundary sample.

    Returns (z(p + d*n) - z(p)) / d with bilinear sampling; probes falling
    outside the image are clamped to the nearest valid pixel, which makes
    the operation total.
    """
    d = config.probe_distance
    pu, pv = sample.u + d * sample.normal[0], sample.v + d * sample.normal[1]
    here = bilinear_sample(nearness, float(sample.u), float(sample.v))
    there = bilinear_sample(nearness, pu, pv)
    return (there - here) / d


def _probe_was_clamped(sample: BoundarySample, config: OcclusionConfig, shape) -> tuple[float, float, bool]:
    h, w = shape
    d = config.probe_distance
    pu, pv = sample.u + d * sample.normal[0], sample.v + d * sample.normal[1]
    cu = min(max(pu, 0.0), w - 1.0)
    cv = min(max(pv, 0.0), h - 1.0)
    return cu, cv, (cu != pu or cv != pv)


def normalize_nearness(nearness: np.ndarray) -> np.ndarray:
    """Min-max normalize to [0, 1]; a constant field maps to all zeros."""
    lo, hi = float(nearness.min()), float(nearness.max())
    if hi - lo <= 0.0:
        return np.zeros_like(nearness, dtype=np.float64)
    return (np.asarray(nearness, dtype=np.float64) - lo) / (hi - lo)


def flag_boundary_samples(
    mask: np.ndarray, nearness: np.ndarray, config: OcclusionConfig
) -> list[BoundarySample]:
    """Boundary samples with derivatives and occlusion flags filled in."""
    if mask.shape != nearness.shape:
        raise ValidationError(
            f"mask shape {mask.shape} != nearness shape {nearness.shape}"
        )
    field = normalize_nearness(nearness) if config.normalize_nearness else nearness
    samples = extract_boundary(mask, config)
    for s in samples:
        s.directional_derivative = directional_depth_derivative(field, s, config)
        cu, cv, clamped = _probe_was_clamped(s, config, mask.shape)
        if clamped and mask[int(round(cv)), int(round(cu))]:
            s.flag = False
        else:
            s.flag = s.directional_derivative > config.derivative_threshold
    return samples


def occlusion_fraction(
    mask: np.ndarray, nearness: np.ndarray, config: OcclusionConfig
) -> float:
    """Arc-weighted fraction of the mask boundary flagged as occlusion."""
    if mask_area(mask) == 0:
        raise ValidationError("f_occ is undefined for an empty mask")
    samples = flag_boundary_samples(mask, nearness, config)
    total = sum(s.arc_weight for s in samples)
    flagged = sum(s.arc_weight for s in samples if s.flag)
    return flagged / total


def label_frames(
    visible: list[np.ndarray],
    nearness: list[np.ndarray],
    boxes=None,
    config: OcclusionConfig | None = None,
) -> list[OcclusionVerdict]:
    """Assign per-frame occlusion verdicts.

    Frames with visible pixels are unoccluded iff f_occ stays below the
    verdict threshold. Frames with no visible pixels are occluded unless
    the extrapolated bounding box (when given) lies fully outside the
    image, which marks the object as out of frame.
    """
    from .boxes import clamp_box_to_image  # local import to avoid a cycle

    config = config or OcclusionConfig()
    if len(visible) != len(nearness):
        raise ValidationError(
            f"{len(visible)} visible masks vs {len(nearness)} nearness maps"
        )
    if boxes is not None and len(boxes) != len(visible):
        raise ValidationError(f"{len(boxes)} boxes vs {len(visible)} frames")
    verdicts = []
    for i, (mask, near) in enumerate(zip(visible, nearness)):
        if mask_area(mask) > 0:
            f = occlusion_fraction(mask, near, config)
            label = (
                OcclusionLabel.UNOCCLUDED
                if f < config.verdict_threshold
                else OcclusionLabel.OCCLUDED
            )
            verdicts.append(OcclusionVerdict(i, f, label))
            continue
        label = OcclusionLabel.OCCLUDED
        if boxes is not None and boxes[i] is not None:
            h, w = mask.shape
            if clamp_box_to_image(boxes[i], w, h) is None:
                label = OcclusionLabel.OUT_OF_FRAME
        verdicts.append(OcclusionVerdict(i, None, label))
    return verdicts
