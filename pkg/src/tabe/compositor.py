"""Compositing math for dataset curation.

A test clip is built from three aligned captures of one static-camera
scene: the empty clean plate, the scene with the object to be occluded,
and the scene with the occluder alone. Treating the occluder capture as an
alpha blend of the clean plate and the unknown occluder color lets us
recover that color, then composite the occluder over the object scene —
yielding realistic occlusions with exact amodal ground truth (the object
clip's masks) for free.

Scene description file (paths relative to the file's directory)::

    {
      "width": W, "height": H,
      "frame_count": T,                    # optional; default: max aligned
      "clean_plate": ["cp/0000.png", ...],
      "background": ["bg/0000.png", ...],  # scene with the object
      "foreground": ["fg/0000.png", ...],  # scene with the occluder
      "alpha": ["a/0000.png", ...],        # 8-bit, value/255 = alpha
      "gt_amodal": ["gt/0000.png", ...],   # object masks from the bg clip
      "offsets": {"clean_plate": 0, "background": 0,
                  "foreground": 0, "alpha": 0, "gt_amodal": 0}
    }
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from . import io
from .core import ValidationError, VideoGeometry, mask_area
from .manifest import FrameRef, SequenceManifest, save_manifest

ALPHA_MIN = 1e-4  # below this the blend carries no occluder signal

_CLIPS = ("clean_plate", "background", "foreground", "alpha", "gt_amodal")


@dataclass
class CompositeFrame:
    """One aligned frame triple plus matte and ground-truth amodal mask."""

    frame_index: int
    clean_plate: np.ndarray
    background: np.ndarray
    foreground: np.ndarray
    alpha: np.ndarray
    gt_amodal: np.ndarray


def recover_foreground_color(
    frame: CompositeFrame, alpha_min: float = ALPHA_MIN, verbatim_eq: bool = False
) -> np.ndarray:
    """Solve the blend model for the occluder's unmixed color, clamped to [0, 1].

    The occluder capture mixes the clean plate with the occluder color, so
    the solve divides out against the clean plate. ``verbatim_eq`` divides
    against the object scene instead (an alternative published form of the
    solve); the two agree wherever the object scene matches the clean plate.
    Pixels with alpha <= alpha_min get color 0 — their weight is zero in
    any later blend, so the value never matters.
    """
    base = frame.background if verbatim_eq else frame.clean_plate
    a = frame.alpha[..., None]
    safe = np.where(a > alpha_min, a, 1.0)
    color = (frame.foreground - (1.0 - a) * base) / safe
    color = np.where(a > alpha_min, np.clip(color, 0.0, 1.0), 0.0)
    return color


def composite(frame: CompositeFrame, fg_color: np.ndarray) -> np.ndarray:
    """Blend the recovered occluder over the scene containing the object."""
    a = frame.alpha[..., None]
    return (1.0 - a) * frame.background + a * fg_color


def derive_visible_mask(frame: CompositeFrame, alpha_cut: float = 0.5) -> np.ndarray:
    """Ground-truth visible mask: amodal pixels the occluder does not cover."""
    if not (0.0 <= alpha_cut < 1.0):
        raise ValidationError(f"alpha_cut must lie in [0, 1), got {alpha_cut}")
    return frame.gt_amodal & (frame.alpha <= alpha_cut)


def depth_refine_mask(
    mask: np.ndarray, nearness: np.ndarray, margin: float = 0.05
) -> np.ndarray:
    """Drop mask pixels farther away than the mask's average nearness.

    Useful when a segmenter bleeds into background seen through fine
    structure: pixels with nearness below (mean - margin) are cut.
    """
    if mask_area(mask) == 0:
        raise ValidationError("cannot depth-refine an empty mask")
    if mask.shape != nearness.shape:
        raise ValidationError(
            f"mask shape {mask.shape} != nearness shape {nearness.shape}"
        )
    mu = float(nearness[mask].mean())
    return mask & (nearness >= mu - margin)


def load_alpha(path: str | Path, geometry: VideoGeometry | None = None) -> np.ndarray:
    """8-bit single-channel matte image; alpha = value / 255."""
    path = Path(path)
    if not path.is_file():
        raise ValidationError(f"alpha file not found: {path}")
    with Image.open(path) as img:
        arr = np.asarray(img)
    if arr.ndim != 2:
        raise ValidationError(f"alpha file must be single-channel: {path}")
    alpha = arr.astype(np.float64) / 255.0
    if geometry is not None and alpha.shape != geometry.shape:
        raise ValidationError(f"alpha {path} has shape {alpha.shape}, expected {geometry.shape}")
    return alpha


def save_alpha(alpha: np.ndarray, path: str | Path) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    arr = np.round(np.clip(alpha, 0.0, 1.0) * 255.0).astype(np.uint8)
    Image.fromarray(arr, mode="L").save(path)


@dataclass
class SceneSpec:
    width: int
    height: int
    frame_count: int
    clips: dict[str, list[str]]
    offsets: dict[str, int]
    root: Path = field(default_factory=Path)

    def frame(self, i: int) -> CompositeFrame:
        geom = VideoGeometry(self.width, self.height, max(self.frame_count, 1))

        def p(clip: str) -> Path:
            return Path(self.root) / self.clips[clip][self.offsets.get(clip, 0) + i]

        return CompositeFrame(
            frame_index=i,
            clean_plate=io.load_image(p("clean_plate"), geom),
            background=io.load_image(p("background"), geom),
            foreground=io.load_image(p("foreground"), geom),
            alpha=load_alpha(p("alpha"), geom),
            gt_amodal=io.load_mask(p("gt_amodal"), geom),
        )


def load_scene(path: str | Path) -> SceneSpec:
    path = Path(path)
    if not path.is_file():
        raise ValidationError(f"scene file not found: {path}")
    obj = json.loads(path.read_text())
    missing = [k for k in _CLIPS if k not in obj]
    if missing:
        raise ValidationError(f"scene {path} is missing clips: {missing}")
    offsets = {k: int(v) for k, v in obj.get("offsets", {}).items()}
    unknown = set(offsets) - set(_CLIPS)
    if unknown:
        raise ValidationError(f"scene offsets name unknown clips: {sorted(unknown)}")
    available = min(len(obj[k]) - offsets.get(k, 0) for k in _CLIPS)
    frame_count = int(obj.get("frame_count", available))
    if frame_count < 1 or frame_count > available:
        raise ValidationError(
            f"scene needs 1..{available} frames after offsets, asked for {frame_count}"
        )
    return SceneSpec(
        width=int(obj["width"]),
        height=int(obj["height"]),
        frame_count=frame_count,
        clips={k: list(obj[k]) for k in _CLIPS},
        offsets=offsets,
        root=path.parent,
    )


def run_compositing(
    scene: SceneSpec,
    out_dir: str | Path,
    alpha_cut: float = 0.5,
    alpha_min: float = ALPHA_MIN,
    verbatim_eq: bool = False,
) -> Path:
    """Composite a whole scene; emits frames, GT masks, and a manifest."""
    out_dir = Path(out_dir)
    geometry = VideoGeometry(scene.width, scene.height, scene.frame_count)
    frames = []
    for i in range(scene.frame_count):
        cf = scene.frame(i)
        color = recover_foreground_color(cf, alpha_min=alpha_min, verbatim_eq=verbatim_eq)
        comp = np.clip(composite(cf, color), 0.0, 1.0)
        visible = derive_visible_mask(cf, alpha_cut=alpha_cut)
        io.save_image(comp, out_dir / f"frames/frame_{i:04d}.png")
        io.save_mask(cf.gt_amodal, out_dir / f"gt_amodal/{i:04d}.png")
        io.save_mask(visible, out_dir / f"gt_visible/{i:04d}.png")
        frames.append(
            FrameRef(
                image=f"frames/frame_{i:04d}.png",
                gt_amodal_mask=f"gt_amodal/{i:04d}.png",
                gt_visible_mask=f"gt_visible/{i:04d}.png",
            )
        )
    manifest = SequenceManifest(geometry=geometry, frames=frames, root=out_dir)
    manifest_path = out_dir / "manifest.json"
    save_manifest(manifest, manifest_path)
    return manifest_path
