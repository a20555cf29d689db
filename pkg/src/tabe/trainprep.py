"""Fine-tuning sample preparation for the video outpainter.

Each frame becomes a training sample: the object isolated on a white
background, a random binary mask (thick strokes plus rectangles — some
deliberately occluding the object so the model learns to restore it, some
on the background so it learns to keep the background white), the masked
conditioning image, the fixed rare-token prompt, and the per-frame loss
bit V copied from the occlusion verdicts. Occluded frames stay in the
sequence as conditioning context; V = 0 excludes them from the loss.

Everything is deterministic under (config, seed): reruns produce
byte-identical artifacts.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import io
from .core import ValidationError, VideoGeometry, mask_area
from .occlusion import OcclusionVerdict

PROMPT_TEMPLATE = "A video of a {token} on a white background"
DEFAULT_TOKEN = "sks"

# downstream fine-tune defaults recorded into every manifest
FINETUNE_DEFAULTS = {
    "steps": 500,
    "resolution": [512, 512],
    "learning_rate": 1e-3,
    "batch_size": 1,
    "sequence_length": 16,
}

MANIFEST_NAME = "finetune_manifest.json"
MANIFEST_SCHEMA_VERSION = 1


@dataclass(frozen=True)
class MaskGenConfig:
    """Random-mask family parameters; identical config + seed => identical masks."""

    seed: int = 0
    strokes_per_mask: tuple[int, int] = (1, 3)
    stroke_width: tuple[int, int] = (3, 9)
    rectangles_per_mask: tuple[int, int] = (0, 2)
    min_object_overlap_fraction: float = 0.15
    background_mask_count: tuple[int, int] = (1, 2)

    def to_json(self) -> dict:
        return {
            "seed": self.seed,
            "strokes_per_mask": list(self.strokes_per_mask),
            "stroke_width": list(self.stroke_width),
            "rectangles_per_mask": list(self.rectangles_per_mask),
            "min_object_overlap_fraction": self.min_object_overlap_fraction,
            "background_mask_count": list(self.background_mask_count),
        }


@dataclass
class TrainSample:
    frame_index: int
    input_image: np.ndarray
    random_mask: np.ndarray
    masked_input: np.ndarray
    V: int
    prompt: str


def isolate_on_white(frame: np.ndarray, visible: np.ndarray) -> np.ndarray:
    """Copy object pixels, paint everything else pure white."""
    if frame.shape[:2] != visible.shape:
        raise ValidationError(
            f"frame shape {frame.shape[:2]} != mask shape {visible.shape}"
        )
    out = np.ones_like(frame)
    out[visible] = frame[visible]
    return out


def _stamp_disc(canvas: np.ndarray, u: float, v: float, radius: float) -> None:
    h, w = canvas.shape
    u0, u1 = max(int(u - radius) - 1, 0), min(int(u + radius) + 2, w)
    v0, v1 = max(int(v - radius) - 1, 0), min(int(v + radius) + 2, h)
    if u0 >= u1 or v0 >= v1:
        return
    vs, us = np.mgrid[v0:v1, u0:u1]
    canvas[v0:v1, u0:u1] |= (us - u) ** 2 + (vs - v) ** 2 <= radius**2


def _stamp_stroke(canvas: np.ndarray, rng: np.random.Generator, start: tuple[float, float], width: int) -> None:
    # thick random polyline: discs stamped densely along 2-4 segments
    h, w = canvas.shape
    u, v = start
    radius = width / 2.0
    for _ in range(int(rng.integers(2, 5))):
        angle = rng.uniform(0.0, 2.0 * math.pi)
        length = rng.uniform(0.15, 0.5) * min(h, w)
        du, dv = math.cos(angle), math.sin(angle)
        steps = max(int(length), 1)
        for k in range(steps + 1):
            _stamp_disc(canvas, u + du * (length * k / steps), v + dv * (length * k / steps), radius)
        u, v = u + du * length, v + dv * length


def _stamp_rect(canvas: np.ndarray, rng: np.random.Generator, center: tuple[float, float]) -> None:
    h, w = canvas.shape
    rw = int(rng.uniform(0.08, 0.35) * w)
    rh = int(rng.uniform(0.08, 0.35) * h)
    u0 = int(np.clip(center[0] - rw / 2, 0, w - 1))
    v0 = int(np.clip(center[1] - rh / 2, 0, h - 1))
    canvas[v0 : min(v0 + rh + 1, h), u0 : min(u0 + rw + 1, w)] = True


def _rand_in(rng: np.random.Generator, lo_hi: tuple[int, int]) -> int:
    lo, hi = lo_hi
    if lo > hi:
        raise ValidationError(f"bad range {lo_hi}")
    return int(rng.integers(lo, hi + 1))


def generate_training_masks(
    config: MaskGenConfig,
    object_mask: np.ndarray,
    rng: np.random.Generator | None = None,
) -> list[np.ndarray]:
    """One object-occluding mask plus background-only masks for one sample.

    The first mask is guaranteed to cover at least
    ``min_object_overlap_fraction`` of the object's area (a disc grows at a
    random object pixel until the quota is met if the random strokes fall
    short). Background masks never touch the object.
    """
    area = mask_area(object_mask)
    if area == 0:
        raise ValidationError("object mask is empty; nothing to occlude")
    rng = rng if rng is not None else np.random.default_rng(config.seed)
    h, w = object_mask.shape
    vs, us = np.nonzero(object_mask)

    def object_point() -> tuple[float, float]:
        k = int(rng.integers(0, len(us)))
        return float(us[k]), float(vs[k])

    masks = []
    occluding = np.zeros((h, w), dtype=bool)
    for _ in range(_rand_in(rng, config.strokes_per_mask)):
        _stamp_stroke(occluding, rng, object_point(), _rand_in(rng, config.stroke_width))
    for _ in range(_rand_in(rng, config.rectangles_per_mask)):
        _stamp_rect(occluding, rng, object_point())
    needed = int(math.ceil(config.min_object_overlap_fraction * area))
    if np.count_nonzero(occluding & object_mask) < max(needed, 1):
        cu, cv = object_point()
        radius = 1.0
        while np.count_nonzero(occluding & object_mask) < max(needed, 1):
            _stamp_disc(occluding, cu, cv, radius)
            radius += 1.0
    masks.append(occluding)

    for _ in range(_rand_in(rng, config.background_mask_count)):
        bg = np.zeros((h, w), dtype=bool)
        start = (float(rng.uniform(0, w - 1)), float(rng.uniform(0, h - 1)))
        _stamp_stroke(bg, rng, start, _rand_in(rng, config.stroke_width))
        if rng.random() < 0.5:
            _stamp_rect(bg, rng, (float(rng.uniform(0, w - 1)), float(rng.uniform(0, h - 1))))
        bg &= ~object_mask  # background masks stay fully off the object
        masks.append(bg)
    return masks


def apply_random_mask(image: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Blank masked pixels to zero: the conditioning input for inpainting."""
    out = image.copy()
    out[mask] = 0.0
    return out


def build_training_samples(
    frames: list[np.ndarray],
    visible: list[np.ndarray],
    verdicts: list[OcclusionVerdict],
    config: MaskGenConfig,
    token: str = DEFAULT_TOKEN,
) -> list[TrainSample]:
    """Assemble per-frame training samples; V bits copy the verdicts.

    Frames with no visible pixels keep an all-white input and get
    background-style masks only (there is no object to occlude).
    """
    if not (len(frames) == len(visible) == len(verdicts)):
        raise ValidationError("frames / visible / verdicts lengths differ")
    prompt = PROMPT_TEMPLATE.format(token=token)
    samples = []
    for i, (frame, vis, verdict) in enumerate(zip(frames, visible, verdicts)):
        rng = np.random.default_rng([config.seed, i])
        input_image = isolate_on_white(frame, vis)
        if mask_area(vis) > 0:
            parts = generate_training_masks(config, vis, rng)
            random_mask = np.logical_or.reduce(parts)
        else:
            random_mask = np.zeros_like(vis)
            start = (float(rng.uniform(0, vis.shape[1] - 1)), float(rng.uniform(0, vis.shape[0] - 1)))
            _stamp_stroke(random_mask, rng, start, _rand_in(rng, config.stroke_width))
        samples.append(
            TrainSample(
                frame_index=i,
                input_image=input_image,
                random_mask=random_mask,
                masked_input=apply_random_mask(input_image, random_mask),
                V=verdict.V,
                prompt=prompt,
            )
        )
    return samples


def build_training_manifest(
    frames: list[np.ndarray],
    visible: list[np.ndarray],
    verdicts: list[OcclusionVerdict],
    config: MaskGenConfig,
    token: str,
    out_dir: str | Path,
    geometry: VideoGeometry | None = None,
    finetune_overrides: dict | None = None,
) -> Path:
    """Write training images, masks, and the fine-tune manifest to disk."""
    out_dir = Path(out_dir)
    samples = build_training_samples(frames, visible, verdicts, config, token)
    entries = []
    for s in samples:
        names = {
            "input_image": f"inputs/{s.frame_index:04d}.png",
            "random_mask": f"random_masks/{s.frame_index:04d}.png",
            "masked_input": f"masked_inputs/{s.frame_index:04d}.png",
        }
        io.save_image(s.input_image, out_dir / names["input_image"])
        io.save_mask(s.random_mask, out_dir / names["random_mask"])
        io.save_image(s.masked_input, out_dir / names["masked_input"])
        entries.append({"frame": s.frame_index, "V": s.V, **names})
    finetune = dict(FINETUNE_DEFAULTS)
    finetune.update(finetune_overrides or {})
    manifest = {
        "schema_version": MANIFEST_SCHEMA_VERSION,
        "prompt": PROMPT_TEMPLATE.format(token=token),
        "token": token,
        "finetune": finetune,
        "mask_generation": config.to_json(),
        "frames": entries,
    }
    if geometry is not None:
        manifest["geometry"] = geometry.to_json()
    path = out_dir / MANIFEST_NAME
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path
