"""Synthetic occlusion scenes with exact ground truth.

A textured rigid object translates at constant velocity behind a static
full-height occluder strip that is nearer to the camera, so somewhere
along the way it is partially and then fully hidden. Because the object is
rigid and the motion integral, every ground-truth artifact is exact: the
amodal mask translates, observed bounding boxes move linearly, and the
nearness field is piecewise constant (background < object < occluder).

Everything the mock backends and the pipeline need is written to one
directory: scene frames, GT visible/amodal masks, nearness maps, the
amodal object rendered on white (what a perfect outpainter would return),
the frame-0 query mask, a sequence manifest, and ``scene.json`` indexing
it all.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import io
from .core import ConfigError, VideoGeometry, mask_area
from .manifest import FrameRef, SequenceManifest, save_manifest

BACKGROUND_NEARNESS = 0.1
OBJECT_NEARNESS = 0.5
OCCLUDER_NEARNESS = 0.9

SCENE_INDEX_NAME = "scene.json"


@dataclass(frozen=True)
class SynthConfig:
    width: int = 96
    height: int = 64
    frame_count: int = 24
    seed: int = 0
    with_occluder: bool = True  # False: identity scene, object never hidden

    def __post_init__(self):
        if self.frame_count < 8:
            raise ConfigError("synthetic scenes need at least 8 frames")
        if self.width < 48 or self.height < 32:
            raise ConfigError("synthetic scenes need at least 48x32 pixels")


@dataclass
class SynthScene:
    """Index of one generated scene's files, all relative to ``root``."""

    root: Path
    geometry: VideoGeometry
    frames: list[str]
    gt_visible: list[str]
    gt_amodal: list[str]
    nearness_data: list[str]
    nearness_header: list[str]
    completed: list[str]
    query: str
    manifest: str = "manifest.json"

    def to_json(self) -> dict:
        return {
            "geometry": self.geometry.to_json(),
            "frames": self.frames,
            "gt_visible": self.gt_visible,
            "gt_amodal": self.gt_amodal,
            "nearness_data": self.nearness_data,
            "nearness_header": self.nearness_header,
            "completed": self.completed,
            "query": self.query,
            "manifest": self.manifest,
        }


def load_scene_index(scene_dir: str | Path) -> SynthScene:
    scene_dir = Path(scene_dir)
    obj = json.loads((scene_dir / SCENE_INDEX_NAME).read_text())
    return SynthScene(
        root=scene_dir,
        geometry=VideoGeometry.from_json(obj["geometry"]),
        frames=obj["frames"],
        gt_visible=obj["gt_visible"],
        gt_amodal=obj["gt_amodal"],
        nearness_data=obj["nearness_data"],
        nearness_header=obj["nearness_header"],
        completed=obj["completed"],
        query=obj["query"],
        manifest=obj.get("manifest", "manifest.json"),
    )


def _object_mask(shape, cx, cy, half_w, half_h, ellipse: bool) -> np.ndarray:
    h, w = shape
    vs, us = np.mgrid[0:h, 0:w]
    if ellipse:
        return ((us - cx) / half_w) ** 2 + ((vs - cy) / half_h) ** 2 <= 1.0
    return (np.abs(us - cx) <= half_w) & (np.abs(vs - cy) <= half_h)


def _texture(shape, base: np.ndarray, wobble: float, phase: tuple[int, int]) -> np.ndarray:
    # 4px checker riding on the base color; phase follows the object so the
    # pattern translates rigidly with it
    h, w = shape
    vs, us = np.mgrid[0:h, 0:w]
    checker = (((us + phase[0]) // 4 + (vs + phase[1]) // 4) % 2) * 2.0 - 1.0
    img = np.clip(base[None, None, :] + wobble * checker[..., None], 0.05, 0.92)
    return img


def generate_scene(out_dir: str | Path, config: SynthConfig | None = None) -> SynthScene:
    """Generate one scene; raises if the construction guarantees fail."""
    config = config or SynthConfig()
    rng = np.random.default_rng(config.seed)
    w, h, T = config.width, config.height, config.frame_count
    geometry = VideoGeometry(w, h, T)

    half_w = int(rng.integers(4, 7))
    half_h = int(rng.integers(4, min(7, h // 4) + 1))
    ellipse = bool(rng.random() < 0.5)
    vx = 2
    cx0 = 2 + half_w
    cy0 = int(rng.integers(half_h + 2, h - half_h - 2))
    cx_last = cx0 + vx * (T - 1)
    if cx_last + half_w >= w - 1:
        raise ConfigError(
            f"scene too short for the travel: needs width > {cx_last + half_w + 1}"
        )

    # occluder strip sized to guarantee full occlusion near mid-path
    strip = np.zeros((h, w), dtype=bool)
    if config.with_occluder:
        strip_w = 2 * half_w + 7
        strip_x0 = cx0 + vx * (T // 2) - strip_w // 2
        strip_x0 = min(max(strip_x0, cx0 + half_w + 4), w - strip_w - 1)
        strip[:, strip_x0 : strip_x0 + strip_w] = True

    object_color = np.array([0.72, 0.26, 0.22]) + rng.uniform(-0.08, 0.08, size=3)
    background_color = np.array([0.32, 0.36, 0.42]) + rng.uniform(-0.05, 0.05, size=3)
    occluder_color = np.array([0.16, 0.52, 0.24]) + rng.uniform(-0.05, 0.05, size=3)

    scene = SynthScene(
        root=Path(out_dir),
        geometry=geometry,
        frames=[],
        gt_visible=[],
        gt_amodal=[],
        nearness_data=[],
        nearness_header=[],
        completed=[],
        query="query.png",
    )
    root = Path(out_dir)
    manifest_frames = []
    fully_occluded_frames = 0
    for t in range(T):
        cx, cy = cx0 + vx * t, cy0
        amodal = _object_mask((h, w), cx, cy, half_w, half_h, ellipse)
        visible = amodal & ~strip
        if t == 0 and mask_area(visible) != mask_area(amodal):
            raise ConfigError("frame 0 must be fully visible")
        if mask_area(visible) == 0:
            fully_occluded_frames += 1

        background = _texture((h, w), background_color, 0.02, (0, 0))
        obj_tex = _texture((h, w), object_color, 0.05, (-cx, -cy))
        frame = background.copy()
        frame[amodal] = obj_tex[amodal]
        frame[strip] = occluder_color[None, :]

        completed = np.ones((h, w, 3))
        completed[amodal] = obj_tex[amodal]

        nearness = np.full((h, w), BACKGROUND_NEARNESS, dtype=np.float32)
        nearness[visible] = OBJECT_NEARNESS
        nearness[strip] = OCCLUDER_NEARNESS

        names = {
            "frames": f"frames/frame_{t:04d}.png",
            "gt_visible": f"gt_visible/{t:04d}.png",
            "gt_amodal": f"gt_amodal/{t:04d}.png",
            "nearness_data": f"nearness/{t:04d}.f32",
            "nearness_header": f"nearness/{t:04d}.json",
            "completed": f"completed/completed_{t:04d}.png",
        }
        io.save_image(frame, root / names["frames"])
        io.save_mask(visible, root / names["gt_visible"])
        io.save_mask(amodal, root / names["gt_amodal"])
        io.save_nearness(nearness, root / names["nearness_data"], root / names["nearness_header"])
        io.save_image(completed, root / names["completed"])
        for key, rel in names.items():
            getattr(scene, key).append(rel)
        manifest_frames.append(
            FrameRef(
                image=names["frames"],
                gt_amodal_mask=names["gt_amodal"],
                gt_visible_mask=names["gt_visible"],
            )
        )
        if t == 0:
            io.save_mask(visible, root / scene.query)

    if config.with_occluder and fully_occluded_frames == 0:
        raise ConfigError("scene construction failed: no fully occluded frame")
    save_manifest(SequenceManifest(geometry=geometry, frames=manifest_frames, root=root), root / scene.manifest)
    (root / SCENE_INDEX_NAME).write_text(json.dumps(scene.to_json(), indent=2, sort_keys=True) + "\n")
    return scene
