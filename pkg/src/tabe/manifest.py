"""Sequence manifests: one JSON document describing a frame sequence on disk.

Schema (all paths relative to the manifest's directory)::

    {
      "geometry": {"width": W, "height": H, "frame_count": T},
      "frames": [
        {
          "image": "frames/frame_0000.png",          # optional
          "visible_mask": "visible/0000.png",        # optional
          "nearness_data": "nearness/0000.f32",      # optional, pairs with
          "nearness_header": "nearness/0000.json",   #   nearness_header
          "gt_amodal_mask": "gt_amodal/0000.png",    # optional ground truth
          "gt_visible_mask": "gt_visible/0000.png",  # optional ground truth
          "mask": "pred/0000.png"                    # optional generic mask
        },
        ...
      ],
      "verdicts": "verdicts.json",                   # optional sidecar
      "boxes": "boxes.json"                          # optional sidecar
    }

The generic "mask" role carries prediction masks for evaluation.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from . import io
from .core import ValidationError, VideoGeometry

FRAME_KEYS = (
    "image",
    "visible_mask",
    "nearness_data",
    "nearness_header",
    "gt_amodal_mask",
    "gt_visible_mask",
    "mask",
)


@dataclass
class FrameRef:
    """Per-frame file references; every field optional."""

    image: str | None = None
    visible_mask: str | None = None
    nearness_data: str | None = None
    nearness_header: str | None = None
    gt_amodal_mask: str | None = None
    gt_visible_mask: str | None = None
    mask: str | None = None

    def to_json(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self) if getattr(self, f.name)}


@dataclass
class SequenceManifest:
    geometry: VideoGeometry
    frames: list[FrameRef]
    verdicts: str | None = None
    boxes: str | None = None
    root: Path = field(default_factory=Path)  # set on load; not serialized

    def __post_init__(self):
        if len(self.frames) != self.geometry.frame_count:
            raise ValidationError(
                f"manifest lists {len(self.frames)} frames, geometry says"
                f" {self.geometry.frame_count}"
            )

    def resolve(self, relpath: str) -> Path:
        return Path(self.root) / relpath

    def to_json(self) -> dict:
        obj: dict = {
            "geometry": self.geometry.to_json(),
            "frames": [f.to_json() for f in self.frames],
        }
        if self.verdicts:
            obj["verdicts"] = self.verdicts
        if self.boxes:
            obj["boxes"] = self.boxes
        return obj

    # ---- typed per-frame loaders -------------------------------------------

    def _paths(self, key: str, required: bool) -> list[str | None]:
        out = []
        for i, f in enumerate(self.frames):
            rel = getattr(f, key)
            if rel is None and required:
                raise ValidationError(f"manifest frame {i} has no '{key}' entry")
            out.append(rel)
        return out

    def load_masks(self, key: str) -> list[np.ndarray]:
        return [
            io.load_mask(self.resolve(rel), self.geometry)
            for rel in self._paths(key, required=True)
        ]

    def load_images(self) -> list[np.ndarray]:
        return [
            io.load_image(self.resolve(rel), self.geometry)
            for rel in self._paths("image", required=True)
        ]

    def load_nearness_maps(self) -> list[np.ndarray]:
        data = self._paths("nearness_data", required=True)
        headers = self._paths("nearness_header", required=True)
        return [
            io.load_nearness(self.resolve(d), self.resolve(h), self.geometry)
            for d, h in zip(data, headers)
        ]


def load_manifest(path: str | Path) -> SequenceManifest:
    path = Path(path)
    if not path.is_file():
        raise ValidationError(f"manifest not found: {path}")
    try:
        obj = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ValidationError(f"manifest {path} is not valid JSON: {exc}") from exc
    if "geometry" not in obj or "frames" not in obj:
        raise ValidationError(f"manifest {path} needs 'geometry' and 'frames'")
    geometry = VideoGeometry.from_json(obj["geometry"])
    frames = []
    for i, fr in enumerate(obj["frames"]):
        unknown = set(fr) - set(FRAME_KEYS)
        if unknown:
            raise ValidationError(f"manifest frame {i} has unknown keys {sorted(unknown)}")
        frames.append(FrameRef(**fr))
    return SequenceManifest(
        geometry=geometry,
        frames=frames,
        verdicts=obj.get("verdicts"),
        boxes=obj.get("boxes"),
        root=path.parent,
    )


def save_manifest(manifest: SequenceManifest, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(manifest.to_json(), indent=2, sort_keys=True) + "\n")


def validate_manifest(manifest: SequenceManifest) -> None:
    """Check that every referenced file exists and parses to the geometry."""
    for i, fr in enumerate(manifest.frames):
        for key in ("visible_mask", "gt_amodal_mask", "gt_visible_mask", "mask"):
            rel = getattr(fr, key)
            if rel is not None:
                io.load_mask(manifest.resolve(rel), manifest.geometry)
        if fr.image is not None:
            io.load_image(manifest.resolve(fr.image), manifest.geometry)
        if (fr.nearness_data is None) != (fr.nearness_header is None):
            raise ValidationError(
                f"frame {i}: nearness_data and nearness_header must come together"
            )
        if fr.nearness_data is not None:
            io.load_nearness(
                manifest.resolve(fr.nearness_data),
                manifest.resolve(fr.nearness_header),
                manifest.geometry,
            )
