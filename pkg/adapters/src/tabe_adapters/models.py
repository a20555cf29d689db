"""Model-role implementations behind the protocol handlers.

Each role is a callable object answering one payload and writing its
outputs under the request root. Three sources:

- ``stub``: weightless deterministic models for CI and protocol testing;
- ``import:<module>:<factory>``: a dotted-path factory returning a real
  model wrapper with the same call signature (this is where a promptable
  video segmenter, a monocular depth model, or a diffusion outpainter
  plugs in);
- anything else raises ``ModelLoadError``, which the server reports as a
  protocol error object rather than crashing.
"""

from __future__ import annotations

import importlib
import json
from pathlib import Path

import numpy as np
from PIL import Image


class ModelLoadError(Exception):
    pass


def _load_image(path: Path) -> np.ndarray:
    with Image.open(path) as img:
        return np.asarray(img.convert("RGB"), dtype=np.float64) / 255.0


def _save_mask(mask: np.ndarray, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(np.where(mask, 255, 0).astype(np.uint8), mode="L").save(path)


class StubSegmenter:
    """Marks every clearly non-white pixel as object.

    Trivial but honest on the pipeline's re-segmentation pass, where
    frames are objects on a white background.
    """

    WHITE = 0.98

    def __call__(self, payload: dict, root: Path, request_id: str) -> dict:
        out_dir = root / "_adapter" / "segment" / request_id
        masks = []
        for i, rel in enumerate(payload["frames"]):
            img = _load_image(root / rel)
            mask = ~np.all(img >= self.WHITE, axis=2)
            name = f"mask_{i:04d}.png"
            _save_mask(mask, out_dir / name)
            masks.append(str((out_dir / name).relative_to(root)))
        return {"masks": masks}


class StubDepth:
    """Inverse-luminance nearness: darker pixels read as closer."""

    def __call__(self, payload: dict, root: Path, request_id: str) -> dict:
        img = _load_image(root / payload["frame"])
        gray = img.mean(axis=2)
        lo, hi = float(gray.min()), float(gray.max())
        near = np.zeros_like(gray) if hi - lo <= 0 else 1.0 - (gray - lo) / (hi - lo)
        out_dir = root / "_adapter" / "depth" / request_id
        out_dir.mkdir(parents=True, exist_ok=True)
        data = out_dir / "nearness.f32"
        header = out_dir / "nearness.json"
        near.astype("<f4").tofile(data)
        header.write_text(json.dumps({
            "width": int(near.shape[1]),
            "height": int(near.shape[0]),
            "convention": "nearness",
        }) + "\n")
        return {
            "nearness_data": str(data.relative_to(root)),
            "nearness_header": str(header.relative_to(root)),
        }


class StubOutpainter:
    """Echoes the conditioning frames: generation without a generator."""

    def __call__(self, payload: dict, root: Path, request_id: str) -> dict:
        return {"completed_frames": list(payload["frames"])}


_STUBS = {
    "segmenter": StubSegmenter,
    "depth_estimator": StubDepth,
    "outpainter": StubOutpainter,
}


def load_model(role: str, spec: str, device: str = "cpu"):
    """Resolve a role's model from its config spec string."""
    if spec == "stub":
        return _STUBS[role]()
    if spec.startswith("import:"):
        try:
            _, module_name, factory_name = spec.split(":", 2)
        except ValueError as exc:
            raise ModelLoadError(
                f"{role}: bad import spec {spec!r}; use import:<module>:<factory>"
            ) from exc
        try:
            module = importlib.import_module(module_name)
            factory = getattr(module, factory_name)
        except (ImportError, AttributeError) as exc:
            raise ModelLoadError(f"{role}: cannot load {spec!r}: {exc}") from exc
        return factory(device=device)
    raise ModelLoadError(f"{role}: unknown model spec {spec!r}")
