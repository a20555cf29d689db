"""File formats: mask images, frame images, raw nearness maps.

- masks: 8-bit single-channel image (PNG in practice), nonzero = inside
- frames: any RGB image, channels normalized to [0, 1] on load
- nearness: ``<name>.f32`` raw little-endian row-major float32 plus a
  ``<name>.json`` header ``{"width": W, "height": H, "convention": ...}``.
  Convention "nearness" stores the canonical field (larger = closer);
  "metric" stores depth (smaller = closer) and is negated on ingestion so
  the in-memory value is always nearness.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
from PIL import Image

from .core import ValidationError, VideoGeometry, as_mask, check_image, check_nearness

CONVENTIONS = ("nearness", "metric")


def load_mask(path: str | Path, geometry: VideoGeometry | None = None) -> np.ndarray:
    """Read a mask file; pixel is true iff the stored value is nonzero."""
    path = Path(path)
    if not path.is_file():
        raise ValidationError(f"mask file not found: {path}")
    with Image.open(path) as img:
        arr = np.asarray(img)
    if arr.ndim != 2:
        raise ValidationError(f"mask file must be single-channel, got shape {arr.shape}: {path}")
    mask = arr != 0
    if geometry is not None and mask.shape != geometry.shape:
        raise ValidationError(
            f"mask {path} has shape {mask.shape}, manifest geometry is {geometry.shape}"
        )
    return mask


def save_mask(mask: np.ndarray, path: str | Path) -> None:
    """Write a mask as an 8-bit grayscale image (255 inside, 0 outside)."""
    mask = as_mask(mask)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(np.where(mask, 255, 0).astype(np.uint8), mode="L").save(path)


def load_image(path: str | Path, geometry: VideoGeometry | None = None) -> np.ndarray:
    """Read an RGB frame, normalizing 8-bit channels to [0, 1]."""
    path = Path(path)
    if not path.is_file():
        raise ValidationError(f"image file not found: {path}")
    with Image.open(path) as img:
        arr = np.asarray(img.convert("RGB"), dtype=np.float64) / 255.0
    return check_image(arr, geometry)


def save_image(img: np.ndarray, path: str | Path) -> None:
    img = np.clip(np.asarray(img, dtype=np.float64), 0.0, 1.0)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(np.round(img * 255.0).astype(np.uint8), mode="RGB").save(path)


def load_nearness(
    data_path: str | Path,
    header_path: str | Path,
    geometry: VideoGeometry | None = None,
) -> np.ndarray:
    """Read a raw float32 field and canonicalize it to nearness.

    The header declares width, height and the stored convention. "metric"
    sources (smaller = closer) are negated elementwise so callers always
    see nearness (larger = closer).
    """
    data_path, header_path = Path(data_path), Path(header_path)
    if not header_path.is_file():
        raise ValidationError(f"nearness header not found: {header_path}")
    if not data_path.is_file():
        raise ValidationError(f"nearness data not found: {data_path}")
    header = json.loads(header_path.read_text())
    try:
        width, height = int(header["width"]), int(header["height"])
        convention = header["convention"]
    except (KeyError, TypeError) as exc:
        raise ValidationError(f"bad nearness header {header_path}: {header!r}") from exc
    if convention not in CONVENTIONS:
        raise ValidationError(
            f"unknown nearness convention {convention!r} in {header_path}"
        )
    raw = np.fromfile(data_path, dtype="<f4")
    if raw.size != width * height:
        raise ValidationError(
            f"nearness data {data_path} has {raw.size} values,"
            f" header says {width}x{height}={width * height}"
        )
    field = raw.reshape(height, width)
    if not np.all(np.isfinite(field)):
        raise ValidationError(f"nearness data {data_path} contains non-finite values")
    if convention == "metric":
        field = -field
    return check_nearness(field, geometry)


def save_nearness(
    near: np.ndarray,
    data_path: str | Path,
    header_path: str | Path,
    convention: str = "nearness",
) -> None:
    """Write a canonical nearness field under the requested file convention."""
    near = check_nearness(near)
    if convention not in CONVENTIONS:
        raise ValidationError(f"unknown nearness convention {convention!r}")
    out = np.asarray(near, dtype="<f4")
    if convention == "metric":
        out = -out
    data_path, header_path = Path(data_path), Path(header_path)
    data_path.parent.mkdir(parents=True, exist_ok=True)
    header_path.parent.mkdir(parents=True, exist_ok=True)
    out.tofile(data_path)
    header = {
        "width": int(near.shape[1]),
        "height": int(near.shape[0]),
        "convention": convention,
    }
    header_path.write_text(json.dumps(header, sort_keys=True) + "\n")
