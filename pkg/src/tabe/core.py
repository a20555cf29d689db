"""Core data types and validation helpers shared by the whole toolkit.

Pixel data is carried as plain numpy arrays with fixed conventions:

- frame image: float array of shape (H, W, 3), channel values in [0, 1]
- mask: bool array of shape (H, W)
- nearness map: float32 array of shape (H, W), finite everywhere,
  larger value = closer to camera

Positions are (u, v) = (column, row); arrays index as arr[v, u].
All values are treated as immutable after construction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class TabeError(Exception):
    """Base error. ``exit_code`` maps onto the CLI exit-code contract."""

    exit_code = 1


class ConfigError(TabeError):
    """Bad configuration or arguments (exit code 2)."""

    exit_code = 2


class BackendError(TabeError):
    """A model backend failed, timed out, or broke protocol (exit code 3)."""

    exit_code = 3


class ValidationError(TabeError):
    """Input data failed validation (exit code 4)."""

    exit_code = 4


@dataclass(frozen=True)
class VideoGeometry:
    """Fixed pixel geometry shared by every per-frame artifact of a sequence."""

    width: int
    height: int
    frame_count: int

    def __post_init__(self):
        if self.width < 1 or self.height < 1 or self.frame_count < 1:
            raise ValidationError(
                f"geometry must be positive, got {self.width}x{self.height}"
                f" x{self.frame_count} frames"
            )

    @property
    def shape(self) -> tuple[int, int]:
        """Array shape (H, W) of one frame."""
        return (self.height, self.width)

    def to_json(self) -> dict:
        return {
            "width": self.width,
            "height": self.height,
            "frame_count": self.frame_count,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "VideoGeometry":
        try:
            return cls(int(obj["width"]), int(obj["height"]), int(obj["frame_count"]))
        except (KeyError, TypeError) as exc:
            raise ValidationError(f"bad geometry object: {obj!r}") from exc


def as_mask(arr: np.ndarray) -> np.ndarray:
    """Coerce to a bool (H, W) mask, rejecting anything else."""
    a = np.asarray(arr)
    if a.ndim != 2:
        raise ValidationError(f"mask must be 2-D, got shape {a.shape}")
    return a.astype(bool, copy=False)

def mask_area(mask: np.ndarray) -> int:
    return int(np.count_nonzero(mask))


def check_shape(arr: np.ndarray, geometry: VideoGeometry, what: str = "array") -> None:
    if arr.shape[:2] != geometry.shape:
        raise ValidationError(
            f"{what} has shape {arr.shape[:2]}, expected {geometry.shape}"
            f" (H={geometry.height}, W={geometry.width})"
        )


def check_image(img: np.ndarray, geometry: VideoGeometry | None = None) -> np.ndarray:
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ValidationError(f"frame image must be (H, W, 3), got {img.shape}")
    if geometry is not None:
        check_shape(img, geometry, "frame image")
    if img.min() < 0.0 or img.max() > 1.0:
        raise ValidationError("frame image channels must lie in [0, 1]")
    return img


def check_nearness(near: np.ndarray, geometry: VideoGeometry | None = None) -> np.ndarray:
    near = np.asarray(near)
    if near.ndim != 2:
        raise ValidationError(f"nearness map must be 2-D, got shape {near.shape}")
    if geometry is not None:
        check_shape(near, geometry, "nearness map")
    if not np.all(np.isfinite(near)):
        raise ValidationError("nearness map contains non-finite values")
    return near


def check_mask_sequence(masks: list[np.ndarray], geometry: VideoGeometry) -> None:
    if len(masks) != geometry.frame_count:
        raise ValidationError(
            f"mask sequence has {len(masks)} frames, geometry says"
            f" {geometry.frame_count}"
        )
    for i, m in enumerate(masks):
        check_shape(as_mask(m), geometry, f"mask {i}")
