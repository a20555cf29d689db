"""Deterministic mock model backends for testing the orchestrator.

A mock is built from a generated synthetic scene (``tabe.synth``) and
implements the wire protocol exactly — requests and responses are schema
validated — in three modes:

- ``oracle``: the segmenter answers ground truth, the depth estimator
  returns the scene's nearness maps, the outpainter returns the perfect
  amodal completion (object on white);
- ``echo``: like oracle, but the outpainter returns its input frames
  unchanged (a do-nothing generator);
- ``noisy``: oracle with every segmentation mask bit flipped independently
  at the given rate, seeded so identical runs stay byte-identical.

The segmenter mock mimics a real segmenter's behavior on the two kinds of
frames the pipeline sends it: frames from the original scene are answered
from the ground-truth index (by list position), while white-background
completion frames — the re-segmentation pass — are segmented by
thresholding non-white pixels.

Run as a module to serve a mock over stdin/stdout NDJSON (exercises the
subprocess transport)::

    python3 -m tabe.mocks --scene SCENE_DIR --mode oracle
"""

from __future__ import annotations

import argparse
import json
import shutil
import sys
import zlib
from pathlib import Path

import numpy as np

from . import io, protocol
from .backends import BackendEndpoints, EndpointSpec
from .core import ValidationError
from .synth import SynthScene, load_scene_index

WHITE_LEVEL = 0.98  # channel floor for a pixel to count as white
WHITE_BACKGROUND_FRACTION = 0.5

MODES = ("oracle", "echo", "noisy")


def _frame_number(relpath: str) -> int:
    digits = "".join(ch for ch in Path(relpath).stem if ch.isdigit())
    if not digits:
        raise ValidationError(f"cannot read a frame number from {relpath!r}")
    return int(digits)


def _is_white_background(img: np.ndarray) -> bool:
    white = np.all(img >= WHITE_LEVEL, axis=2)
    return float(white.mean()) >= WHITE_BACKGROUND_FRACTION


def _nonwhite_mask(img: np.ndarray) -> np.ndarray:
    return ~np.all(img >= WHITE_LEVEL, axis=2)


class MockModelBackend:
    """Handler implementing all three backend roles for one scene."""

    def __init__(self, scene_dir: str | Path, mode: str = "oracle", seed: int = 0, flip_rate: float = 0.0):
        if mode not in MODES:
            raise ValidationError(f"unknown mock mode {mode!r}")
        self.scene: SynthScene = load_scene_index(scene_dir)
        self.mode = mode
        self.seed = seed
        self.flip_rate = flip_rate if mode == "noisy" else 0.0

    # ---- protocol plumbing --------------------------------------------------

    def handle(self, request: dict) -> dict:
        try:
            protocol.validate_request(request)
            root = Path(request["root"])
            payload = request["payload"]
            out = getattr(self, f"_handle_{request['kind']}")(payload, root, request["request_id"])
            return protocol.make_response(request, out)
        except Exception as exc:  # a mock must answer, never crash the pipe
            return protocol.make_error_response(request, type(exc).__name__, str(exc))

    def _rng(self, request_id: str, index: int) -> np.random.Generator:
        return np.random.default_rng([self.seed, zlib.crc32(request_id.encode()), index])

    def _scene_path(self, relpaths: list[str], index: int) -> Path:
        return self.scene.root / relpaths[index]

    # ---- request kinds -------------------------------------------------------

    def _handle_health(self, payload: dict, root: Path, request_id: str) -> dict:
        return {
            "status": "ok",
            "server": f"tabe-mock/{self.mode}",
            "capabilities": ["segment", "depth", "outpaint"],
        }

    def _handle_segment(self, payload: dict, root: Path, request_id: str) -> dict:
        out_dir = root / "_backend" / "segment" / request_id
        masks = []
        for i, rel in enumerate(payload["frames"]):
            img = io.load_image(root / rel)
            if _is_white_background(img):
                mask = _nonwhite_mask(img)
            else:
                mask = io.load_mask(self._scene_path(self.scene.gt_visible, i))
            if self.flip_rate > 0.0:
                flips = self._rng(request_id, i).random(mask.shape) < self.flip_rate
                mask = mask ^ flips
            name = f"mask_{i:04d}.png"
            io.save_mask(mask, out_dir / name)
            masks.append(str((out_dir / name).relative_to(root)))
        return {"masks": masks}

    def _handle_depth(self, payload: dict, root: Path, request_id: str) -> dict:
        index = _frame_number(payload["frame"])
        out_dir = root / "_backend" / "depth" / request_id
        out_dir.mkdir(parents=True, exist_ok=True)
        data = out_dir / f"{index:04d}.f32"
        header = out_dir / f"{index:04d}.json"
        shutil.copyfile(self._scene_path(self.scene.nearness_data, index), data)
        shutil.copyfile(self._scene_path(self.scene.nearness_header, index), header)
        return {
            "nearness_data": str(data.relative_to(root)),
            "nearness_header": str(header.relative_to(root)),
        }

    def _handle_outpaint(self, payload: dict, root: Path, request_id: str) -> dict:
        if self.mode == "echo":
            return {"completed_frames": list(payload["frames"])}
        out_dir = root / "_backend" / "outpaint" / request_id
        out_dir.mkdir(parents=True, exist_ok=True)
        completed = []
        for rel in payload["frames"]:
            index = _frame_number(rel)
            name = f"completed_{index:04d}.png"
            shutil.copyfile(self._scene_path(self.scene.completed, index), out_dir / name)
            completed.append(str((out_dir / name).relative_to(root)))
        return {"completed_frames": completed}


def mock_backends(
    scene_dir: str | Path,
    mode: str = "oracle",
    seed: int = 0,
    flip_rate: float = 0.0,
    outpaint_mode: str | None = None,
) -> BackendEndpoints:
    """Endpoint specs wiring all three roles to in-process mocks.

    ``outpaint_mode`` lets the outpainter run a different mode than the
    segmenter/depth pair (e.g. oracle segmentation with an echo
    outpainter).
    """
    base = EndpointSpec(kind="mock", scene=str(scene_dir), mode=mode, seed=seed, flip_rate=flip_rate)
    out = base if outpaint_mode is None else EndpointSpec(
        kind="mock", scene=str(scene_dir), mode=outpaint_mode, seed=seed, flip_rate=flip_rate
    )
    return BackendEndpoints(segmenter=base, depth_estimator=base, outpainter=out)


def serve_stdio(scene_dir: str, mode: str, seed: int, flip_rate: float) -> None:
    """NDJSON server loop on stdin/stdout; one response line per request line."""
    backend = MockModelBackend(scene_dir, mode=mode, seed=seed, flip_rate=flip_rate)
    for line in sys.stdin:
        line = line.strip()
        if not line:
            continue
        try:
            request = json.loads(line)
        except json.JSONDecodeError as exc:
            sys.stdout.write(
                json.dumps(
                    protocol.make_error_response(
                        {"request_id": "unknown", "kind": "health"}, "bad_json", str(exc)
                    )
                )
                + "\n"
            )
            sys.stdout.flush()
            continue
        sys.stdout.write(json.dumps(backend.handle(request)) + "\n")
        sys.stdout.flush()


def main(argv: list[str] | None = None) -> None:
    parser = argparse.ArgumentParser(description="serve a mock model backend over stdio")
    parser.add_argument("--scene", required=True)
    parser.add_argument("--mode", default="oracle", choices=MODES)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--flip-rate", type=float, default=0.0)
    args = parser.parse_args(argv)
    serve_stdio(args.scene, args.mode, args.seed, args.flip_rate)


if __name__ == "__main__":
    main()
