"""End-to-end orchestration: query mask in, amodal mask sequence out.

Stages run in order against the three backends — (1) segment the visible
object, (2) estimate per-frame nearness, (3) occlusion reasoning, amodal
boxes, and target regions, (4) fine-tuning sample preparation, (5) chunked
outpainting of the isolated object onto white, (6) re-segmentation of the
completed frames with the original query mask. Every intermediate artifact
is persisted under the working directory, write-once, with a run-metadata
JSON; outputs carry no timestamps so reruns with identical inputs and
seeds are byte-identical.

Chunking: the outpainter works on short clips, each started at an
unoccluded frame so generation has a clean anchor. Chunks aim for
``target_len`` frames and stretch (up to the model limit ``max_len``) when
no unoccluded frame is available to start the next chunk; if none exists
in reach, the next chunk starts occluded as a fallback.
"""

from __future__ import annotations

import json
import shutil
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field as dataclass_field
from pathlib import Path

import numpy as np

from . import io
from .backends import BackendEndpoints, ConnectedBackends, connect_all
from .boxes import (
    AmodalBox,
    BoxGrowthConfig,
    adjust_box,
    fill_missing_boxes,
    grow_boxes,
    load_boxes,
    observed_box,
    save_boxes,
)
from .core import BackendError, ValidationError, VideoGeometry, mask_area
from .manifest import FrameRef, SequenceManifest, load_manifest, save_manifest
from .occlusion import OcclusionConfig, OcclusionLabel, OcclusionVerdict, label_frames
from .target_region import build_target_region
from .trainprep import (
    DEFAULT_TOKEN,
    MANIFEST_NAME,
    MaskGenConfig,
    PROMPT_TEMPLATE,
    build_training_manifest,
)

CHUNK_TARGET_LEN = 16
CHUNK_MAX_LEN = 64  # outpainting model limit


@dataclass(frozen=True)
class Chunk:
    """Inclusive frame range processed as one outpainting call."""

    start: int
    end: int

    def __post_init__(self):
        if self.start > self.end:
            raise ValidationError(f"chunk start {self.start} > end {self.end}")

    @property
    def length(self) -> int:
        return self.end - self.start + 1

    def frames(self) -> range:
        return range(self.start, self.end + 1)


def plan_chunks(
    verdicts: list[OcclusionVerdict],
    target_len: int = CHUNK_TARGET_LEN,
    max_len: int = CHUNK_MAX_LEN,
) -> list[Chunk]:
    """Greedy in-order partition of all frames into outpainting chunks."""
    if target_len < 1 or max_len < target_len:
        raise ValidationError(f"need 1 <= target_len <= max_len, got {target_len}/{max_len}")
    if not verdicts:
        raise ValidationError("no verdicts to chunk")
    if verdicts[0].label is not OcclusionLabel.UNOCCLUDED:
        raise ValidationError("frame 0 must be unoccluded to start a run")
    unoccluded = [v.label is OcclusionLabel.UNOCCLUDED for v in verdicts]
    total = len(verdicts)
    chunks = []
    start = 0
    while start < total:
        want = start + target_len
        if want >= total:
            chunks.append(Chunk(start, total - 1))
            break
        reach = min(start + max_len, total - 1)
        next_start = next((j for j in range(want, reach + 1) if unoccluded[j]), None)
        if next_start is not None:
            chunks.append(Chunk(start, next_start - 1))
            start = next_start
        else:
            # no viable unoccluded start in reach: stretch to the limit and
            # let the next chunk start occluded
            end = min(start + max_len, total) - 1
            chunks.append(Chunk(start, end))
            start = end + 1
    return chunks


@dataclass(frozen=True)
class PipelineConfig:
    occlusion: OcclusionConfig = dataclass_field(default_factory=OcclusionConfig)
    growth: BoxGrowthConfig = dataclass_field(default_factory=BoxGrowthConfig)
    chunk_target_len: int = CHUNK_TARGET_LEN
    chunk_max_len: int = CHUNK_MAX_LEN
    bbox_expand_percent: float = 0.0
    token: str = DEFAULT_TOKEN
    seed: int = 0
    concurrent_chunks: bool = False

    def maskgen(self) -> MaskGenConfig:
        return MaskGenConfig(seed=self.seed)

    def to_json(self) -> dict:
        return {
            "occlusion": {
                "derivative_threshold": self.occlusion.derivative_threshold,
                "verdict_threshold": self.occlusion.verdict_threshold,
                "probe_distance": self.occlusion.probe_distance,
                "boundary_connectivity": self.occlusion.boundary_connectivity,
                "normalize_nearness": self.occlusion.normalize_nearness,
            },
            "growth": {
                "area_drop_fraction": self.growth.area_drop_fraction,
                "window": self.growth.window,
            },
            "chunk_target_len": self.chunk_target_len,
            "chunk_max_len": self.chunk_max_len,
            "bbox_expand_percent": self.bbox_expand_percent,
            "token": self.token,
            "seed": self.seed,
            "concurrent_chunks": self.concurrent_chunks,
            "mask_generation": self.maskgen().to_json(),
        }


@dataclass
class PipelineResult:
    workdir: Path
    final_masks: list[np.ndarray]
    final_manifest: Path
    chunks: list[Chunk]
    verdicts: list[OcclusionVerdict]


def _write_json(path: Path, obj) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def compute_boxes_and_verdicts(
    visible: list[np.ndarray],
    nearness: list[np.ndarray],
    geometry: VideoGeometry,
    config: PipelineConfig,
    assume_first_unoccluded: bool = True,
) -> tuple[list[AmodalBox], list[OcclusionVerdict]]:
    """Observed boxes -> gap fill -> verdicts -> growth -> optional expand.

    The first frame is assumed unoccluded by the task contract, so its
    verdict is forced even when its measured f_occ crosses the threshold.
    """
    observed = [observed_box(m, i) for i, m in enumerate(visible)]
    filled = fill_missing_boxes(observed, geometry)
    verdicts = label_frames(visible, nearness, filled, config.occlusion)
    if assume_first_unoccluded:
        verdicts[0] = OcclusionVerdict(0, verdicts[0].f_occ, OcclusionLabel.UNOCCLUDED)
    boxes = grow_boxes(filled, verdicts, observed, config.growth)
    if config.bbox_expand_percent != 0.0:
        boxes = [adjust_box(b, config.bbox_expand_percent) for b in boxes]
    return boxes, verdicts


def run_pipeline(
    manifest: SequenceManifest | str | Path,
    query_mask_path: str | Path,
    backends: BackendEndpoints,
    workdir: str | Path,
    config: PipelineConfig | None = None,
) -> PipelineResult:
    """Execute the full flow; see the module docstring for the stage list."""
    config = config or PipelineConfig()
    if not isinstance(manifest, SequenceManifest):
        manifest = load_manifest(manifest)
    geometry = manifest.geometry
    workdir = Path(workdir)
    workdir.mkdir(parents=True, exist_ok=True)

    query = io.load_mask(query_mask_path, geometry)
    if mask_area(query) == 0:
        raise ValidationError("query mask is empty")

    with connect_all(backends) as clients:
        clients.health_check(workdir)
        return _run_stages(manifest, query, clients, workdir, config)


def _run_stages(
    manifest: SequenceManifest,
    query: np.ndarray,
    clients: ConnectedBackends,
    workdir: Path,
    config: PipelineConfig,
) -> PipelineResult:
    geometry = manifest.geometry
    total = geometry.frame_count

    # stage 0: ingest — re-encode inputs under canonical names so the run
    # directory is self-contained
    images = manifest.load_images()
    frame_rel = [f"frames/frame_{i:04d}.png" for i in range(total)]
    for img, rel in zip(images, frame_rel):
        io.save_image(img, workdir / rel)
    io.save_mask(query, workdir / "query.png")

    # stage 1: visible masks from the segmenter
    seg = _stage_request(
        clients.segmenter, "segment", {"frames": frame_rel, "query_mask": "query.png"}, workdir
    )
    if len(seg["masks"]) != total:
        raise BackendError(
            f"segment: expected {total} masks, backend sent {len(seg['masks'])}"
        )
    visible = [io.load_mask(workdir / rel, geometry) for rel in seg["masks"]]
    visible_rel = [f"visible/visible_{i:04d}.png" for i in range(total)]
    for mask, rel in zip(visible, visible_rel):
        io.save_mask(mask, workdir / rel)
    if mask_area(visible[0]) == 0:
        raise ValidationError("segmenter returned an empty mask for frame 0")

    # stage 2: nearness maps from the depth estimator
    nearness = []
    for i, rel in enumerate(frame_rel):
        dep = _stage_request(clients.depth_estimator, "depth", {"frame": rel}, workdir)
        near = io.load_nearness(
            workdir / dep["nearness_data"], workdir / dep["nearness_header"], geometry
        )
        io.save_nearness(near, workdir / f"nearness/{i:04d}.f32", workdir / f"nearness/{i:04d}.json")
        nearness.append(near)

    # stage 3: occlusion reasoning, boxes, target regions
    boxes, verdicts = compute_boxes_and_verdicts(visible, nearness, geometry, config)
    _write_json(workdir / "verdicts.json", [v.to_json() for v in verdicts])
    save_boxes(boxes, workdir / "boxes.json")

    region_rel = []
    for i in range(total):
        if verdicts[i].label is OcclusionLabel.OUT_OF_FRAME:
            region = np.zeros(geometry.shape, dtype=bool)  # nothing paintable in-image
        else:
            region = build_target_region(visible[i], nearness[i], boxes[i])
        rel = f"target_regions/{i:04d}.png"
        io.save_mask(region, workdir / rel)
        region_rel.append(rel)
    _write_json(
        workdir / "target_regions/index.json",
        [{"frame": i, "mask": rel} for i, rel in enumerate(region_rel)],
    )

    # stage 4: fine-tuning samples
    build_training_manifest(
        images, visible, verdicts, config.maskgen(), config.token,
        workdir / "trainprep", geometry,
    )
    finetune_rel = f"trainprep/{MANIFEST_NAME}"
    input_rel = [f"trainprep/inputs/{i:04d}.png" for i in range(total)]

    # stage 5: chunked outpainting
    chunks = plan_chunks(verdicts, config.chunk_target_len, config.chunk_max_len)
    _write_json(
        workdir / "chunks.json",
        [{"start": c.start, "end": c.end, "length": c.length} for c in chunks],
    )
    prompt = PROMPT_TEMPLATE.format(token=config.token)

    def outpaint(chunk: Chunk) -> list[str]:
        payload = {
            "frames": [input_rel[i] for i in chunk.frames()],
            "visible_masks": [visible_rel[i] for i in chunk.frames()],
            "target_regions": [region_rel[i] for i in chunk.frames()],
            "prompt": prompt,
            "finetune_manifest": finetune_rel,
        }
        out = _stage_request(clients.outpainter, "outpaint", payload, workdir)
        if len(out["completed_frames"]) != chunk.length:
            raise BackendError(
                f"outpaint: chunk [{chunk.start},{chunk.end}] expected"
                f" {chunk.length} frames, got {len(out['completed_frames'])}"
            )
        return out["completed_frames"]

    if config.concurrent_chunks and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=min(4, len(chunks))) as pool:
            chunk_outputs = list(pool.map(outpaint, chunks))
    else:
        chunk_outputs = [outpaint(c) for c in chunks]

    completed_rel = [f"completed/completed_{i:04d}.png" for i in range(total)]
    (workdir / "completed").mkdir(exist_ok=True)
    for chunk, outputs in zip(chunks, chunk_outputs):
        for i, rel in zip(chunk.frames(), outputs):
            shutil.copyfile(workdir / rel, workdir / completed_rel[i])

    # stage 6: re-segment the completed frames with the original query mask
    reseg = _stage_request(
        clients.segmenter, "segment", {"frames": completed_rel, "query_mask": "query.png"}, workdir
    )
    if len(reseg["masks"]) != total:
        raise BackendError(
            f"segment (final): expected {total} masks, got {len(reseg['masks'])}"
        )
    final_masks = [io.load_mask(workdir / rel, geometry) for rel in reseg["masks"]]
    final_rel = [f"final_masks/{i:04d}.png" for i in range(total)]
    for mask, rel in zip(final_masks, final_rel):
        io.save_mask(mask, workdir / rel)

    final_manifest = SequenceManifest(
        geometry=geometry,
        frames=[
            FrameRef(image=completed_rel[i], mask=final_rel[i]) for i in range(total)
        ],
        verdicts="verdicts.json",
        boxes="boxes.json",
        root=workdir,
    )
    final_manifest_path = workdir / "final_manifest.json"
    save_manifest(final_manifest, final_manifest_path)

    _write_json(
        workdir / "run.json",
        {
            "config": config.to_json(),
            "geometry": geometry.to_json(),
            "artifacts": {
                "frames": frame_rel,
                "visible_masks": visible_rel,
                "target_regions": region_rel,
                "completed_frames": completed_rel,
                "final_masks": final_rel,
                "finetune_manifest": finetune_rel,
                "final_manifest": "final_manifest.json",
            },
            "chunks": [{"start": c.start, "end": c.end} for c in chunks],
        },
    )
    return PipelineResult(
        workdir=workdir,
        final_masks=final_masks,
        final_manifest=final_manifest_path,
        chunks=chunks,
        verdicts=verdicts,
    )


def _stage_request(client, kind: str, payload: dict, workdir: Path) -> dict:
    try:
        return client.request(kind, payload, workdir)
    except BackendError as exc:
        raise BackendError(f"stage '{kind}' failed: {exc}") from exc


def validate_run_artifacts(workdir: str | Path) -> None:
    """Reload a run's intermediates and re-check cross-stage invariants."""
    workdir = Path(workdir)
    run = json.loads((workdir / "run.json").read_text())
    geometry = VideoGeometry.from_json(run["geometry"])
    arts = run["artifacts"]
    verdicts = [
        OcclusionVerdict.from_json(v)
        for v in json.loads((workdir / "verdicts.json").read_text())
    ]
    boxes = load_boxes(workdir / "boxes.json")
    if not (len(verdicts) == len(boxes) == geometry.frame_count):
        raise ValidationError("verdict/box/frame counts disagree")
    for i in range(geometry.frame_count):
        vis = io.load_mask(workdir / arts["visible_masks"][i], geometry)
        region = io.load_mask(workdir / arts["target_regions"][i], geometry)
        verdict = verdicts[i]
        if verdict.V != (1 if verdict.label is OcclusionLabel.UNOCCLUDED else 0):
            raise ValidationError(f"frame {i}: V bit contradicts label")
        if mask_area(vis) == 0:
            if verdict.label is OcclusionLabel.UNOCCLUDED:
                raise ValidationError(f"frame {i}: empty mask labeled unoccluded")
        elif verdict.label is not OcclusionLabel.OUT_OF_FRAME:
            if np.any(vis & ~region):
                raise ValidationError(f"frame {i}: visible mask escapes target region")
        io.load_mask(workdir / arts["final_masks"][i], geometry)
