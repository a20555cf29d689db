"""Endpoint implementations shared by the HTTP app and the in-process CLI."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .. import __version__, io
from ..backends import load_backends
from ..boxes import (
    adjust_box,
    clamp_box_to_image,
    fill_missing_boxes,
    grow_boxes,
    load_boxes,
    observed_box,
    save_boxes,
)
from ..compositor import load_scene, run_compositing
from ..core import ValidationError, mask_area
from ..manifest import load_manifest
from ..metrics import evaluate_sequence, gt_stats, save_report
from ..occlusion import OcclusionConfig, OcclusionVerdict, label_frames
from ..pipeline import PipelineConfig, run_pipeline
from ..render import emit_report_table, parse_color, render_overlay
from ..synth import SynthConfig, generate_scene
from ..target_region import build_target_region
from ..trainprep import MaskGenConfig, build_training_manifest
from . import models


def _write_json(path: str | Path, obj) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _load_verdicts(path: str | Path) -> list[OcclusionVerdict]:
    path = Path(path)
    if not path.is_file():
        raise ValidationError(f"verdicts file not found: {path}")
    return [OcclusionVerdict.from_json(v) for v in json.loads(path.read_text())]


def occlusion(req: models.OcclusionRequest) -> models.OcclusionResponse:
    manifest = load_manifest(req.manifest)
    config = OcclusionConfig(
        derivative_threshold=req.t,
        verdict_threshold=req.tau,
        probe_distance=req.probe_distance,
        boundary_connectivity=req.connectivity,
    )
    visible = manifest.load_masks("visible_mask")
    nearness = manifest.load_nearness_maps()
    boxes = None
    if any(mask_area(m) > 0 for m in visible):
        boxes = fill_missing_boxes(
            [observed_box(m, i) for i, m in enumerate(visible)], manifest.geometry
        )
    verdicts = label_frames(visible, nearness, boxes, config)
    items = [models.VerdictItem(**v.to_json()) for v in verdicts]
    if req.out:
        _write_json(req.out, [v.to_json() for v in verdicts])
    return models.OcclusionResponse(verdicts=items, out=req.out)


def bbox(req: models.BboxRequest) -> models.BboxResponse:
    manifest = load_manifest(req.manifest)
    visible = manifest.load_masks("visible_mask")
    observed = [observed_box(m, i) for i, m in enumerate(visible)]
    boxes = fill_missing_boxes(observed, manifest.geometry)
    if req.verdicts:
        boxes = grow_boxes(boxes, _load_verdicts(req.verdicts), observed)
    if req.expand != 0.0:
        boxes = [adjust_box(b, req.expand) for b in boxes]
    if req.out:
        save_boxes(boxes, req.out)
    return models.BboxResponse(boxes=[models.BoxItem(**b.to_json()) for b in boxes], out=req.out)


def target_region(req: models.TargetRegionRequest) -> models.TargetRegionResponse:
    manifest = load_manifest(req.manifest)
    visible = manifest.load_masks("visible_mask")
    nearness = manifest.load_nearness_maps()
    boxes = load_boxes(req.boxes)
    if len(boxes) != manifest.geometry.frame_count:
        raise ValidationError(
            f"{len(boxes)} boxes for {manifest.geometry.frame_count} frames"
        )
    out_dir = Path(req.out_dir)
    index = []
    for i in range(manifest.geometry.frame_count):
        if clamp_box_to_image(boxes[i], manifest.geometry.width, manifest.geometry.height) is None:
            region = np.zeros(manifest.geometry.shape, dtype=bool)
        else:
            region = build_target_region(visible[i], nearness[i], boxes[i])
        rel = f"{i:04d}.png"
        io.save_mask(region, out_dir / rel)
        index.append({"frame": i, "mask": rel})
    _write_json(out_dir / "index.json", index)
    return models.TargetRegionResponse(out_dir=str(out_dir), index=index)


def composite(req: models.CompositeRequest) -> models.CompositeResponse:
    scene = load_scene(req.scene)
    manifest_path = run_compositing(
        scene, req.out_dir, alpha_cut=req.alpha_cut, verbatim_eq=req.verbatim_eq
    )
    return models.CompositeResponse(manifest=str(manifest_path), frame_count=scene.frame_count)


def trainprep(req: models.TrainprepRequest) -> models.TrainprepResponse:
    manifest = load_manifest(req.manifest)
    frames = manifest.load_images()
    visible = manifest.load_masks("visible_mask")
    verdicts = _load_verdicts(req.verdicts)
    if len(verdicts) != len(frames):
        raise ValidationError(f"{len(verdicts)} verdicts for {len(frames)} frames")
    path = build_training_manifest(
        frames, visible, verdicts, MaskGenConfig(seed=req.seed), req.token,
        req.out_dir, manifest.geometry,
    )
    return models.TrainprepResponse(
        finetune_manifest=str(path),
        frame_count=len(frames),
        unoccluded_frames=sum(v.V for v in verdicts),
    )


def evaluate(req: models.EvalRequest) -> models.EvalResponse:
    pred_manifest = load_manifest(req.pred_manifest)
    gt_manifest = load_manifest(req.gt_manifest)
    if pred_manifest.geometry != gt_manifest.geometry:
        raise ValidationError("prediction and ground-truth geometries differ")
    pred = pred_manifest.load_masks("mask")
    gt_amodal = gt_manifest.load_masks("gt_amodal_mask")
    gt_visible = gt_manifest.load_masks("gt_visible_mask")
    report = evaluate_sequence(pred, gt_amodal, gt_visible).to_json()
    if req.out:
        save_report(report, req.out)
    return models.EvalResponse(report=report, table=emit_report_table(report), out=req.out)


def stats(req: models.StatsRequest) -> models.StatsResponse:
    gt_manifest = load_manifest(req.gt_manifest)
    counts = gt_stats(
        gt_manifest.load_masks("gt_amodal_mask"),
        gt_manifest.load_masks("gt_visible_mask"),
    )
    return models.StatsResponse(counts=counts)


def pipeline_run(req: models.PipelineRunRequest) -> models.PipelineRunResponse:
    config = PipelineConfig(
        occlusion=OcclusionConfig(derivative_threshold=req.t, verdict_threshold=req.tau),
        chunk_target_len=req.chunk_len,
        chunk_max_len=req.max_chunk_len,
        bbox_expand_percent=req.bbox_expand,
        token=req.token,
        seed=req.seed,
        concurrent_chunks=req.concurrent_chunks,
    )
    result = run_pipeline(
        req.manifest, req.query, load_backends(req.backends), req.workdir, config
    )
    return models.PipelineRunResponse(
        workdir=str(result.workdir),
        final_manifest=str(result.final_manifest),
        chunks=[{"start": c.start, "end": c.end} for c in result.chunks],
        verdicts=[models.VerdictItem(**v.to_json()) for v in result.verdicts],
    )


def render(req: models.RenderRequest) -> models.RenderResponse:
    frame = io.load_image(req.image)
    layers = []
    for layer in req.layers:
        mask = io.load_mask(layer.mask)
        layers.append((mask, parse_color(layer.color), layer.opacity))
    io.save_image(render_overlay(frame, layers), req.out)
    return models.RenderResponse(out=req.out)


def synth(req: models.SynthRequest) -> models.SynthResponse:
    scene = generate_scene(
        req.out_dir,
        SynthConfig(
            width=req.width, height=req.height, frame_count=req.frame_count, seed=req.seed
        ),
    )
    return models.SynthResponse(
        scene_dir=str(scene.root),
        manifest=str(scene.root / scene.manifest),
        query=str(scene.root / scene.query),
    )


def health() -> models.HealthResponse:
    return models.HealthResponse(status="ok", service="tabe", version=__version__)
