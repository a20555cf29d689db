"""Pydantic request/response models for the service endpoints.

All file paths are server-local: the service and its clients share a
filesystem (or the client runs the handlers in process, which is what the
CLI does without ``--server``).
"""

from __future__ import annotations

from pydantic import BaseModel, Field


class VerdictItem(BaseModel):
    frame: int
    f_occ: float | None
    label: str
    V: int


class BoxItem(BaseModel):
    frame: int
    x0: float
    y0: float
    x1: float
    y1: float
    provenance: str


class OcclusionRequest(BaseModel):
    manifest: str
    t: float = 0.05
    tau: float = 0.2
    probe_distance: float = 2.0
    connectivity: int = 4
    out: str | None = None


class OcclusionResponse(BaseModel):
    verdicts: list[VerdictItem]
    out: str | None = None


class BboxRequest(BaseModel):
    manifest: str
    expand: float = 0.0
    verdicts: str | None = None  # enables occlusion-driven growth
    out: str | None = None


class BboxResponse(BaseModel):
    boxes: list[BoxItem]
    out: str | None = None


class TargetRegionRequest(BaseModel):
    manifest: str
    boxes: str
    out_dir: str


class TargetRegionResponse(BaseModel):
    out_dir: str
    index: list[dict]


class CompositeRequest(BaseModel):
    scene: str
    out_dir: str
    alpha_cut: float = 0.5
    verbatim_eq: bool = False


class CompositeResponse(BaseModel):
    manifest: str
    frame_count: int


class TrainprepRequest(BaseModel):
    manifest: str
    verdicts: str
    seed: int = 0
    token: str = "sks"
    out_dir: str


class TrainprepResponse(BaseModel):
    finetune_manifest: str
    frame_count: int
    unoccluded_frames: int


class EvalRequest(BaseModel):
    pred_manifest: str
    gt_manifest: str
    out: str | None = None


class EvalResponse(BaseModel):
    report: dict
    table: str
    out: str | None = None


class StatsRequest(BaseModel):
    gt_manifest: str


class StatsResponse(BaseModel):
    counts: dict[str, int]


class PipelineRunRequest(BaseModel):
    manifest: str
    query: str
    backends: str
    workdir: str
    chunk_len: int = 16
    max_chunk_len: int = 64
    bbox_expand: float = 0.0
    seed: int = 0
    token: str = "sks"
    t: float = 0.05
    tau: float = 0.2
    concurrent_chunks: bool = False


class PipelineRunResponse(BaseModel):
    workdir: str
    final_manifest: str
    chunks: list[dict]
    verdicts: list[VerdictItem]


class RenderLayer(BaseModel):
    mask: str
    color: str = "green"
    opacity: float = Field(default=0.5, ge=0.0, le=1.0)


class RenderRequest(BaseModel):
    image: str
    layers: list[RenderLayer]
    out: str


class RenderResponse(BaseModel):
    out: str


class SynthRequest(BaseModel):
    out_dir: str
    seed: int = 0
    frame_count: int = 24
    width: int = 96
    height: int = 64


class SynthResponse(BaseModel):
    scene_dir: str
    manifest: str
    query: str


class HealthResponse(BaseModel):
    status: str
    service: str
    version: str
