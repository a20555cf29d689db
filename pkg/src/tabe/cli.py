"""Command-line interface: a thin client of the service layer.

Every subcommand builds the same pydantic request the HTTP endpoint takes
and either runs the handler in process (default) or POSTs it to a running
service (``--server http://host:port``). Results print as JSON on stdout;
``--out``/``--out-dir`` paths additionally write files, with the effective
request recorded beside them.

Exit codes: 0 success, 2 config/usage error, 3 backend failure,
4 validation failure.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click
import httpx
import pydantic

from .core import BackendError, ConfigError, TabeError
from .service import handlers, models


def _load_config_file(path: str | None) -> dict:
    if not path:
        return {}
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {p}")
    try:
        obj = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {p} is not valid JSON: {exc}") from exc
    if not isinstance(obj, dict):
        raise ConfigError(f"config file {p} must hold a JSON object")
    return obj


def _effective_config_path(request: pydantic.BaseModel) -> Path | None:
    data = request.model_dump()
    if data.get("out_dir"):
        return Path(data["out_dir"]) / "effective_config.json"
    if data.get("workdir"):
        return Path(data["workdir"]) / "effective_config.json"
    if data.get("out"):
        out = Path(data["out"])
        return out.with_name(out.stem + ".config.json")
    return None


def _dispatch(ctx: click.Context, endpoint: str, model_cls, response_cls, overrides: dict):
    """Build the request (config-file defaults, then CLI values) and run it."""
    defaults = ctx.obj["config"].get(endpoint.strip("/").replace("/", "_"), {})
    merged = {**defaults, **{k: v for k, v in overrides.items() if v is not None}}
    try:
        request = model_cls(**merged)
    except pydantic.ValidationError as exc:
        raise ConfigError(f"bad arguments for {endpoint}: {exc}") from exc

    server = ctx.obj["server"]
    if server:
        resp = httpx.post(
            server.rstrip("/") + endpoint, json=request.model_dump(), timeout=None
        )
        if resp.status_code != 200:
            try:
                err = resp.json()["error"]
            except Exception:
                raise BackendError(f"server returned status {resp.status_code}")
            exc_cls = {2: ConfigError, 3: BackendError}.get(err.get("exit_code"), TabeError)
            exc = exc_cls(err.get("message", "server error"))
            exc.exit_code = err.get("exit_code", 1)
            raise exc
        result = response_cls(**resp.json())
    else:
        handler = getattr(handlers, _HANDLERS[endpoint])
        result = handler(request)

    config_path = _effective_config_path(request)
    if config_path is not None:
        config_path.parent.mkdir(parents=True, exist_ok=True)
        config_path.write_text(
            json.dumps(request.model_dump(), indent=2, sort_keys=True) + "\n"
        )
    click.echo(json.dumps(result.model_dump(), indent=2, sort_keys=True))
    return result


_HANDLERS = {
    "/occlusion": "occlusion",
    "/bbox": "bbox",
    "/target-region": "target_region",
    "/composite": "composite",
    "/trainprep": "trainprep",
    "/eval": "evaluate",
    "/stats": "stats",
    "/pipeline/run": "pipeline_run",
    "/render": "render",
    "/synth": "synth",
}


@click.group()
@click.option("--server", envvar="TABE_SERVER", default=None, metavar="URL",
              help="Send requests to a running service instead of running in process.")
@click.option("--config", "config_path", default=None, metavar="FILE",
              help="JSON file with per-subcommand request defaults.")
@click.option("--seed", type=int, default=None, help="Default seed for seeded subcommands.")
@click.pass_context
def main(ctx, server, config_path, seed):
    """Amodal video segmentation toolkit."""
    ctx.ensure_object(dict)
    ctx.obj["server"] = server
    ctx.obj["config"] = _load_config_file(config_path)
    ctx.obj["seed"] = seed


def _seed_default(ctx) -> int | None:
    return ctx.obj.get("seed")


@main.command()
@click.option("--manifest", required=True, help="Sequence manifest with visible masks and nearness maps.")
@click.option("--t", type=float, default=None, help="Outward-derivative threshold (after nearness normalization).")
@click.option("--tau", type=float, default=None, help="f_occ threshold separating unoccluded from occluded.")
@click.option("--probe-distance", type=float, default=None, help="Probe length in pixels for the boundary derivative.")
@click.option("--connectivity", type=click.Choice(["4", "8"]), default=None, help="Boundary neighbor connectivity.")
@click.option("--out", default=None, help="Write the per-frame verdict JSON array here.")
@click.pass_context
def occlusion(ctx, manifest, t, tau, probe_distance, connectivity, out):
    """Per-frame occlusion verdicts {frame, f_occ, label, V}."""
    _dispatch(ctx, "/occlusion", models.OcclusionRequest, models.OcclusionResponse, {
        "manifest": manifest, "t": t, "tau": tau, "probe_distance": probe_distance,
        "connectivity": int(connectivity) if connectivity else None, "out": out,
    })


@main.command()
@click.option("--manifest", required=True, help="Sequence manifest with visible masks.")
@click.option("--expand", type=float, default=None, help="Expand (+) or contract (-) boxes by this percent.")
@click.option("--verdicts", default=None, help="Verdict JSON enabling occlusion-driven box growth.")
@click.option("--out", default=None, help="Write the box JSON array here.")
@click.pass_context
def bbox(ctx, manifest, expand, verdicts, out):
    """Amodal boxes {frame, x0, y0, x1, y1, provenance}."""
    _dispatch(ctx, "/bbox", models.BboxRequest, models.BboxResponse, {
        "manifest": manifest, "expand": expand, "verdicts": verdicts, "out": out,
    })


@main.command("target-region")
@click.option("--manifest", required=True, help="Sequence manifest with visible masks and nearness maps.")
@click.option("--boxes", required=True, help="Amodal box JSON (from the bbox subcommand).")
@click.option("--out-dir", required=True, help="Directory for per-frame region masks plus index.json.")
@click.pass_context
def target_region(ctx, manifest, boxes, out_dir):
    """Per-frame outpainting target region masks."""
    _dispatch(ctx, "/target-region", models.TargetRegionRequest, models.TargetRegionResponse, {
        "manifest": manifest, "boxes": boxes, "out_dir": out_dir,
    })


@main.command()
@click.option("--scene", required=True, help="Scene description JSON (clips, mattes, offsets).")
@click.option("--out-dir", required=True, help="Directory for composited frames, GT masks, manifest.")
@click.option("--alpha-cut", type=float, default=None, help="Matte cut for the derived binary visible mask.")
@click.option("--verbatim-eq", is_flag=True, default=None,
              help="Solve the occluder color against the object scene instead of the clean plate.")
@click.pass_context
def composite(ctx, scene, out_dir, alpha_cut, verbatim_eq):
    """Composite an occluder clip over an object clip with exact GT masks."""
    _dispatch(ctx, "/composite", models.CompositeRequest, models.CompositeResponse, {
        "scene": scene, "out_dir": out_dir, "alpha_cut": alpha_cut, "verbatim_eq": verbatim_eq,
    })


@main.command()
@click.option("--manifest", required=True, help="Sequence manifest with frames and visible masks.")
@click.option("--verdicts", required=True, help="Verdict JSON supplying the per-frame loss bits.")
@click.option("--seed", type=int, default=None, help="Random-mask seed (reruns are byte-identical).")
@click.option("--token", default=None, help="Rare token substituted into the prompt.")
@click.option("--out-dir", required=True, help="Directory for training images, masks, and the manifest.")
@click.pass_context
def trainprep(ctx, manifest, verdicts, seed, token, out_dir):
    """Fine-tuning samples: white-background inputs, random masks, manifest."""
    _dispatch(ctx, "/trainprep", models.TrainprepRequest, models.TrainprepResponse, {
        "manifest": manifest, "verdicts": verdicts,
        "seed": seed if seed is not None else _seed_default(ctx),
        "token": token, "out_dir": out_dir,
    })


@main.command("eval")
@click.option("--pred-manifest", required=True, help="Manifest whose frames carry 'mask' predictions.")
@click.option("--gt-manifest", required=True, help="Manifest with gt_amodal_mask and gt_visible_mask.")
@click.option("--out", default=None, help="Write the report JSON here.")
@click.pass_context
def evaluate(ctx, pred_manifest, gt_manifest, out):
    """Amodal IoU report: mean, occlusion, full-occlusion, non-visible-pixel."""
    result = _dispatch(ctx, "/eval", models.EvalRequest, models.EvalResponse, {
        "pred_manifest": pred_manifest, "gt_manifest": gt_manifest, "out": out,
    })
    click.echo(result.table, nl=False)


@main.command()
@click.option("--gt-manifest", required=True, help="Manifest with gt_amodal_mask and gt_visible_mask.")
@click.pass_context
def stats(ctx, gt_manifest):
    """Ground-truth occlusion category counts for a sequence."""
    _dispatch(ctx, "/stats", models.StatsRequest, models.StatsResponse, {
        "gt_manifest": gt_manifest,
    })


@main.group()
def pipeline():
    """End-to-end runs against configured model backends."""


@pipeline.command("run")
@click.option("--manifest", required=True, help="Input sequence manifest (frames only is enough).")
@click.option("--query", required=True, help="Query mask image for the unoccluded first frame.")
@click.option("--backends", required=True, help="backends.json mapping the three model roles.")
@click.option("--workdir", required=True, help="Directory for all run artifacts.")
@click.option("--chunk-len", type=int, default=None, help="Target outpainting chunk length.")
@click.option("--max-chunk-len", type=int, default=None, help="Hard chunk length limit of the outpainter.")
@click.option("--bbox-expand", type=float, default=None, help="Expand/contract estimated boxes by this percent.")
@click.option("--seed", type=int, default=None, help="Seed for the fine-tuning mask generator.")
@click.option("--token", default=None, help="Rare prompt token for fine-tuning.")
@click.option("--t", type=float, default=None, help="Occlusion derivative threshold.")
@click.option("--tau", type=float, default=None, help="Occlusion verdict threshold.")
@click.option("--concurrent-chunks", is_flag=True, default=None, help="Dispatch outpainting chunks concurrently.")
@click.pass_context
def pipeline_run(ctx, manifest, query, backends, workdir, chunk_len, max_chunk_len,
                 bbox_expand, seed, token, t, tau, concurrent_chunks):
    """Query mask in, amodal mask sequence out."""
    _dispatch(ctx, "/pipeline/run", models.PipelineRunRequest, models.PipelineRunResponse, {
        "manifest": manifest, "query": query, "backends": backends, "workdir": workdir,
        "chunk_len": chunk_len, "max_chunk_len": max_chunk_len, "bbox_expand": bbox_expand,
        "seed": seed if seed is not None else _seed_default(ctx),
        "token": token, "t": t, "tau": tau, "concurrent_chunks": concurrent_chunks,
    })


@main.command()
@click.option("--image", required=True, help="Frame to draw over.")
@click.option("--layer", "layers", multiple=True, metavar="MASK[:COLOR[:OPACITY]]",
              help="Mask overlay; repeat for several layers (drawn in order).")
@click.option("--out", required=True, help="Output image path.")
@click.pass_context
def render(ctx, image, layers, out):
    """Alpha-blend mask overlays onto a frame (green GT amodal, red GT visible, magenta prediction)."""
    parsed = []
    for spec in layers:
        parts = spec.split(":")
        if len(parts) > 3:
            raise ConfigError(f"bad layer spec {spec!r}; use MASK[:COLOR[:OPACITY]]")
        layer = {"mask": parts[0]}
        if len(parts) > 1:
            layer["color"] = parts[1]
        if len(parts) > 2:
            layer["opacity"] = float(parts[2])
        parsed.append(layer)
    _dispatch(ctx, "/render", models.RenderRequest, models.RenderResponse, {
        "image": image, "layers": parsed, "out": out,
    })


@main.command()
@click.option("--out-dir", required=True, help="Directory for the generated scene.")
@click.option("--seed", type=int, default=None, help="Scene generator seed.")
@click.option("--frames", "frame_count", type=int, default=None, help="Number of frames.")
@click.option("--width", type=int, default=None, help="Frame width in pixels.")
@click.option("--height", type=int, default=None, help="Frame height in pixels.")
@click.pass_context
def synth(ctx, out_dir, seed, frame_count, width, height):
    """Generate a synthetic occlusion scene with exact ground truth (dev helper)."""
    _dispatch(ctx, "/synth", models.SynthRequest, models.SynthResponse, {
        "out_dir": out_dir, "seed": seed if seed is not None else _seed_default(ctx),
        "frame_count": frame_count, "width": width, "height": height,
    })


@main.command()
@click.option("--host", default="127.0.0.1", help="Bind address.")
@click.option("--port", type=int, default=8008, help="Bind port.")
def serve(host, port):
    """Run the HTTP service the other subcommands can talk to via --server."""
    import uvicorn

    from .service.app import app

    uvicorn.run(app, host=host, port=port)


def entrypoint(argv: list[str] | None = None) -> int:
    try:
        main.main(args=argv, standalone_mode=False, obj={})
        return 0
    except TabeError as exc:
        click.echo(f"error: {exc}", err=True)
        return exc.exit_code
    except click.UsageError as exc:
        exc.show(file=sys.stderr)
        return 2
    except click.exceptions.Exit as exc:
        return exc.exit_code
    except click.Abort:
        return 130


if __name__ == "__main__":
    sys.exit(entrypoint())
