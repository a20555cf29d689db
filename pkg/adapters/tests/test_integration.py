"""End-to-end against the orchestrator, through external interfaces only.

The orchestrator is driven via its `tabe` CLI and reaches this package by
spawning `tabe-adapter serve` stdio processes — no Python import in either
direction. Skipped when the orchestrator CLI is not installed.
"""

import json
import shutil
import subprocess
import sys

import pytest

TABE = shutil.which("tabe")

pytestmark = pytest.mark.skipif(TABE is None, reason="orchestrator CLI not installed")


def run(args, **kw):
    return subprocess.run(args, capture_output=True, text=True, timeout=300, **kw)


def test_pipeline_runs_against_stub_adapter(tmp_path):
    scene_dir = tmp_path / "scene"
    result = run([TABE, "synth", "--out-dir", str(scene_dir), "--seed", "6",
                  "--frames", "10"])
    assert result.returncode == 0, result.stderr

    adapter_yaml = tmp_path / "adapter.yaml"
    adapter_yaml.write_text("kind: subprocess\n")
    serve_cmd = [sys.executable, "-m", "tabe_adapters.cli", "serve",
                 "--config", str(adapter_yaml)]
    backends = tmp_path / "backends.json"
    backends.write_text(json.dumps({
        role: {"kind": "subprocess", "command": serve_cmd, "timeout": 120}
        for role in ("segmenter", "depth_estimator", "outpainter")
    }))

    workdir = tmp_path / "run"
    result = run([
        TABE, "pipeline", "run",
        "--manifest", str(scene_dir / "manifest.json"),
        "--query", str(scene_dir / "query.png"),
        "--backends", str(backends),
        "--workdir", str(workdir),
        "--chunk-len", "8",
    ])
    assert result.returncode == 0, result.stderr
    assert (workdir / "final_manifest.json").is_file()
    verdicts = json.loads((workdir / "verdicts.json").read_text())
    assert len(verdicts) == 10
    run_meta = json.loads((workdir / "run.json").read_text())
    assert len(run_meta["artifacts"]["final_masks"]) == 10


def test_finetune_consumes_orchestrator_manifest(tmp_path):
    """The trainprep output feeds the fine-tune driver unchanged."""
    scene_dir = tmp_path / "scene"
    assert run([TABE, "synth", "--out-dir", str(scene_dir), "--seed", "8",
                "--frames", "10"]).returncode == 0

    # manifest with GT visible masks and nearness maps for the occlusion pass
    manifest = json.loads((scene_dir / "manifest.json").read_text())
    scene = json.loads((scene_dir / "scene.json").read_text())
    for i, frame in enumerate(manifest["frames"]):
        frame["visible_mask"] = scene["gt_visible"][i]
        frame["nearness_data"] = scene["nearness_data"][i]
        frame["nearness_header"] = scene["nearness_header"][i]
    (scene_dir / "rich_manifest.json").write_text(json.dumps(manifest))

    verdicts = tmp_path / "verdicts.json"
    assert run([TABE, "occlusion", "--manifest", str(scene_dir / "rich_manifest.json"),
                "--out", str(verdicts)]).returncode == 0
    train_dir = tmp_path / "train"
    assert run([TABE, "trainprep", "--manifest", str(scene_dir / "rich_manifest.json"),
                "--verdicts", str(verdicts), "--seed", "1", "--token", "sks",
                "--out-dir", str(train_dir)]).returncode == 0

    result = run([sys.executable, "-m", "tabe_adapters.cli", "finetune",
                  "--manifest", str(train_dir / "finetune_manifest.json"),
                  "--steps", "2", "--resolution", "16", "16",
                  "--out-dir", str(tmp_path / "out")])
    assert result.returncode == 0, result.stderr
    body = json.loads(result.stdout)
    assert body["frames"] == 10
    log = json.loads((tmp_path / "out/finetune_log.json").read_text())
    assert all(e["contribution"] == 0.0 for e in log["loss_mask_log"] if e["V"] == 0)
