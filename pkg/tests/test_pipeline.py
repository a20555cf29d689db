import json

import numpy as np
import pytest

from tabe import io
from tabe.backends import BackendEndpoints, EndpointSpec
from tabe.core import BackendError, ValidationError
from tabe.manifest import load_manifest
from tabe.metrics import evaluate_sequence
from tabe.mocks import mock_backends
from tabe.occlusion import OcclusionLabel
from tabe.pipeline import PipelineConfig, run_pipeline, validate_run_artifacts
from tabe.synth import SynthConfig, generate_scene


def load_gt(scene):
    amodal = [io.load_mask(scene.root / p) for p in scene.gt_amodal]
    visible = [io.load_mask(scene.root / p) for p in scene.gt_visible]
    return amodal, visible


def run_on_scene(scene, workdir, mode="oracle", outpaint_mode=None, **config_kw):
    backends = mock_backends(scene.root, mode=mode, outpaint_mode=outpaint_mode)
    config = PipelineConfig(**config_kw)
    return run_pipeline(
        scene.root / scene.manifest, scene.root / scene.query, backends, workdir, config
    )


class TestOraclePipeline:
    def test_final_masks_equal_gt_amodal(self, session_scene, tmp_path):
        result = run_on_scene(session_scene, tmp_path / "run")
        amodal, visible = load_gt(session_scene)
        for got, want in zip(result.final_masks, amodal):
            assert np.array_equal(got, want)
        report = evaluate_sequence(result.final_masks, amodal, visible)
        assert report.occlusion_iou == 1.0
        assert report.full_occlusion_iou == 1.0
        assert report.non_visible_pixel_iou == 1.0

    def test_chunks_cover_sequence(self, session_scene, tmp_path):
        result = run_on_scene(session_scene, tmp_path / "run")
        frames = [f for c in result.chunks for f in c.frames()]
        assert frames == list(range(session_scene.geometry.frame_count))
        chunks_file = json.loads((tmp_path / "run/chunks.json").read_text())
        assert [c["start"] for c in chunks_file] == [c.start for c in result.chunks]

    def test_artifacts_validate(self, session_scene, tmp_path):
        run_on_scene(session_scene, tmp_path / "run")
        validate_run_artifacts(tmp_path / "run")

    def test_fully_occluded_frames_seen(self, session_scene, tmp_path):
        result = run_on_scene(session_scene, tmp_path / "run")
        empty = [v for v in result.verdicts if v.f_occ is None]
        assert empty, "scene must contain fully occluded frames"
        assert all(v.label is OcclusionLabel.OCCLUDED for v in empty)

    def test_final_manifest_loads(self, session_scene, tmp_path):
        result = run_on_scene(session_scene, tmp_path / "run")
        manifest = load_manifest(result.final_manifest)
        masks = manifest.load_masks("mask")
        for got, want in zip(masks, result.final_masks):
            assert np.array_equal(got, want)


class TestIdentityScene:
    def test_no_occluder_final_equals_visible(self, tmp_path):
        scene = generate_scene(
            tmp_path / "scene", SynthConfig(frame_count=12, seed=5, with_occluder=False)
        )
        result = run_on_scene(scene, tmp_path / "run")
        amodal, visible = load_gt(scene)
        for got, vis, amo in zip(result.final_masks, visible, amodal):
            assert np.array_equal(got, vis)
            assert np.array_equal(got, amo)  # nothing hidden: the two GTs agree
        assert all(v.label is OcclusionLabel.UNOCCLUDED for v in result.verdicts)


class TestEchoOutpainter:
    def test_final_masks_equal_visible_and_nvp_zero(self, session_scene, tmp_path):
        result = run_on_scene(session_scene, tmp_path / "run", outpaint_mode="echo")
        amodal, visible = load_gt(session_scene)
        for got, want in zip(result.final_masks, visible):
            assert np.array_equal(got, want)
        report = evaluate_sequence(result.final_masks, amodal, visible)
        assert report.non_visible_pixel_iou == 0.0
        for f in report.frames:
            if f.non_visible_pixel_iou is not None:
                assert f.non_visible_pixel_iou == 0.0


class TestDeterminism:
    def test_json_artifacts_byte_identical(self, session_scene, tmp_path):
        run_on_scene(session_scene, tmp_path / "a", seed=7)
        run_on_scene(session_scene, tmp_path / "b", seed=7)
        names = [
            "run.json", "verdicts.json", "boxes.json", "chunks.json",
            "final_manifest.json", "trainprep/finetune_manifest.json",
            "target_regions/index.json",
        ]
        for name in names:
            a = (tmp_path / "a" / name).read_bytes()
            b = (tmp_path / "b" / name).read_bytes()
            assert a == b, f"{name} differs between identical runs"
        for rel in json.loads((tmp_path / "a/run.json").read_text())["artifacts"]["final_masks"]:
            assert (tmp_path / "a" / rel).read_bytes() == (tmp_path / "b" / rel).read_bytes()

    def test_noisy_mode_is_still_deterministic(self, session_scene, tmp_path):
        for sub in ("a", "b"):
            backends = mock_backends(session_scene.root, mode="noisy", seed=3, flip_rate=0.01)
            run_pipeline(
                session_scene.root / session_scene.manifest,
                session_scene.root / session_scene.query,
                backends, tmp_path / sub, PipelineConfig(seed=3),
            )
        a = (tmp_path / "a/verdicts.json").read_bytes()
        b = (tmp_path / "b/verdicts.json").read_bytes()
        assert a == b


class TestConcurrentChunks:
    def test_same_result_as_sequential(self, session_scene, tmp_path):
        seq = run_on_scene(session_scene, tmp_path / "seq")
        con = run_on_scene(session_scene, tmp_path / "con", concurrent_chunks=True)
        for a, b in zip(seq.final_masks, con.final_masks):
            assert np.array_equal(a, b)


class TestFailures:
    def test_empty_query_rejected(self, session_scene, tmp_path):
        io.save_mask(
            np.zeros(session_scene.geometry.shape, bool), tmp_path / "empty.png"
        )
        with pytest.raises(ValidationError, match="query"):
            run_pipeline(
                session_scene.root / session_scene.manifest,
                tmp_path / "empty.png",
                mock_backends(session_scene.root),
                tmp_path / "run",
            )

    def test_failing_backend_names_stage(self, session_scene, tmp_path, monkeypatch):
        from tabe import backends as backends_mod
        from tabe.mocks import MockModelBackend

        class FailingOutpaint(MockModelBackend):
            def _handle_outpaint(self, payload, root, request_id):
                raise RuntimeError("model exploded")

        def connect_failing(role, spec):
            handler = FailingOutpaint(spec.scene, mode=spec.mode)
            return backends_mod.BackendClient(
                role, backends_mod.InprocTransport(handler.handle), spec.timeout
            )

        monkeypatch.setattr(backends_mod, "connect", connect_failing)
        with pytest.raises(BackendError, match="stage 'outpaint'"):
            run_pipeline(
                session_scene.root / session_scene.manifest,
                session_scene.root / session_scene.query,
                mock_backends(session_scene.root),
                tmp_path / "run",
            )

    def test_health_check_failure_aborts_before_stages(self, session_scene, tmp_path):
        endpoints = BackendEndpoints(
            segmenter=EndpointSpec(kind="mock", scene=str(session_scene.root)),
            depth_estimator=EndpointSpec(
                kind="subprocess", command=("python3", "-c", "import sys; sys.exit(1)")
            ),
            outpainter=EndpointSpec(kind="mock", scene=str(session_scene.root)),
        )
        with pytest.raises(BackendError, match="depth_estimator"):
            run_pipeline(
                session_scene.root / session_scene.manifest,
                session_scene.root / session_scene.query,
                endpoints, tmp_path / "run",
            )
        assert not (tmp_path / "run" / "verdicts.json").exists()


class TestSubprocessBackendPipeline:
    def test_full_run_over_stdio(self, session_scene, tmp_path):
        import sys as _sys

        command = (
            _sys.executable, "-m", "tabe.mocks",
            "--scene", str(session_scene.root), "--mode", "oracle",
        )
        spec = EndpointSpec(kind="subprocess", command=command, timeout=60)
        endpoints = BackendEndpoints(segmenter=spec, depth_estimator=spec, outpainter=spec)
        result = run_pipeline(
            session_scene.root / session_scene.manifest,
            session_scene.root / session_scene.query,
            endpoints, tmp_path / "run",
        )
        amodal, _ = load_gt(session_scene)
        for got, want in zip(result.final_masks, amodal):
            assert np.array_equal(got, want)
