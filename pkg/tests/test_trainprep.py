import json

import numpy as np
import pytest

from tabe.core import ValidationError, VideoGeometry
from tabe.occlusion import OcclusionLabel, OcclusionVerdict
from tabe.trainprep import (
    FINETUNE_DEFAULTS,
    MaskGenConfig,
    build_training_manifest,
    build_training_samples,
    generate_training_masks,
    isolate_on_white,
)


def checker_mask(shape):
    vs, us = np.mgrid[0 : shape[0], 0 : shape[1]]
    return (us + vs) % 2 == 0


class TestIsolateOnWhite:
    def test_empty_mask_all_white(self, rng):
        out = isolate_on_white(rng.random((6, 6, 3)), np.zeros((6, 6), bool))
        assert np.all(out == 1.0)

    def test_full_mask_unchanged(self, rng):
        frame = rng.random((6, 6, 3))
        assert np.array_equal(isolate_on_white(frame, np.ones((6, 6), bool)), frame)

    def test_checkerboard_pixelwise(self, rng):
        frame = rng.random((8, 8, 3))
        mask = checker_mask((8, 8))
        out = isolate_on_white(frame, mask)
        assert np.array_equal(out[mask], frame[mask])
        assert np.all(out[~mask] == 1.0)

    def test_geometry_mismatch(self, rng):
        with pytest.raises(ValidationError):
            isolate_on_white(rng.random((4, 4, 3)), np.zeros((5, 5), bool))


def object_64():
    mask = np.zeros((64, 64), bool)
    mask[20:44, 24:48] = True
    return mask


class TestGenerateMasks:
    def test_single_mask_configuration(self):
        config = MaskGenConfig(
            seed=1, min_object_overlap_fraction=0.0, background_mask_count=(0, 0)
        )
        masks = generate_training_masks(config, object_64())
        assert len(masks) == 1
        assert (masks[0] & object_64()).any()

    def test_same_seed_same_output(self):
        config = MaskGenConfig(seed=42)
        a = generate_training_masks(config, object_64())
        b = generate_training_masks(config, object_64())
        assert len(a) == len(b)
        for ma, mb in zip(a, b):
            assert np.array_equal(ma, mb)

    def test_different_seeds_differ(self):
        a = generate_training_masks(MaskGenConfig(seed=1), object_64())
        b = generate_training_masks(MaskGenConfig(seed=2), object_64())
        assert any(not np.array_equal(ma, mb) for ma, mb in zip(a, b))

    def test_overlap_and_disjointness_over_100_seeds(self):
        obj = object_64()
        area = obj.sum()
        for seed in range(100):
            config = MaskGenConfig(seed=seed)
            masks = generate_training_masks(config, obj)
            overlaps = [(m & obj).sum() for m in masks]
            assert max(overlaps) >= config.min_object_overlap_fraction * area
            assert any((m & obj).sum() == 0 for m in masks)  # a background mask

    def test_empty_object_rejected(self):
        with pytest.raises(ValidationError):
            generate_training_masks(MaskGenConfig(), np.zeros((8, 8), bool))


def tiny_sequence(frames=4, shape=(16, 16)):
    rng = np.random.default_rng(7)
    images = [rng.random((*shape, 3)) * 0.8 for _ in range(frames)]
    visible = []
    for i in range(frames):
        m = np.zeros(shape, bool)
        if i != 2:  # frame 2 is fully occluded
            m[4:10, 4:10] = True
        visible.append(m)
    labels = [
        OcclusionLabel.UNOCCLUDED,
        OcclusionLabel.OCCLUDED,
        OcclusionLabel.OCCLUDED,
        OcclusionLabel.UNOCCLUDED,
    ]
    verdicts = [
        OcclusionVerdict(i, None if not visible[i].any() else 0.1, labels[i])
        for i in range(frames)
    ]
    return images, visible, verdicts


class TestBuildSamples:
    def test_v_bits_copied(self):
        images, visible, verdicts = tiny_sequence()
        samples = build_training_samples(images, visible, verdicts, MaskGenConfig(seed=0))
        assert [s.V for s in samples] == [1, 0, 0, 1]
        assert len(samples) == 4  # occluded frames stay in the sequence

    def test_white_complement_invariant(self):
        images, visible, verdicts = tiny_sequence()
        samples = build_training_samples(images, visible, verdicts, MaskGenConfig(seed=0))
        for s, v in zip(samples, visible):
            assert np.all(s.input_image[~v] == 1.0)

    def test_masked_input_blanks_mask(self):
        images, visible, verdicts = tiny_sequence()
        samples = build_training_samples(images, visible, verdicts, MaskGenConfig(seed=0))
        for s in samples:
            assert np.all(s.masked_input[s.random_mask] == 0.0)
            assert np.array_equal(s.masked_input[~s.random_mask], s.input_image[~s.random_mask])

    def test_prompt_has_token(self):
        images, visible, verdicts = tiny_sequence()
        samples = build_training_samples(
            images, visible, verdicts, MaskGenConfig(seed=0), token="qzv"
        )
        assert all(s.prompt == "A video of a qzv on a white background" for s in samples)

    def test_fully_occluded_frame_gets_background_mask(self):
        images, visible, verdicts = tiny_sequence()
        samples = build_training_samples(images, visible, verdicts, MaskGenConfig(seed=0))
        assert np.all(samples[2].input_image == 1.0)
        assert samples[2].random_mask.any()


class TestManifest:
    def test_round_trip_and_defaults(self, tmp_path):
        images, visible, verdicts = tiny_sequence()
        geom = VideoGeometry(16, 16, 4)
        path = build_training_manifest(
            images, visible, verdicts, MaskGenConfig(seed=5), "sks", tmp_path, geom
        )
        manifest = json.loads(path.read_text())
        assert manifest["finetune"] == FINETUNE_DEFAULTS
        assert manifest["prompt"] == "A video of a sks on a white background"
        assert [f["V"] for f in manifest["frames"]] == [1, 0, 0, 1]
        assert manifest["geometry"] == {"width": 16, "height": 16, "frame_count": 4}
        for entry in manifest["frames"]:
            for key in ("input_image", "random_mask", "masked_input"):
                assert (tmp_path / entry[key]).is_file()

    def test_byte_identical_reruns(self, tmp_path):
        images, visible, verdicts = tiny_sequence()
        geom = VideoGeometry(16, 16, 4)
        p1 = build_training_manifest(
            images, visible, verdicts, MaskGenConfig(seed=5), "sks", tmp_path / "a", geom
        )
        p2 = build_training_manifest(
            images, visible, verdicts, MaskGenConfig(seed=5), "sks", tmp_path / "b", geom
        )
        assert p1.read_bytes() == p2.read_bytes()
        for rel in json.loads(p1.read_text())["frames"][0].values():
            if isinstance(rel, str):
                assert (tmp_path / "a" / rel).read_bytes() == (tmp_path / "b" / rel).read_bytes()

    def test_overrides_recorded(self, tmp_path):
        images, visible, verdicts = tiny_sequence()
        path = build_training_manifest(
            images, visible, verdicts, MaskGenConfig(seed=5), "sks", tmp_path,
            finetune_overrides={"steps": 10},
        )
        manifest = json.loads(path.read_text())
        assert manifest["finetune"]["steps"] == 10
        assert manifest["finetune"]["batch_size"] == FINETUNE_DEFAULTS["batch_size"]

    def test_length_mismatch(self, tmp_path):
        images, visible, verdicts = tiny_sequence()
        with pytest.raises(ValidationError):
            build_training_manifest(
                images[:2], visible, verdicts, MaskGenConfig(), "sks", tmp_path
            )
