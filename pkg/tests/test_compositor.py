import json

import numpy as np
import pytest

from tabe import io
from tabe.compositor import (
    CompositeFrame,
    composite,
    depth_refine_mask,
    derive_visible_mask,
    load_alpha,
    load_scene,
    recover_foreground_color,
    run_compositing,
    save_alpha,
)
from tabe.core import ValidationError
from tabe.manifest import load_manifest


def scalar_frame(alpha, cp, bg, fg, amodal=None):
    shape = (1, 1)
    return CompositeFrame(
        frame_index=0,
        clean_plate=np.full((*shape, 3), cp),
        background=np.full((*shape, 3), bg),
        foreground=np.full((*shape, 3), fg),
        alpha=np.full(shape, alpha),
        gt_amodal=np.full(shape, True) if amodal is None else amodal,
    )


class TestRecoverForegroundColor:
    def test_opaque_alpha_returns_foreground(self, rng):
        fg = rng.random((4, 4, 3))
        frame = CompositeFrame(0, rng.random((4, 4, 3)), rng.random((4, 4, 3)),
                               fg, np.ones((4, 4)), np.ones((4, 4), bool))
        assert np.allclose(recover_foreground_color(frame), fg)

    def test_zero_alpha_returns_zero(self, rng):
        frame = CompositeFrame(0, rng.random((4, 4, 3)), rng.random((4, 4, 3)),
                               rng.random((4, 4, 3)), np.zeros((4, 4)), np.ones((4, 4), bool))
        assert np.all(recover_foreground_color(frame) == 0.0)

    def test_scalar_hand_algebra(self):
        frame = scalar_frame(alpha=0.5, cp=0.2, bg=0.9, fg=0.6)
        color = recover_foreground_color(frame)
        assert color[0, 0, 0] == pytest.approx((0.6 - 0.5 * 0.2) / 0.5)  # = 1.0

    def test_verbatim_eq_divides_against_background(self):
        frame = scalar_frame(alpha=0.5, cp=0.2, bg=0.4, fg=0.6)
        color = recover_foreground_color(frame, verbatim_eq=True)
        assert color[0, 0, 0] == pytest.approx((0.6 - 0.5 * 0.4) / 0.5)  # = 0.8

    def test_clamped_to_unit_range(self):
        frame = scalar_frame(alpha=0.2, cp=0.0, bg=0.0, fg=0.9)
        assert recover_foreground_color(frame)[0, 0, 0] == 1.0


class TestComposite:
    def test_zero_alpha_passes_background(self, rng):
        frame = scalar_frame(alpha=0.0, cp=0.1, bg=0.4, fg=0.8)
        out = composite(frame, np.zeros((1, 1, 3)))
        assert np.allclose(out, 0.4)

    def test_full_alpha_passes_foreground_color(self):
        frame = scalar_frame(alpha=1.0, cp=0.1, bg=0.4, fg=0.8)
        color = recover_foreground_color(frame)
        out = composite(frame, color)
        assert np.allclose(out, 0.8)

    def test_scalar_hand_algebra(self):
        frame = scalar_frame(alpha=0.5, cp=0.2, bg=0.4, fg=0.6)
        color = recover_foreground_color(frame)  # 1.0
        out = composite(frame, color)
        assert out[0, 0, 0] == pytest.approx(0.5 * 0.4 + 0.5 * 1.0)  # = 0.7

    def test_round_trip_synthetic_scenes(self, rng):
        # blend a known true color, recover it, recomposite: everything 1e-6
        for _ in range(100):
            alpha = 0.1 + 0.9 * rng.random((6, 6))
            true_color = 0.05 + 0.9 * rng.random((6, 6, 3))
            cp = rng.random((6, 6, 3))
            bg = rng.random((6, 6, 3))
            fg = (1.0 - alpha[..., None]) * cp + alpha[..., None] * true_color
            frame = CompositeFrame(0, cp, bg, fg, alpha, np.ones((6, 6), bool))
            recovered = recover_foreground_color(frame)
            assert np.allclose(recovered, true_color, atol=1e-6)
            direct = (1.0 - alpha[..., None]) * bg + alpha[..., None] * true_color
            assert np.allclose(composite(frame, recovered), direct, atol=1e-6)

    def test_binary_alpha_bit_exact_after_quantization(self, rng, tmp_path):
        quantize = lambda x: np.round(np.clip(x, 0, 1) * 255).astype(np.uint8)
        for seed in range(20):
            r = np.random.default_rng(seed)
            alpha = (r.random((5, 5)) < 0.5).astype(float)
            cp = quantize(r.random((5, 5, 3))) / 255.0
            bg = quantize(r.random((5, 5, 3))) / 255.0
            fg = quantize(r.random((5, 5, 3))) / 255.0
            frame = CompositeFrame(0, cp, bg, fg, alpha, np.ones((5, 5), bool))
            out = quantize(composite(frame, recover_foreground_color(frame)))
            inside = alpha.astype(bool)
            assert np.array_equal(out[inside], quantize(fg)[inside])
            assert np.array_equal(out[~inside], quantize(bg)[~inside])


class TestDeriveVisibleMask:
    def test_zero_alpha_keeps_amodal(self):
        amodal = np.zeros((4, 4), bool)
        amodal[1:3, 1:3] = True
        frame = CompositeFrame(0, *(np.zeros((4, 4, 3)),) * 3, np.zeros((4, 4)), amodal)
        assert np.array_equal(derive_visible_mask(frame), amodal)

    def test_opaque_occluder_hides_everything(self):
        amodal = np.ones((4, 4), bool)
        frame = CompositeFrame(0, *(np.zeros((4, 4, 3)),) * 3, np.ones((4, 4)), amodal)
        assert derive_visible_mask(frame).sum() == 0  # a fully occluded frame

    def test_half_covered_square(self):
        amodal = np.zeros((6, 6), bool)
        amodal[1:5, 1:5] = True
        alpha = np.zeros((6, 6))
        alpha[:, :3] = 1.0  # occluder over the left half
        frame = CompositeFrame(0, *(np.zeros((6, 6, 3)),) * 3, alpha, amodal)
        visible = derive_visible_mask(frame, alpha_cut=0.5)
        expected = amodal & ~(alpha > 0.5)
        assert np.array_equal(visible, expected)
        assert visible[:, :3].sum() == 0 and visible[1:5, 3:5].all()

    def test_alpha_cut_validated(self):
        frame = scalar_frame(0.5, 0, 0, 0)
        with pytest.raises(ValidationError):
            derive_visible_mask(frame, alpha_cut=1.0)


class TestDepthRefine:
    def test_uniform_nearness_unchanged(self):
        mask = np.zeros((5, 5), bool)
        mask[1:4, 1:4] = True
        assert np.array_equal(depth_refine_mask(mask, np.full((5, 5), 0.5), 0.0), mask)

    def test_far_half_removed(self):
        mask = np.zeros((4, 4), bool)
        mask[:, :] = True
        near = np.full((4, 4), 0.9)
        near[:, 2:] = 0.1  # right half is far
        out = depth_refine_mask(mask, near, margin=0.0)
        assert out[:, :2].all() and not out[:, 2:].any()  # mu = 0.5

    def test_huge_margin_keeps_everything(self, rng):
        mask = rng.random((6, 6)) < 0.5
        mask[0, 0] = True
        assert np.array_equal(depth_refine_mask(mask, rng.random((6, 6)), 1e9), mask)

    def test_output_is_subset(self, rng):
        for _ in range(50):
            mask = rng.random((8, 8)) < 0.4
            if not mask.any():
                mask[3, 3] = True
            out = depth_refine_mask(mask, rng.random((8, 8)), margin=0.05)
            assert not (out & ~mask).any()

    def test_empty_mask_rejected(self):
        with pytest.raises(ValidationError):
            depth_refine_mask(np.zeros((4, 4), bool), np.zeros((4, 4)), 0.0)


class TestSceneFiles:
    def _write_scene(self, root, frames=3, offset=0):
        quantize = lambda x: np.round(np.clip(x, 0, 1) * 255) / 255.0
        rng = np.random.default_rng(11)
        clips = {k: [] for k in ("clean_plate", "background", "foreground", "alpha", "gt_amodal")}
        n = frames + offset
        for i in range(n):
            cp, bg = quantize(rng.random((6, 8, 3))), quantize(rng.random((6, 8, 3)))
            alpha = (rng.random((6, 8)) < 0.4).astype(float)
            true_color = quantize(0.1 + 0.8 * rng.random((6, 8, 3)))
            fg = (1 - alpha[..., None]) * cp + alpha[..., None] * true_color
            amodal = rng.random((6, 8)) < 0.5
            io.save_image(cp, root / f"cp_{i}.png")
            io.save_image(bg, root / f"bg_{i}.png")
            io.save_image(fg, root / f"fg_{i}.png")
            save_alpha(alpha, root / f"a_{i}.png")
            io.save_mask(amodal, root / f"gt_{i}.png")
            clips["clean_plate"].append(f"cp_{i}.png")
            clips["background"].append(f"bg_{i}.png")
            clips["foreground"].append(f"fg_{i}.png")
            clips["alpha"].append(f"a_{i}.png")
            clips["gt_amodal"].append(f"gt_{i}.png")
        spec = {"width": 8, "height": 6, **clips,
                "offsets": {"foreground": offset, "alpha": offset}}
        (root / "scene.json").write_text(json.dumps(spec))
        return root / "scene.json"

    def test_alpha_round_trip(self, tmp_path):
        alpha = np.linspace(0, 1, 24).reshape(4, 6)
        save_alpha(alpha, tmp_path / "a.png")
        back = load_alpha(tmp_path / "a.png")
        assert np.allclose(back, np.round(alpha * 255) / 255.0, atol=1e-12)

    def test_run_compositing_outputs(self, tmp_path):
        scene_path = self._write_scene(tmp_path)
        manifest_path = run_compositing(load_scene(scene_path), tmp_path / "out")
        manifest = load_manifest(manifest_path)
        assert manifest.geometry.frame_count == 3
        amodal = manifest.load_masks("gt_amodal_mask")
        visible = manifest.load_masks("gt_visible_mask")
        for a, v in zip(amodal, visible):
            assert not (v & ~a).any()  # visible is a subset of amodal
        manifest.load_images()

    def test_offsets_shift_clip_alignment(self, tmp_path):
        scene_path = self._write_scene(tmp_path, frames=2, offset=1)
        scene = load_scene(scene_path)
        assert scene.frame_count == 2
        frame = scene.frame(0)
        # foreground clip starts one frame later than the others
        assert np.allclose(frame.foreground, io.load_image(tmp_path / "fg_1.png"))
        assert np.allclose(frame.clean_plate, io.load_image(tmp_path / "cp_0.png"))

    def test_missing_clip_rejected(self, tmp_path):
        (tmp_path / "scene.json").write_text(json.dumps({"width": 4, "height": 4}))
        with pytest.raises(ValidationError, match="missing clips"):
            load_scene(tmp_path / "scene.json")
