"""LoRA fine-tune driver for the video outpainter.

Consumes a ``finetune_manifest.json`` produced by the orchestrator's
sample-preparation stage and optimizes low-rank adapter weights on a
frozen denoiser. The training objective mirrors the inpainting-diffusion
setup: per step, frames are noised to a random diffusion timestep and the
model predicts the injected noise from (noised frames, timestep, prompt,
random mask, masked conditioning frames); the per-frame squared error is
multiplied by that frame's V bit, so frames labeled occluded upstream
contribute exactly zero loss while still shaping the sequence context.

A weightless stub denoiser stands in for the real video-diffusion model
so the driver (manifest parsing, V-bit loss masking, LoRA optimization,
logging) is fully testable on CPU; real models plug in through the same
``Denoiser`` call signature.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from PIL import Image
from torch import nn

MANIFEST_SCHEMA_VERSION = 1
DIFFUSION_STEPS = 1000


class FinetuneError(Exception):
    pass


@dataclass
class FinetuneResult:
    state_path: Path
    log_path: Path
    steps: int
    frames: int
    trained_frames: int
    final_loss: float


class LoRAConv2d(nn.Module):
    """Frozen base conv plus a learnable low-rank residual path."""

    def __init__(self, base: nn.Conv2d, rank: int = 4, scale: float = 1.0):
        super().__init__()
        self.base = base
        for p in self.base.parameters():
            p.requires_grad_(False)
        self.down = nn.Conv2d(base.in_channels, rank, kernel_size=1, bias=False)
        self.up = nn.Conv2d(rank, base.out_channels, kernel_size=1, bias=False)
        nn.init.normal_(self.down.weight, std=0.02)
        nn.init.zeros_(self.up.weight)  # residual starts at exactly zero
        self.scale = scale

    def forward(self, x):
        return self.base(x) + self.scale * self.up(self.down(x))


class StubDenoiser(nn.Module):
    """Tiny conv denoiser with the real model's conditioning interface.

    Inputs per frame: noised frames (3), masked conditioning frames (3),
    random mask (1), timestep embedding (1), prompt embedding (1); output
    is the predicted noise (3).
    """

    def __init__(self, hidden: int = 16, rank: int = 4):
        super().__init__()
        self.conv_in = LoRAConv2d(nn.Conv2d(9, hidden, 3, padding=1), rank)
        self.conv_mid = LoRAConv2d(nn.Conv2d(hidden, hidden, 3, padding=1), rank)
        self.conv_out = LoRAConv2d(nn.Conv2d(hidden, 3, 3, padding=1), rank)
        self.act = nn.SiLU()

    def forward(self, noised, timestep_frac, prompt_scalar, mask, conditioning):
        t_map = torch.ones_like(mask) * timestep_frac
        p_map = torch.ones_like(mask) * prompt_scalar
        x = torch.cat([noised, conditioning, mask, t_map, p_map], dim=1)
        x = self.act(self.conv_in(x))
        x = self.act(self.conv_mid(x))
        return self.conv_out(x)

    def trainable_parameters(self):
        return [p for p in self.parameters() if p.requires_grad]


def _prompt_scalar(prompt: str) -> float:
    # a stable stand-in for a text encoder: one scalar in [0, 1)
    import zlib

    return (zlib.crc32(prompt.encode()) % 10_000) / 10_000.0


def load_manifest(path: str | Path) -> dict:
    path = Path(path)
    if not path.is_file():
        raise FinetuneError(f"manifest not found: {path}")
    try:
        manifest = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise FinetuneError(f"manifest {path} is not valid JSON: {exc}") from exc
    required = {"schema_version", "prompt", "finetune", "frames"}
    missing = required - set(manifest)
    if missing:
        raise FinetuneError(f"manifest {path} is missing keys: {sorted(missing)}")
    if manifest["schema_version"] != MANIFEST_SCHEMA_VERSION:
        raise FinetuneError(
            f"manifest schema version {manifest['schema_version']} unsupported"
            f" (adapter speaks {MANIFEST_SCHEMA_VERSION})"
        )
    for i, entry in enumerate(manifest["frames"]):
        for key in ("frame", "V", "input_image", "random_mask", "masked_input"):
            if key not in entry:
                raise FinetuneError(f"manifest frame {i} is missing {key!r}")
    if not any(entry["V"] for entry in manifest["frames"]):
        raise FinetuneError(
            "every frame has V=0: no unoccluded frame carries training signal"
        )
    return manifest


def _load_image(path: Path, size: tuple[int, int]) -> np.ndarray:
    with Image.open(path) as img:
        img = img.convert("RGB").resize(size, Image.BILINEAR)
        return np.asarray(img, dtype=np.float32) / 255.0


def _load_mask(path: Path, size: tuple[int, int]) -> np.ndarray:
    with Image.open(path) as img:
        img = img.convert("L").resize(size, Image.NEAREST)
        return (np.asarray(img) != 0).astype(np.float32)


def finetune(
    manifest_path: str | Path,
    overrides: dict | None = None,
    out_dir: str | Path | None = None,
    device: str = "cpu",
    seed: int = 0,
) -> FinetuneResult:
    """Optimize LoRA weights on the manifest's samples; returns saved state.

    Hyperparameters default to the manifest's ``finetune`` block; any
    entry in ``overrides`` wins over the manifest.
    """
    manifest_path = Path(manifest_path)
    manifest = load_manifest(manifest_path)
    params = dict(manifest["finetune"])
    params.update({k: v for k, v in (overrides or {}).items() if v is not None})
    steps = int(params["steps"])
    lr = float(params["learning_rate"])
    width, height = (int(v) for v in params["resolution"])
    seq_len = int(params["sequence_length"])

    root = manifest_path.parent
    size = (width, height)
    frames = manifest["frames"]
    inputs = np.stack([_load_image(root / f["input_image"], size) for f in frames])
    masks = np.stack([_load_mask(root / f["random_mask"], size) for f in frames])
    masked = np.stack([_load_image(root / f["masked_input"], size) for f in frames])
    v_bits = np.array([int(f["V"]) for f in frames], dtype=np.float32)

    torch.manual_seed(seed)
    rng = np.random.default_rng(seed)
    dev = torch.device(device)
    model = StubDenoiser().to(dev)
    optimizer = torch.optim.Adam(model.trainable_parameters(), lr=lr)

    x0 = torch.from_numpy(inputs).permute(0, 3, 1, 2).to(dev)
    m = torch.from_numpy(masks)[:, None, :, :].to(dev)
    cond = torch.from_numpy(masked).permute(0, 3, 1, 2).to(dev)
    v = torch.from_numpy(v_bits).to(dev)
    prompt_scalar = _prompt_scalar(manifest["prompt"])

    betas = torch.linspace(1e-4, 2e-2, DIFFUSION_STEPS, device=dev)
    alphas_cumprod = torch.cumprod(1.0 - betas, dim=0)

    total = len(frames)
    log: list[dict] = []
    final_loss = 0.0
    for step in range(steps):
        if total > seq_len:
            start = int(rng.integers(0, total - seq_len + 1))
            window = slice(start, start + seq_len)
        else:
            window = slice(0, total)
        t = int(rng.integers(0, DIFFUSION_STEPS))
        a_bar = alphas_cumprod[t]
        noise = torch.randn_like(x0[window])
        noised = a_bar.sqrt() * x0[window] + (1.0 - a_bar).sqrt() * noise
        pred = model(noised, t / DIFFUSION_STEPS, prompt_scalar, m[window], cond[window])
        per_frame = ((pred - noise) ** 2).mean(dim=(1, 2, 3))
        contributions = v[window] * per_frame
        trained = v[window].sum().clamp(min=1.0)
        loss = contributions.sum() / trained
        optimizer.zero_grad()
        loss.backward()
        optimizer.step()
        final_loss = float(loss.detach())
        frame_indices = range(*window.indices(total))
        for j, frame_index in enumerate(frame_indices):
            log.append({
                "step": step,
                "frame": frames[frame_index]["frame"],
                "V": int(v_bits[frame_index]),
                "raw_loss": float(per_frame[j].detach()),
                "contribution": float(contributions[j].detach()),
            })

    out_dir = Path(out_dir) if out_dir is not None else manifest_path.parent
    out_dir.mkdir(parents=True, exist_ok=True)
    state_path = out_dir / "adapter_state.pt"
    log_path = out_dir / "finetune_log.json"
    torch.save(
        {k: v for k, v in model.state_dict().items() if "down" in k or "up" in k},
        state_path,
    )
    log_path.write_text(json.dumps({
        "hyperparameters": {
            "steps": steps, "learning_rate": lr,
            "resolution": [width, height], "sequence_length": seq_len,
            "batch_size": int(params["batch_size"]), "seed": seed,
        },
        "loss_mask_log": log,
    }, indent=2, sort_keys=True) + "\n")
    return FinetuneResult(
        state_path=state_path,
        log_path=log_path,
        steps=steps,
        frames=total,
        trained_frames=int(v_bits.sum()),
        final_loss=final_loss,
    )
