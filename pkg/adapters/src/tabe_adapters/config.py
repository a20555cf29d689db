"""Adapter configuration loaded from YAML.

Example ``adapter.yaml``::

    protocol: tabe/1
    kind: http              # or "subprocess" for stdio serving
    host: 127.0.0.1
    port: 9090
    device: cpu
    models:
      segmenter: stub
      depth_estimator: stub
      outpainter: stub      # or "import:my_pkg.my_module:make_outpainter"
    finetune:
      steps: 500
      resolution: [512, 512]
      learning_rate: 0.001
      batch_size: 1
      sequence_length: 16
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import yaml

from . import PROTOCOL_VERSION

ROLES = ("segmenter", "depth_estimator", "outpainter")

FINETUNE_DEFAULTS = {
    "steps": 500,
    "resolution": [512, 512],
    "learning_rate": 1e-3,
    "batch_size": 1,
    "sequence_length": 16,
}


class ConfigError(Exception):
    pass


@dataclass
class AdapterConfig:
    protocol: str = PROTOCOL_VERSION
    kind: str = "subprocess"
    host: str = "127.0.0.1"
    port: int = 9090
    device: str = "cpu"
    models: dict[str, str] = field(default_factory=lambda: {r: "stub" for r in ROLES})
    finetune: dict = field(default_factory=lambda: dict(FINETUNE_DEFAULTS))

    def __post_init__(self):
        if self.protocol != PROTOCOL_VERSION:
            raise ConfigError(
                f"adapter speaks protocol {PROTOCOL_VERSION}, config declares"
                f" {self.protocol!r}"
            )
        if self.kind not in ("subprocess", "http"):
            raise ConfigError(f"unknown serving kind {self.kind!r}")
        unknown = set(self.models) - set(ROLES)
        if unknown:
            raise ConfigError(f"unknown model roles: {sorted(unknown)}")
        for role in ROLES:
            self.models.setdefault(role, "stub")
        merged = dict(FINETUNE_DEFAULTS)
        merged.update(self.finetune)
        self.finetune = merged


def load_config(path: str | Path) -> AdapterConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    obj = yaml.safe_load(path.read_text()) or {}
    if not isinstance(obj, dict):
        raise ConfigError(f"config {path} must hold a mapping")
    known = {"protocol", "kind", "host", "port", "device", "models", "finetune"}
    unknown = set(obj) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    return AdapterConfig(**obj)
