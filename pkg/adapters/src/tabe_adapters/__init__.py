"""Model adapters for the tabe/1 wire protocol.

Serves three model roles — promptable video segmenter, monocular depth
estimator, video outpainter — behind the orchestrator's JSON protocol
(newline-delimited over stdio, or HTTP POST), plus a LoRA fine-tune
driver that consumes ``finetune_manifest.json`` files and masks the
training loss with the per-frame V bits. Stub models make the whole
protocol surface testable without weights or a GPU.
"""

__version__ = "0.1.0"

PROTOCOL_VERSION = "tabe/1"
