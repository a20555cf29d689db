"""Amodal video segmentation toolkit.

Tracks an object through occlusion given a single query mask: occlusion
reasoning from visible masks + nearness maps, amodal bounding boxes,
outpainting target regions, fine-tuning sample preparation, chunked
pipeline orchestration against pluggable model backends, compositing-based
dataset curation, and the amodal evaluation metrics.
"""

__version__ = "0.1.0"
