"""Pose-aligned keypoint-pair patches: geometry, decoding, evaluation and score aggregation."""

__version__ = "0.1.0"
