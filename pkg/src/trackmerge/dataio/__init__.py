"""Sequence files, synthetic sequences and training-sample augmentation."""

from .augment import AugmentConfig, TrainingSample, augment, clip_windows, crop_tracklets
from .motfiles import (
    MOTFormatError,
    load_sequence,
    read_detections,
    read_embeddings,
    read_gt,
    read_tracks,
    save_sequence,
    write_detections,
    write_embeddings,
    write_gt,
    write_tracks,
)
from .synth import SynthConfig, fragment_identities, generate

__all__ = [
    "AugmentConfig",
    "MOTFormatError",
    "SynthConfig",
    "TrainingSample",
    "augment",
    "clip_windows",
    "crop_tracklets",
    "fragment_identities",
    "generate",
    "load_sequence",
    "read_detections",
    "read_embeddings",
    "read_gt",
    "read_tracks",
    "save_sequence",
    "write_detections",
    "write_embeddings",
    "write_gt",
    "write_tracks",
]
