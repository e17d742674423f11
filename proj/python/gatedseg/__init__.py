"""Python bindings for the gatedseg C++ core.

Pipeline stages take an optional JSON config text and a list of
``key=value`` overrides, the same as the command-line tool.
"""

from ._core import (
    ArgumentError,
    ConfigError,
    CorruptionError,
    Error,
    FormatError,
    IoError,
    ValidationError,
    build_bank,
    connected_components,
    cosine_similarity,
    effective_config,
    evaluate,
    extract_regions,
    load_manifest,
    pearson,
    percentile,
    read_npy,
    region_iou,
    run,
    stratify,
    synth,
    uncertainty,
    validate_dataset,
    write_npy,
)

__all__ = [
    "ArgumentError",
    "ConfigError",
    "CorruptionError",
    "Error",
    "FormatError",
    "IoError",
    "ValidationError",
    "build_bank",
    "connected_components",
    "cosine_similarity",
    "effective_config",
    "evaluate",
    "extract_regions",
    "load_manifest",
    "pearson",
    "percentile",
    "read_npy",
    "region_iou",
    "run",
    "stratify",
    "synth",
    "uncertainty",
    "validate_dataset",
    "write_npy",
]
