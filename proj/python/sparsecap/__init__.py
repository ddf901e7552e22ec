from ._sparsecap import (
    ConfigError,
    DimensionError,
    Error,
    FormatError,
    IoError,
    Model,
    Vocabulary,
    binarize,
    build_vocab,
    encode_caption,
    evaluate_files,
    generate_clip,
    interpolate_mask,
    score,
    shuffle_frames,
    sparsity_stats,
    train,
)

__all__ = [
    "ConfigError",
    "DimensionError",
    "Error",
    "FormatError",
    "IoError",
    "Model",
    "Vocabulary",
    "binarize",
    "build_vocab",
    "encode_caption",
    "evaluate_files",
    "generate_clip",
    "interpolate_mask",
    "score",
    "shuffle_frames",
    "sparsity_stats",
    "train",
]
