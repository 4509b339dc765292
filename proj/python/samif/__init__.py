"""Few-shot instance segmentation toolkit: cosine classifier, imprinting, mask ops and evaluation."""

from ._samif import (
    Bundle,
    Error,
    FormatError,
    InvalidArgument,
    Model,
    Rng,
    derive_seed,
    erode,
    evaluate,
    grid_points,
    infer,
    load_bundle,
    load_model,
    mask_iou,
    nms,
    rle_decode,
    rle_encode,
    run_cli,
    stability_score,
    synth,
)

__all__ = [
    "Bundle",
    "Error",
    "FormatError",
    "InvalidArgument",
    "Model",
    "Rng",
    "derive_seed",
    "erode",
    "evaluate",
    "grid_points",
    "infer",
    "load_bundle",
    "load_model",
    "mask_iou",
    "nms",
    "rle_decode",
    "rle_encode",
    "run_cli",
    "stability_score",
    "synth",
]
