"""Python bindings for the quads C++ core."""

from ._quads import (
    LayerCodebook,
    MelConfig,
    NumericalError,
    QuadsError,
    accuracy,
    centroid_gradient,
    codebook_sse,
    inspect_model,
    kmeans_fit,
    log_mel,
    macro_f1,
    mel_center_frequencies,
    model_size_mb,
    run_cli,
)

__all__ = [
    "LayerCodebook",
    "MelConfig",
    "NumericalError",
    "QuadsError",
    "accuracy",
    "centroid_gradient",
    "codebook_sse",
    "inspect_model",
    "kmeans_fit",
    "log_mel",
    "macro_f1",
    "mel_center_frequencies",
    "model_size_mb",
    "run_cli",
]
