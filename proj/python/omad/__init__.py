"""Python bindings for the omad EEG pipeline."""

from ._omad import (
    OmadError,
    Network,
    compute_mask,
    extract_features,
    feature_names,
    generate_artifact_corpus,
    load_model,
    main_cnn,
    main_mlp,
    make_windows,
    notch_filter,
    parse_rd,
    sparsity_at,
    welch_t,
)

__all__ = [
    "OmadError",
    "Network",
    "compute_mask",
    "extract_features",
    "feature_names",
    "generate_artifact_corpus",
    "load_model",
    "main_cnn",
    "main_mlp",
    "make_windows",
    "notch_filter",
    "parse_rd",
    "sparsity_at",
    "welch_t",
]
