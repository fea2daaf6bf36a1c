"""Survey-tabular malnutrition screening toolkit (C++ core bindings)."""

from ._nutriscreen import (  # noqa: F401
    average_precision,
    boruta_min_hits_to_confirm,
    brier,
    default_schema_json,
    derive_label,
    encode_default,
    evaluate_scores,
    fit_model,
    generate_table,
    model_names,
    roc_auc,
    sparsemax,
    split_stratified,
)

__all__ = [
    "average_precision",
    "boruta_min_hits_to_confirm",
    "brier",
    "default_schema_json",
    "derive_label",
    "encode_default",
    "evaluate_scores",
    "fit_model",
    "generate_table",
    "model_names",
    "roc_auc",
    "sparsemax",
    "split_stratified",
]
