from ._core import (
    EngineError,
    ValidationError,
    compute_metrics,
    config_digest,
    extract_features,
    feature_names,
    fnv1a64_hex,
    manifest_digest,
    parse_report,
    reward,
    run_cli,
    simulate_outcome,
    train_synthetic,
)

__all__ = [
    "EngineError",
    "ValidationError",
    "compute_metrics",
    "config_digest",
    "extract_features",
    "feature_names",
    "fnv1a64_hex",
    "manifest_digest",
    "parse_report",
    "reward",
    "run_cli",
    "simulate_outcome",
    "train_synthetic",
]
