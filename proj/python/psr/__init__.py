"""Static RUL regression with parametrical rectification."""

from ._psr import (
    ConfigError,
    DataError,
    Dataset,
    ParseError,
    RegressorModel,
    TrainingDiverged,
    default_config,
    fit_theta,
    generate_synthetic,
    ingest_cmapss,
    label,
    label_dataset,
    load_model,
    normalize,
    read_canonical_csv,
    retained_count,
    rmse_interval_levels,
    rmse_subject,
    run_experiment,
    s_score,
    scarcify,
    sweep,
    train,
    write_canonical_csv,
)

__all__ = [name for name in dir() if not name.startswith("_")]
