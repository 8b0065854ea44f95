"""Curriculum domain/class mixing (CuMix) for zero-shot domain generalization."""

from ._core import (
    Bundle,
    ConfigError,
    DimensionError,
    Error,
    FormatError,
    IoError,
    Model,
    ValidationError,
    default_run_config,
    evaluate,
    generate_synthetic,
    load_bundle,
    load_checkpoint,
    mix2,
    mix3,
    preset,
    sample_lambda,
    schedule_coeffs,
    train,
)

__all__ = [name for name in dir() if not name.startswith("_")]
