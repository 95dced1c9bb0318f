"""Targeted mirage/mute attacks on a frame-level sound event detector."""

from ._sedattack import (
    MEL_BINS,
    NUM_CLASSES,
    SAMPLE_RATE,
    Error,
    FormatError,
    IoError,
    Model,
    NumericError,
    ShapeError,
    ValidationError,
    attack,
    config_hash,
    count_edits,
    defend,
    generate_scene,
    load_wav,
    log_mel,
    run_attack,
    run_defend,
    run_synth,
    run_train,
    save_wav,
    snr_db,
    train,
)

__all__ = [
    "MEL_BINS",
    "NUM_CLASSES",
    "SAMPLE_RATE",
    "Error",
    "FormatError",
    "IoError",
    "Model",
    "NumericError",
    "ShapeError",
    "ValidationError",
    "attack",
    "config_hash",
    "count_edits",
    "defend",
    "generate_scene",
    "load_wav",
    "log_mel",
    "run_attack",
    "run_defend",
    "run_synth",
    "run_train",
    "save_wav",
    "snr_db",
    "train",
]
