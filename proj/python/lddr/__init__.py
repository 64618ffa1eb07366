# Copyright 2026 The LDDR Authors
# SPDX-License-Identifier: Apache-2.0
"""Ladder-bridged MLLM-to-DiT toy pipeline."""

from ._lddr import (
    CheckpointError,
    CommandError,
    ConfigError,
    VocabularyError,
    ablate,
    default_config,
    edit,
    evaluate,
    gen_data,
    grad_check,
    lr_at,
    parse_image,
    read_ppm,
    render_caption,
    sample,
    tap_schedule,
    train,
    validate_config,
    write_ppm,
)

__all__ = [
    "CheckpointError",
    "CommandError",
    "ConfigError",
    "VocabularyError",
    "ablate",
    "default_config",
    "edit",
    "evaluate",
    "gen_data",
    "grad_check",
    "lr_at",
    "parse_image",
    "read_ppm",
    "render_caption",
    "sample",
    "tap_schedule",
    "train",
    "validate_config",
    "write_ppm",
]
