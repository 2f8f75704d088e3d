"""Python access to the dpstyler core.

Reports and config documents come back from the extension as JSON text; the
wrappers here decode them.
"""

import json as _json

from ._core import (
    Checkpoint,
    ContractError,
    DecodeError,
    DomainError,
    EncodeError,
    LoadError,
    NumericError,
    ToyBackend,
    arcface_loss,
    domain_uncertainty_loss,
    fuse_scores,
    generate_toy_dataset,
    l2_normalize,
    random_style,
    remover_forward,
    sample_mix_weights,
    softmax,
    style_bank,
    train,
)
from . import _core


def config(path):
    """Merged run config with defaults filled in, plus its fingerprint."""
    return _json.loads(_core.config_json(str(path)))


def evaluate(config_path, members, fusion="max"):
    """Per-domain top-1 report for an ensemble of checkpoints."""
    return _json.loads(_core.evaluate(str(config_path), list(members), fusion))


def zeroshot(config_path, prompt="PC"):
    return _json.loads(_core.zeroshot(str(config_path), prompt))


__all__ = [
    "Checkpoint",
    "ContractError",
    "DecodeError",
    "DomainError",
    "EncodeError",
    "LoadError",
    "NumericError",
    "ToyBackend",
    "arcface_loss",
    "config",
    "domain_uncertainty_loss",
    "evaluate",
    "fuse_scores",
    "generate_toy_dataset",
    "l2_normalize",
    "random_style",
    "remover_forward",
    "sample_mix_weights",
    "softmax",
    "style_bank",
    "train",
    "zeroshot",
]
