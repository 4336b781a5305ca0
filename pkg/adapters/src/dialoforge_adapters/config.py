"""Adapter configuration.

Epochs are fixed per model family: 4 for the encoder NLU family, 16 for the
recurrent one, and 10 for the NLG language models. Learning rate and batch
size must stay inside the corresponding study search ranges when a
configuration is driven by the HPO engine.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

NLU_EPOCHS_ENCODER = 4
NLU_EPOCHS_RECURRENT = 16
NLG_EPOCHS = 10

# search ranges mirrored from the bundled study space fixtures
RANGES = {
    "nlu": {"learning_rate": (1e-4, 1e-2), "batch_size": (16, 32, 64)},
    "nlu-encoder": {"learning_rate": (1e-5, 1e-3), "batch_size": (16, 32, 64)},
    "nlg": {"learning_rate": (1e-5, 1e-4), "batch_size": (4, 8, 16)},
}


class ConfigError(ValueError):
    pass


@dataclass
class FinetuneSettings:
    learning_rate: float = 5e-5
    batch_size: int = 8
    epochs: int = NLG_EPOCHS


@dataclass
class AdapterConfig:
    roles: tuple = ("nlu", "nlg")
    model: str = "tiny-lm"
    device: str = "cpu"
    max_new_tokens: int = 48
    greedy: bool = True
    nlu_data: str | None = None
    nlg_data: str | None = None
    nlu_checkpoint: str | None = None
    nlg_checkpoint: str | None = None
    finetune: FinetuneSettings = field(default_factory=FinetuneSettings)
    seed: int = 0

    def validate(self):
        bad = [r for r in self.roles if r not in ("nlu", "nlg")]
        if bad:
            raise ConfigError(f"unknown roles {bad}")
        if not self.roles:
            raise ConfigError("at least one role is required")


def check_in_range(family, learning_rate, batch_size):
    """Reject parameters outside the study search range for the family."""
    ranges = RANGES[family]
    lo, hi = ranges["learning_rate"]
    if not lo <= learning_rate <= hi:
        raise ConfigError(
            f"{family}: learning rate {learning_rate} outside [{lo}, {hi}]")
    if batch_size not in ranges["batch_size"]:
        raise ConfigError(
            f"{family}: batch size {batch_size} not in {ranges['batch_size']}")


def load_adapter_config(path):
    with open(path, encoding="utf-8") as fh:
        obj = json.load(fh)
    finetune = FinetuneSettings(**obj.pop("finetune", {}))
    config = AdapterConfig(finetune=finetune, **{
        k: tuple(v) if k == "roles" else v for k, v in obj.items()
    })
    config.validate()
    return config
