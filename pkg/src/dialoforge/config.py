"""Versioned JSON run configuration.

The DIALOFORGE_SEED environment variable overrides the configured seed.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, asdict

from .agent import AgentHyperParams
from .dialogue import RewardConfig
from .ontology import bundled_ontology, load_ontology, load_kb, generate_kb

CONFIG_VERSION = 1


@dataclass
class RunConfig:
    version: int = CONFIG_VERSION
    ontology_path: str | None = None  # None -> bundled restaurant ontology
    kb_path: str | None = None  # None -> deterministic synthetic KB
    kb_seed: int = 7
    kb_size: int = 50
    seed: int = 0
    book_prob: float = 0.25
    reward: RewardConfig = field(default_factory=RewardConfig)
    agent: AgentHyperParams = field(default_factory=AgentHyperParams)

    def to_dict(self):
        return asdict(self)


def load_config(path=None):
    cfg = RunConfig()
    if path is not None:
        with open(path, encoding="utf-8") as fh:
            obj = json.load(fh)
        if obj.get("version") != CONFIG_VERSION:
            raise ValueError(f"unsupported config version {obj.get('version')!r}")
        for key in ("ontology_path", "kb_path", "kb_seed", "kb_size", "seed",
                    "book_prob"):
            if key in obj:
                setattr(cfg, key, obj[key])
        if "reward" in obj:
            cfg.reward = RewardConfig(**obj["reward"])
        if "agent" in obj:
            cfg.agent = AgentHyperParams(**obj["agent"])
    env_seed = os.environ.get("DIALOFORGE_SEED")
    if env_seed is not None:
        cfg.seed = int(env_seed)
    return cfg


def resolve_ontology(cfg):
    if cfg.ontology_path:
        return load_ontology(cfg.ontology_path)
    return bundled_ontology()


def resolve_kb(cfg, ontology):
    if cfg.kb_path:
        return load_kb(cfg.kb_path, ontology)
    return generate_kb(ontology, cfg.kb_seed, cfg.kb_size)
