import json
import subprocess
import sys
from pathlib import Path

import pytest


@pytest.fixture(scope="session")
def prepared_data(tmp_path_factory):
    """NLU/NLG datasets produced by the workbench prep command (the file
    formats are the interface between the two packages)."""
    out_dir = tmp_path_factory.mktemp("data")
    subprocess.run(
        [sys.executable, "-m", "dialoforge.cli", "prep",
         "--out-dir", str(out_dir), "--synthetic", "120"],
        check=True, capture_output=True, text=True,
    )
    return out_dir


@pytest.fixture(scope="session")
def trained_checkpoints(prepared_data, tmp_path_factory):
    """Small fine-tuned NLU and NLG checkpoints shared across server tests."""
    from dialoforge_adapters import models

    ckpt_dir = tmp_path_factory.mktemp("ckpt")
    rows = models.load_nlu_rows(prepared_data / "nlu_train.jsonl")
    nlu = models.train_nlu(rows, 5e-3, 16, epochs=6, seed=0)
    models.save_nlu(ckpt_dir / "nlu.pt", nlu)
    lines = models.load_nlg_lines(prepared_data / "nlg_train.txt")
    lm = models.train_lm(lines, 5e-3, 16, epochs=5, seed=0)
    models.save_lm(ckpt_dir / "nlg.pt", lm)
    return ckpt_dir


@pytest.fixture(scope="session")
def adapter_config_path(trained_checkpoints, tmp_path_factory):
    path = tmp_path_factory.mktemp("cfg") / "adapter.json"
    path.write_text(json.dumps({
        "roles": ["nlu", "nlg"],
        "model": "tiny-lm",
        "nlu_checkpoint": str(trained_checkpoints / "nlu.pt"),
        "nlg_checkpoint": str(trained_checkpoints / "nlg.pt"),
        "max_new_tokens": 32,
        "greedy": True,
        "seed": 0,
    }))
    return path
