"""Study objective shim: one fine-tune + evaluation cycle per invocation.

Driven by the workbench HPO engine's external-command protocol: parameters
and the trial seed arrive as JSON arguments, per-epoch intermediate values
stream to stdout as {"step", "value"} lines, and the final objective value
is the closing {"final"} line. NLU trials report the three-way average
accuracy; NLG trials report the mean of the five text metrics, scored
through the workbench's eval-nlg command. Out-of-range parameters are
rejected before any training happens.
"""

from __future__ import annotations

import argparse
import json
import subprocess
import sys
import tempfile
from pathlib import Path

from . import models
from .config import NLG_EPOCHS, NLU_EPOCHS_RECURRENT, check_in_range


def _seed_to_int(seed):
    if isinstance(seed, int):
        return seed
    parts = [int(x) & 0xFFFF for x in seed]
    value = 0
    for part in parts:
        value = (value * 65_537 + part) & 0x7FFFFFFF
    return value


def nlu_average_accuracy(bundle, rows):
    intent_acc, inform_f1, request_f1 = models.eval_nlu(bundle, rows)
    return (intent_acc + inform_f1 + request_f1) / 3.0


def score_nlg(bundle, lines):
    """Mean of the five text metrics, scored via the workbench CLI."""
    hyps, refs = [], []
    for line in lines:
        frame, _, reference = line.partition(models.DELIMITER)
        hyps.append(models.generate(bundle, frame.strip()) or ".")
        refs.append(reference.strip() or ".")
    with tempfile.TemporaryDirectory() as tmp:
        hyp_path = Path(tmp) / "hyp.txt"
        ref_path = Path(tmp) / "ref.txt"
        hyp_path.write_text("\n".join(hyps) + "\n", encoding="utf-8")
        ref_path.write_text("\n".join(refs) + "\n", encoding="utf-8")
        out = subprocess.run(
            [sys.executable, "-m", "dialoforge.cli", "eval-nlg",
             "--hyp", str(hyp_path), "--ref", str(ref_path)],
            capture_output=True, text=True, check=True)
    scores = json.loads(out.stdout)
    return sum(scores.values()) / len(scores)


def run_nlu_trial(train_path, test_path, learning_rate, batch_size, seed,
                  emit, checkpoint=None):
    check_in_range("nlu", learning_rate, batch_size)
    train_rows = models.load_nlu_rows(train_path)
    test_rows = models.load_nlu_rows(test_path)
    history = []

    def on_epoch(epoch, bundle):
        value = nlu_average_accuracy(bundle, test_rows)
        history.append(value)
        emit({"step": epoch, "value": value})

    bundle = models.train_nlu(train_rows, learning_rate, batch_size,
                              epochs=NLU_EPOCHS_RECURRENT, seed=seed,
                              on_epoch=on_epoch)
    if checkpoint:
        models.save_nlu(checkpoint, bundle)
    return history[-1]


def run_nlg_trial(train_path, test_path, learning_rate, batch_size, seed,
                  emit, checkpoint=None, eval_subset=24):
    check_in_range("nlg", learning_rate, batch_size)
    train_lines = models.load_nlg_lines(train_path)
    test_lines = models.load_nlg_lines(test_path)

    def on_epoch(epoch, bundle):
        emit({"step": epoch, "value": score_nlg(bundle,
                                                test_lines[:eval_subset])})

    bundle = models.train_lm(train_lines, learning_rate, batch_size,
                             epochs=NLG_EPOCHS, seed=seed, on_epoch=on_epoch)
    if checkpoint:
        models.save_lm(checkpoint, bundle)
    return score_nlg(bundle, test_lines)


def main(argv=None):
    parser = argparse.ArgumentParser(prog="dialoforge-adapter-objective")
    parser.add_argument("--role", choices=("nlu", "nlg"), required=True)
    parser.add_argument("--train", required=True)
    parser.add_argument("--test", required=True)
    parser.add_argument("--params", required=True)
    parser.add_argument("--seed", required=True)
    parser.add_argument("--checkpoint", default=None)
    parser.add_argument("--eval-subset", type=int, default=24)
    args = parser.parse_args(argv)

    def emit(obj):
        print(json.dumps(obj), flush=True)

    params = json.loads(args.params)
    seed = _seed_to_int(json.loads(args.seed))
    learning_rate = float(params["learning_rate"])
    batch_size = int(params["batch_size"])

    if args.role == "nlu":
        final = run_nlu_trial(args.train, args.test, learning_rate, batch_size,
                              seed, emit, args.checkpoint)
    else:
        final = run_nlg_trial(args.train, args.test, learning_rate, batch_size,
                              seed, emit, args.checkpoint, args.eval_subset)
    emit({"final": final})
    return 0


if __name__ == "__main__":
    sys.exit(main())
