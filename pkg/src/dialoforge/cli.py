"""Top-level command line interface.

Subcommands: prep, kb, train-dm, hpo, eval-nlg, score-nlu, chat, report.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict

import numpy as np

from . import corpus as corpus_mod
from . import hpo as hpo_mod
from . import report as report_mod
from .agent import AgentHyperParams, load_agent, save_agent
from .config import load_config, resolve_kb, resolve_ontology
from .dialogue import encode_dim, save_report, train_dm
from .evalmetrics import ScoredPair, average_accuracy, bleu, meteor, rouge, score_nlu
from .ontology import generate_kb, kb_query, save_kb
from .pipeline import PipelineComponents, bundled_synonyms, chat, connect_components
from importlib import resources


def _bundled_mapping():
    text = resources.files("dialoforge.data").joinpath(
        "act_mapping.json").read_text("utf-8")
    return json.loads(text)


def _add_config_arg(parser):
    parser.add_argument("--config", default=None, help="run configuration JSON")


def cmd_prep(args):
    cfg = load_config(args.config)
    ontology = resolve_ontology(cfg)
    kb = resolve_kb(cfg, ontology)
    synonyms = bundled_synonyms()
    if args.corpus:
        dialogues = corpus_mod.load_dialogues(args.corpus)
    else:
        dialogues = corpus_mod.generate_corpus(ontology, kb, args.synthetic,
                                               seed=cfg.seed)
    restaurant = corpus_mod.filter_restaurant(dialogues)
    mapping = _bundled_mapping()
    mapped = [corpus_mod.map_act_types(d, mapping) for d in restaurant]

    annotated = corpus_mod.build_nlu_dataset(mapped, ontology, synonyms)
    nlu_train, nlu_test = corpus_mod.split_corpus(annotated, (70, 30), cfg.seed)
    corpus_mod.save_nlu_jsonl(f"{args.out_dir}/nlu_train.jsonl", nlu_train)
    corpus_mod.save_nlu_jsonl(f"{args.out_dir}/nlu_test.jsonl", nlu_test)

    lines = corpus_mod.build_nlg_dataset(mapped)
    nlg_train, nlg_test = corpus_mod.split_corpus(lines, (90, 10), cfg.seed)
    for name, chunk in (("nlg_train.txt", nlg_train), ("nlg_test.txt", nlg_test)):
        with open(f"{args.out_dir}/{name}", "w", encoding="utf-8") as fh:
            fh.write("\n".join(chunk) + "\n")

    print(f"dialogues: {len(dialogues)} ({len(restaurant)} restaurant)")
    print(f"nlu: {len(nlu_train)} train / {len(nlu_test)} test utterances")
    print(f"nlg: {len(nlg_train)} train / {len(nlg_test)} test lines")


def cmd_kb(args):
    cfg = load_config(args.config)
    ontology = resolve_ontology(cfg)
    if args.generate:
        kb = generate_kb(ontology, args.seed, args.n)
        save_kb(args.out, kb)
        print(f"wrote {len(kb)} records to {args.out}")
        return
    kb = resolve_kb(cfg, ontology)
    constraints = dict(pair.split("=", 1) for pair in args.query or [])
    for record in kb_query(kb, constraints):
        print(json.dumps(asdict(record)))


def cmd_train_dm(args):
    cfg = load_config(args.config)
    ontology = resolve_ontology(cfg)
    kb = resolve_kb(cfg, ontology)
    hyper = cfg.agent
    if args.lr is not None:
        hyper.learning_rate = args.lr
    if args.batch_size is not None:
        hyper.batch_size = args.batch_size
    if args.hidden_size is not None:
        hyper.hidden_size = args.hidden_size
    if args.initial_epsilon is not None:
        hyper.initial_epsilon = args.initial_epsilon
    seed = args.seed if args.seed is not None else cfg.seed
    print(f"state encoding dimension: {encode_dim(ontology)}")
    report, agent = train_dm(args.algo, hyper, args.episodes, seed,
                             args.measure_every, ontology, kb,
                             config=cfg.reward, book_prob=cfg.book_prob)
    save_report(args.out, report)
    if args.checkpoint:
        save_agent(args.checkpoint, agent)
    final = report["final"]
    print(f"final greedy evaluation: success {final['success_rate']:.3f}, "
          f"reward {final['avg_reward']:.3f}, turns {final['avg_turns']:.3f}")


def _dm_objective(cfg, ontology, kb, episodes, measure_every):
    def objective(params, ctx):
        hyper = AgentHyperParams(
            learning_rate=params["learning_rate"],
            batch_size=int(params["batch_size"]),
            hidden_size=int(params["hidden_size"]),
            initial_epsilon=params["initial_epsilon"],
        )
        report, _ = train_dm(ctx.study.name or "ddqn", hyper, episodes,
                             ctx.seed, measure_every, ontology, kb,
                             config=cfg.reward, interim_eval_episodes=50,
                             final_eval_episodes=100, book_prob=cfg.book_prob)
        for i, window in enumerate(report["windows"]):
            ctx.report(i + 1, window["eval_success_rate"])
        return report["final"]["success_rate"]
    return objective


def _quadratic_objective(params, ctx):
    x = params["x"]
    return -((x - 0.3) ** 2)


def cmd_hpo(args):
    cfg = load_config(args.config)
    name, direction, space = hpo_mod.load_space(args.space)
    study = hpo_mod.load_study(args.resume) if args.resume else None

    if args.objective == "quadratic":
        objective = _quadratic_objective
    elif args.objective == "dm":
        ontology = resolve_ontology(cfg)
        kb = resolve_kb(cfg, ontology)
        objective = _dm_objective(cfg, ontology, kb, args.dm_episodes,
                                  args.dm_measure_every)
        name = args.algo
    else:
        if not args.objective_cmd:
            raise SystemExit("--objective cmd requires --objective-cmd")
        objective = hpo_mod.make_command_objective(args.objective_cmd.split())

    seed = args.seed if args.seed is not None else cfg.seed
    study = hpo_mod.run_study(space, objective, args.trials, seed=seed,
                              direction=direction, sampler=args.sampler,
                              parallelism=args.parallel, persist_path=args.out,
                              study=study, name=name)
    best = study.best_trial()
    if best is not None:
        print(f"best trial {best.id}: value {best.final:.6g} params {best.params}")
    complete = study.complete_trials()
    if len(complete) >= 8:
        importances = hpo_mod.param_importance(study)
        for pname, score in sorted(importances.items(), key=lambda kv: -kv[1]):
            print(f"importance {pname}: {score:.3f}")


def _read_token_lines(path):
    with open(path, encoding="utf-8") as fh:
        return [corpus_mod.tokenize(line.strip()) for line in fh if line.strip()]


def cmd_eval_nlg(args):
    hyp = _read_token_lines(args.hyp)
    ref = _read_token_lines(args.ref)
    if len(hyp) != len(ref):
        raise SystemExit(f"hyp has {len(hyp)} lines, ref has {len(ref)}")
    pairs = [ScoredPair(h, r) for h, r in zip(hyp, ref)]
    scores = {
        "bleu": bleu(pairs),
        "meteor": float(np.mean([meteor(p) for p in pairs])),
        "rouge1": rouge(pairs, 1),
        "rouge2": rouge(pairs, 2),
        "rougeL": rouge(pairs, "L"),
    }
    print(json.dumps(scores, indent=2))


def _nlu_rows(path):
    rows = corpus_mod.load_nlu_jsonl(path)
    return [(r.intent, r.inform_tags, r.request_tags) for r in rows]


def _scores_to_dict(scores):
    return {
        "intent_accuracy": scores.intent_accuracy,
        "inform_slot_f1": scores.inform_slot_f1,
        "request_slot_f1": scores.request_slot_f1,
        "average_accuracy": average_accuracy(scores),
        "per_tag": {
            stream: {tag: {"precision": s.precision, "recall": s.recall,
                           "f1": s.f1, "support": s.support}
                     for tag, s in tags.items()}
            for stream, tags in scores.per_tag.items()
        },
    }


def cmd_score_nlu(args):
    scores = score_nlu(_nlu_rows(args.pred), _nlu_rows(args.gold))
    obj = _scores_to_dict(scores)
    print(json.dumps(obj, indent=2))
    if args.table:
        print()
        print(report_mod.nlu_markdown(obj))


def cmd_chat(args):
    cfg = load_config(args.config)
    ontology = resolve_ontology(cfg)
    kb = resolve_kb(cfg, ontology)
    agent = load_agent(args.checkpoint)
    nlu_spec = {"transport": "stdio", "cmd": args.nlu_cmd.split()} \
        if args.nlu_cmd else None
    nlg_spec = {"transport": "stdio", "cmd": args.nlg_cmd.split()} \
        if args.nlg_cmd else None
    if args.nlu_tcp:
        host, port = args.nlu_tcp.rsplit(":", 1)
        nlu_spec = {"transport": "tcp", "host": host, "port": int(port)}
    if args.nlg_tcp:
        host, port = args.nlg_tcp.rsplit(":", 1)
        nlg_spec = {"transport": "tcp", "host": host, "port": int(port)}
    nlu_ep, nlg_ep = connect_components(nlu_spec, nlg_spec)
    components = PipelineComponents(ontology, synonym_table=bundled_synonyms(),
                                    nlu_endpoint=nlu_ep, nlg_endpoint=nlg_ep)
    try:
        chat(agent, ontology, kb, components=components, seed=cfg.seed,
             transcript_path=args.transcript)
    finally:
        for endpoint in (nlu_ep, nlg_ep):
            if endpoint is not None:
                endpoint.close()


def cmd_report(args):
    if args.training:
        with open(args.training, encoding="utf-8") as fh:
            report = json.load(fh)
        if args.csv:
            print(report_mod.training_csv(report), end="")
        else:
            print(report_mod.training_markdown(report), end="")
    elif args.study:
        study = hpo_mod.load_study(args.study)
        print(report_mod.study_markdown(study), end="")
    elif args.nlu:
        with open(args.nlu, encoding="utf-8") as fh:
            print(report_mod.nlu_markdown(json.load(fh)), end="")
    else:
        raise SystemExit("nothing to report: pass --training, --study, or --nlu")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="dialoforge",
        description="Desk-scale workbench for goal-oriented dialogue systems.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prep", help="prepare NLU/NLG datasets from a corpus")
    _add_config_arg(p)
    p.add_argument("--corpus", default=None, help="MultiWOZ-style dialogue JSON")
    p.add_argument("--synthetic", type=int, default=200,
                   help="generate this many synthetic dialogues instead")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_prep)

    p = sub.add_parser("kb", help="generate or query the knowledge base")
    _add_config_arg(p)
    p.add_argument("--generate", action="store_true")
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--n", type=int, default=50)
    p.add_argument("--out", default="kb.json")
    p.add_argument("--query", nargs="*", metavar="slot=value")
    p.set_defaults(func=cmd_kb)

    p = sub.add_parser("train-dm", help="train a dialogue manager")
    _add_config_arg(p)
    p.add_argument("--algo", choices=("dqn", "ddqn"), required=True)
    p.add_argument("--episodes", type=int, default=2000)
    p.add_argument("--measure-every", type=int, default=1000)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--batch-size", type=int, default=None)
    p.add_argument("--hidden-size", type=int, default=None)
    p.add_argument("--initial-epsilon", type=float, default=None)
    p.add_argument("--out", default="dm_report.json")
    p.add_argument("--checkpoint", default=None)
    p.set_defaults(func=cmd_train_dm)

    p = sub.add_parser("hpo", help="run a hyperparameter study")
    _add_config_arg(p)
    p.add_argument("--space", required=True)
    p.add_argument("--trials", type=int, default=20)
    p.add_argument("--sampler", choices=("tpe", "random"), default="tpe")
    p.add_argument("--parallel", type=int, default=1)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--objective", choices=("quadratic", "dm", "cmd"),
                   default="quadratic")
    p.add_argument("--objective-cmd", default=None,
                   help="external trial-runner command for --objective cmd")
    p.add_argument("--algo", choices=("dqn", "ddqn"), default="ddqn")
    p.add_argument("--dm-episodes", type=int, default=2000)
    p.add_argument("--dm-measure-every", type=int, default=500)
    p.add_argument("--out", default="study.jsonl")
    p.add_argument("--resume", default=None)
    p.set_defaults(func=cmd_hpo)

    p = sub.add_parser("eval-nlg", help="score generated text against references")
    p.add_argument("--hyp", required=True)
    p.add_argument("--ref", required=True)
    p.set_defaults(func=cmd_eval_nlg)

    p = sub.add_parser("score-nlu", help="score NLU predictions against gold")
    p.add_argument("--pred", required=True)
    p.add_argument("--gold", required=True)
    p.add_argument("--table", action="store_true",
                   help="also print the per-tag markdown table")
    p.set_defaults(func=cmd_score_nlu)

    p = sub.add_parser("chat", help="interactive chat over a trained checkpoint")
    _add_config_arg(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--nlu-cmd", default=None)
    p.add_argument("--nlg-cmd", default=None)
    p.add_argument("--nlu-tcp", default=None, metavar="HOST:PORT")
    p.add_argument("--nlg-tcp", default=None, metavar="HOST:PORT")
    p.add_argument("--transcript", default=None)
    p.set_defaults(func=cmd_chat)

    p = sub.add_parser("report", help="render reports to CSV or markdown")
    p.add_argument("--training", default=None)
    p.add_argument("--study", default=None)
    p.add_argument("--nlu", default=None)
    p.add_argument("--csv", action="store_true")
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
