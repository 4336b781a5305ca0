"""Rendering of training reports, studies, and NLU scores to CSV/markdown."""

from __future__ import annotations

import io


def training_csv(report):
    out = io.StringIO()
    cols = ("episode", "success_rate", "avg_reward", "avg_turns",
            "eval_success_rate", "eval_avg_reward", "eval_avg_turns")
    out.write(",".join(cols) + "\n")
    for row in report["windows"]:
        out.write(",".join(str(row[c]) for c in cols) + "\n")
    return out.getvalue()


def training_markdown(report):
    lines = [
        f"# Training report: {report['variant']} (seed {report['seed']})",
        "",
        f"Episodes: {report['episodes']}, measured every "
        f"{report['measure_every']} episodes.",
        "",
        "| episode | success rate | avg reward | avg turns | eval success |",
        "|---|---|---|---|---|",
    ]
    for row in report["windows"]:
        lines.append(
            f"| {row['episode']} | {row['success_rate']:.3f} "
            f"| {row['avg_reward']:.3f} | {row['avg_turns']:.3f} "
            f"| {row['eval_success_rate']:.3f} |"
        )
    final = report["final"]
    lines += [
        "",
        f"Final greedy evaluation ({report.get('final_eval_episodes', '?')} "
        f"episodes): success {final['success_rate']:.3f}, "
        f"reward {final['avg_reward']:.3f}, turns {final['avg_turns']:.3f}.",
    ]
    return "\n".join(lines) + "\n"


def nlu_markdown(scores_dict):
    """Per-tag table shaped like a slot-detection comparison report."""
    lines = [
        "| Slot Type | Model Type | Precision | Recall | F1-Score | Support |",
        "|---|---|---|---|---|---|",
    ]
    for stream, label in (("inform", "Inform"), ("request", "Request")):
        for tag, row in sorted(scores_dict["per_tag"][stream].items()):
            lines.append(
                f"| {tag} | {label} | {row['precision']:.2f} "
                f"| {row['recall']:.2f} | {row['f1']:.2f} | {row['support']} |"
            )
    lines += [
        "",
        f"Intent accuracy: {scores_dict['intent_accuracy']:.4f}; "
        f"inform F1: {scores_dict['inform_slot_f1']:.4f}; "
        f"request F1: {scores_dict['request_slot_f1']:.4f}; "
        f"average accuracy: {scores_dict['average_accuracy']:.4f}.",
    ]
    return "\n".join(lines) + "\n"


def study_markdown(study):
    lines = [
        f"# Study: {study.name or '(unnamed)'} ({study.direction}, "
        f"sampler {study.sampler}, seed {study.seed})",
        "",
        "| trial | status | final | params |",
        "|---|---|---|---|",
    ]
    for t in study.trials:
        final = "" if t.final is None else f"{t.final:.6g}"
        lines.append(f"| {t.id} | {t.status} | {final} | {t.params} |")
    best = study.best_trial()
    if best is not None:
        lines += ["", f"Best trial: {best.id} with value {best.final:.6g} "
                      f"and params {best.params}."]
    return "\n".join(lines) + "\n"
