"""Scoring suite: BLEU, METEOR, ROUGE-1/2/L, and NLU scoring.

Decisions baked in here: corpus BLEU-4 with add-one smoothing on zero counts
for n >= 2; METEOR with exact and Porter-stem stages only (no synonym
dictionary); ROUGE as F1 at beta = 1. Scores are structurally comparable to
the usual toolkits, not bit-compatible with any of them.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field

from .stem import stem


@dataclass
class ScoredPair:
    hypothesis: list
    reference: list

    def validate(self):
        if not self.reference:
            raise ValueError("reference must be non-empty")


@dataclass
class TagScore:
    precision: float
    recall: float
    f1: float
    support: int


@dataclass
class NluScores:
    intent_accuracy: float
    inform_slot_f1: float
    request_slot_f1: float
    per_tag: dict = field(default_factory=dict)  # {"inform": {tag: TagScore}, ...}


def _ngrams(tokens, n):
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


# ---------------------------------------------------------------------------
# BLEU

def bleu(corpus, max_n=4):
    """Corpus-level BLEU: geometric mean of modified n-gram precisions with
    uniform weights, plus the brevity penalty."""
    if not corpus:
        raise ValueError("corpus must be non-empty")
    for pair in corpus:
        pair.validate()

    log_sum = 0.0
    for n in range(1, max_n + 1):
        matched = 0
        total = 0
        for pair in corpus:
            hyp = _ngrams(pair.hypothesis, n)
            ref = _ngrams(pair.reference, n)
            matched += sum(min(count, ref[g]) for g, count in hyp.items())
            total += sum(hyp.values())
        if n >= 2 and matched == 0:
            matched, total = matched + 1, total + 1
        if matched == 0 or total == 0:
            return 0.0
        log_sum += math.log(matched / total)

    c = sum(len(p.hypothesis) for p in corpus)
    r = sum(len(p.reference) for p in corpus)
    if c == 0:
        return 0.0
    brevity = 1.0 if c >= r else math.exp(1.0 - r / c)
    return brevity * math.exp(log_sum / max_n)


# ---------------------------------------------------------------------------
# METEOR

def _stage_matches(hyp, ref, hyp_free, ref_free, key):
    """Greedy fewest-chunks alignment for one matching stage.

    Hypothesis positions are visited in order; a match extending the previous
    aligned pair diagonally is preferred, otherwise the leftmost free
    reference candidate is taken.
    """
    pairs = []
    prev = None
    for i in range(len(hyp)):
        if i not in hyp_free:
            prev = None
            continue
        candidates = [j for j in sorted(ref_free) if key(ref[j]) == key(hyp[i])]
        if not candidates:
            prev = None
            continue
        if prev is not None and prev + 1 in candidates:
            j = prev + 1
        else:
            j = candidates[0]
        pairs.append((i, j))
        hyp_free.discard(i)
        ref_free.discard(j)
        prev = j
    return pairs


def _count_chunks(pairs):
    pairs = sorted(pairs)
    chunks = 0
    prev = None
    for i, j in pairs:
        if prev is None or i != prev[0] + 1 or j != prev[1] + 1:
            chunks += 1
        prev = (i, j)
    return chunks


def meteor(pair):
    """Two-stage METEOR (exact, then Porter-stemmed) with the standard
    F_mean = 10PR/(P+9R) and the cubed fragmentation penalty."""
    hyp, ref = pair.hypothesis, pair.reference
    if not hyp or not ref:
        return 0.0
    hyp_free, ref_free = set(range(len(hyp))), set(range(len(ref)))
    pairs = _stage_matches(hyp, ref, hyp_free, ref_free, key=lambda t: t)
    pairs += _stage_matches(hyp, ref, hyp_free, ref_free, key=stem)
    m = len(pairs)
    if m == 0:
        return 0.0
    precision = m / len(hyp)
    recall = m / len(ref)
    f_mean = 10 * precision * recall / (precision + 9 * recall)
    penalty = 0.5 * (_count_chunks(pairs) / m) ** 3
    return f_mean * (1.0 - penalty)


# ---------------------------------------------------------------------------
# ROUGE

def _lcs_length(a, b):
    table = [[0] * (len(b) + 1) for _ in range(len(a) + 1)]
    for i in range(1, len(a) + 1):
        for j in range(1, len(b) + 1):
            if a[i - 1] == b[j - 1]:
                table[i][j] = table[i - 1][j - 1] + 1
            else:
                table[i][j] = max(table[i - 1][j], table[i][j - 1])
    return table[-1][-1]


def _f1(precision, recall):
    if precision + recall == 0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


def rouge(corpus, variant):
    """Mean per-pair F1 from n-gram overlap (variants 1, 2) or LCS ("L")."""
    if not corpus:
        raise ValueError("corpus must be non-empty")
    if variant not in (1, 2, "L"):
        raise ValueError(f"unknown ROUGE variant {variant!r}")
    scores = []
    for pair in corpus:
        pair.validate()
        if variant == "L":
            if not pair.hypothesis:
                scores.append(0.0)
                continue
            lcs = _lcs_length(pair.hypothesis, pair.reference)
            scores.append(_f1(lcs / len(pair.hypothesis), lcs / len(pair.reference)))
        else:
            hyp = _ngrams(pair.hypothesis, variant)
            ref = _ngrams(pair.reference, variant)
            total_hyp, total_ref = sum(hyp.values()), sum(ref.values())
            if total_hyp == 0 or total_ref == 0:
                scores.append(0.0)
                continue
            overlap = sum(min(count, ref[g]) for g, count in hyp.items())
            scores.append(_f1(overlap / total_hyp, overlap / total_ref))
    return sum(scores) / len(scores)


# ---------------------------------------------------------------------------
# NLU scoring

def _score_stream(predictions, gold):
    """Token-level per-tag precision/recall/F1 over all tags seen in gold."""
    tags = sorted({t for seq in gold for t in seq if t != "O"})
    scores = {}
    for tag in tags:
        tp = fp = fn = 0
        for pred_seq, gold_seq in zip(predictions, gold):
            for p, g in zip(pred_seq, gold_seq):
                if p == tag and g == tag:
                    tp += 1
                elif p == tag:
                    fp += 1
                elif g == tag:
                    fn += 1
        precision = tp / (tp + fp) if tp + fp else 0.0
        recall = tp / (tp + fn) if tp + fn else 0.0
        scores[tag] = TagScore(precision, recall, _f1(precision, recall), tp + fn)
    return scores


def _weighted_f1(scores, predictions, gold):
    support = sum(s.support for s in scores.values())
    if support == 0:
        # No gold tags in this stream: perfect iff nothing was predicted.
        predicted = sum(t != "O" for seq in predictions for t in seq)
        return 1.0 if predicted == 0 else 0.0
    return sum(s.f1 * s.support for s in scores.values()) / support


def score_nlu(predictions, gold):
    """Intent accuracy plus per-tag and support-weighted slot F1 scores.

    Both arguments are sequences of (intent, inform_tags, request_tags).
    """
    if len(predictions) != len(gold):
        raise ValueError("predictions and gold must have equal lengths")
    for (_, p_inf, p_req), (_, g_inf, g_req) in zip(predictions, gold):
        if len(p_inf) != len(g_inf) or len(p_req) != len(g_req):
            raise ValueError("per-utterance tag lengths must match")

    n = len(gold)
    intent_hits = sum(p[0] == g[0] for p, g in zip(predictions, gold))
    inform_scores = _score_stream([p[1] for p in predictions], [g[1] for g in gold])
    request_scores = _score_stream([p[2] for p in predictions], [g[2] for g in gold])
    return NluScores(
        intent_accuracy=intent_hits / n if n else 0.0,
        inform_slot_f1=_weighted_f1(inform_scores,
                                    [p[1] for p in predictions],
                                    [g[1] for g in gold]),
        request_slot_f1=_weighted_f1(request_scores,
                                     [p[2] for p in predictions],
                                     [g[2] for g in gold]),
        per_tag={"inform": inform_scores, "request": request_scores},
    )


def average_accuracy(scores):
    """(intent accuracy + inform F1 + request F1) / 3."""
    if isinstance(scores, NluScores):
        triple = (scores.intent_accuracy, scores.inform_slot_f1,
                  scores.request_slot_f1)
    else:
        triple = tuple(scores)
    return sum(triple) / 3.0
