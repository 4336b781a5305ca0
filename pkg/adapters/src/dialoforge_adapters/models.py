"""Tiny torch model families for the component server.

Two built-in families keep the adapter runnable with no downloads: a
recurrent joint NLU model (intent head plus BiLSTM taggers for the inform
and request streams) and a word-level LSTM language model for NLG that is
fine-tuned on serialized frame-utterance lines and generates the utterance
from the frame prefix ending at the delimiter token.

Identifiers of the form "hf:<model-id>" load a pre-trained causal LM through
transformers when the weights are available locally; load failures surface
at startup, as the server contract requires.
"""

from __future__ import annotations

import json
import string

import torch
import torch.nn as nn

DELIMITER = "<||>"

PAD, UNK, BOS, EOS = "<pad>", "<unk>", "<bos>", "<eos>"

EMBED_DIM = 48
HIDDEN_DIM = 64


def tokenize(text):
    out = []
    for ch in text.lower():
        out.append(f" {ch} " if ch in string.punctuation else ch)
    return "".join(out).split()


class Vocab:
    def __init__(self, tokens, specials=(PAD, UNK)):
        self.itos = list(specials)
        seen = set(self.itos)
        for token in tokens:
            if token not in seen:
                seen.add(token)
                self.itos.append(token)
        self.stoi = {t: i for i, t in enumerate(self.itos)}

    def __len__(self):
        return len(self.itos)

    def encode(self, tokens):
        unk = self.stoi[UNK]
        return [self.stoi.get(t, unk) for t in tokens]

    def decode(self, ids):
        return [self.itos[i] for i in ids]


def _seed_everything(seed):
    torch.manual_seed(int(seed) & 0x7FFFFFFF)
    torch.set_num_threads(1)


def _pad_batch(sequences, pad_id=0):
    width = max(len(s) for s in sequences)
    out = torch.full((len(sequences), width), pad_id, dtype=torch.long)
    for i, seq in enumerate(sequences):
        out[i, : len(seq)] = torch.tensor(seq, dtype=torch.long)
    return out


# ---------------------------------------------------------------------------
# NLU: joint intent + BIO taggers

class TinyNlu(nn.Module):
    def __init__(self, vocab_size, n_intents, n_inform_tags, n_request_tags,
                 embed_dim=EMBED_DIM, hidden_dim=HIDDEN_DIM):
        super().__init__()
        self.embedding = nn.Embedding(vocab_size, embed_dim, padding_idx=0)
        self.intent_lstm = nn.LSTM(embed_dim, hidden_dim, batch_first=True)
        self.tagger = nn.LSTM(embed_dim, hidden_dim, batch_first=True,
                              bidirectional=True)
        self.intent_head = nn.Linear(hidden_dim, n_intents)
        self.inform_head = nn.Linear(2 * hidden_dim, n_inform_tags)
        self.request_head = nn.Linear(2 * hidden_dim, n_request_tags)

    def forward(self, token_ids):
        emb = self.embedding(token_ids)
        _, (intent_hidden, _) = self.intent_lstm(emb)
        tagged, _ = self.tagger(emb)
        return (self.intent_head(intent_hidden[-1]),
                self.inform_head(tagged),
                self.request_head(tagged))


class NluBundle:
    def __init__(self, model, vocab, intents, inform_tags, request_tags):
        self.model = model
        self.vocab = vocab
        self.intents = intents
        self.inform_tags = inform_tags
        self.request_tags = request_tags


def load_nlu_rows(path):
    rows = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                rows.append(json.loads(line))
    return rows


def train_nlu(rows, learning_rate, batch_size, epochs, seed=0, on_epoch=None):
    _seed_everything(seed)
    vocab = Vocab(t for r in rows for t in r["tokens"])
    intents = sorted({r["intent"] for r in rows})
    inform_tags = sorted({t for r in rows for t in r["inform_tags"]})
    request_tags = sorted({t for r in rows for t in r["request_tags"]})
    model = TinyNlu(len(vocab), len(intents), len(inform_tags),
                    len(request_tags))
    optimizer = torch.optim.Adam(model.parameters(), lr=learning_rate)
    ce = nn.CrossEntropyLoss(ignore_index=-100)
    intent_index = {t: i for i, t in enumerate(intents)}
    inform_index = {t: i for i, t in enumerate(inform_tags)}
    request_index = {t: i for i, t in enumerate(request_tags)}

    def tag_ids(tags, index, length):
        ids = [index[t] for t in tags]
        return ids + [-100] * (length - len(ids))

    bundle = NluBundle(model, vocab, intents, inform_tags, request_tags)
    for epoch in range(epochs):
        model.train()
        order = torch.randperm(len(rows)).tolist()
        for start in range(0, len(rows), batch_size):
            batch = [rows[i] for i in order[start:start + batch_size]]
            tokens = _pad_batch([vocab.encode(r["tokens"]) for r in batch])
            width = tokens.shape[1]
            intent_gold = torch.tensor([intent_index[r["intent"]]
                                        for r in batch])
            inform_gold = torch.tensor([tag_ids(r["inform_tags"], inform_index,
                                                width) for r in batch])
            request_gold = torch.tensor([tag_ids(r["request_tags"],
                                                 request_index, width)
                                         for r in batch])
            optimizer.zero_grad()
            intent_logits, inform_logits, request_logits = model(tokens)
            loss = (ce(intent_logits, intent_gold)
                    + ce(inform_logits.transpose(1, 2), inform_gold)
                    + ce(request_logits.transpose(1, 2), request_gold))
            loss.backward()
            optimizer.step()
        model.eval()
        if on_epoch is not None:
            on_epoch(epoch + 1, bundle)
    return bundle


def predict_nlu(bundle, tokens):
    if not tokens:
        return bundle.intents[0], [], []
    with torch.no_grad():
        ids = _pad_batch([bundle.vocab.encode(tokens)])
        intent_logits, inform_logits, request_logits = bundle.model(ids)
        intent = bundle.intents[int(intent_logits[0].argmax())]
        inform = [bundle.inform_tags[int(i)]
                  for i in inform_logits[0, : len(tokens)].argmax(dim=-1)]
        request = [bundle.request_tags[int(i)]
                   for i in request_logits[0, : len(tokens)].argmax(dim=-1)]
    return intent, inform, request


def bio_to_slots(tokens, tags):
    spans = []
    current = None
    for token, tag in zip(tokens, tags):
        if tag.startswith("B-"):
            if current:
                spans.append(current)
            current = (tag[2:].lower(), [token])
        elif tag.startswith("I-") and current and tag[2:].lower() == current[0]:
            current[1].append(token)
        else:
            if current:
                spans.append(current)
            current = None
    if current:
        spans.append(current)
    return {slot: " ".join(words) for slot, words in spans}


def eval_nlu(bundle, rows):
    """Intent accuracy and support-weighted tag F1 for both streams."""
    predictions = [predict_nlu(bundle, r["tokens"]) for r in rows]
    intent_acc = sum(p[0] == r["intent"]
                     for p, r in zip(predictions, rows)) / len(rows)

    def stream_f1(stream_index, key):
        tags = sorted({t for r in rows for t in r[key] if t != "O"})
        if not tags:
            return 1.0
        weighted, support_total = 0.0, 0
        for tag in tags:
            tp = fp = fn = 0
            for p, r in zip(predictions, rows):
                for predicted, gold in zip(p[stream_index], r[key]):
                    tp += predicted == tag and gold == tag
                    fp += predicted == tag and gold != tag
                    fn += predicted != tag and gold == tag
            precision = tp / (tp + fp) if tp + fp else 0.0
            recall = tp / (tp + fn) if tp + fn else 0.0
            f1 = (2 * precision * recall / (precision + recall)
                  if precision + recall else 0.0)
            support = tp + fn
            weighted += f1 * support
            support_total += support
        return weighted / support_total if support_total else 1.0

    return intent_acc, stream_f1(1, "inform_tags"), stream_f1(2, "request_tags")


# ---------------------------------------------------------------------------
# NLG: word-level LSTM language model over serialized pairs

class TinyLm(nn.Module):
    def __init__(self, vocab_size, embed_dim=EMBED_DIM, hidden_dim=HIDDEN_DIM):
        super().__init__()
        self.embedding = nn.Embedding(vocab_size, embed_dim, padding_idx=0)
        self.lstm = nn.LSTM(embed_dim, hidden_dim, batch_first=True)
        self.head = nn.Linear(hidden_dim, vocab_size)

    def forward(self, token_ids, state=None):
        emb = self.embedding(token_ids)
        out, state = self.lstm(emb, state)
        return self.head(out), state


class LmBundle:
    def __init__(self, model, vocab):
        self.model = model
        self.vocab = vocab


def _line_tokens(line):
    head, _, utterance = line.partition(DELIMITER)
    return tokenize(head) + [DELIMITER] + tokenize(utterance)


def load_nlg_lines(path):
    with open(path, encoding="utf-8") as fh:
        return [line.strip() for line in fh if line.strip()]


def train_lm(lines, learning_rate, batch_size, epochs, seed=0, on_epoch=None):
    _seed_everything(seed)
    sequences = [[BOS] + _line_tokens(line) + [EOS] for line in lines]
    vocab = Vocab((t for seq in sequences for t in seq),
                  specials=(PAD, UNK, BOS, EOS, DELIMITER))
    encoded = [vocab.encode(seq) for seq in sequences]
    model = TinyLm(len(vocab))
    optimizer = torch.optim.Adam(model.parameters(), lr=learning_rate)
    ce = nn.CrossEntropyLoss(ignore_index=0)

    bundle = LmBundle(model, vocab)
    for epoch in range(epochs):
        model.train()
        order = torch.randperm(len(encoded)).tolist()
        for start in range(0, len(encoded), batch_size):
            batch = [encoded[i] for i in order[start:start + batch_size]]
            tokens = _pad_batch(batch)
            optimizer.zero_grad()
            logits, _ = model(tokens[:, :-1])
            loss = ce(logits.transpose(1, 2), tokens[:, 1:])
            loss.backward()
            optimizer.step()
        model.eval()
        if on_epoch is not None:
            on_epoch(epoch + 1, bundle)
    return bundle


def generate(bundle, frame_text, max_new_tokens=48, greedy=True, seed=0):
    """Greedy (or sampled) continuation of "<frame> <||>" until <eos>."""
    prefix = [BOS] + tokenize(frame_text) + [DELIMITER]
    ids = torch.tensor([bundle.vocab.encode(prefix)], dtype=torch.long)
    rng = torch.Generator().manual_seed(int(seed) & 0x7FFFFFFF)
    out = []
    with torch.no_grad():
        logits, state = bundle.model(ids)
        step = logits[0, -1]
        for _ in range(max_new_tokens):
            step[0] = -1e30  # never emit padding
            if greedy:
                token_id = int(step.argmax())
            else:
                probs = torch.softmax(step, dim=-1)
                token_id = int(torch.multinomial(probs, 1, generator=rng))
            token = bundle.vocab.itos[token_id]
            if token == EOS:
                break
            out.append(token)
            logits, state = bundle.model(
                torch.tensor([[token_id]], dtype=torch.long), state)
            step = logits[0, -1]
    return " ".join(out)


# ---------------------------------------------------------------------------
# Checkpoints and model-identifier resolution

def save_nlu(path, bundle):
    torch.save({
        "family": "tiny-nlu",
        "state": bundle.model.state_dict(),
        "vocab": bundle.vocab.itos,
        "intents": bundle.intents,
        "inform_tags": bundle.inform_tags,
        "request_tags": bundle.request_tags,
    }, path)


def load_nlu(path):
    blob = torch.load(path, weights_only=False)
    vocab = Vocab([])
    vocab.itos = blob["vocab"]
    vocab.stoi = {t: i for i, t in enumerate(vocab.itos)}
    model = TinyNlu(len(vocab), len(blob["intents"]), len(blob["inform_tags"]),
                    len(blob["request_tags"]))
    model.load_state_dict(blob["state"])
    model.eval()
    return NluBundle(model, vocab, blob["intents"], blob["inform_tags"],
                     blob["request_tags"])


def save_lm(path, bundle):
    torch.save({
        "family": "tiny-lm",
        "state": bundle.model.state_dict(),
        "vocab": bundle.vocab.itos,
    }, path)


def load_lm(path):
    blob = torch.load(path, weights_only=False)
    vocab = Vocab([])
    vocab.itos = blob["vocab"]
    vocab.stoi = {t: i for i, t in enumerate(vocab.itos)}
    model = TinyLm(len(vocab))
    model.load_state_dict(blob["state"])
    model.eval()
    return LmBundle(model, vocab)


class HfLm:
    """Causal-LM wrapper resolved through transformers; loading fails fast
    when the weights are not available locally."""

    def __init__(self, model_id, device="cpu"):
        from transformers import AutoModelForCausalLM, AutoTokenizer

        self.tokenizer = AutoTokenizer.from_pretrained(model_id)
        self.model = AutoModelForCausalLM.from_pretrained(model_id).to(device)
        self.device = device
        self.model.eval()

    def generate_utterance(self, frame_text, max_new_tokens=48, greedy=True,
                           seed=0):
        prompt = f"{frame_text} {DELIMITER} "
        inputs = self.tokenizer(prompt, return_tensors="pt").to(self.device)
        with torch.no_grad():
            ids = self.model.generate(
                **inputs, max_new_tokens=max_new_tokens, do_sample=not greedy,
                pad_token_id=self.tokenizer.eos_token_id)
        text = self.tokenizer.decode(ids[0], skip_special_tokens=True)
        return text.split(DELIMITER, 1)[-1].strip()
