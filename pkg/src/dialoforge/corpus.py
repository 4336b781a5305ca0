"""Corpus ingestion and preparation for the restaurant domain.

Covers act-type simplification, restaurant filtering, BIO slot annotation
for NLU training data, frame-utterance serialization for NLG training data,
deterministic train/test splits, and a format-compatible synthetic corpus
generator for desk-scale runs without the real MultiWOZ download.
"""

from __future__ import annotations

import json
import logging
import random
import string
from dataclasses import dataclass, field, replace

log = logging.getLogger(__name__)

DELIMITER = "<||>"

REQUEST_SENTINEL = "?"

# Intent priority used when a user turn carries several acts.
_INTENT_PRIORITY = ("request", "inform", "bye", "thank", "greet")


class CorpusError(ValueError):
    pass


@dataclass
class DialogueAct:
    act_type: str
    slot_values: dict = field(default_factory=dict)
    span_info: list = field(default_factory=list)  # (act_type, slot, value, start, end)


@dataclass
class Turn:
    speaker: int  # 0 = user, 1 = system
    utterance: str
    acts: list = field(default_factory=list)


@dataclass
class RawDialogue:
    id: str
    services: list
    turns: list

    def validate(self):
        for i, turn in enumerate(self.turns):
            if turn.speaker != i % 2:
                raise CorpusError(
                    f"dialogue {self.id}: turn {i} has speaker {turn.speaker}, "
                    "turns must alternate 0/1 starting with the user"
                )
            if not turn.utterance:
                raise CorpusError(f"dialogue {self.id}: turn {i} has an empty utterance")
            for act in turn.acts:
                for _, _, _, start, end in act.span_info:
                    if not (0 <= start <= end <= len(turn.utterance)):
                        raise CorpusError(
                            f"dialogue {self.id}: turn {i} span ({start}, {end}) "
                            "outside the utterance"
                        )


@dataclass
class AnnotatedUtterance:
    tokens: list
    intent: str
    inform_tags: list
    request_tags: list


@dataclass
class SemanticFrame:
    act: str
    slots: dict = field(default_factory=dict)
    requests: set = field(default_factory=set)


def tokenize(text):
    """Lowercase, split punctuation into standalone tokens, then whitespace.

    Shared by BIO annotation, the template components, and the text metrics.
    """
    out = []
    for ch in text.lower():
        if ch in string.punctuation:
            out.append(f" {ch} ")
        else:
            out.append(ch)
    return "".join(out).split()


# ---------------------------------------------------------------------------
# Act-type simplification

def map_act_types(dialogue, mapping):
    """Replace domain-prefixed act types with their simplified forms.

    Every act type occurring in the dialogue (including span-info entries)
    must be covered by ``mapping``; an unmapped type is an error.
    """

    def lookup(act_type, turn_index):
        if act_type not in mapping:
            raise CorpusError(
                f"dialogue {dialogue.id}: turn {turn_index}: "
                f"unmapped act type {act_type!r}"
            )
        return mapping[act_type]

    turns = []
    for i, turn in enumerate(dialogue.turns):
        acts = [
            DialogueAct(
                act_type=lookup(act.act_type, i),
                slot_values=dict(act.slot_values),
                span_info=[
                    (lookup(span[0], i),) + tuple(span[1:]) for span in act.span_info
                ],
            )
            for act in turn.acts
        ]
        turns.append(Turn(speaker=turn.speaker, utterance=turn.utterance, acts=acts))
    return RawDialogue(id=dialogue.id, services=list(dialogue.services), turns=turns)


def filter_restaurant(dialogues):
    return [d for d in dialogues if "restaurant" in d.services]


# ---------------------------------------------------------------------------
# BIO annotation

def _find_span(tokens, needle, tags):
    """First occurrence of ``needle`` in ``tokens`` whose slots are all 'O'."""
    n = len(needle)
    if n == 0:
        return None
    collided = False
    for start in range(len(tokens) - n + 1):
        if tokens[start:start + n] == needle:
            if all(t == "O" for t in tags[start:start + n]):
                return start
            collided = True
    return "collision" if collided else None


def _apply_tags(tags, start, length, slot):
    tags[start] = f"B-{slot.upper()}"
    for k in range(start + 1, start + length):
        tags[k] = f"I-{slot.upper()}"


def annotate_bio(utterance, intent, slots, ontology, synonym_table=None):
    """Token-level BIO tags for inform values and requested slot names.

    Request slots are flagged by the sentinel value "?". A slot value that
    cannot be located in the utterance leaves its tokens 'O' and records a
    warning instead of failing.
    """
    synonym_table = synonym_table or {}
    known = (
        set(ontology.informable_slots)
        | set(ontology.requestable_slots)
        | set(ontology.book_slots)
    )
    tokens = tokenize(utterance)
    inform_tags = ["O"] * len(tokens)
    request_tags = ["O"] * len(tokens)

    for slot, value in slots.items():
        if slot not in known:
            raise CorpusError(f"slot {slot!r} is not in the ontology")
        if value == REQUEST_SENTINEL:
            candidates = [tokenize(slot)]
            tags = request_tags
        else:
            candidates = [tokenize(str(value))]
            for surface in synonym_table.get(slot, {}).get(str(value), []):
                candidates.append(tokenize(surface))
            tags = inform_tags
        placed = False
        for needle in candidates:
            found = _find_span(tokens, needle, tags)
            if found == "collision":
                log.warning(
                    "slot %s=%r collides with an earlier annotation in %r",
                    slot, value, utterance,
                )
                placed = True
                break
            if found is not None:
                _apply_tags(tags, found, len(needle), slot)
                placed = True
                break
        if not placed:
            log.warning("slot %s=%r not found in %r", slot, value, utterance)

    return AnnotatedUtterance(
        tokens=tokens, intent=intent, inform_tags=inform_tags, request_tags=request_tags
    )


def validate_bio(tags):
    """Raise if a tag is malformed or an I- tag does not continue its slot."""
    prev = "O"
    for tag in tags:
        if tag != "O" and not (tag.startswith("B-") or tag.startswith("I-")):
            raise CorpusError(f"malformed tag {tag!r}")
        if tag.startswith("I-"):
            slot = tag[2:]
            if prev == "O" or prev[2:] != slot:
                raise CorpusError(f"tag {tag!r} follows {prev!r}")
        prev = tag


def bio_spans(tokens, tags):
    """Decode (slot, value) pairs from a BIO tag sequence."""
    spans = []
    current = None
    for token, tag in zip(tokens, tags):
        if tag.startswith("B-"):
            if current:
                spans.append(current)
            current = (tag[2:].lower(), [token])
        elif tag.startswith("I-") and current:
            current[1].append(token)
        else:
            if current:
                spans.append(current)
            current = None
    if current:
        spans.append(current)
    return [(slot, " ".join(words)) for slot, words in spans]


# ---------------------------------------------------------------------------
# Frame-utterance serialization

_FORBIDDEN_IN_VALUE = (", ", ")", "(", "=", "; ", DELIMITER)


def render_frame(frame):
    items = [f"{slot}={frame.slots[slot]}" for slot in sorted(frame.slots)]
    items += sorted(frame.requests)
    return f"{frame.act}({', '.join(items)})"


def parse_frame(text):
    if not text.endswith(")") or "(" not in text:
        raise CorpusError(f"malformed frame {text!r}")
    act, _, inner = text[:-1].partition("(")
    frame = SemanticFrame(act=act)
    if inner:
        for item in inner.split(", "):
            if "=" in item:
                slot, _, value = item.partition("=")
                frame.slots[slot] = value
            else:
                frame.requests.add(item)
    return frame


def serialize_pair(frames, utterance):
    """One line: rendered frame(s), the delimiter token, then the utterance."""
    if isinstance(frames, SemanticFrame):
        frames = [frames]
    if DELIMITER in utterance:
        raise CorpusError(f"utterance contains the delimiter token: {utterance!r}")
    for frame in frames:
        for slot, value in frame.slots.items():
            bad = [c for c in _FORBIDDEN_IN_VALUE if c in str(value)]
            if bad:
                raise CorpusError(f"slot value {value!r} contains reserved text {bad}")
    rendered = "; ".join(render_frame(f) for f in frames)
    return f"{rendered} {DELIMITER} {utterance}"


def parse_pair(line):
    head, sep, utterance = line.partition(f" {DELIMITER} ")
    if not sep:
        raise CorpusError(f"line has no delimiter token: {line!r}")
    frames = [parse_frame(part) for part in head.split("; ")]
    return frames, utterance


# ---------------------------------------------------------------------------
# Splits

def split_corpus(items, ratio, seed):
    """Deterministic shuffled split; ratio is a (train, test) percentage pair."""
    train_pct, test_pct = ratio
    if train_pct + test_pct != 100:
        raise ValueError(f"ratio {ratio} does not sum to 100")
    if not items:
        raise ValueError("cannot split an empty corpus")
    shuffled = list(items)
    random.Random(seed).shuffle(shuffled)
    n_train = int(train_pct * len(items) / 100 + 0.5)
    return shuffled[:n_train], shuffled[n_train:]


# ---------------------------------------------------------------------------
# Dialogue file I/O (MultiWOZ-style JSON)

def load_dialogues(path):
    with open(path, encoding="utf-8") as fh:
        rows = json.load(fh)
    dialogues = []
    for row in rows:
        turns = [
            Turn(
                speaker=t["speaker"],
                utterance=t["utterance"],
                acts=[
                    DialogueAct(
                        act_type=a["act_type"],
                        slot_values=a.get("slot_values", {}),
                        span_info=[tuple(s) for s in a.get("span_info", [])],
                    )
                    for a in t.get("acts", [])
                ],
            )
            for t in row["turns"]
        ]
        d = RawDialogue(id=row["id"], services=row["services"], turns=turns)
        d.validate()
        dialogues.append(d)
    return dialogues


def save_dialogues(path, dialogues):
    rows = []
    for d in dialogues:
        rows.append({
            "id": d.id,
            "services": list(d.services),
            "turns": [
                {
                    "speaker": t.speaker,
                    "utterance": t.utterance,
                    "acts": [
                        {
                            "act_type": a.act_type,
                            "slot_values": a.slot_values,
                            "span_info": [list(s) for s in a.span_info],
                        }
                        for a in t.acts
                    ],
                }
                for t in d.turns
            ],
        })
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(rows, fh, indent=2)
        fh.write("\n")


# ---------------------------------------------------------------------------
# Synthetic corpus generation

_USER_INFORM_TEMPLATES = {
    ("area", "food"): "i am looking for a {food} restaurant in the {area}",
    ("area",): "i want a restaurant in the {area}",
    ("food",): "i would like some {food} food",
    ("pricerange",): "i want a {pricerange} restaurant",
    ("name",): "i am looking for {name}",
    ("area", "pricerange"): "find me a {pricerange} place in the {area}",
    ("people", "day", "time"): "book a table for {people} people on {day} at {time}",
    ("day", "time"): "i will come on {day} at {time}",
    ("people",): "there will be {people} of us",
}

_USER_REQUEST_TEMPLATES = {
    "phone": "what is the phone number ?",
    "address": "what is the address ?",
    "postcode": "can i get the postcode ?",
    "food": "what kind of food do they serve ?",
}

_SYSTEM_REQUEST_TEMPLATES = {
    "area": "which area are you looking for ?",
    "food": "what type of food would you like ?",
    "pricerange": "what price range are you looking for ?",
    "people": "how many people will be dining ?",
    "day": "which day would you like to come ?",
    "time": "what time would you like to book ?",
}

_SYSTEM_INFORM_TEMPLATES = {
    "phone": "the phone number is {phone}",
    "address": "the address is {address}",
    "postcode": "the postcode is {postcode}",
    "food": "they serve {food} food",
}


def _spans_for(utterance, act_type, values):
    spans = []
    for slot, value, surface in values:
        start = utterance.find(surface)
        if start >= 0:
            spans.append((act_type, slot, value, start, start + len(surface)))
    return spans


def generate_corpus(ontology, kb, n_dialogues, seed, other_domain_fraction=0.1):
    """Deterministic synthetic MultiWOZ-style corpus over the given KB.

    Emits raw (domain-prefixed) act types so the preparation pipeline has
    real mapping work to do; a small fraction of dialogues belongs to another
    service so restaurant filtering is observable.
    """
    rng = random.Random(seed)
    dialogues = []
    for i in range(n_dialogues):
        if rng.random() < other_domain_fraction:
            dialogues.append(_hotel_dialogue(i, rng))
        else:
            dialogues.append(_restaurant_dialogue(i, rng, ontology, kb))
    return dialogues


def _hotel_dialogue(index, rng):
    turns = [
        Turn(0, "i need a hotel for tonight",
             [DialogueAct("Hotel-Inform", {"type": "hotel"})]),
        Turn(1, "what part of town would you like ?",
             [DialogueAct("Hotel-Request", {"area": REQUEST_SENTINEL})]),
    ]
    return RawDialogue(id=f"SYN{index:04d}.json", services=["hotel"], turns=turns)


def _restaurant_dialogue(index, rng, ontology, kb):
    record = rng.choice(kb)
    n_constraints = rng.randint(1, 3)
    constraint_slots = rng.sample(["area", "food", "pricerange"], n_constraints)
    requests = rng.sample(
        [s for s in ontology.requestable_slots if s not in constraint_slots],
        rng.randint(1, 2),
    )
    book = rng.random() < 0.4

    turns = []

    def user(utterance, acts):
        turns.append(Turn(0, utterance, acts))

    def system(utterance, acts):
        turns.append(Turn(1, utterance, acts))

    # Opening inform, possibly through the "moderately priced" synonym.
    first = constraint_slots[0]
    value = record.get(first)
    surface = value
    if first == "pricerange" and value == "moderate" and rng.random() < 0.5:
        surface = "moderately priced"
        utterance = "i want a moderately priced restaurant"
    else:
        utterance = _USER_INFORM_TEMPLATES[(first,)].format(**{first: value})
    user(utterance, [DialogueAct(
        "Restaurant-Inform", {first: value},
        _spans_for(utterance, "Restaurant-Inform", [(first, value, surface)]),
    )])

    # The system asks for the remaining constraints one by one.
    for slot in constraint_slots[1:]:
        system(_SYSTEM_REQUEST_TEMPLATES[slot],
               [DialogueAct("Restaurant-Request", {slot: REQUEST_SENTINEL})])
        value = record.get(slot)
        utterance = _USER_INFORM_TEMPLATES[(slot,)].format(**{slot: value})
        user(utterance, [DialogueAct(
            "Restaurant-Inform", {slot: value},
            _spans_for(utterance, "Restaurant-Inform", [(slot, value, value)]),
        )])

    utterance = f"i would recommend {record.name}"
    system(utterance, [DialogueAct(
        "Restaurant-Recommend", {"name": record.name},
        _spans_for(utterance, "Restaurant-Recommend",
                   [("name", record.name, record.name)]),
    )])

    for slot in requests:
        user(_USER_REQUEST_TEMPLATES[slot],
             [DialogueAct("Restaurant-Request", {slot: REQUEST_SENTINEL})])
        value = record.get(slot)
        utterance = _SYSTEM_INFORM_TEMPLATES[slot].format(**{slot: value})
        system(utterance, [DialogueAct(
            "Restaurant-Inform", {slot: value},
            _spans_for(utterance, "Restaurant-Inform", [(slot, value, value)]),
        )])

    if book:
        people = rng.choice(ontology.values("people"))
        day = rng.choice(ontology.values("day"))
        time = rng.choice(ontology.values("time"))
        utterance = _USER_INFORM_TEMPLATES[("people", "day", "time")].format(
            people=people, day=day, time=time)
        user(utterance, [DialogueAct(
            "Booking-Inform", {"people": people, "day": day, "time": time},
            _spans_for(utterance, "Booking-Inform",
                       [("people", people, people), ("day", day, day),
                        ("time", time, time)]),
        )])
        system("your table is booked . the reference number is at the desk",
               [DialogueAct("Booking-Book", {})])

    user("thank you , goodbye", [DialogueAct("general-thank", {}),
                                 DialogueAct("general-bye", {})])
    system("goodbye and enjoy your meal !", [DialogueAct("general-bye", {})])

    d = RawDialogue(id=f"SYN{index:04d}.json", services=["restaurant"], turns=turns)
    d.validate()
    return d


# ---------------------------------------------------------------------------
# Dataset builders

def turn_intent(turn):
    """Simplified, lowercased intent for a user turn with act priority."""
    acts = [a.act_type.lower() for a in turn.acts]
    for intent in _INTENT_PRIORITY:
        if intent in acts:
            return intent
    return acts[0] if acts else "inform"


def build_nlu_dataset(dialogues, ontology, synonym_table=None):
    """AnnotatedUtterances for every user turn of mapped restaurant dialogues."""
    annotated = []
    for d in dialogues:
        for turn in d.turns:
            if turn.speaker != 0:
                continue
            slots = {}
            for act in turn.acts:
                slots.update(act.slot_values)
            slots = {s: v for s, v in slots.items()
                     if s in ontology.informable_slots
                     or s in ontology.requestable_slots
                     or s in ontology.book_slots}
            annotated.append(
                annotate_bio(turn.utterance, turn_intent(turn), slots,
                             ontology, synonym_table)
            )
    return annotated


def build_nlg_dataset(dialogues):
    """Serialized frame-utterance lines for every system turn."""
    lines = []
    for d in dialogues:
        for turn in d.turns:
            if turn.speaker != 1:
                continue
            frames = []
            for act in turn.acts:
                frame = SemanticFrame(act=act.act_type.lower())
                for slot, value in act.slot_values.items():
                    if value == REQUEST_SENTINEL:
                        frame.requests.add(slot)
                    else:
                        frame.slots[slot] = value
                frames.append(frame)
            if frames:
                lines.append(serialize_pair(frames, turn.utterance))
    return lines


def save_nlu_jsonl(path, annotated):
    with open(path, "w", encoding="utf-8") as fh:
        for utt in annotated:
            fh.write(json.dumps({
                "tokens": utt.tokens,
                "intent": utt.intent,
                "inform_tags": utt.inform_tags,
                "request_tags": utt.request_tags,
            }) + "\n")


def load_nlu_jsonl(path):
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                row = json.loads(line)
                out.append(AnnotatedUtterance(
                    tokens=row["tokens"], intent=row["intent"],
                    inform_tags=row["inform_tags"],
                    request_tags=row["request_tags"],
                ))
    return out


def load_act_mapping(path):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def load_synonyms(path):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)
