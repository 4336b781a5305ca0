"""Restaurant-domain schema (intents, slot taxonomy) and knowledge base.

The ontology file is a JSON object with keys ``intents``, ``informable_slots``,
``requestable_slots``, ``book_slots``, ``value_lexicon`` and an optional
``shared_slots`` list naming slots that are allowed to appear in more than one
slot role (e.g. "food" is both informable and requestable).

Both the ontology and the KB are immutable after load and safe to share
between concurrent readers.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from importlib import resources

REQUIRED_INTENTS = ("greet", "inform", "request", "bye", "thank")

KB_FIELDS = ("name", "area", "food", "pricerange", "phone", "address", "postcode")

STREETS = (
    "mill road", "regent street", "king street", "bridge lane", "hills road",
    "station road", "castle park", "magdalene avenue", "trumpington street",
    "chesterton lane",
)


class OntologyError(ValueError):
    """Raised when an ontology or KB file violates a schema invariant."""


@dataclass(frozen=True)
class DomainOntology:
    intents: tuple
    informable_slots: tuple
    requestable_slots: tuple
    book_slots: tuple
    value_lexicon: dict
    shared_slots: tuple = ()

    @property
    def constraint_slots(self):
        """Informable plus book slots, in declaration order, deduplicated."""
        seen = []
        for slot in self.informable_slots + self.book_slots:
            if slot not in seen:
                seen.append(slot)
        return tuple(seen)

    def values(self, slot):
        return self.value_lexicon.get(slot, ())

    def validate(self):
        if not self.intents:
            raise OntologyError("intents list is empty")
        missing = [i for i in REQUIRED_INTENTS if i not in self.intents]
        if missing:
            raise OntologyError(f"intents list is missing required intents: {missing}")

        roles = {
            "informable": set(self.informable_slots),
            "requestable": set(self.requestable_slots),
            "book": set(self.book_slots),
        }
        shared = set(self.shared_slots)
        names = list(roles)
        for i, a in enumerate(names):
            for b in names[i + 1:]:
                overlap = (roles[a] & roles[b]) - shared
                if overlap:
                    raise OntologyError(
                        f"slot(s) {sorted(overlap)} appear in both {a} and {b} "
                        "lists without a shared_slots declaration"
                    )

        owner = {}
        for slot, values in self.value_lexicon.items():
            for value in values:
                if value in owner and owner[value] != slot:
                    raise OntologyError(
                        f"lexicon value {value!r} belongs to both "
                        f"{owner[value]!r} and {slot!r}"
                    )
                owner[value] = slot


@dataclass(frozen=True)
class KbRecord:
    name: str
    area: str
    food: str
    pricerange: str
    phone: str
    address: str
    postcode: str

    def get(self, slot):
        return getattr(self, slot)


def _require(obj, key, kind, where):
    if key not in obj:
        raise OntologyError(f"{where}: missing key {key!r}")
    if not isinstance(obj[key], kind):
        raise OntologyError(f"{where}: key {key!r} must be a {kind.__name__}")
    return obj[key]


def parse_ontology(obj, where="ontology"):
    intents = _require(obj, "intents", list, where)
    lexicon = _require(obj, "value_lexicon", dict, where)
    ontology = DomainOntology(
        intents=tuple(intents),
        informable_slots=tuple(_require(obj, "informable_slots", list, where)),
        requestable_slots=tuple(_require(obj, "requestable_slots", list, where)),
        book_slots=tuple(_require(obj, "book_slots", list, where)),
        value_lexicon={slot: tuple(vals) for slot, vals in lexicon.items()},
        shared_slots=tuple(obj.get("shared_slots", [])),
    )
    ontology.validate()
    return ontology


def load_ontology(path):
    """Load and validate an ontology file; raises OntologyError with context."""
    with open(path, encoding="utf-8") as fh:
        try:
            obj = json.load(fh)
        except json.JSONDecodeError as exc:
            raise OntologyError(f"{path}: line {exc.lineno}: {exc.msg}") from exc
    if not isinstance(obj, dict):
        raise OntologyError(f"{path}: top level must be a JSON object")
    return parse_ontology(obj, where=str(path))


def bundled_ontology():
    text = resources.files("dialoforge.data").joinpath("ontology.json").read_text("utf-8")
    return parse_ontology(json.loads(text), where="bundled ontology")


def validate_kb(kb, ontology):
    names = set()
    for i, rec in enumerate(kb):
        for slot in KB_FIELDS:
            if not rec.get(slot):
                raise OntologyError(f"KB record {i}: field {slot!r} is empty")
        if rec.area not in ontology.values("area"):
            raise OntologyError(f"KB record {i}: area {rec.area!r} outside closed set")
        if rec.pricerange not in ontology.values("pricerange"):
            raise OntologyError(
                f"KB record {i}: pricerange {rec.pricerange!r} outside closed set"
            )
        if rec.name in names:
            raise OntologyError(f"KB record {i}: duplicate name {rec.name!r}")
        names.add(rec.name)


def load_kb(path, ontology=None):
    with open(path, encoding="utf-8") as fh:
        try:
            rows = json.load(fh)
        except json.JSONDecodeError as exc:
            raise OntologyError(f"{path}: line {exc.lineno}: {exc.msg}") from exc
    if not isinstance(rows, list):
        raise OntologyError(f"{path}: KB file must be a JSON array")
    kb = []
    for i, row in enumerate(rows):
        missing = [k for k in KB_FIELDS if k not in row]
        if missing:
            raise OntologyError(f"{path}: record {i} missing fields {missing}")
        kb.append(KbRecord(**{k: row[k] for k in KB_FIELDS}))
    if ontology is not None:
        validate_kb(kb, ontology)
    return kb


def save_kb(path, kb):
    rows = [{k: rec.get(k) for k in KB_FIELDS} for rec in kb]
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(rows, fh, indent=2)
        fh.write("\n")


def kb_query(kb, constraints):
    """Records matching every constraint by case-insensitive exact equality."""
    for slot in constraints:
        if slot not in KB_FIELDS:
            raise OntologyError(f"unknown constraint slot {slot!r}")
    wanted = {slot: str(value).lower() for slot, value in constraints.items()}
    return [
        rec
        for rec in kb
        if all(rec.get(slot).lower() == value for slot, value in wanted.items())
    ]


def generate_kb(ontology, seed, n):
    """Deterministic synthetic KB of ``n`` records drawn from the lexicon.

    For n >= 15 every (area, pricerange) pair is covered at least once.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = random.Random(seed)
    areas = list(ontology.values("area"))
    prices = list(ontology.values("pricerange"))
    foods = list(ontology.values("food"))
    names = list(ontology.values("name"))
    rng.shuffle(names)

    pairs = [(a, p) for a in areas for p in prices]
    rng.shuffle(pairs)

    records = []
    for i in range(n):
        if i < len(pairs):
            area, price = pairs[i]
        else:
            area, price = rng.choice(areas), rng.choice(prices)
        base = names[i % len(names)]
        name = base if i < len(names) else f"{base} {i // len(names) + 1}"
        records.append(
            KbRecord(
                name=name,
                area=area,
                food=rng.choice(foods),
                pricerange=price,
                phone="01223 %06d" % rng.randrange(10**6),
                address="%d %s" % (rng.randrange(1, 200), rng.choice(STREETS)),
                postcode="cb%d%d%s%s" % (
                    rng.randrange(1, 6),
                    rng.randrange(10),
                    rng.choice("abcdefghjklmnpqrstuvwxyz"),
                    rng.choice("abcdefghjklmnpqrstuvwxyz"),
                ),
            )
        )
    validate_kb(records, ontology)
    return records
