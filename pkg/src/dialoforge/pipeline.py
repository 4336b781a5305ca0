"""End-to-end pipeline assembly: template NLU and NLG, component fallback
wiring, and the interactive chat REPL.

The template components make the whole pipeline runnable with zero external
dependencies; neural replacements attach through the wire protocol and
degrade back to the templates on any fault.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from importlib import resources

import numpy as np

from .corpus import SemanticFrame, tokenize, render_frame
from .dialogue import (
    action_space,
    apply_agent,
    encode_dim,
    encode_state,
    initial_state,
    RewardConfig,
)
from .agent import select_action
from .protocol import ProtocolError, connect_component
from .simulator import UserAction, UserSimulator

log = logging.getLogger(__name__)

GREET_WORDS = {"hello", "hi", "hey", "greetings"}
BYE_WORDS = {"bye", "goodbye"}
THANK_WORDS = {"thank", "thanks"}
QUESTION_CUES = {"what", "which", "where", "when", "how", "may", "can",
                 "could", "do", "does", "is", "are", "give", "need"}

# Aliases that surface a requestable slot in user text.
REQUEST_ALIASES = {
    "phone": (("phone", "number"), ("phone",), ("telephone",)),
    "address": (("address",),),
    "postcode": (("postcode",), ("post", "code"), ("zip", "code")),
    "food": (("food",), ("cuisine",)),
}

# Cue patterns for extracting values of non-lexicon slots: alias then "is".
VALUE_CUE_SLOTS = ("phone", "address", "postcode")


def load_templates(path=None):
    if path is None:
        text = resources.files("dialoforge.data").joinpath(
            "templates.json").read_text("utf-8")
        return json.loads(text)
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def bundled_synonyms():
    text = resources.files("dialoforge.data").joinpath(
        "synonyms.json").read_text("utf-8")
    return json.loads(text)


# ---------------------------------------------------------------------------
# Template NLU

def _lexicon_matches(tokens, ontology, synonym_table):
    """Longest-first scan for lexicon values and registered synonyms."""
    candidates = []
    for slot, values in ontology.value_lexicon.items():
        for value in values:
            candidates.append((tokenize(value), slot, value))
    for slot, by_value in (synonym_table or {}).items():
        for value, surfaces in by_value.items():
            for surface in surfaces:
                candidates.append((tokenize(surface), slot, value))
    candidates.sort(key=lambda c: len(c[0]), reverse=True)

    slots = {}
    claimed = [False] * len(tokens)
    for needle, slot, value in candidates:
        n = len(needle)
        for start in range(len(tokens) - n + 1):
            if claimed[start] or tokens[start:start + n] != needle:
                continue
            if any(claimed[start:start + n]):
                continue
            if slot not in slots:
                slots[slot] = value
                for k in range(start, start + n):
                    claimed[k] = True
            break
    return slots


def _find_subsequence(tokens, needle):
    n = len(needle)
    for start in range(len(tokens) - n + 1):
        if tokens[start:start + n] == list(needle):
            return start
    return -1


def _cue_value(tokens, slot):
    """Extract a value for ``slot`` from an "<alias> is <value...>" pattern."""
    for alias in REQUEST_ALIASES.get(slot, ()):
        start = _find_subsequence(tokens, alias)
        if start < 0:
            continue
        rest = tokens[start + len(alias):]
        if rest and rest[0] == "is" and len(rest) > 1:
            value_tokens = [t for t in rest[1:] if t not in (".", "!", "?", ",")]
            if value_tokens:
                return " ".join(value_tokens)
    return None


def template_nlu(utterance, ontology, synonym_table=None):
    """Lexicon-driven frame extraction with keyword intent rules.

    Intent priority: request > inform > bye > thank > greet; anything
    unrecognized maps to an inform with empty slots.
    """
    tokens = tokenize(utterance)
    token_set = set(tokens)

    slots = _lexicon_matches(tokens, ontology, synonym_table)
    for slot in VALUE_CUE_SLOTS:
        if slot in ontology.requestable_slots and slot not in slots:
            value = _cue_value(tokens, slot)
            if value is not None:
                slots[slot] = value

    requests = set()
    if token_set & QUESTION_CUES:
        for slot in ontology.requestable_slots:
            if slot in slots:
                continue
            for alias in REQUEST_ALIASES.get(slot, ((slot,),)):
                if _find_subsequence(tokens, alias) >= 0:
                    requests.add(slot)
                    break

    if requests:
        return SemanticFrame(act="request", slots={}, requests=requests)
    if slots:
        return SemanticFrame(act="inform", slots=slots)
    if token_set & BYE_WORDS:
        return SemanticFrame(act="bye")
    if token_set & THANK_WORDS:
        return SemanticFrame(act="thank")
    if token_set & GREET_WORDS:
        return SemanticFrame(act="greet")
    return SemanticFrame(act="inform")


# ---------------------------------------------------------------------------
# Template NLG

def frame_signature(frame):
    items = [f"{slot}=" for slot in sorted(frame.slots)] + sorted(frame.requests)
    return f"{frame.act}({', '.join(items)})"


def template_nlg(frame, ontology, templates=None):
    """Render a frame through the template table; the fallback rendering
    guarantees totality and always contains every slot value."""
    templates = templates if templates is not None else load_templates()
    template = templates.get(frame_signature(frame))
    if template is not None:
        return template.format(**frame.slots)
    parts = []
    for slot in sorted(frame.slots):
        parts.append(f"the {slot} is {frame.slots[slot]}")
    for slot in sorted(frame.requests):
        parts.append(f"which {slot} would you like ?")
    if not parts:
        return f"{frame.act} ."
    return " and ".join(parts)


def action_to_frame(action):
    """Semantic frame for an executed agent action."""
    if action.kind == "greet":
        return SemanticFrame(act="greet")
    if action.kind == "request":
        return SemanticFrame(act="request", requests={action.slot})
    if action.kind == "inform":
        value = action.value if action.value is not None else "unknown"
        return SemanticFrame(act="inform", slots={action.slot: value})
    if action.kind == "match_found":
        if action.record is None:
            return SemanticFrame(act="nooffer")
        record = action.record
        return SemanticFrame(act="recommend", slots={
            "name": record.name, "area": record.area,
            "food": record.food, "pricerange": record.pricerange,
        })
    return SemanticFrame(act="bye")


# ---------------------------------------------------------------------------
# Component wiring with template fallback

class PipelineComponents:
    """NLU/NLG endpoints with graceful degradation to the templates."""

    def __init__(self, ontology, templates=None, synonym_table=None,
                 nlu_endpoint=None, nlg_endpoint=None):
        self.ontology = ontology
        self.templates = templates if templates is not None else load_templates()
        self.synonym_table = synonym_table
        self.nlu_endpoint = nlu_endpoint
        self.nlg_endpoint = nlg_endpoint

    def nlu(self, utterance):
        if self.nlu_endpoint is not None:
            try:
                result = self.nlu_endpoint.call({"utterance": utterance})
                act = result.get("act", result.get("intent"))
                frame = SemanticFrame(
                    act=act,
                    slots=dict(result.get("slots", {})),
                    requests=set(result.get("requests", [])),
                )
                if frame.act not in self.ontology.intents:
                    raise ProtocolError(f"act {frame.act!r} not in the ontology")
                return frame
            except ProtocolError as exc:
                log.warning("NLU component degraded to templates: %s", exc)
        return template_nlu(utterance, self.ontology, self.synonym_table)

    def nlg(self, frame):
        if self.nlg_endpoint is not None:
            try:
                result = self.nlg_endpoint.call({"frame": render_frame(frame)})
                utterance = result["utterance"]
                if not isinstance(utterance, str) or not utterance:
                    raise ProtocolError("component returned an empty utterance")
                return utterance
            except ProtocolError as exc:
                log.warning("NLG component degraded to templates: %s", exc)
        return template_nlg(frame, self.ontology, self.templates)


def connect_components(nlu_spec=None, nlg_spec=None):
    """Connect optional endpoints; absence or failure is non-fatal."""
    nlu_endpoint = nlg_endpoint = None
    if nlu_spec:
        try:
            nlu_endpoint = connect_component(nlu_spec, "nlu")
        except (ProtocolError, OSError) as exc:
            log.warning("NLU endpoint unavailable, using templates: %s", exc)
    if nlg_spec:
        try:
            nlg_endpoint = connect_component(nlg_spec, "nlg")
        except (ProtocolError, OSError) as exc:
            log.warning("NLG endpoint unavailable, using templates: %s", exc)
    return nlu_endpoint, nlg_endpoint


# ---------------------------------------------------------------------------
# Chat REPL

def frame_to_user_action(frame):
    intent = frame.act if frame.act in ("inform", "request", "bye", "thank",
                                        "greet") else "inform"
    return UserAction(intent=intent, inform=dict(frame.slots),
                      request=set(frame.requests), done=frame.act == "bye")


def chat(agent, ontology, kb, components=None, seed=0, max_turns=20,
         input_stream=None, output_stream=None, transcript_path=None):
    """REPL: user text -> NLU -> tracker -> greedy policy -> NLG -> reply.

    Meta-commands: /goal (show the sampled task), /state (tracker dump),
    /quit. Every input line produces exactly one reply line.
    """
    import sys

    input_stream = input_stream or sys.stdin
    output_stream = output_stream or sys.stdout
    components = components or PipelineComponents(ontology)
    if agent.input_dim != encode_dim(ontology):
        raise ValueError("agent checkpoint does not match the ontology encoding")

    rng = np.random.default_rng(seed)
    sim = UserSimulator(ontology, kb)
    goal = sim.sample_goal(rng)
    actions = action_space(ontology)
    state = initial_state()
    transcript = []

    def emit(text):
        output_stream.write(text + "\n")
        output_stream.flush()

    def log_turn(speaker, frame, utterance):
        transcript.append({"speaker": speaker, "frame": frame, "utterance": utterance})

    emit("dialoforge chat (type /quit to leave, /goal for a suggested task)")
    saved_epsilon = agent.epsilon
    agent.epsilon = 0.0
    try:
        for line in input_stream:
            text = line.strip()
            if not text:
                continue
            if text == "/quit":
                emit("bye !")
                break
            if text == "/goal":
                emit(f"suggested goal: inform {goal.inform}, "
                     f"request {sorted(goal.request)}, book {goal.book}")
                continue
            if text == "/state":
                emit(f"confirmed={state.confirmed} "
                     f"asked={sorted(state.asked_by_user)} "
                     f"answered={sorted(state.answered)} "
                     f"offered={state.offered_record.name if state.offered_record else None} "
                     f"turn={state.turn}")
                continue

            user_frame = components.nlu(text)
            log_turn("user", render_frame(user_frame), text)
            state = update_user(state, user_frame)
            vec = encode_state(state, ontology, kb, max_turns)
            action_idx = select_action(agent, vec, rng)
            state, executed = apply_agent(state, actions[action_idx], ontology, kb)
            reply_frame = action_to_frame(executed)
            reply = components.nlg(reply_frame)
            log_turn("agent", render_frame(reply_frame), reply)
            emit(reply)
            if executed.kind == "done" or user_frame.act == "bye":
                break
    finally:
        agent.epsilon = saved_epsilon
        if transcript_path:
            with open(transcript_path, "w", encoding="utf-8") as fh:
                for row in transcript:
                    fh.write(json.dumps(row) + "\n")
    return transcript, state


def update_user(state, frame):
    from .dialogue import update_state

    return update_state(state, frame_to_user_action(frame))
