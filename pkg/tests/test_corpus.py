import json
import logging
import random

import pytest
from hypothesis import given, settings, strategies as st

from dialoforge import corpus
from dialoforge.corpus import (
    AnnotatedUtterance,
    CorpusError,
    DialogueAct,
    RawDialogue,
    SemanticFrame,
    Turn,
    annotate_bio,
    bio_spans,
    build_nlg_dataset,
    build_nlu_dataset,
    filter_restaurant,
    generate_corpus,
    map_act_types,
    parse_pair,
    serialize_pair,
    split_corpus,
    tokenize,
    validate_bio,
)
from dialoforge.pipeline import bundled_synonyms


def _two_turn_dialogue():
    return RawDialogue(
        id="D1",
        services=["restaurant"],
        turns=[
            Turn(0, "i want a cheap restaurant", [
                DialogueAct("Restaurant-Inform", {"pricerange": "cheap"},
                            [("Restaurant-Inform", "pricerange", "cheap", 9, 14)]),
            ]),
            Turn(1, "which area are you looking for ?", [
                DialogueAct("Restaurant-Request", {"area": "?"}),
            ]),
        ],
    )


MAPPING = {
    "Restaurant-Inform": "Inform",
    "Restaurant-Request": "Request",
    "Inform": "Inform",
    "Request": "Request",
}


class TestActMapping:
    def test_restaurant_request_becomes_request(self):
        mapped = map_act_types(_two_turn_dialogue(), MAPPING)
        assert mapped.turns[1].acts[0].act_type == "Request"

    def test_identity_mapping_leaves_dialogue_unchanged(self):
        d = map_act_types(_two_turn_dialogue(), MAPPING)
        again = map_act_types(d, MAPPING)
        assert again == d

    def test_span_info_rewritten_offsets_untouched(self):
        mapped = map_act_types(_two_turn_dialogue(), MAPPING)
        span = mapped.turns[0].acts[0].span_info[0]
        assert span == ("Inform", "pricerange", "cheap", 9, 14)
        utterance = mapped.turns[0].utterance
        assert utterance[span[3]:span[4]] == "cheap"

    def test_unmapped_act_type_reports_context(self):
        with pytest.raises(CorpusError) as err:
            map_act_types(_two_turn_dialogue(), {"Restaurant-Inform": "Inform"})
        message = str(err.value)
        assert "D1" in message and "turn 1" in message and "Restaurant-Request" in message

    def test_mapping_is_idempotent_when_codomain_fixed(self, ontology, kb):
        dialogues = filter_restaurant(generate_corpus(ontology, kb, 20, seed=3))
        from dialoforge.cli import _bundled_mapping
        mapping = _bundled_mapping()
        for d in dialogues:
            once = map_act_types(d, mapping)
            assert map_act_types(once, mapping) == once


class TestFilter:
    def test_keeps_only_restaurant_services(self):
        d_rest = _two_turn_dialogue()
        d_hotel = RawDialogue("D2", ["hotel"], d_rest.turns)
        d_both = RawDialogue("D3", ["restaurant", "hotel"], d_rest.turns)
        got = filter_restaurant([d_rest, d_hotel, d_both])
        oracle = [d for d in (d_rest, d_hotel, d_both) if "restaurant" in d.services]
        assert got == oracle == [d_rest, d_both]

    def test_empty_input(self):
        assert filter_restaurant([]) == []

    def test_all_restaurant_identity(self):
        ds = [_two_turn_dialogue()]
        assert filter_restaurant(ds) == ds


class TestAnnotateBio:
    def test_moderately_priced_synonym(self, ontology):
        out = annotate_bio("i want a moderately priced restaurant", "inform",
                           {"pricerange": "moderate"}, ontology, bundled_synonyms())
        tags = dict(zip(out.tokens, out.inform_tags))
        assert tags["moderately"] == "B-PRICERANGE"
        assert tags["priced"] == "I-PRICERANGE"

    def test_greeting_all_o(self, ontology):
        out = annotate_bio("hello", "greet", {}, ontology)
        assert out.inform_tags == ["O"] and out.request_tags == ["O"]

    def test_request_slot_tagged_in_request_stream(self, ontology):
        out = annotate_bio("what is the phone number", "request",
                           {"phone": "?"}, ontology)
        tags = dict(zip(out.tokens, out.request_tags))
        assert tags["phone"] == "B-PHONE"
        assert all(t == "O" for t in out.inform_tags)

    def test_unfindable_value_warns_and_stays_o(self, ontology, caplog):
        with caplog.at_level(logging.WARNING, logger="dialoforge.corpus"):
            out = annotate_bio("hello there", "inform", {"area": "north"}, ontology)
        assert all(t == "O" for t in out.inform_tags)
        assert any("not found" in r.message for r in caplog.records)

    def test_unknown_slot_rejected(self, ontology):
        with pytest.raises(CorpusError):
            annotate_bio("hi", "inform", {"starsign": "leo"}, ontology)

    def test_lengths_match(self, ontology):
        out = annotate_bio("book a table for 2 people on monday", "inform",
                           {"people": "2", "day": "monday"}, ontology)
        assert len(out.tokens) == len(out.inform_tags) == len(out.request_tags)
        spans = dict(bio_spans(out.tokens, out.inform_tags))
        assert spans == {"people": "2", "day": "monday"}


class TestSyntheticCorpus:
    def test_bio_invariants_over_full_corpus(self, ontology, kb):
        dialogues = filter_restaurant(generate_corpus(ontology, kb, 80, seed=5))
        from dialoforge.cli import _bundled_mapping
        mapped = [map_act_types(d, _bundled_mapping()) for d in dialogues]
        annotated = build_nlu_dataset(mapped, ontology, bundled_synonyms())
        assert len(annotated) > 100
        for utt in annotated:
            assert len(utt.tokens) == len(utt.inform_tags) == len(utt.request_tags)
            validate_bio(utt.inform_tags)
            validate_bio(utt.request_tags)
            assert utt.intent in ontology.intents

    def test_span_reconstruction_oracle(self, ontology, kb):
        """Decoding BIO spans reproduces the annotated slot values or one of
        their registered synonyms."""
        synonyms = bundled_synonyms()
        dialogues = filter_restaurant(generate_corpus(ontology, kb, 60, seed=9))
        from dialoforge.cli import _bundled_mapping
        mapped = [map_act_types(d, _bundled_mapping()) for d in dialogues]
        for d in mapped:
            for turn in d.turns:
                if turn.speaker != 0:
                    continue
                slots = {}
                for act in turn.acts:
                    slots.update(act.slot_values)
                slots = {s: v for s, v in slots.items() if v != "?"}
                utt = annotate_bio(turn.utterance, "inform", slots, ontology,
                                   synonyms)
                decoded = dict(bio_spans(utt.tokens, utt.inform_tags))
                for slot, value in slots.items():
                    surfaces = {" ".join(tokenize(value))}
                    for s in synonyms.get(slot, {}).get(value, []):
                        surfaces.add(" ".join(tokenize(s)))
                    assert decoded.get(slot) in surfaces

    def test_generation_deterministic(self, ontology, kb):
        a = generate_corpus(ontology, kb, 30, seed=4)
        b = generate_corpus(ontology, kb, 30, seed=4)
        assert a == b

    def test_dialogue_file_round_trip(self, tmp_path, ontology, kb):
        dialogues = generate_corpus(ontology, kb, 10, seed=2)
        path = tmp_path / "dialogues.json"
        corpus.save_dialogues(path, dialogues)
        assert corpus.load_dialogues(path) == dialogues


class TestSerialization:
    def test_golden_line(self):
        frame = SemanticFrame("inform", {"phone": "123"})
        line = serialize_pair(frame, "the phone number is 123")
        assert line == "inform(phone=123) <||> the phone number is 123"

    def test_round_trip_law(self):
        frame = SemanticFrame("inform", {"area": "north", "food": "thai"},
                              {"phone"})
        line = serialize_pair(frame, "some text here")
        frames, utterance = parse_pair(line)
        assert frames == [frame] and utterance == "some text here"

    def test_delimiter_collision_rejected(self):
        with pytest.raises(CorpusError):
            serialize_pair(SemanticFrame("inform"), "bad <||> utterance")

    def test_multi_frame_join(self):
        frames = [SemanticFrame("inform", {"area": "north"}),
                  SemanticFrame("request", requests={"food"})]
        line = serialize_pair(frames, "ok")
        parsed, _ = parse_pair(line)
        assert parsed == frames

    @settings(max_examples=300, deadline=None)
    @given(st.data())
    def test_round_trip_random_frames(self, data):
        frame, utterance = _random_frame(data.draw)
        frames, text = parse_pair(serialize_pair(frame, utterance))
        assert frames == [frame] and text == utterance


_WORD = st.text(alphabet="abcdefghijklmnopqrstuvwxyz0123456789", min_size=1,
                max_size=8)


def _random_frame(draw):
    slots = draw(st.dictionaries(_WORD, _WORD, max_size=4))
    requests = draw(st.sets(_WORD, max_size=3))
    requests -= set(slots)
    frame = SemanticFrame(draw(_WORD), slots, requests)
    utterance = draw(st.text(
        alphabet="abcdefghijklmnopqrstuvwxyz ", min_size=1, max_size=40))
    return frame, utterance


class TestSplit:
    def test_70_30_partition(self):
        items = list(range(100))
        train, test = split_corpus(items, (70, 30), seed=1)
        assert len(train) == 70 and len(test) == 30
        assert sorted(train + test) == items
        assert set(train).isdisjoint(test)

    def test_90_10_small(self):
        train, test = split_corpus(list(range(10)), (90, 10), seed=0)
        assert len(train) == 9 and len(test) == 1

    def test_deterministic(self):
        items = list(range(57))
        assert split_corpus(items, (70, 30), 42) == split_corpus(items, (70, 30), 42)

    def test_bad_ratio(self):
        with pytest.raises(ValueError):
            split_corpus([1], (70, 40), 0)

    def test_empty_input(self):
        with pytest.raises(ValueError):
            split_corpus([], (70, 30), 0)

    @settings(max_examples=100, deadline=None)
    @given(n=st.integers(1, 200), seed=st.integers(0, 999),
           train_pct=st.integers(0, 100))
    def test_partition_property(self, n, seed, train_pct):
        items = [f"item{i}" for i in range(n)]
        train, test = split_corpus(items, (train_pct, 100 - train_pct), seed)
        assert sorted(train + test) == sorted(items)
        assert len(train) == int(train_pct * n / 100 + 0.5)


class TestDatasets:
    def test_nlg_lines_parse_back(self, ontology, kb):
        dialogues = filter_restaurant(generate_corpus(ontology, kb, 40, seed=6))
        from dialoforge.cli import _bundled_mapping
        mapped = [map_act_types(d, _bundled_mapping()) for d in dialogues]
        lines = build_nlg_dataset(mapped)
        assert lines
        for line in lines:
            frames, utterance = parse_pair(line)
            assert frames and utterance

    def test_nlu_jsonl_round_trip(self, tmp_path, ontology):
        rows = [AnnotatedUtterance(["hi"], "greet", ["O"], ["O"])]
        path = tmp_path / "nlu.jsonl"
        corpus.save_nlu_jsonl(path, rows)
        assert corpus.load_nlu_jsonl(path) == rows
