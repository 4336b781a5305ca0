import io
import json
import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dialoforge.agent import AgentHyperParams, create_agent
from dialoforge.corpus import SemanticFrame, parse_frame, render_frame
from dialoforge.dialogue import action_space, encode_dim
from dialoforge.pipeline import (
    PipelineComponents,
    action_to_frame,
    bundled_synonyms,
    chat,
    frame_signature,
    load_templates,
    template_nlg,
    template_nlu,
)
from dialoforge.protocol import ProtocolError, connect_component

FAKE = str(Path(__file__).parent / "fake_component.py")


def fake_spec(mode):
    return {"transport": "stdio", "cmd": [sys.executable, FAKE, mode]}


class TestTemplateNlu:
    def test_inform_extraction(self, ontology):
        frame = template_nlu("i want a cheap restaurant in the north", ontology,
                             bundled_synonyms())
        assert frame.act == "inform"
        assert frame.slots == {"pricerange": "cheap", "area": "north"}

    def test_request_extraction(self, ontology):
        frame = template_nlu("what is the address", ontology)
        assert frame.act == "request"
        assert frame.requests == {"address"}

    def test_greeting(self, ontology):
        assert template_nlu("hello", ontology).act == "greet"

    def test_unknown_input_maps_to_empty_inform(self, ontology):
        frame = template_nlu("zzz qqq", ontology)
        assert frame.act == "inform" and not frame.slots and not frame.requests

    def test_request_priority_over_inform(self, ontology):
        frame = template_nlu("what is the phone number of the cheap place",
                             ontology)
        assert frame.act == "request" and frame.requests == {"phone"}

    def test_synonym_surface(self, ontology):
        frame = template_nlu("somewhere moderately priced please", ontology,
                             bundled_synonyms())
        assert frame.slots == {"pricerange": "moderate"}

    def test_multiword_name_value(self, ontology):
        frame = template_nlu("i am looking for the golden lotus", ontology)
        assert frame.slots == {"name": "the golden lotus"}


class TestTemplateNlg:
    def test_bundled_inform_phone(self, ontology):
        frame = SemanticFrame("inform", {"phone": "01223 323737"})
        assert template_nlg(frame, ontology) == "the phone number is 01223 323737"

    def test_bundled_request_area(self, ontology):
        frame = SemanticFrame("request", requests={"area"})
        assert template_nlg(frame, ontology) == "which area are you looking for ?"

    def test_fallback_contains_all_slot_values(self, ontology):
        frame = SemanticFrame("select", {"area": "north", "food": "thai"})
        out = template_nlg(frame, ontology)
        assert "north" in out and "thai" in out

    def test_round_trip_recovers_slots_for_all_bundled_templates(self, ontology):
        templates = load_templates()
        synonyms = bundled_synonyms()
        fillers = {"phone": "01223 111222", "address": "12 mill road",
                   "postcode": "cb21ab"}
        for signature in templates:
            parsed = parse_frame(signature)
            slots = {}
            for slot in parsed.slots:
                values = ontology.values(slot)
                slots[slot] = values[0] if values else fillers[slot]
            frame = SemanticFrame(parsed.act, slots, parsed.requests)
            text = template_nlg(frame, ontology, templates)
            recovered = template_nlu(text, ontology, synonyms)
            assert recovered.slots == frame.slots, signature

    @settings(max_examples=120, deadline=None)
    @given(data=st.data())
    def test_totality_over_random_frames(self, data, ontology):
        acts = list(ontology.intents)
        act = data.draw(st.sampled_from(acts))
        slot_pool = [s for s in ontology.value_lexicon]
        n = data.draw(st.integers(0, 3))
        slots = {}
        for slot in data.draw(st.permutations(slot_pool)) [:n]:
            slots[slot] = data.draw(st.sampled_from(ontology.values(slot)))
        frame = SemanticFrame(act, slots, set())
        out = template_nlg(frame, ontology)
        assert isinstance(out, str) and out
        for value in slots.values():
            assert value in out


class TestActionToFrame:
    def test_match_found_becomes_recommend(self, kb):
        from dialoforge.dialogue import AgentAction

        action = AgentAction("match_found", record=kb[0])
        frame = action_to_frame(action)
        assert frame.act == "recommend"
        assert frame.slots["name"] == kb[0].name

    def test_no_record_becomes_nooffer(self):
        from dialoforge.dialogue import AgentAction

        assert action_to_frame(AgentAction("match_found")).act == "nooffer"

    def test_frames_use_ontology_intents(self, ontology):
        from dialoforge.dialogue import AgentAction

        for action in action_space(ontology):
            executed = AgentAction(action.kind, action.slot, value="x")
            assert action_to_frame(executed).act in ontology.intents


class TestProtocol:
    def test_handshake_and_round_trip(self):
        endpoint = connect_component(fake_spec("ok"), "nlu")
        try:
            assert endpoint.negotiated_name == "fake-ok"
            result = endpoint.call({"utterance": "hi"})
            assert result == {"act": "inform", "slots": {"area": "north"},
                              "requests": []}
        finally:
            endpoint.close()

    def test_request_ids_increase(self):
        endpoint = connect_component(fake_spec("ok"), "nlg")
        try:
            endpoint.call({"frame": "greet()"})
            first = endpoint._next_id
            endpoint.call({"frame": "bye()"})
            assert endpoint._next_id == first + 1
        finally:
            endpoint.close()

    def test_wire_encoding_round_trips_bit_exactly(self):
        message = {"id": 7, "op": "nlg", "frame": "inform(phone=123)"}
        assert json.loads(json.dumps(message)) == message

    def test_role_validation(self):
        with pytest.raises(ProtocolError, match="role"):
            connect_component(fake_spec("nlu-only"), "nlg")

    def test_wrong_id_retried_once_then_ok(self, ontology):
        endpoint = connect_component(fake_spec("wrong-id-once"), "nlu")
        try:
            result = endpoint.call({"utterance": "hi"})
            assert result["act"] == "inform"
        finally:
            endpoint.close()

    def test_malformed_reply_retried(self):
        endpoint = connect_component(fake_spec("malformed-once"), "nlu")
        try:
            assert endpoint.call({"utterance": "hi"})["act"] == "inform"
        finally:
            endpoint.close()

    def test_silent_component_times_out(self):
        endpoint = connect_component(fake_spec("silent"), "nlu")
        endpoint.timeout = 0.3
        try:
            with pytest.raises(ProtocolError):
                endpoint.call({"utterance": "hi"})
        finally:
            endpoint.close()


class TestComponentFallback:
    def test_absent_endpoint_uses_templates(self, ontology):
        components = PipelineComponents(ontology,
                                        synonym_table=bundled_synonyms())
        frame = components.nlu("i want a cheap restaurant")
        assert frame.slots == {"pricerange": "cheap"}
        assert components.nlg(SemanticFrame("greet")) == \
            "hello ! how can i help you today ?"

    def test_silent_endpoint_degrades_to_templates(self, ontology):
        endpoint = connect_component(fake_spec("silent"), "nlu")
        endpoint.timeout = 0.3
        components = PipelineComponents(ontology, nlu_endpoint=endpoint,
                                        synonym_table=bundled_synonyms())
        try:
            frame = components.nlu("i want a cheap restaurant")
            assert frame.slots == {"pricerange": "cheap"}  # template answer
        finally:
            endpoint.close()

    def test_healthy_endpoint_answers(self, ontology):
        endpoint = connect_component(fake_spec("ok"), "nlg")
        components = PipelineComponents(ontology, nlg_endpoint=endpoint)
        try:
            out = components.nlg(SemanticFrame("inform", {"phone": "123"}))
            assert out == "echo: inform(phone=123)"
        finally:
            endpoint.close()

    def test_transient_error_recovered_by_retry(self, ontology):
        endpoint = connect_component(fake_spec("error-once"), "nlu")
        components = PipelineComponents(ontology, nlu_endpoint=endpoint)
        try:
            frame = components.nlu("hello")
            assert frame.act == "inform"  # served by the component, not greet
        finally:
            endpoint.close()


def _chat_agent(ontology):
    return create_agent("ddqn", encode_dim(ontology),
                        len(action_space(ontology)),
                        AgentHyperParams(hidden_size=16), np.random.default_rng(3))


class TestChat:
    def _run(self, ontology, kb, lines, seed=0):
        agent = _chat_agent(ontology)
        stdin = io.StringIO("\n".join(lines) + "\n")
        stdout = io.StringIO()
        transcript, state = chat(agent, ontology, kb, seed=seed,
                                 input_stream=stdin, output_stream=stdout)
        return transcript, state, stdout.getvalue()

    def test_one_reply_per_input_line(self, ontology, kb):
        lines = ["i want a cheap restaurant", "what is the phone number",
                 "anything else", "/quit"]
        transcript, _, output = self._run(ontology, kb, lines)
        user_turns = [t for t in transcript if t["speaker"] == "user"]
        agent_turns = [t for t in transcript if t["speaker"] == "agent"]
        assert len(user_turns) == len(agent_turns) == 3  # /quit is meta

    def test_state_meta_command(self, ontology, kb):
        _, _, output = self._run(ontology, kb,
                                 ["i want a cheap restaurant", "/state", "/quit"])
        assert "confirmed={'pricerange': 'cheap'}" in output

    def test_goal_meta_command(self, ontology, kb):
        _, _, output = self._run(ontology, kb, ["/goal", "/quit"])
        assert "suggested goal" in output

    def test_deterministic_under_fixed_seed(self, ontology, kb):
        lines = ["hello", "i want a cheap restaurant in the north", "/quit"]
        a = self._run(ontology, kb, lines, seed=11)
        b = self._run(ontology, kb, lines, seed=11)
        assert a[2] == b[2]
        assert a[0] == b[0]

    def test_transcript_written(self, ontology, kb, tmp_path):
        agent = _chat_agent(ontology)
        path = tmp_path / "transcript.jsonl"
        stdin = io.StringIO("hello\n/quit\n")
        chat(agent, ontology, kb, seed=0, input_stream=stdin,
             output_stream=io.StringIO(), transcript_path=str(path))
        rows = [json.loads(line) for line in path.read_text().splitlines()]
        assert rows and {"speaker", "frame", "utterance"} <= set(rows[0])
