import itertools

import numpy as np
import pytest

from dialoforge.agent import AgentHyperParams, create_agent
from dialoforge.dialogue import (
    AgentAction,
    DialogueState,
    RewardConfig,
    RulePolicy,
    action_space,
    encode_dim,
    run_episode,
)
from dialoforge.ontology import generate_kb, kb_query
from dialoforge.simulator import SimulatorState, UserGoal, UserSimulator


@pytest.fixture
def sim(ontology, kb):
    return UserSimulator(ontology, kb)


def _session(sim, goal):
    return sim.new_session(goal)


class TestSampleGoal:
    def test_sampled_goal_is_feasible(self, sim, kb):
        rng = np.random.default_rng(123)
        for _ in range(50):
            goal = sim.sample_goal(rng)
            matches = kb_query(kb, goal.inform)  # oracle feasibility check
            assert matches
            assert 1 <= len(goal.inform) <= 3
            assert len(goal.request) <= 3

    def test_full_request_set_initializes_pending(self, sim, ontology):
        goal = UserGoal(inform={"area": "north"},
                        request=set(ontology.requestable_slots))
        state = _session(sim, goal)
        assert set(state.pending_requests) == set(ontology.requestable_slots)

    def test_identical_seeds_identical_goals(self, sim):
        a = sim.sample_goal(np.random.default_rng(9))
        b = sim.sample_goal(np.random.default_rng(9))
        assert a == b

    def test_empty_kb_rejected(self, ontology):
        with pytest.raises(ValueError):
            UserSimulator(ontology, []).sample_goal(np.random.default_rng(0))

    def test_infeasible_mode_behind_flag(self, sim, kb):
        rng = np.random.default_rng(77)
        goals = [sim.sample_goal(rng, allow_infeasible=True) for _ in range(100)]
        assert any(not kb_query(kb, g.inform) for g in goals)


class TestRespond:
    def test_request_of_goal_slot_is_answered(self, sim):
        goal = UserGoal(inform={"area": "north"}, request=set())
        state = _session(sim, goal)
        action, state = sim.respond(state, AgentAction("request", slot="area"))
        assert action.intent == "inform" and action.inform == {"area": "north"}
        assert "area" not in state.pending_informs

    def test_violating_offer_reinforms_violated_slot(self, sim, kb):
        goal = UserGoal(inform={"pricerange": "cheap"}, request=set())
        state = _session(sim, goal)
        wrong = next(r for r in kb if r.pricerange != "cheap")
        action, state = sim.respond(state, AgentAction("match_found", record=wrong))
        assert action.intent == "inform"
        assert action.inform == {"pricerange": "cheap"}
        assert state.accepted is False

    def test_satisfying_offer_surfaces_request_then_bye(self, sim, kb):
        goal = UserGoal(inform={"area": "north"}, request={"phone"})
        state = _session(sim, goal)
        record = kb_query(kb, goal.inform)[0]
        action, state = sim.respond(state, AgentAction("match_found", record=record))
        assert action.intent == "request" and action.request == {"phone"}
        action, state = sim.respond(
            state, AgentAction("inform", slot="phone", value=record.phone))
        assert action.intent == "bye" and action.done
        assert state.received == {"phone": record.phone}

    def test_agent_done_yields_bye(self, sim):
        goal = UserGoal(inform={"area": "north"}, request=set())
        action, _ = sim.respond(_session(sim, goal), AgentAction("done"))
        assert action.intent == "bye" and action.done

    def test_respond_is_pure(self, sim, kb):
        goal = UserGoal(inform={"area": "north"}, request={"phone"})
        state = _session(sim, goal)
        snapshot = state.copy()
        sim.respond(state, AgentAction("request", slot="area"))
        assert state == snapshot

    def test_pending_requests_monotone(self, sim, kb, ontology):
        rng = np.random.default_rng(5)
        agent = create_agent("dqn", encode_dim(ontology),
                             len(action_space(ontology)),
                             AgentHyperParams(hidden_size=8), rng)
        agent.epsilon = 1.0  # random walk exercises every action kind
        goal = UserGoal(inform={"area": "north"},
                        request={"phone", "address", "postcode"})
        state = _session(sim, goal)
        sizes = [len(state.pending_requests)]
        action, state = sim.opening(state)
        actions = action_space(ontology)
        for _ in range(30):
            idx = int(rng.integers(len(actions)))
            template = actions[idx]
            from dialoforge.dialogue import apply_agent

            executed = AgentAction(template.kind, template.slot)
            if template.kind == "match_found":
                executed.record = kb_query(kb, goal.inform)[0]
            elif template.kind == "inform":
                executed.value = "x"
            action, state = sim.respond(state, executed, rng)
            sizes.append(len(state.pending_requests))
            if action.done:
                break
        assert all(a >= b for a, b in zip(sizes, sizes[1:]))


class TestCheckSuccess:
    def _completed(self, sim, kb):
        goal = UserGoal(inform={"area": "north"}, request={"phone"})
        record = kb_query(kb, goal.inform)[0]
        state = SimulatorState(goal=goal, pending_informs=[], pending_requests=[],
                               received={"phone": record.phone},
                               offered_record=record, accepted=True)
        final = DialogueState(confirmed={"area": "north"})
        return state, final, record

    def test_success_when_all_conditions_hold(self, sim, kb):
        state, final, _ = self._completed(sim, kb)
        assert sim.check_success(state, final)

    def test_unanswered_request_fails(self, sim, kb):
        state, final, _ = self._completed(sim, kb)
        state.received = {}
        assert not sim.check_success(state, final)

    def test_wrong_area_record_fails_even_with_answers(self, sim, kb):
        state, final, _ = self._completed(sim, kb)
        wrong = next(r for r in kb if r.area != "north")
        state.offered_record = wrong
        assert not kb_query([wrong], {"area": "north"})  # oracle: violates goal
        assert not sim.check_success(state, final)

    def test_extra_confirmed_slot_breaks_exact_match(self, sim, kb):
        state, final, _ = self._completed(sim, kb)
        final.confirmed["food"] = "thai"
        assert not sim.check_success(state, final)


class TestReplayDeterminism:
    def test_same_seed_reproduces_transcript(self, ontology, kb):
        sim = UserSimulator(ontology, kb)
        results = []
        for _ in range(2):
            rng = np.random.default_rng(31)
            agent = create_agent("dqn", encode_dim(ontology),
                                 len(action_space(ontology)),
                                 AgentHyperParams(hidden_size=8), rng)
            agent.epsilon = 1.0
            results.append(run_episode(agent, sim, RewardConfig(), rng))
        assert results[0].transcript == results[1].transcript

    def test_noise_mode_changes_transcripts(self, ontology, kb):
        noisy = UserSimulator(ontology, kb, noise_rate=0.8)
        rng = np.random.default_rng(2)
        goal = UserGoal(inform={"area": "north", "food": "thai"}, request=set())
        state = noisy.new_session(goal)
        seen = set()
        for _ in range(40):
            action, _ = noisy.respond(state, AgentAction("request", slot="area"),
                                      rng)
            seen.add(action.inform.get("area"))
        assert len(seen) > 1  # corrupted values appear


def test_warmup_policy_bound_exhaustive_on_15_record_kb(ontology):
    """The rule-based agent succeeds within (|constraints| + |requests| + 2)
    agent turns for every goal shape on a 15-record KB."""
    kb = generate_kb(ontology, 3, 15)
    sim = UserSimulator(ontology, kb)
    policy = RulePolicy(ontology, action_space(ontology))
    config = RewardConfig(max_turns=60)
    rng = np.random.default_rng(0)
    agent = create_agent("dqn", encode_dim(ontology), len(action_space(ontology)),
                         AgentHyperParams(hidden_size=8), rng)

    informables = ontology.informable_slots
    requestables = ontology.requestable_slots
    checked = 0
    for record in kb:
        inform_subsets = [c for size in (1, 2, 3)
                          for c in itertools.combinations(informables, size)]
        for inform_slots in inform_subsets:
            inform = {s: record.get(s) for s in inform_slots}
            request_pool = [s for s in requestables if s not in inform]
            request_subsets = [c for size in (0, 1, len(request_pool))
                               for c in itertools.combinations(request_pool, size)]
            for request in set(request_subsets):
                for book in (None, {"day": "monday"}):
                    goal = UserGoal(inform=dict(inform), request=set(request),
                                    book=book)
                    result = run_episode(agent, sim, config, rng, policy=policy,
                                         goal=goal)
                    agent_turns = sum(1 for t in result.transcript
                                      if t["speaker"] == "agent")
                    bound = len(goal.constraints) + len(goal.request) + 2
                    assert result.success, (goal, result.transcript)
                    assert agent_turns <= bound, (goal, agent_turns, bound)
                    checked += 1
    assert checked > 1000
