"""Goal-driven agenda-based user simulator.

The simulator samples a feasible goal from the KB, pursues it with a
deterministic agenda policy, and adjudicates task success by comparing the
agent's final state against the goal. Determinism keeps DQN-vs-DDQN
comparisons attributable to the policy alone; an optional slot-corruption
noise rate exists for robustness experiments.

Agenda decision table (agent action x simulator condition -> user action):

  1. greet                          -> inform next pending constraint
  2. request(s), s in goal          -> inform {s: goal value}
  3. request(s), s not in goal      -> inform next pending constraint (or {})
  4. match_found, record satisfies  -> request first pending, else bye/done
  5. match_found, record violates   -> re-inform the first violated slot
  6. inform(s=v), s was requested   -> record it; request next, else bye/done
  7. inform(s=v), s not requested   -> inform next pending constraint (or {})
  8. done                           -> bye/done

Rows 1, 3, 6 and 7 fall back in the order: pending constraint, pending
request, bye (once a satisfying record was offered), empty inform.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .ontology import kb_query


@dataclass
class UserGoal:
    inform: dict
    request: set
    book: dict | None = None

    @property
    def constraints(self):
        merged = dict(self.inform)
        if self.book:
            merged.update(self.book)
        return merged


@dataclass
class UserAction:
    intent: str
    inform: dict = field(default_factory=dict)
    request: set = field(default_factory=set)
    done: bool = False


@dataclass
class SimulatorState:
    goal: UserGoal
    pending_informs: list
    pending_requests: list
    received: dict = field(default_factory=dict)
    offered_record: object = None
    accepted: bool = False

    def copy(self):
        return SimulatorState(
            goal=self.goal,
            pending_informs=list(self.pending_informs),
            pending_requests=list(self.pending_requests),
            received=dict(self.received),
            offered_record=self.offered_record,
            accepted=self.accepted,
        )


def _matches(record, constraints):
    return all(record.get(s).lower() == str(v).lower() for s, v in constraints.items())


class UserSimulator:
    def __init__(self, ontology, kb, noise_rate=0.0):
        self.ontology = ontology
        self.kb = kb
        self.noise_rate = noise_rate

    # -- goal sampling ------------------------------------------------------

    def sample_goal(self, rng, book_prob=0.25, allow_infeasible=False):
        """Uniformly pick a KB record; take 1-3 of its informable values as
        constraints and 0-3 requestables as requests. Feasible by construction
        unless ``allow_infeasible`` draws constraint values independently."""
        if not self.kb:
            raise ValueError("cannot sample a goal from an empty KB")
        record = self.kb[int(rng.integers(len(self.kb)))]
        informables = list(self.ontology.informable_slots)
        n_inform = int(rng.integers(1, min(3, len(informables)) + 1))
        slots = [informables[i] for i in rng.choice(len(informables), size=n_inform,
                                                    replace=False)]
        if allow_infeasible:
            inform = {s: str(rng.choice(self.ontology.values(s))) for s in slots}
        else:
            inform = {s: record.get(s) for s in slots}

        candidates = [s for s in self.ontology.requestable_slots if s not in inform]
        n_request = int(rng.integers(0, min(3, len(candidates)) + 1))
        request = {candidates[i]
                   for i in rng.choice(len(candidates), size=n_request, replace=False)}

        book = None
        if self.ontology.book_slots and rng.random() < book_prob:
            n_book = int(rng.integers(1, min(2, len(self.ontology.book_slots)) + 1))
            chosen = rng.choice(len(self.ontology.book_slots), size=n_book,
                                replace=False)
            book = {self.ontology.book_slots[i]:
                    str(rng.choice(self.ontology.values(self.ontology.book_slots[i])))
                    for i in chosen}

        goal = UserGoal(inform=inform, request=request, book=book)
        if not allow_infeasible:
            assert kb_query(self.kb, goal.inform), "sampled goal must be feasible"
        return goal

    def new_session(self, goal):
        constraints = goal.constraints
        order = [s for s in self.ontology.constraint_slots if s in constraints]
        requests = [s for s in self.ontology.requestable_slots if s in goal.request]
        return SimulatorState(goal=goal, pending_informs=order,
                              pending_requests=requests)

    # -- turn policy --------------------------------------------------------

    def opening(self, sim, rng=None):
        """The user opens by stating their first constraint."""
        sim = sim.copy()
        return self._inform_next(sim, rng), sim

    def respond(self, sim, agent_action, rng=None):
        """Deterministic agenda response; pure in (state, action, rng stream)."""
        sim = sim.copy()
        kind = agent_action.kind

        if kind == "done":
            return UserAction(intent="bye", done=True), sim

        if kind == "request":
            slot = agent_action.slot
            constraints = sim.goal.constraints
            if slot in constraints:
                if slot in sim.pending_informs:
                    sim.pending_informs.remove(slot)
                value = self._maybe_corrupt(slot, constraints[slot], rng)
                return UserAction(intent="inform", inform={slot: value}), sim
            return self._fallback(sim, rng), sim

        if kind == "match_found":
            record = agent_action.record
            if record is not None:
                sim.offered_record = record
            if record is not None and _matches(record, sim.goal.inform):
                sim.accepted = True
                if sim.pending_requests:
                    return UserAction(intent="request",
                                      request={sim.pending_requests[0]}), sim
                return UserAction(intent="bye", done=True), sim
            violated = self._first_violation(record, sim)
            if violated is not None:
                if violated in sim.pending_informs:
                    sim.pending_informs.remove(violated)
                value = self._maybe_corrupt(violated, sim.goal.inform[violated], rng)
                return UserAction(intent="inform", inform={violated: value}), sim
            return self._fallback(sim, rng), sim

        if kind == "inform":
            slot = agent_action.slot
            value = agent_action.value
            if slot in sim.pending_requests and value is not None:
                sim.pending_requests.remove(slot)
                sim.received[slot] = value
                if sim.pending_requests:
                    return UserAction(intent="request",
                                      request={sim.pending_requests[0]}), sim
                if sim.accepted:
                    return UserAction(intent="bye", done=True), sim
            return self._fallback(sim, rng), sim

        # greet and anything else
        return self._fallback(sim, rng), sim

    def _fallback(self, sim, rng):
        if sim.pending_informs:
            return self._inform_next(sim, rng)
        if sim.pending_requests:
            return UserAction(intent="request", request={sim.pending_requests[0]})
        if sim.accepted:
            return UserAction(intent="bye", done=True)
        return UserAction(intent="inform")

    def _inform_next(self, sim, rng):
        slot = sim.pending_informs.pop(0)
        value = self._maybe_corrupt(slot, sim.goal.constraints[slot], rng)
        return UserAction(intent="inform", inform={slot: value})

    def _first_violation(self, record, sim):
        if record is None:
            return next(iter(sim.pending_informs), None) or \
                next(iter(sim.goal.inform), None)
        for slot in self.ontology.informable_slots:
            if slot in sim.goal.inform and \
                    record.get(slot).lower() != sim.goal.inform[slot].lower():
                return slot
        return None

    def _maybe_corrupt(self, slot, value, rng):
        if self.noise_rate > 0.0 and rng is not None and \
                rng.random() < self.noise_rate:
            values = self.ontology.values(slot)
            if values:
                return str(values[int(rng.integers(len(values)))])
        return value

    # -- success adjudication ----------------------------------------------

    def check_success(self, sim, agent_final):
        """Success iff constraints match exactly, a satisfying record was
        offered, and every requested slot was answered with that record's
        true value."""
        goal = sim.goal
        confirmed = {s: str(v).lower() for s, v in agent_final.confirmed.items()}
        wanted = {s: str(v).lower() for s, v in goal.constraints.items()}
        if confirmed != wanted:
            return False
        record = sim.offered_record
        if record is None or not _matches(record, goal.inform):
            return False
        for slot in goal.request:
            got = sim.received.get(slot)
            if got is None or str(got).lower() != record.get(slot).lower():
                return False
        return True
