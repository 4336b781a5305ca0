"""Dialogue-manager harness: tracker, state encoding, reward, training loop.

A "turn" is one utterance by either speaker. The agent's ``done`` action is a
silent hang-up and does not consume a turn; every other action does, as does
every user action. Episode rewards therefore satisfy
``cumulative == per_turn * turns + (success_bonus | failure_penalty)``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict, replace

import numpy as np

from .agent import (
    create_agent,
    select_action,
    sync_target,
    train_batch,
    epsilon_at,
    Transition,
    InsufficientBuffer,
)
from .ontology import kb_query, KB_FIELDS
from .simulator import UserSimulator, UserAction

ACTION_KINDS = ("greet", "request", "inform", "match_found", "done")

KB_BUCKETS = ((0, 0), (1, 1), (2, 5))  # plus an implicit ">5" bucket


@dataclass
class AgentAction:
    kind: str
    slot: str | None = None
    value: str | None = None  # attached when an inform is executed
    record: object = None  # attached when a match_found is executed

    def signature(self):
        return (self.kind, self.slot)


@dataclass
class RewardConfig:
    per_turn: float = -1.0
    success_bonus: float = 40.0
    failure_penalty: float = -20.0
    max_turns: int = 20

    def validate(self):
        if self.per_turn > 0:
            raise ValueError("per_turn must be <= 0")
        if not (self.success_bonus > 0 > self.failure_penalty):
            raise ValueError("need success_bonus > 0 > failure_penalty")


@dataclass
class DialogueState:
    confirmed: dict = field(default_factory=dict)
    asked_by_user: set = field(default_factory=set)
    answered: set = field(default_factory=set)
    last_user: UserAction | None = None
    last_agent: AgentAction | None = None
    offered_record: object = None
    turn: int = 0

    def copy(self):
        return DialogueState(
            confirmed=dict(self.confirmed),
            asked_by_user=set(self.asked_by_user),
            answered=set(self.answered),
            last_user=self.last_user,
            last_agent=self.last_agent,
            offered_record=self.offered_record,
            turn=self.turn,
        )


@dataclass
class EpisodeResult:
    success: bool
    turns: int
    cumulative_reward: float
    transcript: list


def initial_state():
    # The session opens in a greeting context so the intent one-hot is defined.
    return DialogueState(last_user=UserAction(intent="greet"))


def action_space(ontology):
    """Deterministic enumeration of the agent's action templates."""
    actions = [AgentAction("greet")]
    actions += [AgentAction("request", slot=s) for s in ontology.constraint_slots]
    actions += [AgentAction("inform", slot=s) for s in ontology.requestable_slots]
    actions.append(AgentAction("match_found"))
    actions.append(AgentAction("done"))
    return actions


def update_state(state, user):
    """Merge a user action into the tracker; later informs overwrite."""
    state = state.copy()
    state.confirmed.update(user.inform)
    state.asked_by_user.update(user.request)
    state.last_user = user
    state.turn += 1
    return state


def _kb_constraints(state, ontology):
    return {s: v for s, v in state.confirmed.items()
            if s in ontology.informable_slots and s in KB_FIELDS}


def apply_agent(state, template, ontology, kb):
    """Execute an action template against the tracker and the KB.

    Returns the new state and the executed action with its value or record
    attached. ``done`` does not advance the turn counter.
    """
    state = state.copy()
    action = AgentAction(kind=template.kind, slot=template.slot)
    if action.kind == "match_found":
        matches = kb_query(kb, _kb_constraints(state, ontology))
        action.record = matches[0] if matches else None
        state.offered_record = action.record
    elif action.kind == "inform":
        record = state.offered_record
        if record is None:
            matches = kb_query(kb, _kb_constraints(state, ontology))
            record = matches[0] if matches else None
        action.value = record.get(action.slot) if record is not None else None
        if action.slot in state.asked_by_user and action.value is not None:
            state.answered.add(action.slot)
    state.last_agent = action
    if action.kind != "done":
        state.turn += 1
    return state, action


def encode_dim(ontology):
    n_actions = len(action_space(ontology))
    return (
        len(ontology.intents)
        + len(ontology.constraint_slots)
        + 2 * len(ontology.requestable_slots)
        + n_actions + 1
        + len(KB_BUCKETS) + 1
        + 1
    )


def encode_state(state, ontology, kb, max_turns=20):
    """Fixed-length state vector; dimension is a pure function of the ontology."""
    actions = action_space(ontology)
    parts = []

    intent = np.zeros(len(ontology.intents))
    if state.last_user is not None and state.last_user.intent in ontology.intents:
        intent[ontology.intents.index(state.last_user.intent)] = 1.0
    parts.append(intent)

    confirmed = np.array([float(s in state.confirmed)
                          for s in ontology.constraint_slots])
    parts.append(confirmed)

    asked = np.array([float(s in state.asked_by_user)
                      for s in ontology.requestable_slots])
    answered = np.array([float(s in state.answered)
                         for s in ontology.requestable_slots])
    parts.extend([asked, answered])

    last_agent = np.zeros(len(actions) + 1)
    if state.last_agent is None:
        last_agent[-1] = 1.0
    else:
        signatures = [a.signature() for a in actions]
        last_agent[signatures.index(state.last_agent.signature())] = 1.0
    parts.append(last_agent)

    count = len(kb_query(kb, _kb_constraints(state, ontology)))
    bucket = np.zeros(len(KB_BUCKETS) + 1)
    for i, (lo, hi) in enumerate(KB_BUCKETS):
        if lo <= count <= hi:
            bucket[i] = 1.0
            break
    else:
        bucket[-1] = 1.0
    parts.append(bucket)

    parts.append(np.array([state.turn / max_turns]))
    return np.concatenate(parts)


def reward(outcome, config):
    """Reward for one utterance turn; outcome is step, success, or failure."""
    if outcome == "step":
        return config.per_turn
    if outcome == "success":
        return config.per_turn + config.success_bonus
    if outcome == "failure":
        return config.per_turn + config.failure_penalty
    raise ValueError(f"unknown outcome {outcome!r}")


class RulePolicy:
    """Warm-up policy: request unfilled constraint slots in a fixed order,
    offer a match once the user has nothing left to add, then answer."""

    def __init__(self, ontology, actions):
        self.ontology = ontology
        self.actions = actions
        self._index = {a.signature(): i for i, a in enumerate(self.actions)}

    def __call__(self, state):
        unanswered = [s for s in self.ontology.requestable_slots
                      if s in state.asked_by_user and s not in state.answered]
        if state.offered_record is not None and unanswered:
            return self._index[("inform", unanswered[0])]
        if state.offered_record is None:
            user = state.last_user
            exhausted = user is not None and user.intent == "inform" and not user.inform
            wants_answers = user is not None and bool(user.request)
            if exhausted or wants_answers:
                return self._index[("match_found", None)]
            unconfirmed = [s for s in self.ontology.constraint_slots
                           if s not in state.confirmed]
            if unconfirmed:
                return self._index[("request", unconfirmed[0])]
            return self._index[("match_found", None)]
        return self._index[("done", None)]


def run_episode(agent, sim, config, rng, learn=False, policy=None, train=None,
                goal=None):
    """Alternate user and agent turns from the user's opening action.

    ``policy`` overrides action selection (used by the rule-based warm-up);
    ``train`` controls gradient steps separately from transition collection.
    """
    config.validate()
    ontology, kb = sim.ontology, sim.kb
    actions = action_space(ontology)
    if agent.input_dim != encode_dim(ontology):
        raise ValueError(
            f"agent input dim {agent.input_dim} != encoding dim {encode_dim(ontology)}"
        )
    if train is None:
        train = learn

    goal = goal or sim.sample_goal(rng)
    sstate = sim.new_session(goal)
    dstate = initial_state()
    user_action, sstate = sim.opening(sstate, rng)

    transcript = []
    cumulative = 0.0
    pending = 0.0
    prev = None  # (state vector, action index) of the last agent decision
    success = False
    losses = []

    def maybe_train():
        if train and len(agent.buffer) >= agent.hyper.batch_size:
            losses.append(train_batch(agent, rng))

    while True:
        dstate = update_state(dstate, user_action)
        transcript.append({"speaker": "user", "turn": dstate.turn,
                           "intent": user_action.intent,
                           "inform": dict(user_action.inform),
                           "request": sorted(user_action.request),
                           "done": user_action.done})
        terminal = False
        if user_action.done:
            success = sim.check_success(sstate, dstate)
            r = reward("success" if success else "failure", config)
            terminal = True
        elif dstate.turn >= config.max_turns:
            r = reward("failure", config)
            terminal = True
        else:
            r = reward("step", config)
        cumulative += r
        pending += r
        vec = encode_state(dstate, ontology, kb, config.max_turns)
        if terminal:
            if learn and prev is not None:
                agent.buffer.push(Transition(prev[0], prev[1], pending, vec, True))
                maybe_train()
            break

        if learn and prev is not None:
            agent.buffer.push(Transition(prev[0], prev[1], pending, vec, False))
            maybe_train()
        pending = 0.0

        if policy is not None:
            action_idx = policy(dstate)
        else:
            action_idx = select_action(agent, vec, rng)
        dstate, executed = apply_agent(dstate, actions[action_idx], ontology, kb)
        transcript.append({"speaker": "agent", "turn": dstate.turn,
                           "kind": executed.kind, "slot": executed.slot,
                           "value": executed.value,
                           "record": executed.record.name if executed.record else None})

        if executed.kind == "done":
            success = sim.check_success(sstate, dstate)
            r = config.success_bonus if success else config.failure_penalty
            cumulative += r
            pending += r
            if learn:
                agent.buffer.push(Transition(vec, action_idx, pending, vec, True))
                maybe_train()
            break
        if dstate.turn >= config.max_turns:
            r = reward("failure", config)
            cumulative += r
            pending += r
            if learn:
                agent.buffer.push(Transition(vec, action_idx, pending, vec, True))
                maybe_train()
            break
        r = reward("step", config)
        cumulative += r
        pending += r
        user_action, sstate = sim.respond(sstate, executed, rng)
        prev = (vec, action_idx)

    return EpisodeResult(success=success, turns=dstate.turn,
                         cumulative_reward=cumulative, transcript=transcript)


def warm_up(agent, sim, config, rng, n_transitions=1000):
    """Fill the replay buffer with rule-based transitions before training."""
    policy = RulePolicy(sim.ontology, action_space(sim.ontology))
    while len(agent.buffer) < n_transitions:
        run_episode(agent, sim, config, rng, learn=True, train=False, policy=policy)


def evaluate_policy(agent, sim, config, n_episodes, seed):
    """Greedy rollouts on freshly sampled goals; returns the three means."""
    if n_episodes < 1:
        raise ValueError("n_episodes must be >= 1")
    rng = np.random.default_rng(seed)
    saved_epsilon = agent.epsilon
    agent.epsilon = 0.0
    try:
        results = [run_episode(agent, sim, config, rng, learn=False)
                   for _ in range(n_episodes)]
    finally:
        agent.epsilon = saved_epsilon
    return (
        float(np.mean([r.success for r in results])),
        float(np.mean([r.cumulative_reward for r in results])),
        float(np.mean([r.turns for r in results])),
    )


def train_dm(variant, hyper, episodes, seed, measure_every, ontology, kb,
             config=None, warmup_transitions=1000, interim_eval_episodes=100,
             final_eval_episodes=500, book_prob=0.25):
    """Train a DQN or DDQN dialogue manager and report per-window series.

    Every ``measure_every`` episodes the window's training success rate,
    average reward, and average turns are recorded alongside an interim
    greedy evaluation.
    """
    if episodes < measure_every:
        raise ValueError("episodes must be >= measure_every")
    config = config or RewardConfig()
    sim = _BookProbSimulator(ontology, kb, book_prob)
    rng = np.random.default_rng([seed, 0])
    agent = create_agent(variant, encode_dim(ontology),
                         len(action_space(ontology)), hyper, rng)

    warm_up(agent, sim, config, rng, warmup_transitions)

    windows = []
    window_results = []
    for ep in range(episodes):
        agent.epsilon = epsilon_at(hyper.initial_epsilon, ep, episodes)
        window_results.append(run_episode(agent, sim, config, rng, learn=True))
        agent.episodes_seen += 1
        if (ep + 1) % hyper.target_sync_interval == 0:
            sync_target(agent)
        if (ep + 1) % measure_every == 0:
            w = len(windows)
            ev = evaluate_policy(agent, sim, config, interim_eval_episodes,
                                 seed=[seed, 1, w])
            windows.append({
                "episode": ep + 1,
                "success_rate": float(np.mean([r.success for r in window_results])),
                "avg_reward": float(np.mean([r.cumulative_reward
                                             for r in window_results])),
                "avg_turns": float(np.mean([r.turns for r in window_results])),
                "eval_success_rate": ev[0],
                "eval_avg_reward": ev[1],
                "eval_avg_turns": ev[2],
            })
            window_results = []

    final = evaluate_policy(agent, sim, config, final_eval_episodes, seed=[seed, 2])
    report = {
        "variant": variant,
        "hyper": asdict(hyper),
        "seed": seed,
        "episodes": episodes,
        "measure_every": measure_every,
        "final_eval_episodes": final_eval_episodes,
        "windows": windows,
        "final": {"success_rate": final[0], "avg_reward": final[1],
                  "avg_turns": final[2]},
    }
    return report, agent


class _BookProbSimulator(UserSimulator):
    """UserSimulator with a fixed book-slot sampling probability."""

    def __init__(self, ontology, kb, book_prob=0.25, noise_rate=0.0):
        super().__init__(ontology, kb, noise_rate)
        self.book_prob = book_prob

    def sample_goal(self, rng, book_prob=None, allow_infeasible=False):
        p = self.book_prob if book_prob is None else book_prob
        return super().sample_goal(rng, book_prob=p, allow_infeasible=allow_infeasible)


def save_report(path, report):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2)
        fh.write("\n")
