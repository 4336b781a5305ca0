"""DQN and DDQN dialogue-policy agents.

The two variants share everything except the Bellman bootstrap: DQN bootstraps
from max_a Q_target(s', a); DDQN evaluates the online argmax with the target
network, damping Q-value overestimation. The target copy exists for both
variants; behavior differs only in compute_targets.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict

import numpy as np

from .neuralcore import (
    AdamState,
    build_q_network,
    forward,
    forward_batch,
    mse_grad_batch,
    adam_step,
    net_params,
    net_to_dict,
    net_from_dict,
    adam_to_dict,
    adam_from_dict,
)

VARIANTS = ("dqn", "ddqn")

EPSILON_FLOOR = 0.01
EPSILON_DECAY_FRACTION = 0.8

AGENT_CHECKPOINT_VERSION = 1


class InsufficientBuffer(RuntimeError):
    pass


@dataclass
class Transition:
    state: np.ndarray
    action: int
    reward: float
    next_state: np.ndarray
    terminal: bool


class ReplayBuffer:
    """Fixed-capacity ring with FIFO eviction and uniform sampling."""

    def __init__(self, capacity):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self._items = []
        self._next = 0

    def __len__(self):
        return len(self._items)

    def push(self, transition):
        if len(self._items) < self.capacity:
            self._items.append(transition)
        else:
            self._items[self._next] = transition
            self._next = (self._next + 1) % self.capacity

    def items(self):
        """Contents in insertion order (oldest first)."""
        return self._items[self._next:] + self._items[:self._next]

    def sample(self, n, rng):
        if n > len(self._items):
            raise InsufficientBuffer(
                f"buffer holds {len(self._items)} transitions, need {n}"
            )
        idx = rng.choice(len(self._items), size=n, replace=False)
        return [self._items[i] for i in idx]


@dataclass
class AgentHyperParams:
    learning_rate: float = 5.1e-4
    batch_size: int = 64
    hidden_size: int = 100
    initial_epsilon: float = 0.15678
    gamma: float = 0.9
    target_sync_interval: int = 200
    buffer_capacity: int = 50_000
    clip_norm: float | None = 1.0


@dataclass
class QAgent:
    variant: str
    online: object
    target: object
    buffer: ReplayBuffer
    hyper: AgentHyperParams
    epsilon: float
    adam: AdamState
    episodes_seen: int = 0

    @property
    def n_actions(self):
        return self.online.output_dim

    @property
    def input_dim(self):
        return self.online.input_dim


def create_agent(variant, input_dim, n_actions, hyper=None, rng=None):
    if variant not in VARIANTS:
        raise ValueError(f"variant must be one of {VARIANTS}, got {variant!r}")
    hyper = hyper or AgentHyperParams()
    online = build_q_network(input_dim, hyper.hidden_size, n_actions, rng)
    agent = QAgent(
        variant=variant,
        online=online,
        target=online.clone(),
        buffer=ReplayBuffer(hyper.buffer_capacity),
        hyper=hyper,
        epsilon=hyper.initial_epsilon,
        adam=AdamState(learning_rate=hyper.learning_rate, clip_norm=hyper.clip_norm),
    )
    return agent


def select_action(agent, state, rng):
    """Epsilon-greedy over the online net; ties break to the lowest index."""
    if rng.random() < agent.epsilon:
        return int(rng.integers(agent.n_actions))
    return int(np.argmax(forward(agent.online, state)))


def compute_targets(agent, batch):
    if not batch:
        raise ValueError("batch must be non-empty")
    rewards = np.array([t.reward for t in batch], dtype=float)
    terminal = np.array([t.terminal for t in batch], dtype=bool)
    next_states = np.stack([t.next_state for t in batch])
    q_target = forward_batch(agent.target, next_states)
    if agent.variant == "dqn":
        bootstrap = q_target.max(axis=1)
    else:
        q_online = forward_batch(agent.online, next_states)
        best = q_online.argmax(axis=1)
        bootstrap = q_target[np.arange(len(batch)), best]
    return rewards + np.where(terminal, 0.0, agent.hyper.gamma * bootstrap)


def train_batch(agent, rng):
    """One masked-MSE Adam step on the online network; target untouched."""
    batch = agent.buffer.sample(agent.hyper.batch_size, rng)
    targets = compute_targets(agent, batch)
    states = np.stack([t.state for t in batch])
    actions = np.array([t.action for t in batch], dtype=int)
    loss, grads = mse_grad_batch(agent.online, states, targets, actions)
    adam_step(agent.adam, net_params(agent.online), grads)
    return loss


def sync_target(agent):
    """Make the target parameters a bit-exact copy of the online parameters."""
    agent.target = agent.online.clone()


def epsilon_at(initial, episode, total_episodes):
    """Linear decay from ``initial`` to the floor over the first 80% of training."""
    horizon = max(1.0, EPSILON_DECAY_FRACTION * total_episodes)
    frac = min(1.0, episode / horizon)
    return min(initial, initial + (EPSILON_FLOOR - initial) * frac)


# ---------------------------------------------------------------------------
# Checkpoints

def save_agent(path, agent):
    obj = {
        "version": AGENT_CHECKPOINT_VERSION,
        "variant": agent.variant,
        "hyper": asdict(agent.hyper),
        "epsilon": agent.epsilon,
        "episodes_seen": agent.episodes_seen,
        "online": net_to_dict(agent.online),
        "target": net_to_dict(agent.target),
        "adam": adam_to_dict(agent.adam),
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh)
        fh.write("\n")


def load_agent(path):
    with open(path, encoding="utf-8") as fh:
        obj = json.load(fh)
    if obj.get("version") != AGENT_CHECKPOINT_VERSION:
        raise ValueError(f"unsupported agent checkpoint version {obj.get('version')!r}")
    hyper = AgentHyperParams(**obj["hyper"])
    agent = QAgent(
        variant=obj["variant"],
        online=net_from_dict(obj["online"]),
        target=net_from_dict(obj["target"]),
        buffer=ReplayBuffer(hyper.buffer_capacity),
        hyper=hyper,
        epsilon=obj["epsilon"],
        adam=adam_from_dict(obj["adam"]),
        episodes_seen=obj["episodes_seen"],
    )
    return agent
