"""Minimal dense-network engine for the workbench's Q-networks.

Two ReLU hidden layers with a linear head, squared-error loss (optionally
masked to a single acted output), exact analytic gradients, and Adam with
global gradient-norm clipping. Everything is float64 numpy; nets are tiny,
so precision beats speed here.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

ACTIVATIONS = ("relu", "linear")

CHECKPOINT_VERSION = 1


@dataclass
class Layer:
    weights: np.ndarray  # [out, in]
    bias: np.ndarray  # [out]
    activation: str


@dataclass
class DenseNet:
    layers: list

    @property
    def input_dim(self):
        return self.layers[0].weights.shape[1]

    @property
    def output_dim(self):
        return self.layers[-1].weights.shape[0]

    def validate(self):
        prev_out = None
        for i, layer in enumerate(self.layers):
            out_dim, in_dim = layer.weights.shape
            if layer.bias.shape != (out_dim,):
                raise ValueError(f"layer {i}: bias shape {layer.bias.shape}")
            if layer.activation not in ACTIVATIONS:
                raise ValueError(f"layer {i}: unknown activation {layer.activation!r}")
            if prev_out is not None and in_dim != prev_out:
                raise ValueError(
                    f"layer {i}: input dim {in_dim} does not chain with {prev_out}"
                )
            if not (np.isfinite(layer.weights).all() and np.isfinite(layer.bias).all()):
                raise ValueError(f"layer {i}: non-finite parameters")
            prev_out = out_dim

    def clone(self):
        return DenseNet(layers=[
            Layer(l.weights.copy(), l.bias.copy(), l.activation) for l in self.layers
        ])


def glorot_uniform(rng, out_dim, in_dim):
    limit = np.sqrt(6.0 / (in_dim + out_dim))
    return rng.uniform(-limit, limit, size=(out_dim, in_dim))


def build_net(widths, activations, rng=None):
    rng = np.random.default_rng(rng)
    layers = [
        Layer(
            weights=glorot_uniform(rng, out_dim, in_dim),
            bias=np.zeros(out_dim),
            activation=act,
        )
        for in_dim, out_dim, act in zip(widths[:-1], widths[1:], activations)
    ]
    net = DenseNet(layers=layers)
    net.validate()
    return net


def build_q_network(input_dim, hidden, n_actions, rng=None):
    """Q-network with widths input -> hidden -> hidden//2 -> n_actions.

    Both hidden layers are ReLU; the output head is linear.
    """
    if input_dim < 1 or n_actions < 1:
        raise ValueError("input_dim and n_actions must be >= 1")
    if hidden < 2:
        raise ValueError("hidden must be >= 2 so the half-size layer is non-empty")
    widths = [input_dim, hidden, hidden // 2, n_actions]
    return build_net(widths, ["relu", "relu", "linear"], rng)


def _activate(z, activation):
    if activation == "relu":
        return np.maximum(z, 0.0)
    return z


def forward_batch(net, xs):
    a = np.asarray(xs, dtype=float)
    if a.shape[-1] != net.input_dim:
        raise ValueError(f"input dim {a.shape[-1]} != {net.input_dim}")
    for layer in net.layers:
        a = _activate(a @ layer.weights.T + layer.bias, layer.activation)
    return a


def forward(net, x):
    return forward_batch(net, np.asarray(x, dtype=float).reshape(1, -1))[0]


def _forward_trace(net, xs):
    """Activations per layer, inputs first, for backpropagation."""
    activations = [np.asarray(xs, dtype=float)]
    for layer in net.layers:
        z = activations[-1] @ layer.weights.T + layer.bias
        activations.append(_activate(z, layer.activation))
    return activations


def _backprop(net, activations, delta):
    """Exact gradients given d(loss)/d(output) rows in ``delta``."""
    grads = [None] * len(net.layers)
    for i in range(len(net.layers) - 1, -1, -1):
        layer = net.layers[i]
        if layer.activation == "relu":
            delta = delta * (activations[i + 1] > 0)
        grads[i] = (delta.T @ activations[i], delta.sum(axis=0))
        if i > 0:
            delta = delta @ layer.weights
    return grads


def mse_grad(net, x, target=None, action_index=None):
    """Per-sample squared-error loss and exact gradients.

    With a full ``target`` vector the loss is the sum of squared errors over
    all outputs; with ``action_index`` only the acted output's squared error
    is minimized (the Q-learning convention). The masked case is identical
    to the full case with targets copied from the prediction elsewhere.
    """
    x = np.asarray(x, dtype=float)
    activations = _forward_trace(net, x.reshape(1, -1))
    pred = activations[-1][0]
    err = np.zeros_like(pred)
    if action_index is not None:
        if not 0 <= action_index < net.output_dim:
            raise ValueError(f"action index {action_index} out of range")
        err[action_index] = pred[action_index] - float(target)
    else:
        target = np.asarray(target, dtype=float)
        if target.shape != pred.shape:
            raise ValueError(f"target shape {target.shape} != {pred.shape}")
        err = pred - target
    loss = float(np.sum(err**2))
    grads = _backprop(net, activations, (2.0 * err).reshape(1, -1))
    return loss, grads


def mse_grad_batch(net, xs, targets, action_indices):
    """Batch-mean masked squared error: mean_i (q_i[a_i] - y_i)^2."""
    xs = np.asarray(xs, dtype=float)
    targets = np.asarray(targets, dtype=float)
    actions = np.asarray(action_indices)
    n = xs.shape[0]
    activations = _forward_trace(net, xs)
    preds = activations[-1]
    err = np.zeros_like(preds)
    rows = np.arange(n)
    err[rows, actions] = preds[rows, actions] - targets
    loss = float(np.sum(err**2) / n)
    grads = _backprop(net, activations, 2.0 * err / n)
    return loss, grads


def net_params(net):
    return [(l.weights, l.bias) for l in net.layers]


@dataclass
class AdamState:
    learning_rate: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    clip_norm: float | None = 1.0
    step: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)

    def validate(self):
        if self.clip_norm is not None and self.clip_norm <= 0:
            raise ValueError("clip_norm must be positive (or None to disable)")
        if self.step < 0:
            raise ValueError("step must be >= 0")


def clip_gradients(grads, clip_norm):
    """Scale gradients so the global L2 norm does not exceed ``clip_norm``."""
    total = np.sqrt(sum(float(np.sum(g**2)) for pair in grads for g in pair))
    if clip_norm is None or total <= clip_norm:
        return grads
    scale = clip_norm / total
    return [(dw * scale, db * scale) for dw, db in grads]


def adam_step(state, params, grads):
    """One Adam update (with bias correction) applied in place to ``params``."""
    state.validate()
    for dw, db in grads:
        if not (np.isfinite(dw).all() and np.isfinite(db).all()):
            raise ValueError("non-finite gradient")
    if not state.m:
        state.m = [(np.zeros_like(w), np.zeros_like(b)) for w, b in params]
        state.v = [(np.zeros_like(w), np.zeros_like(b)) for w, b in params]

    grads = clip_gradients(grads, state.clip_norm)
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    for i, (param_pair, grad_pair) in enumerate(zip(params, grads)):
        new_m, new_v = [], []
        for p, g, m, v in zip(param_pair, grad_pair, state.m[i], state.v[i]):
            m = b1 * m + (1 - b1) * g
            v = b2 * v + (1 - b2) * g**2
            m_hat = m / (1 - b1**t)
            v_hat = v / (1 - b2**t)
            p -= state.learning_rate * m_hat / (np.sqrt(v_hat) + state.eps)
            new_m.append(m)
            new_v.append(v)
        state.m[i] = tuple(new_m)
        state.v[i] = tuple(new_v)
    return params, state


# ---------------------------------------------------------------------------
# Checkpoints

def net_to_dict(net):
    return {
        "layers": [
            {
                "activation": l.activation,
                "weights": l.weights.tolist(),
                "bias": l.bias.tolist(),
            }
            for l in net.layers
        ]
    }


def net_from_dict(obj):
    net = DenseNet(layers=[
        Layer(
            weights=np.asarray(row["weights"], dtype=float),
            bias=np.asarray(row["bias"], dtype=float),
            activation=row["activation"],
        )
        for row in obj["layers"]
    ])
    net.validate()
    return net


def adam_to_dict(state):
    return {
        "learning_rate": state.learning_rate,
        "beta1": state.beta1,
        "beta2": state.beta2,
        "eps": state.eps,
        "clip_norm": state.clip_norm,
        "step": state.step,
        "m": [[m.tolist() for m in pair] for pair in state.m],
        "v": [[v.tolist() for v in pair] for pair in state.v],
    }


def adam_from_dict(obj):
    state = AdamState(
        learning_rate=obj["learning_rate"],
        beta1=obj["beta1"],
        beta2=obj["beta2"],
        eps=obj["eps"],
        clip_norm=obj["clip_norm"],
        step=obj["step"],
        m=[tuple(np.asarray(m, dtype=float) for m in pair) for pair in obj["m"]],
        v=[tuple(np.asarray(v, dtype=float) for v in pair) for pair in obj["v"]],
    )
    state.validate()
    return state


def save_checkpoint(path, net, adam=None, extra=None):
    obj = {"version": CHECKPOINT_VERSION, "net": net_to_dict(net)}
    if adam is not None:
        obj["adam"] = adam_to_dict(adam)
    if extra:
        obj["extra"] = extra
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh)
        fh.write("\n")


def load_checkpoint(path):
    with open(path, encoding="utf-8") as fh:
        obj = json.load(fh)
    if obj.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {obj.get('version')!r}")
    net = net_from_dict(obj["net"])
    adam = adam_from_dict(obj["adam"]) if "adam" in obj else None
    return net, adam, obj.get("extra", {})
