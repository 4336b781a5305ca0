"""Hyperparameter-optimization engine: TPE and random samplers, median
pruning, study persistence, and parameter-importance scores.

The TPE sampler splits complete trials into good and bad sets at the
gamma-quantile of final values, fits per-parameter kernel densities l(x)
and g(x), draws candidates from l, and keeps the candidate maximizing the
density ratio. Constants follow common TPE practice and are documented
approximations, not replications of any specific tool.
"""

from __future__ import annotations

import json
import math
import threading
from dataclasses import dataclass, field

import numpy as np

N_STARTUP = 10
GAMMA_SPLIT = 0.25
N_CANDIDATES = 24
# Scott's rule alone collapses once the good trials cluster, freezing the
# sampler off-optimum; a range-relative floor plus a small uniform component
# keeps enough exploration for the sampler to keep improving its incumbent.
BANDWIDTH_FLOOR_FRACTION = 0.1
PRIOR_WEIGHT = 0.2

STATUSES = ("running", "complete", "pruned", "failed")


class TrialPruned(Exception):
    pass


@dataclass
class ParamSpec:
    name: str
    kind: str  # "continuous" | "categorical"
    lo: float | None = None
    hi: float | None = None
    scale: str = "linear"  # "linear" | "log"
    values: tuple = ()

    @classmethod
    def continuous(cls, name, lo, hi, scale="linear"):
        spec = cls(name=name, kind="continuous", lo=lo, hi=hi, scale=scale)
        spec.validate()
        return spec

    @classmethod
    def categorical(cls, name, values):
        spec = cls(name=name, kind="categorical", values=tuple(values))
        spec.validate()
        return spec

    def validate(self):
        if self.kind == "continuous":
            if not self.lo < self.hi:
                raise ValueError(f"{self.name}: lo must be < hi")
            if self.scale == "log" and self.lo <= 0:
                raise ValueError(f"{self.name}: log scale requires lo > 0")
            if self.scale not in ("linear", "log"):
                raise ValueError(f"{self.name}: unknown scale {self.scale!r}")
        elif self.kind == "categorical":
            if len(set(self.values)) != len(self.values) or not self.values:
                raise ValueError(f"{self.name}: categorical values must be distinct")
        else:
            raise ValueError(f"{self.name}: unknown kind {self.kind!r}")

    # sampling-scale helpers (log params are handled in log10 space)
    def to_scale(self, v):
        return math.log10(v) if self.scale == "log" else float(v)

    def from_scale(self, x):
        v = 10.0**x if self.scale == "log" else x
        return float(min(max(v, self.lo), self.hi))

    def sample_uniform(self, rng):
        if self.kind == "categorical":
            return self.values[int(rng.integers(len(self.values)))]
        lo, hi = self.to_scale(self.lo), self.to_scale(self.hi)
        return self.from_scale(float(rng.uniform(lo, hi)))

    def contains(self, value):
        if self.kind == "categorical":
            return value in self.values
        return self.lo <= value <= self.hi


@dataclass
class Trial:
    id: int
    params: dict
    intermediate: list = field(default_factory=list)
    final: float | None = None
    status: str = "running"

    def value_at(self, step):
        for s, v in self.intermediate:
            if s == step:
                return v
        return None

    def report(self, step, value):
        if self.intermediate and step <= self.intermediate[-1][0]:
            raise ValueError("intermediate steps must be strictly increasing")
        self.intermediate.append((step, float(value)))


@dataclass
class Study:
    space: list
    direction: str = "maximize"
    trials: list = field(default_factory=list)
    sampler: str = "tpe"
    seed: int = 0
    name: str = ""

    def validate(self):
        if self.direction not in ("maximize", "minimize"):
            raise ValueError(f"unknown direction {self.direction!r}")
        if self.sampler not in ("tpe", "random"):
            raise ValueError(f"unknown sampler {self.sampler!r}")
        for spec in self.space:
            spec.validate()

    def complete_trials(self):
        return [t for t in self.trials if t.status == "complete"]

    def best_trial(self):
        done = self.complete_trials()
        if not done:
            return None
        key = max if self.direction == "maximize" else min
        return key(done, key=lambda t: t.final)


# ---------------------------------------------------------------------------
# Sampling

def _split_good_bad(study):
    done = sorted(
        study.complete_trials(),
        key=lambda t: t.final,
        reverse=(study.direction == "maximize"),
    )
    n_good = max(1, math.ceil(GAMMA_SPLIT * len(done)))
    return done[:n_good], done[n_good:]


class _Density1D:
    """Gaussian KDE (Scott's-rule bandwidth with a range-relative floor)
    mixed with a uniform exploration component over the clipped support."""

    def __init__(self, points, lo, hi):
        self.lo, self.hi = lo, hi
        self.points = np.asarray(points, dtype=float)
        if len(self.points) == 0:
            self.bandwidth = None  # pure uniform fallback
        else:
            sigma = float(np.std(self.points))
            self.bandwidth = max(
                sigma * len(self.points) ** (-0.2),
                BANDWIDTH_FLOOR_FRACTION * (hi - lo),
            )

    def sample(self, rng):
        if self.bandwidth is None or rng.random() < PRIOR_WEIGHT:
            return float(rng.uniform(self.lo, self.hi))
        center = self.points[int(rng.integers(len(self.points)))]
        return float(np.clip(rng.normal(center, self.bandwidth), self.lo, self.hi))

    def pdf(self, x):
        uniform = 1.0 / (self.hi - self.lo)
        if self.bandwidth is None:
            return uniform
        z = (x - self.points) / self.bandwidth
        vals = np.exp(-0.5 * z**2) / (self.bandwidth * math.sqrt(2 * math.pi))
        return (1 - PRIOR_WEIGHT) * float(np.mean(vals)) + PRIOR_WEIGHT * uniform


class _DensityCat:
    """Laplace-smoothed categorical frequencies."""

    def __init__(self, observed, values):
        self.values = list(values)
        counts = np.array([1.0 + sum(1 for o in observed if o == v)
                           for v in self.values])
        self.probs = counts / counts.sum()

    def sample(self, rng):
        return self.values[int(rng.choice(len(self.values), p=self.probs))]

    def pdf(self, value):
        return float(self.probs[self.values.index(value)])


def _densities(spec, trials):
    if spec.kind == "categorical":
        return _DensityCat([t.params[spec.name] for t in trials], spec.values)
    points = [spec.to_scale(t.params[spec.name]) for t in trials]
    return _Density1D(points, spec.to_scale(spec.lo), spec.to_scale(spec.hi))


def suggest(study, rng):
    """Next parameter set: uniform during startup, then TPE."""
    done = study.complete_trials()
    if study.sampler == "random" or len(done) < N_STARTUP:
        return {spec.name: spec.sample_uniform(rng) for spec in study.space}

    good, bad = _split_good_bad(study)
    best_params, best_score = None, -math.inf
    l_dens = {spec.name: _densities(spec, good) for spec in study.space}
    g_dens = {spec.name: _densities(spec, bad) for spec in study.space}
    for _ in range(N_CANDIDATES):
        candidate, score = {}, 0.0
        for spec in study.space:
            x = l_dens[spec.name].sample(rng)
            score += math.log(l_dens[spec.name].pdf(x)) - \
                math.log(g_dens[spec.name].pdf(x))
            candidate[spec.name] = x if spec.kind == "categorical" \
                else spec.from_scale(x)
        if score > best_score:
            best_params, best_score = candidate, score
    return best_params


# ---------------------------------------------------------------------------
# Pruning

def should_prune(study, trial, step, warmup_steps=0):
    """Prune iff the trial's value at ``step`` is strictly worse than the
    median of completed trials' values at the same step."""
    value = trial.value_at(step)
    if value is None:
        raise ValueError(f"trial {trial.id} reported no value at step {step}")
    if step < warmup_steps:
        return False
    peers = [t.value_at(step) for t in study.complete_trials()]
    peers = [v for v in peers if v is not None]
    if not peers:
        return False
    median = float(np.median(peers))
    if study.direction == "maximize":
        return value < median
    return value > median


# ---------------------------------------------------------------------------
# Study execution

class TrialContext:
    """Handed to objectives for intermediate reporting and pruning."""

    def __init__(self, study, trial, warmup_steps=0):
        self.study = study
        self.trial = trial
        self.warmup_steps = warmup_steps
        self.seed = [study.seed, trial.id, 1]

    def report(self, step, value):
        self.trial.report(step, value)
        if should_prune(self.study, self.trial, step, self.warmup_steps):
            raise TrialPruned()


def trial_rng(study, trial_id):
    return np.random.default_rng([study.seed, trial_id])


def run_study(space, objective, n_trials, seed=0, direction="maximize",
              sampler="tpe", parallelism=1, persist_path=None, study=None,
              warmup_steps=0, name=""):
    """Execute ``n_trials`` new trials with suggest/prune, persisting each.

    ``objective(params, ctx)`` returns the trial's final value and may call
    ``ctx.report(step, value)``; a deterministic objective plus a fixed seed
    makes the whole study reproducible (with ``parallelism`` of 1), including
    across load-and-extend resumption.
    """
    if study is None:
        study = Study(space=list(space), direction=direction, sampler=sampler,
                      seed=seed, name=name)
    study.validate()
    lock = threading.Lock()

    def launch(trial):
        ctx = TrialContext(study, trial, warmup_steps)
        try:
            value = objective(trial.params, ctx)
            trial.final = float(value)
            trial.status = "complete"
        except TrialPruned:
            trial.status = "pruned"
        except Exception:
            trial.status = "failed"

    def next_trial():
        with lock:
            trial_id = len(study.trials)
            params = suggest(study, trial_rng(study, trial_id))
            trial = Trial(id=trial_id, params=params)
            study.trials.append(trial)
        return trial

    if parallelism <= 1:
        for _ in range(n_trials):
            launch(next_trial())
    else:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(max_workers=parallelism) as pool:
            futures = [pool.submit(lambda: launch(next_trial()))
                       for _ in range(n_trials)]
            for f in futures:
                f.result()

    if persist_path:
        save_study(persist_path, study)
    return study


def make_command_objective(base_cmd):
    """Objective that shells out to an external trial runner.

    The command is invoked with ``--params <json> --seed <json>`` appended
    and must print JSON lines: {"step": i, "value": v} per intermediate
    report and one final {"final": v}. On a prune decision the child is
    terminated.
    """
    import subprocess

    def objective(params, ctx):
        cmd = list(base_cmd) + ["--params", json.dumps(params),
                                "--seed", json.dumps(ctx.seed)]
        proc = subprocess.Popen(cmd, stdout=subprocess.PIPE, text=True, bufsize=1)
        final = None
        try:
            for line in proc.stdout:
                line = line.strip()
                if not line:
                    continue
                obj = json.loads(line)
                if "step" in obj:
                    ctx.report(obj["step"], obj["value"])
                elif "final" in obj:
                    final = float(obj["final"])
            code = proc.wait()
            if final is None or code != 0:
                raise RuntimeError(f"objective command failed (exit {code})")
            return final
        except TrialPruned:
            proc.terminate()
            try:
                proc.wait(timeout=5)
            except subprocess.TimeoutExpired:
                proc.kill()
            raise
    return objective


# ---------------------------------------------------------------------------
# Importance

def param_importance(study, min_trials=8):
    """Marginal variance decomposition over per-parameter bins.

    Continuous parameters are binned at the quartiles of their sampled values
    (in sampling scale); categoricals use their natural bins. The between-bin
    variance component (ANOVA estimate, within-bin noise subtracted) is
    normalized so the scores sum to 1.
    """
    done = study.complete_trials()
    if len(done) < min_trials:
        raise ValueError(f"need >= {min_trials} complete trials, have {len(done)}")
    ys = np.array([t.final for t in done], dtype=float)
    raw = {}
    for spec in study.space:
        if spec.kind == "categorical":
            keys = [t.params[spec.name] for t in done]
            groups = [ys[[k == v for k in keys]] for v in spec.values]
        else:
            xs = np.array([spec.to_scale(t.params[spec.name]) for t in done])
            edges = np.quantile(xs, [0.25, 0.5, 0.75])
            idx = np.searchsorted(edges, xs, side="right")
            groups = [ys[idx == b] for b in range(4)]
        groups = [g for g in groups if len(g) > 0]
        k, n = len(groups), len(ys)
        if k < 2:
            raw[spec.name] = 0.0
            continue
        grand = ys.mean()
        ssb = sum(len(g) * (g.mean() - grand) ** 2 for g in groups)
        ssw = sum(((g - g.mean()) ** 2).sum() for g in groups)
        msb = ssb / (k - 1)
        msw = ssw / (n - k) if n > k else 0.0
        raw[spec.name] = max(0.0, (msb - msw) / (n / k))
    total = sum(raw.values())
    if total == 0:
        return {name: 1.0 / len(raw) for name in raw}
    return {name: score / total for name, score in raw.items()}


# ---------------------------------------------------------------------------
# Persistence and space files

def _spec_to_dict(spec):
    if spec.kind == "categorical":
        return {"name": spec.name, "type": "categorical", "choices": list(spec.values)}
    return {"name": spec.name, "type": "float", "low": spec.lo, "high": spec.hi,
            "log": spec.scale == "log"}


def _spec_from_dict(obj):
    if obj["type"] == "categorical":
        return ParamSpec.categorical(obj["name"], obj["choices"])
    scale = "log" if obj.get("log") else "linear"
    return ParamSpec.continuous(obj["name"], obj["low"], obj["high"], scale)


def load_space(path):
    """Space fixture file: {"name", "direction", "params": [...]}."""
    with open(path, encoding="utf-8") as fh:
        obj = json.load(fh)
    specs = [_spec_from_dict(p) for p in obj["params"]]
    return obj.get("name", ""), obj.get("direction", "maximize"), specs


def save_study(path, study):
    with open(path, "w", encoding="utf-8") as fh:
        header = {
            "type": "study",
            "name": study.name,
            "direction": study.direction,
            "sampler": study.sampler,
            "seed": study.seed,
            "space": [_spec_to_dict(s) for s in study.space],
        }
        fh.write(json.dumps(header) + "\n")
        for t in study.trials:
            fh.write(json.dumps({
                "type": "trial",
                "id": t.id,
                "params": t.params,
                "intermediate": [[s, v] for s, v in t.intermediate],
                "final": t.final,
                "status": t.status,
            }) + "\n")


def load_study(path):
    study = None
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            obj = json.loads(line)
            if obj["type"] == "study":
                study = Study(
                    space=[_spec_from_dict(s) for s in obj["space"]],
                    direction=obj["direction"],
                    sampler=obj["sampler"],
                    seed=obj["seed"],
                    name=obj.get("name", ""),
                )
            elif obj["type"] == "trial":
                if study is None:
                    raise ValueError(f"{path}: trial line before study header")
                study.trials.append(Trial(
                    id=obj["id"],
                    params=obj["params"],
                    intermediate=[(s, v) for s, v in obj["intermediate"]],
                    final=obj["final"],
                    status=obj["status"],
                ))
    if study is None:
        raise ValueError(f"{path}: no study header found")
    study.validate()
    return study
