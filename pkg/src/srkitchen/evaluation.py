"""Policy evaluation, baseline agents, affordance training and ROC-AUC."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .config import TrainConfig
from .domain import TaskLevel, precondition_holds
from .planner import PlanError, replan, search_plan
from .seeding import derive_seed, rng_for
from .training import Optimizer, ReplayBuffer, _vec, applicable_mask, rl_update


# --------------------------------------------------------------------------
# agents


class Agent:
    name = "agent"

    def reset(self, env, rng: np.random.Generator) -> None:
        pass

    def act(self, env, obs, rng: np.random.Generator) -> int:
        raise NotImplementedError


class RandomAgent(Agent):
    """Uniform over every grounded action."""

    name = "random"

    def act(self, env, obs, rng):
        return int(rng.integers(env.n_actions))


class RandomValidAgent(Agent):
    """Uniform over the actions whose preconditions hold."""

    name = "random-valid"

    def act(self, env, obs, rng):
        cands = np.flatnonzero(applicable_mask(env))
        return int(cands[rng.integers(len(cands))])


class PlannerAgent(Agent):
    """Omniscient expert: optimal replanning, or the search plan on hard tasks."""

    name = "planner"

    def __init__(self, hard_search: bool = True):
        self.hard_search = hard_search
        self._script: list | None = None

    def reset(self, env, rng):
        self._script = None
        if self.hard_search and env.task.level is TaskLevel.HARD:
            self._script = list(search_plan(env.scene, env.state, env.task, actions=env.actions))

    def act(self, env, obs, rng):
        if self._script is not None:
            return self._script.pop(0).ordinal
        return replan(env.scene, env.state, env.task, env.actions).actions[0].ordinal


class IdleAgent(Agent):
    """Repeats one fixed action forever (a policy that never progresses)."""

    name = "idle"

    def __init__(self, action: int = 0):
        self.action = action

    def act(self, env, obs, rng):
        return self.action


class SRAgent(Agent):
    """Epsilon-greedy on the network's Q-hat."""

    name = "sr"

    def __init__(self, net, epsilon: float = 0.1, applicable_only: bool = False):
        self.net, self.epsilon, self.applicable_only = net, epsilon, applicable_only

    def act(self, env, obs, rng):
        mask = applicable_mask(env) if self.applicable_only else None
        if rng.random() < self.epsilon:
            if mask is not None:
                cands = np.flatnonzero(mask)
                return int(cands[rng.integers(len(cands))])
            return int(rng.integers(env.n_actions))
        q = self.net.q_all(_vec(obs)[None].astype(np.float64), env.action_features)[0]
        if mask is not None:
            q = np.where(mask, q, -np.inf)
        return int(np.argmax(q))


# --------------------------------------------------------------------------
# evaluation


@dataclass
class EvalReport:
    success_rate: float
    mean_len: float
    std_len: float
    successful_action_rate: float
    episodes: int
    lengths: list = field(default_factory=list, repr=False)
    successes: list = field(default_factory=list, repr=False)

    HEADER = "episodes,success_rate,mean_len,std_len,successful_action_rate"

    def csv_row(self) -> str:
        def f(x):
            return "" if math.isnan(x) else f"{x:.6f}"

        return (f"{self.episodes},{f(self.success_rate)},{f(self.mean_len)},"
                f"{f(self.std_len)},{f(self.successful_action_rate)}")

    def table(self, label: str = "") -> str:
        ml = "-" if math.isnan(self.mean_len) else f"{self.mean_len:.2f} ({self.std_len:.2f})"
        return (f"{label:<20} success {self.success_rate:.2f}   length {ml}   "
                f"successful actions {self.successful_action_rate:.2f}")


def evaluate(agent: Agent, env, n_episodes: int = 100, seed: int = 0,
             max_steps: int | None = None) -> EvalReport:
    """Run ``n_episodes`` episodes; lengths are averaged over successes only."""
    if n_episodes < 1:
        raise ValueError("n_episodes must be at least 1")
    saved = env.max_steps
    if max_steps is not None:
        env.max_steps = max_steps
    lengths, flags = [], []
    ok_actions = total_actions = 0
    try:
        for e in range(n_episodes):
            rng = rng_for(seed, f"eval/agent/{e}")
            obs = env.reset(derive_seed(seed, f"eval/reset/{e}"))
            agent.reset(env, rng)
            while True:
                obs, _, done, info = env.step(agent.act(env, obs, rng))
                total_actions += 1
                ok_actions += int(info.action_ok)
                if done:
                    break
            flags.append(bool(info.success))
            lengths.append(env.steps)
    finally:
        env.max_steps = saved
    good = [n for n, s in zip(lengths, flags) if s]
    return EvalReport(
        success_rate=sum(flags) / n_episodes,
        mean_len=float(np.mean(good)) if good else float("nan"),
        std_len=float(np.std(good)) if good else float("nan"),
        successful_action_rate=ok_actions / total_actions if total_actions else float("nan"),
        episodes=n_episodes,
        lengths=lengths,
        successes=flags,
    )


# --------------------------------------------------------------------------
# ROC-AUC and feature export


class UndefinedAUC(ValueError):
    pass


def roc_auc(scores: Sequence[float], labels: Sequence[bool]) -> float:
    """Probability a random positive outscores a random negative (ties count half)."""
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels, dtype=bool)
    if s.shape != y.shape:
        raise ValueError("scores and labels differ in length")
    n_pos, n_neg = int(y.sum()), int((~y).sum())
    if n_pos == 0 or n_neg == 0:
        raise UndefinedAUC("ROC-AUC needs both classes")
    order = np.argsort(s, kind="mergesort")
    ranks = np.empty(len(s), dtype=np.float64)
    sorted_s = s[order]
    i = 0
    while i < len(s):
        j = i
        while j + 1 < len(s) and sorted_s[j + 1] == sorted_s[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return float((ranks[y].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


@dataclass
class FeatureSample:
    obs: np.ndarray
    action: int
    success: bool
    episode: int = 0
    step: int = 0


def export_features(net, samples: Sequence[FeatureSample], destination: "str | Path",
                    action_table: np.ndarray) -> int:
    """Write ``episode,step,action,success,phi_0..`` rows; returns the row count."""
    if not samples:
        raise ValueError("no samples to export")
    X = np.array([s.obs for s in samples], dtype=np.float64)
    A = action_table[[s.action for s in samples]]
    phi = net.predict(X, A).phi
    with open(destination, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["episode", "step", "action", "success"] + [f"phi_{k}" for k in range(phi.shape[1])])
        for s, row in zip(samples, phi):
            w.writerow([s.episode, s.step, s.action, int(s.success)] + [repr(float(v)) for v in row])
    return len(samples)


def read_features(path: "str | Path") -> tuple[list[tuple[int, int, int, bool]], np.ndarray]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    meta = [(int(r[0]), int(r[1]), int(r[2]), r[3] == "1") for r in rows[1:]]
    phi = np.array([[float(v) for v in r[4:]] for r in rows[1:]], dtype=np.float64)
    return meta, phi


# --------------------------------------------------------------------------
# affordances


def affordance_samples(env, episodes: int, steps: int, seed: int) -> list[FeatureSample]:
    """Random-policy (state, action, success) triples from fresh episodes."""
    rng = rng_for(seed, "affordance/samples")
    out = []
    for e in range(episodes):
        obs = env.reset(derive_seed(seed, f"affordance/samples/{e}"))
        for t in range(steps):
            a = int(rng.integers(env.n_actions))
            ok = precondition_holds(env.scene, env.state, env.actions[a])
            out.append(FeatureSample(_vec(obs).astype(np.uint8), a, ok, e, t))
            obs, _, done, _ = env.step(a)
            if done:
                break
    return out


def affordance_train(net, env, config: TrainConfig, episodes: int | None = None,
                     seed: int | None = None, buffer: ReplayBuffer | None = None):
    """Fit the reward branch to +1 (action succeeded) / -1 (failed) under a random policy."""
    episodes = config.affordance_episodes if episodes is None else episodes
    seed = config.seed if seed is None else seed
    act_rng = rng_for(seed, "affordance/act")
    batch_rng = rng_for(seed, "affordance/batch")
    opt = Optimizer(config.optimizer, config.lr)
    buf = buffer if buffer is not None else ReplayBuffer(config.buffer_size)
    table = env.action_features
    for ep in range(episodes):
        x = _vec(env.reset(derive_seed(seed, f"affordance/reset/{ep}")))
        for _ in range(config.affordance_steps):
            a = int(act_rng.integers(env.n_actions))
            obs2, _, done, info = env.step(a)
            x2 = _vec(obs2)
            buf.push(x, a, 1.0 if info.action_ok else -1.0, x2, bool(done))
            x = x2
            if len(buf) >= config.batch_size:
                rl_update(net, net, buf.sample(config.batch_size, batch_rng), 0.0, opt, table,
                          which="reward")
            if done:
                break
    return net


def affordance_auc(net, samples: Iterable[FeatureSample], action_table: np.ndarray) -> float:
    samples = list(samples)
    X = np.array([s.obs for s in samples], dtype=np.float64)
    A = action_table[[s.action for s in samples]]
    return roc_auc(net.predict(X, A).r_hat, [s.success for s in samples])


__all__ = [
    "Agent", "EvalReport", "FeatureSample", "IdleAgent", "PlannerAgent", "RandomAgent",
    "RandomValidAgent", "SRAgent", "UndefinedAUC", "affordance_auc", "affordance_samples",
    "affordance_train", "evaluate", "export_features", "read_features", "roc_auc", "PlanError",
]
