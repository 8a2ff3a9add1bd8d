"""Imitation learning from planner demonstrations, and RL fine-tuning.

Imitation data come from rolling the environment forward with the planner
in the loop: at every step the planner proposes the next action from the
true state, a random action replaces it with probability ``p_random``, and
the planner replans from wherever the agent ends up. Each executed step
becomes one sample pairing the agent's observation with the executed
action, its observed reward and the discounted return of the trajectory
that starts with that action and then follows the recomputed plan.

:func:`rl_train` follows the replay-buffer/target-network loop for SR
models: reward regression on the reward branch and a Bellman regression
``psi(s,a) -> phi(s,a) + gamma * psi~(s', a')`` with
``a' = argmax_a psi~(s',a) . w~`` taken on the target network.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Protocol, Sequence

import numpy as np

from .config import TrainConfig
from .domain import TaskLevel, precondition_holds
from .nn import AdamState, adam_step, sgd_step
from .planner import PlanError, replan, search_plan
from .seeding import derive_seed, rng_for

log = logging.getLogger(__name__)


def _vec(obs) -> np.ndarray:
    return obs.vector() if hasattr(obs, "vector") else np.asarray(obs)


def discounted_returns(rewards: Sequence[float], gamma: float) -> np.ndarray:
    """Q-hat targets: ``q[t] = r[t] + gamma * q[t+1]``, ``q[T-1] = r[T-1]``."""
    out = np.zeros(len(rewards), dtype=np.float64)
    acc = 0.0
    for t in range(len(rewards) - 1, -1, -1):
        acc = rewards[t] + gamma * acc
        out[t] = acc
    return out


def plan_return(length: int, completion: float, step: float, gamma: float) -> float:
    """Discounted return of a successful plan of ``length`` actions."""
    if length <= 0:
        return 0.0
    return step * sum(gamma**k for k in range(length - 1)) + completion * gamma ** (length - 1)


def applicable_mask(env) -> np.ndarray:
    scene, state = env.scene, env.state
    return np.array([precondition_holds(scene, state, a) for a in env.actions], dtype=bool)


# --------------------------------------------------------------------------
# imitation data


@dataclass
class ILSample:
    obs: np.ndarray
    action: int
    reward: float
    q_target: float
    next_obs: np.ndarray
    next_applicable: np.ndarray
    done: bool


@dataclass
class ILDataset:
    """Column store of imitation samples."""

    obs: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    q_targets: np.ndarray
    next_obs: np.ndarray
    next_applicable: np.ndarray
    done: np.ndarray
    episode: np.ndarray
    applicable: np.ndarray | None = None  # (N, n_actions) mask at obs
    values: np.ndarray | None = None  # expert plan return from obs
    summary: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.actions)

    def __getitem__(self, k: int) -> ILSample:
        return ILSample(self.obs[k], int(self.actions[k]), float(self.rewards[k]),
                        float(self.q_targets[k]), self.next_obs[k], self.next_applicable[k],
                        bool(self.done[k]))

    def take(self, idx) -> "ILDataset":
        def sub(a):
            return None if a is None else a[idx]

        return ILDataset(self.obs[idx], self.actions[idx], self.rewards[idx], self.q_targets[idx],
                         self.next_obs[idx], self.next_applicable[idx], self.done[idx],
                         self.episode[idx], sub(self.applicable), sub(self.values),
                         dict(self.summary))

    def episodes_upto(self, n: int) -> "ILDataset":
        """Samples of the first ``n`` generated episodes."""
        return self.take(np.flatnonzero(self.episode < n))

    def save(self, path: "str | Path") -> None:
        extra = {}
        if self.applicable is not None:
            extra["applicable"] = self.applicable
        if self.values is not None:
            extra["values"] = self.values
        with open(path, "wb") as fh:
            np.savez_compressed(
                fh, obs=self.obs, actions=self.actions, rewards=self.rewards,
                q_targets=self.q_targets, next_obs=self.next_obs,
                next_applicable=self.next_applicable, done=self.done, episode=self.episode,
                summary=np.array(json.dumps(self.summary, sort_keys=True)), **extra,
            )

    @classmethod
    def load(cls, path: "str | Path") -> "ILDataset":
        with np.load(path) as z:
            cols = {k: z[k] for k in z.files if k != "summary"}
            summary = json.loads(str(z["summary"])) if "summary" in z.files else {}
        return cls(**cols, summary=summary)


def generate_il_dataset(
    env,
    episodes: int,
    p_random: float = 0.2,
    seed: int = 0,
    gamma: float = 0.99,
    random_pool: str = "applicable",
    max_steps: int = 200,
    q_targets: str = "plan",
) -> ILDataset:
    """Roll out planner-guided episodes with random off-plan actions.

    Easy and medium tasks replan optimally after every executed action.
    Hard tasks follow the fixed-order search plan computed at reset; a
    successful action that departs from it is recorded as a terminal
    failure, after which the environment is rewound to the state before
    that action and the demonstration continues.
    Instances the planner cannot solve are skipped and counted in
    ``summary["skipped"]``.

    With ``q_targets="plan"`` the Q target of a pair (s, a) is the return of
    the trajectory that takes a and then follows the (re)computed plan to
    the goal: r + gamma * V_plan(s'). With ``"episode"`` it is the
    discounted return of the executed episode, which also pays for the
    random actions taken later.
    """
    if q_targets not in ("plan", "episode"):
        raise ValueError("q_targets must be 'plan' or 'episode'")
    rng = rng_for(seed, "il/actions")
    scene = env.scene
    cols: dict[str, list] = {k: [] for k in
                             ("obs", "actions", "rewards", "next_obs", "next_app", "done", "ep",
                              "app", "value")}
    q_all: list[np.ndarray] = []
    skipped = successes = violations = 0
    n_actions = env.n_actions
    completion, _, step_r = env.rewards.for_level(env.task_template.level)
    kept = 0
    for e in range(episodes):
        obs = env.reset(derive_seed(seed, f"il/reset/{e}"))
        x = _vec(obs).astype(np.uint8)
        hard = env.task.level is TaskLevel.HARD
        script, cursor = None, 0
        if hard:
            try:
                script = list(search_plan(scene, env.state, env.task, actions=env.actions))
            except PlanError:
                skipped += 1
                continue
        rows = []
        ok_episode = True
        for _ in range(max_steps):
            if hard:
                expert, remaining = script[cursor], len(script) - cursor
            else:
                try:
                    todo = replan(scene, env.state, env.task, env.actions).actions
                except PlanError:
                    ok_episode = False
                    break
                expert, remaining = todo[0], len(todo)
            app = applicable_mask(env)
            value = plan_return(remaining, completion, step_r, gamma)
            if p_random > 0 and rng.random() < p_random:
                if random_pool == "all":
                    a = int(rng.integers(n_actions))
                else:
                    cands = np.flatnonzero(app)
                    a = int(cands[rng.integers(len(cands))])
            else:
                a = expert.ordinal
            snap = env.snapshot() if hard else None
            obs2, r, done, info = env.step(a)
            x2 = _vec(obs2).astype(np.uint8)
            terminal = info.success
            if hard and info.action_ok and a != expert.ordinal:
                # the departure is stored as a failed ending, then the
                # demonstration rewinds and carries on with the search
                violations += 1
                rows.append((x, a, r, x2, applicable_mask(env), True, app, value))
                env.restore(snap)
                continue
            if hard and info.action_ok:
                cursor += 1
            rows.append((x, a, r, x2, applicable_mask(env), terminal, app, value))
            x = x2
            if done:
                successes += int(info.success)
                break
        if not ok_episode:
            skipped += 1
            continue
        if not rows:
            continue
        if q_targets == "plan":
            if hard:
                tail = len(script) - cursor
            else:
                try:
                    tail = 0 if rows[-1][5] else replan(scene, env.state, env.task, env.actions).cost
                except PlanError:
                    tail = 0
            v_next = [row[7] for row in rows[1:]] + [plan_return(tail, completion, step_r, gamma)]
            q_all.append(np.array([r_ + (0.0 if d_ else gamma * v_)
                                   for (_, _, r_, _, _, d_, _, _), v_ in zip(rows, v_next)]))
        else:
            q_all.append(discounted_returns([row[2] for row in rows], gamma))
        for x_, a_, r_, x2_, m_, d_, app_, v_ in rows:
            cols["obs"].append(x_)
            cols["actions"].append(a_)
            cols["rewards"].append(r_)
            cols["next_obs"].append(x2_)
            cols["next_app"].append(m_)
            cols["done"].append(d_)
            cols["ep"].append(kept)
            cols["app"].append(app_)
            cols["value"].append(v_)
        kept += 1
    if skipped:
        log.warning("skipped %d unsolvable instances", skipped)
    d = env.obs_dim
    return ILDataset(
        obs=np.array(cols["obs"], dtype=np.uint8).reshape(-1, d),
        actions=np.array(cols["actions"], dtype=np.int32),
        rewards=np.array(cols["rewards"], dtype=np.float64),
        q_targets=np.concatenate(q_all) if q_all else np.zeros(0),
        next_obs=np.array(cols["next_obs"], dtype=np.uint8).reshape(-1, d),
        next_applicable=np.array(cols["next_app"], dtype=bool).reshape(-1, n_actions),
        done=np.array(cols["done"], dtype=bool),
        episode=np.array(cols["ep"], dtype=np.int32),
        applicable=np.array(cols["app"], dtype=bool).reshape(-1, n_actions),
        values=np.array(cols["value"], dtype=np.float64),
        summary={"episodes": kept, "skipped": skipped, "successes": successes,
                 "violations": violations, "gamma": gamma, "q_targets": q_targets,
                 "invalid_reward": env.rewards.for_level(env.task_template.level)[1]},
    )


# --------------------------------------------------------------------------
# optimisation helpers


class Model(Protocol):
    params: dict

    def forward(self, X, A): ...
    def backward(self, d_r=None, d_q=None, d_phi=None, d_psi=None) -> dict: ...
    def predict_all(self, X, A, want_phi: bool = True): ...
    def q_all(self, X, A): ...
    def copy(self): ...


class Optimizer:
    """Adam or plain SGD over a subset of a model's parameters."""

    def __init__(self, kind: str = "adam", lr: float = 1e-4, keys: Sequence[str] | None = None,
                 state: AdamState | None = None):
        self.kind = kind
        self.keys = None if keys is None else set(keys)
        self.adam = state or AdamState(lr=lr)
        self.lr = lr
        if state is not None:
            self.adam.lr = lr

    def step(self, params: dict, grads: dict) -> None:
        if self.keys is not None:
            grads = {k: v for k, v in grads.items() if k in self.keys}
        if self.kind == "adam":
            adam_step(params, grads, self.adam)
        else:
            sgd_step(params, grads, self.lr)


def _finite(*values) -> None:
    for v in values:
        if not np.isfinite(v):
            raise FloatingPointError("loss became non-finite")


def il_update(
    net: Model,
    batch: ILDataset,
    gamma: float,
    opt: Optimizer,
    action_table: np.ndarray,
    sr_weight: float = 1.0,
    q_weight: float = 1.0,
    r_weight: float = 1.0,
    aux: tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray] | None = None,
    aux_weight: float = 1.0,
) -> tuple[float, float, float]:
    """One optimizer step on ``L_r + L_Q + sr_weight * L_SR``; returns the three losses.

    ``L_r`` and ``L_Q`` are mean squared errors. ``L_SR`` is the mean over
    the batch and feature dimensions of ``(psi - (phi + gamma psi'))^2``
    with ``psi'`` taken at the best applicable next action; both ``phi`` and
    ``psi'`` are held fixed.

    ``aux = (rows, actions, r_targets, q_targets)`` adds extra reward and Q
    regressions for other actions at the observations ``batch.obs[rows]``,
    weighted by ``aux_weight`` and averaged like the main terms. They enter
    the gradient only; the returned losses cover the batch itself.
    """
    B = len(batch)
    if B == 0:
        raise ValueError("empty batch")
    X = batch.obs.astype(np.float64)
    A = action_table[batch.actions]
    n_aux = 0 if aux is None else len(aux[0])
    if n_aux:
        X = np.concatenate([X, X[aux[0]]])
        A = np.concatenate([A, action_table[aux[1]]])
    pred = net.forward(X, A)
    if n_aux:
        pred_all, pred = pred, type(pred)(pred.phi[:B], pred.psi[:B], pred.r_hat[:B],
                                          pred.q_hat[:B])
    err_r = pred.r_hat - batch.rewards
    err_q = pred.q_hat - batch.q_targets
    L_r = float(np.mean(err_r**2))
    L_Q = float(np.mean(err_q**2))
    L_SR = 0.0
    d_psi = None
    if sr_weight > 0:
        d = pred.psi.shape[1]
        target = pred.phi.copy()
        live = np.flatnonzero(~batch.done)
        if len(live):
            Xn = batch.next_obs[live].astype(np.float64)
            _, psi_n = net.predict_all(Xn, action_table, want_phi=False)
            q_n = psi_n @ net.params["w"]
            q_n = np.where(batch.next_applicable[live], q_n, -np.inf)
            best = np.argmax(q_n, axis=1)
            target[live] += gamma * psi_n[np.arange(len(live)), best]
        diff = pred.psi - target
        L_SR = float(np.mean(diff**2))
        d_psi = sr_weight * 2.0 * diff / (B * d)
    _finite(L_r, L_Q, L_SR)
    d_r = r_weight * 2.0 * err_r / B if r_weight else None
    d_q = q_weight * 2.0 * err_q / B if q_weight else None
    if n_aux:
        ar = pred_all.r_hat[B:] - aux[2]
        aq = pred_all.q_hat[B:] - aux[3]
        d_r = np.concatenate([d_r if d_r is not None else np.zeros(B),
                              aux_weight * r_weight * 2.0 * ar / n_aux])
        d_q = np.concatenate([d_q if d_q is not None else np.zeros(B),
                              aux_weight * q_weight * 2.0 * aq / n_aux])
        if d_psi is not None:
            d_psi = np.concatenate([d_psi, np.zeros((n_aux, d_psi.shape[1]))])
    grads = net.backward(d_r=d_r, d_q=d_q, d_psi=d_psi)
    opt.step(net.params, grads)
    return L_r, L_Q, L_SR


def invalid_action_targets(batch: ILDataset, rng: np.random.Generator, invalid_reward: float,
                           gamma: float):
    """One random inapplicable action per observation, with its known outcome.

    An inapplicable action changes nothing and pays ``invalid_reward``, so
    its return is ``invalid_reward + gamma * V`` with ``V`` the expert's plan
    return from the same state. Observations where every action applies
    are left out.
    """
    if batch.applicable is None or batch.values is None:
        return None
    bad = ~batch.applicable
    counts = bad.sum(axis=1)
    rows = np.flatnonzero(counts > 0)
    if len(rows) == 0:
        return None
    # k-th inapplicable action of each row, k uniform
    pick = (rng.random(len(rows)) * counts[rows]).astype(np.int64)
    order = np.cumsum(bad[rows], axis=1)
    acts = np.argmax(order > pick[:, None], axis=1)
    r = np.full(len(rows), float(invalid_reward))
    q = r + gamma * batch.values[rows]
    return rows, acts, r, q


def il_train(
    net: Model,
    data: ILDataset,
    config: TrainConfig,
    action_table: np.ndarray,
    updates: int | None = None,
    opt: Optimizer | None = None,
    rng: np.random.Generator | None = None,
    callback: Callable[[int, tuple], None] | None = None,
) -> Optimizer:
    """Minibatch imitation training; returns the optimizer (for resuming)."""
    if len(data) == 0:
        raise ValueError("imitation dataset is empty")
    updates = config.il_updates if updates is None else updates
    opt = opt or Optimizer(config.optimizer, config.lr)
    rng = rng or rng_for(config.seed, "il/batches")
    use_aux = config.il_invalid_weight > 0 and data.applicable is not None
    r_inv = data.summary.get("invalid_reward", config.rewards.invalid)
    for k in range(updates):
        idx = rng.integers(len(data), size=config.batch_size)
        batch = data.take(idx)
        aux = invalid_action_targets(batch, rng, r_inv, config.gamma) if use_aux else None
        losses = il_update(net, batch, config.gamma, opt, action_table, config.sr_weight,
                           aux=aux, aux_weight=config.il_invalid_weight)
        if callback is not None:
            callback(k, losses)
    return opt


# --------------------------------------------------------------------------
# reinforcement learning


class ReplayBuffer:
    """Fixed-capacity ring of transitions; the oldest entry is evicted first."""

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self.size = 0
        self.head = 0
        self.pushed = 0
        self._arrays: dict[str, np.ndarray] | None = None

    def __len__(self):
        return self.size

    def _alloc(self, obs: np.ndarray, mask: np.ndarray | None):
        n = self.capacity
        self._arrays = {
            "obs": np.zeros((n, obs.size), dtype=obs.dtype),
            "action": np.zeros(n, dtype=np.int64),
            "reward": np.zeros(n, dtype=np.float64),
            "next_obs": np.zeros((n, obs.size), dtype=obs.dtype),
            "terminal": np.zeros(n, dtype=bool),
            "order": np.zeros(n, dtype=np.int64),
        }
        if mask is not None:
            self._arrays["next_mask"] = np.zeros((n, mask.size), dtype=bool)

    def push(self, obs, action: int, reward: float, next_obs, terminal: bool,
             next_mask: np.ndarray | None = None) -> None:
        obs = np.asarray(obs)
        if self._arrays is None:
            self._alloc(obs, next_mask)
        a, k = self._arrays, self.head
        a["obs"][k] = obs
        a["action"][k] = action
        a["reward"][k] = reward
        a["next_obs"][k] = next_obs
        a["terminal"][k] = terminal
        a["order"][k] = self.pushed
        if next_mask is not None:
            a["next_mask"][k] = next_mask
        self.head = (self.head + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)
        self.pushed += 1

    def sample(self, n: int, rng: np.random.Generator) -> dict[str, np.ndarray]:
        """Uniform sample (with replacement) of ``n`` stored transitions."""
        if self.size == 0:
            raise ValueError("cannot sample from an empty buffer")
        idx = rng.integers(self.size, size=n)
        return {k: v[idx] for k, v in self._arrays.items()}

    def contents(self) -> dict[str, np.ndarray]:
        """Stored transitions, oldest first."""
        if self._arrays is None:
            return {}
        order = np.argsort(self._arrays["order"][: self.size])
        return {k: v[: self.size][order] for k, v in self._arrays.items()}


def soft_update(target: Model, online: Model, tau: float) -> None:
    """``target <- tau * online + (1 - tau) * target``, in place."""
    if not 0.0 <= tau <= 1.0:
        raise ValueError("tau must lie in [0, 1]")
    for k, v in target.params.items():
        src = online.params[k]
        if src.shape != v.shape:
            raise ValueError(f"shape mismatch for {k}: {src.shape} vs {v.shape}")
        if tau == 1.0:
            v[...] = src
        else:
            v *= 1.0 - tau
            v += tau * src


def epsilon_schedule(episode: int, total: int, start: float = 1.0, end: float = 0.1) -> float:
    """Linear anneal from ``start`` at episode 0 to ``end`` at ``total``; clamped after."""
    if total <= 0:
        return end
    frac = min(max(episode / total, 0.0), 1.0)
    return start + (end - start) * frac


def rl_update(
    net: Model,
    target: Model,
    batch: dict[str, np.ndarray],
    gamma: float,
    opt: Optimizer,
    action_table: np.ndarray,
    which: str = "both",
    target_actions: str = "all",
) -> tuple[float, float]:
    """One step on the reward loss and/or the SR Bellman loss."""
    X = batch["obs"].astype(np.float64)
    A = action_table[batch["action"]]
    pred = net.forward(X, A)
    B = len(X)
    err_r = pred.r_hat - batch["reward"]
    L_r = float(np.mean(err_r**2))
    goal = pred.phi.copy()
    live = np.flatnonzero(~batch["terminal"])
    if len(live) and gamma > 0:
        Xn = batch["next_obs"][live].astype(np.float64)
        _, psi_n = target.predict_all(Xn, action_table, want_phi=False)
        q_n = psi_n @ target.params["w"]
        if target_actions == "applicable" and "next_mask" in batch:
            q_n = np.where(batch["next_mask"][live], q_n, -np.inf)
        best = np.argmax(q_n, axis=1)
        goal[live] += gamma * psi_n[np.arange(len(live)), best]
    diff = pred.psi - goal
    L_sr = float(np.mean(diff**2))
    _finite(L_r, L_sr)
    d_r = 2.0 * err_r / B if which in ("both", "reward") else None
    d_psi = 2.0 * diff / diff.size if which in ("both", "sr") else None
    grads = net.backward(d_r=d_r, d_psi=d_psi)
    opt.step(net.params, grads)
    return L_r, L_sr


@dataclass
class EpisodeMetrics:
    episode: int
    ret: float
    length: int
    success: bool
    epsilon: float

    HEADER = "episode,return,length,success,epsilon"

    def csv(self) -> str:
        return f"{self.episode},{self.ret:.10g},{self.length},{int(self.success)},{self.epsilon:.10g}"


def rl_train(
    net: Model,
    env,
    config: TrainConfig,
    episodes: int | None = None,
    seed: int | None = None,
    opt: Optimizer | None = None,
    on_episode: Callable[[EpisodeMetrics], None] | None = None,
) -> tuple[Model, list[EpisodeMetrics]]:
    """Replay-buffer training of an SR model (updates ``net`` in place)."""
    episodes = config.rl_episodes if episodes is None else episodes
    seed = config.seed if seed is None else seed
    lr = config.rl_lr if config.rl_lr is not None else config.lr
    opt = opt or Optimizer(config.optimizer, lr)
    table = env.action_features
    n_actions = len(table)
    target = net.copy()
    buf = ReplayBuffer(config.buffer_size)
    act_rng = rng_for(seed, "rl/act")
    batch_rng = rng_for(seed, "rl/batch")
    anneal = config.eps_episodes if config.eps_episodes is not None else episodes
    want_mask = config.target_actions == "applicable" or config.applicable_only
    metrics = []
    it = 0
    for ep in range(episodes):
        eps = epsilon_schedule(ep, anneal, config.eps_start, config.eps_end)
        x = _vec(env.reset(derive_seed(seed, f"rl/reset/{ep}")))
        ret, length, success = 0.0, 0, False
        mask = applicable_mask(env) if want_mask else None
        while True:
            if config.applicable_only:
                cands = np.flatnonzero(mask)
            else:
                cands = None
            if act_rng.random() < eps:
                a = int(cands[act_rng.integers(len(cands))]) if cands is not None \
                    else int(act_rng.integers(n_actions))
            else:
                q = net.q_all(x[None].astype(np.float64), table)[0]
                if cands is not None:
                    q = np.where(mask, q, -np.inf)
                a = int(np.argmax(q))
            obs2, r, done, info = env.step(a)
            x2 = _vec(obs2)
            terminal = bool(done and not info.truncated)
            mask = applicable_mask(env) if want_mask else None
            buf.push(x, a, r, x2, terminal, mask)
            ret += r
            length += 1
            if len(buf) >= config.batch_size:
                for _ in range(config.updates_per_step):
                    which = "both"
                    if config.alternate:
                        which = "reward" if it % 2 == 0 else "sr"
                    rl_update(net, target, buf.sample(config.batch_size, batch_rng),
                              config.gamma, opt, table, which, config.target_actions)
                    it += 1
            x = x2
            if done or length >= config.rl_max_steps:
                success = bool(info.success)
                if not done and hasattr(env, "end_episode"):
                    env.end_episode()
                break
        soft_update(target, net, config.tau)
        m = EpisodeMetrics(ep, ret, length, success, eps)
        metrics.append(m)
        if on_episode is not None:
            on_episode(m)
    return net, metrics


# --------------------------------------------------------------------------
# tabular model (one-hot features) for exact checks


class TabularSR:
    """SR model with fixed one-hot phi over (state, action) pairs.

    Observations and action encodings are one-hot vectors; ``psi`` is a
    table of shape (S*A, S*A) and ``w`` a vector of length S*A.
    """

    def __init__(self, n_states: int, n_actions: int, init: float = 0.0):
        self.n_states, self.n_actions = n_states, n_actions
        d = n_states * n_actions
        self.params = {"psi": np.full((d, d), init, dtype=np.float64),
                       "w": np.zeros(d, dtype=np.float64)}
        self._eye = np.eye(d)
        self._cache = None

    @property
    def feature_dim(self) -> int:
        return self.n_states * self.n_actions

    def _index(self, X, A) -> np.ndarray:
        s = np.argmax(np.atleast_2d(X), axis=1)
        a = np.argmax(np.atleast_2d(A), axis=1)
        return s * self.n_actions + a

    def forward(self, X, A):
        from .sr_model import SRPrediction

        idx = self._index(X, A)
        self._cache = idx
        phi = self._eye[idx]
        psi = self.params["psi"][idx]
        w = self.params["w"]
        return SRPrediction(phi, psi, phi @ w, psi @ w)

    predict = forward

    def backward(self, d_r=None, d_q=None, d_phi=None, d_psi=None) -> dict:
        idx = self._cache
        grads = {}
        w = self.params["w"]
        if d_r is not None or d_q is not None:
            gw = np.zeros_like(w)
            if d_r is not None:
                np.add.at(gw, idx, d_r)
            if d_q is not None:
                gw += np.asarray(d_q) @ self.params["psi"][idx]
            grads["w"] = gw
        up = None
        if d_psi is not None:
            up = np.asarray(d_psi, dtype=np.float64)
        if d_q is not None:
            extra = np.asarray(d_q)[:, None] * w
            up = extra if up is None else up + extra
        if up is not None:
            gpsi = np.zeros_like(self.params["psi"])
            np.add.at(gpsi, idx, up)
            grads["psi"] = gpsi
        return grads

    def predict_all(self, X, A, want_phi: bool = True):
        s = np.argmax(np.atleast_2d(X), axis=1)
        acts = np.argmax(np.atleast_2d(A), axis=1)
        idx = s[:, None] * self.n_actions + acts[None, :]
        phi = self._eye[idx] if want_phi else None
        return phi, self.params["psi"][idx]

    def q_all(self, X, A) -> np.ndarray:
        return self.predict_all(X, A, want_phi=False)[1] @ self.params["w"]

    def copy(self) -> "TabularSR":
        new = TabularSR.__new__(TabularSR)
        new.n_states, new.n_actions = self.n_states, self.n_actions
        new.params = {k: v.copy() for k, v in self.params.items()}
        new._eye = self._eye
        new._cache = None
        return new
