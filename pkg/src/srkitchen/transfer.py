"""Task transfer by retraining only the reward vector ``w``.

With the successor features held fixed, ``Q(s,a) = psi(s,a) . w`` and
``r(s,a) = phi(s,a) . w`` are linear in ``w``, so adapting to a new goal
is a small regression problem. :func:`transfer_w` runs it on imitation
data from the new task. The remaining helpers compute the value-gap bound
for successor-feature transfer and the exact quantities it bounds on small
tabular MDPs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .config import TrainConfig
from .evaluation import SRAgent, evaluate
from .nn import AdamState, adam_step
from .seeding import rng_for
from .sr_model import SRNetwork
from .training import ILDataset, generate_il_dataset, il_train

# --------------------------------------------------------------------------
# w-only fine-tuning


def _features(net, X: np.ndarray, actions: np.ndarray, table: np.ndarray, chunk: int = 512):
    phi, psi = [], []
    for k in range(0, len(X), chunk):
        p = net.predict(X[k : k + chunk].astype(np.float64), table[actions[k : k + chunk]])
        phi.append(p.phi)
        psi.append(p.psi)
    return np.concatenate(phi), np.concatenate(psi)


def transfer_w(
    net: SRNetwork,
    data: ILDataset,
    config: TrainConfig,
    action_table: np.ndarray,
    updates: int | None = None,
    seed: int | None = None,
    invalid_per_state: int = 4,
) -> SRNetwork:
    """Clone ``net`` and fit only ``w`` to imitation data of a new task.

    The loss is the imitation loss without the successor term (which does
    not reach ``w``): reward and Q regressions on the recorded actions plus
    the inapplicable-action regressions used in :func:`il_train`. Since
    ``phi`` and ``psi`` are frozen they are computed once up front.
    """
    new = net.copy()
    updates = config.il_updates if updates is None else updates
    if updates == 0 or len(data) == 0:
        return new
    seed = config.seed if seed is None else seed
    rng = rng_for(seed, "transfer/batches")
    phi, psi = _features(new, data.obs, data.actions, action_table)
    r_t, q_t = data.rewards, data.q_targets

    aux = None
    if config.il_invalid_weight > 0 and data.applicable is not None and data.values is not None:
        pick_rng = rng_for(seed, "transfer/invalid")
        rows, acts = [], []
        for i, app in enumerate(data.applicable):
            bad = np.flatnonzero(~app)
            if len(bad):
                chosen = pick_rng.choice(bad, size=min(invalid_per_state, len(bad)), replace=False)
                rows.extend([i] * len(chosen))
                acts.extend(int(a) for a in chosen)
        if rows:
            rows = np.asarray(rows)
            a_phi, a_psi = _features(new, data.obs[rows], np.asarray(acts), action_table)
            r_inv = data.summary.get("invalid_reward", config.rewards.invalid)
            gamma = data.summary.get("gamma", config.gamma)
            aux = (rows, a_phi, a_psi, np.full(len(rows), float(r_inv)),
                   r_inv + gamma * data.values[rows])

    w = new.params["w"]
    state = AdamState(lr=config.lr)
    B = config.batch_size
    for _ in range(updates):
        idx = rng.integers(len(data), size=B)
        F, P = phi[idx], psi[idx]
        err_r = F @ w - r_t[idx]
        err_q = P @ w - q_t[idx]
        g = (2.0 / B) * (err_r @ F + err_q @ P)
        if aux is not None:
            rows, a_phi, a_psi, a_r, a_q = aux
            j = np.flatnonzero(np.isin(rows, idx))
            if len(j):
                j = rng.choice(j, size=min(B, len(j)), replace=False)
                ar = a_phi[j] @ w - a_r[j]
                aq = a_psi[j] @ w - a_q[j]
                g += config.il_invalid_weight * (2.0 / len(j)) * (ar @ a_phi[j] + aq @ a_psi[j])
        adam_step(new.params, {"w": g}, state)
    return new


def frozen_parameters_equal(a: SRNetwork, b: SRNetwork) -> bool:
    """Bitwise comparison of every parameter except ``w``."""
    return all(
        k == "w" or (a.params[k].shape == b.params[k].shape
                     and a.params[k].tobytes() == b.params[k].tobytes())
        for k in a.params
    )


# --------------------------------------------------------------------------
# learning curves: w-only transfer against training from scratch


@dataclass
class CurvePoint:
    mode: str
    episodes: int
    success_rate: float
    successful_action_rate: float
    mean_len: float

    HEADER = "mode,episodes,success_rate,successful_action_rate,mean_len"

    def csv(self) -> str:
        ml = "" if math.isnan(self.mean_len) else f"{self.mean_len:.6f}"
        return (f"{self.mode},{self.episodes},{self.success_rate:.6f},"
                f"{self.successful_action_rate:.6f},{ml}")


def learning_curve(
    mode: str,
    env,
    config: TrainConfig,
    budgets: Sequence[int],
    source: SRNetwork | None = None,
    data: ILDataset | None = None,
    updates: int = 2000,
    eval_episodes: int = 50,
    seed: int = 0,
    eval_max_steps: int | None = None,
    on_point: Callable[[CurvePoint], None] | None = None,
) -> list[CurvePoint]:
    """Success after training on the first ``k`` demonstration episodes, per ``k``.

    ``mode`` is ``"w"`` (fine-tune ``w`` of ``source``) or ``"scratch"``
    (train a freshly initialised network). Both modes see the same
    demonstrations and the same number of updates at every budget.
    """
    if mode not in ("w", "scratch"):
        raise ValueError("mode must be 'w' or 'scratch'")
    if mode == "w" and source is None:
        raise ValueError("w-only transfer needs a source network")
    if data is None:
        data = generate_il_dataset(env, max(budgets), config.p_random, seed=seed,
                                   gamma=config.gamma, random_pool=config.random_pool,
                                   max_steps=config.il_max_steps, q_targets=config.q_targets)
    table = env.action_features
    points = []
    for k in sorted(budgets):
        part = data.episodes_upto(k)
        if mode == "w":
            net = transfer_w(source, part, config, table, updates=updates, seed=seed)
        else:
            net = SRNetwork(4 * env.frame_dim, env.encoder.internal_dim, table.shape[1],
                            config.model)
            if len(part):
                il_train(net, part, config, table, updates=updates,
                         rng=rng_for(seed, f"transfer/scratch/{k}"))
        rep = evaluate(SRAgent(net, config.eval_epsilon, config.applicable_only), env,
                       eval_episodes, seed=seed + 1, max_steps=eval_max_steps)
        pt = CurvePoint(mode, k, rep.success_rate, rep.successful_action_rate, rep.mean_len)
        points.append(pt)
        if on_point is not None:
            on_point(pt)
    return points


def episodes_to_reach(points: Sequence[CurvePoint], target: float) -> int | None:
    """Smallest budget whose success rate reaches ``target`` (None if never)."""
    for p in sorted(points, key=lambda p: p.episodes):
        if p.success_rate >= target:
            return p.episodes
    return None


def write_curves(path: "str | Path", points: Sequence[CurvePoint]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(CurvePoint.HEADER + "\n")
        for p in points:
            fh.write(p.csv() + "\n")


# --------------------------------------------------------------------------
# the transfer bound


@dataclass(frozen=True)
class TransferBoundInput:
    phi_max: float
    gamma: float
    w_list: tuple
    w_new: np.ndarray
    eps_approx: float = 0.0

    def __post_init__(self):
        if self.phi_max < 0:
            raise ValueError("phi_max must be non-negative")
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError("gamma must lie in [0, 1)")
        if self.eps_approx < 0:
            raise ValueError("eps_approx must be non-negative")
        if len(self.w_list) == 0:
            raise ValueError("need at least one trained task vector")


def transfer_bound(inp: TransferBoundInput) -> float:
    """``2 phi_max / (1 - gamma) * (min_i ||w_i - w_new|| + eps_approx)``."""
    if inp.gamma >= 1.0:
        raise ValueError("gamma must be below 1")
    w_new = np.asarray(inp.w_new, dtype=np.float64)
    dist = min(float(np.linalg.norm(np.asarray(w, dtype=np.float64) - w_new)) for w in inp.w_list)
    return 2.0 * inp.phi_max / (1.0 - inp.gamma) * (dist + inp.eps_approx)


def estimate_phi_max(net, X: np.ndarray, action_table: np.ndarray) -> tuple[float, int]:
    """Largest ``||phi(s,a)||`` over the given observations and all actions.

    Returns the estimate and the number of (state, action) pairs sampled.
    """
    X = np.asarray(X, dtype=np.float64)
    best = 0.0
    for k in range(0, len(X), 256):
        phi, _ = net.predict_all(X[k : k + 256], action_table)
        best = max(best, float(np.linalg.norm(phi, axis=-1).max()))
    return best, len(X) * len(action_table)


# --------------------------------------------------------------------------
# exact dynamic programming on small MDPs


@dataclass
class FeatureMDP:
    """Finite MDP with shared features: ``r_w(s,a) = phi[s,a] . w``."""

    P: np.ndarray  # (S, A, S) transition probabilities
    phi: np.ndarray  # (S, A, d)
    gamma: float

    @property
    def n_states(self) -> int:
        return self.P.shape[0]

    def reward(self, w: np.ndarray) -> np.ndarray:
        return self.phi @ w


def random_feature_mdp(rng: np.random.Generator, n_states: int = 10, n_actions: int = 3,
                       d: int = 4, gamma: float = 0.9) -> FeatureMDP:
    P = rng.random((n_states, n_actions, n_states)) ** 3
    P /= P.sum(axis=-1, keepdims=True)
    phi = rng.uniform(-1.0, 1.0, size=(n_states, n_actions, d))
    return FeatureMDP(P, phi, gamma)


def value_iteration(P: np.ndarray, R: np.ndarray, gamma: float, tol: float = 1e-12,
                    max_iter: int = 100_000) -> np.ndarray:
    """Optimal Q for rewards ``R`` of shape (S, A)."""
    Q = np.zeros_like(R, dtype=np.float64)
    for _ in range(max_iter):
        Q2 = R + gamma * P @ Q.max(axis=1)
        if np.max(np.abs(Q2 - Q)) < tol:
            return Q2
        Q = Q2
    return Q


def policy_q(P: np.ndarray, R: np.ndarray, gamma: float, policy: np.ndarray) -> np.ndarray:
    """Exact Q of a deterministic policy by solving the linear system."""
    S, A = R.shape
    Ppi = P[np.arange(S), policy]  # (S, S)
    v = np.linalg.solve(np.eye(S) - gamma * Ppi, R[np.arange(S), policy])
    return R + gamma * P @ v


def successor_features(mdp: FeatureMDP, policy: np.ndarray) -> np.ndarray:
    """``psi^pi(s,a) = phi(s,a) + gamma * sum_s' P(s'|s,a) psi^pi(s', pi(s'))``."""
    S = mdp.n_states
    Ppi = mdp.P[np.arange(S), policy]
    phi_pi = mdp.phi[np.arange(S), policy]  # (S, d)
    psi_pi = np.linalg.solve(np.eye(S) - mdp.gamma * Ppi, phi_pi)
    return mdp.phi + mdp.gamma * np.einsum("sat,td->sad", mdp.P, psi_pi)


def transfer_gap(mdp: FeatureMDP, w_list: Sequence[np.ndarray], w_new: np.ndarray,
                 noise: Sequence[np.ndarray] | None = None) -> float:
    """``max_{s,a} Q*_new - Q^{pi'}_new`` for the generalised-improvement policy.

    ``pi'(s) = argmax_a max_i Q~_i(s,a)`` where ``Q~_i = psi^{pi_i*} . w_new``
    (plus ``noise[i]`` to model approximation error).
    """
    R_new = mdp.reward(w_new)
    q_star = value_iteration(mdp.P, R_new, mdp.gamma)
    q_tilde = []
    for i, w in enumerate(w_list):
        pi_i = value_iteration(mdp.P, mdp.reward(w), mdp.gamma).argmax(axis=1)
        q = successor_features(mdp, pi_i) @ w_new
        if noise is not None:
            q = q + noise[i]
        q_tilde.append(q)
    pi_new = np.max(q_tilde, axis=0).argmax(axis=1)
    return float(np.max(q_star - policy_q(mdp.P, R_new, mdp.gamma, pi_new)))


__all__ = [
    "CurvePoint", "FeatureMDP", "TransferBoundInput", "episodes_to_reach", "estimate_phi_max",
    "frozen_parameters_equal", "learning_curve", "policy_q", "random_feature_mdp",
    "successor_features", "transfer_bound", "transfer_gap", "transfer_w", "value_iteration",
    "write_curves",
]
