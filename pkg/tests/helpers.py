"""Shared fixtures-by-construction for the test suite."""

from __future__ import annotations

from collections import deque
from types import SimpleNamespace

import numpy as np

from srkitchen.domain import Task, TaskLevel, read_scene
from srkitchen.strips import state_to_facts, strips_apply


def tiny_scene_doc(table_capacity: int = 2) -> dict:
    """Four locations, six receptacles, three items; small enough to enumerate."""
    return {
        "schema_version": 1,
        "name": "tiny",
        "locations": [
            {"id": "loc-counter", "heading": 0},
            {"id": "loc-fridge", "heading": 90},
            {"id": "loc-table", "heading": 180},
            {"id": "loc-shelf", "heading": 270},
        ],
        "receptacles": [
            {"id": "counter", "location": "loc-counter", "capacity": 2},
            {"id": "cabinet-1", "location": "loc-counter", "container": True,
             "capacity": 1, "views": [-30]},
            {"id": "fridge", "location": "loc-fridge", "container": True, "capacity": 2},
            {"id": "table", "location": "loc-table", "capacity": table_capacity},
            {"id": "cabinet-2", "location": "loc-shelf", "container": True,
             "capacity": 2, "views": [30]},
            {"id": "stool", "location": "loc-shelf", "capacity": 1},
        ],
        "items": [
            {"id": "apple", "in": "table"},
            {"id": "mug-1", "category": "mug", "in": "cabinet-2"},
            {"id": "mug-2", "category": "mug", "in": "counter"},
        ],
        "decor": ["window"],
        "agent": {"location": "loc-counter"},
    }


def tiny_scene(**kw):
    return read_scene(tiny_scene_doc(**kw))


TINY_TASKS = {
    "easy": Task("easy-fridge", "tiny", TaskLevel.EASY, "open/close fridge", toggle="fridge"),
    "medium": Task(
        "medium-table", "tiny", TaskLevel.MEDIUM, "put two mugs on the table",
        goal=(("in", "mug-1", "table"), ("in", "mug-2", "table")),
    ),
    "hard": Task("hard-apple", "tiny", TaskLevel.HARD, "find apple and put in fridge",
                 goal=(("in", "apple", "fridge"),)),
}


def strips_bfs_cost(scene, state, task, actions, limit: int = 500_000) -> int | None:
    """Minimum plan length by blind BFS over STRIPS fact sets.

    Shares nothing with the planner beyond the grounded operators: states
    are fact sets and transitions come from the operators' add/delete lists.
    """
    goal = set()
    for lit in task.goal:
        goal.add(tuple(lit))
    start = state_to_facts(scene, state)
    if goal <= start:
        return 0
    seen = {start}
    queue = deque([(start, 0)])
    while queue:
        facts, d = queue.popleft()
        for a in actions:
            nxt, ok = strips_apply(a, facts)
            if not ok or nxt in seen:
                continue
            if goal <= nxt:
                return d + 1
            seen.add(nxt)
            queue.append((nxt, d + 1))
        if len(seen) > limit:
            raise RuntimeError("oracle state limit hit")
    return None


class StripsOracle:
    """Exact distance-to-goal over the full reachable fact-set graph.

    The state graph is enumerated once from a set of start states using
    only the grounded STRIPS operators; each goal then gets a reverse
    breadth-first sweep from every state that satisfies it.
    """

    def __init__(self, scene, actions, starts):
        self.scene = scene
        index: dict = {}
        order = []
        queue = deque()
        for st in starts:
            f = state_to_facts(scene, st)
            if f not in index:
                index[f] = len(order)
                order.append(f)
                queue.append(f)
        preds: list[list[int]] = []
        while queue:
            f = queue.popleft()
            k = index[f]
            for a in actions:
                g, ok = strips_apply(a, f)
                if not ok:
                    continue
                if g not in index:
                    index[g] = len(order)
                    order.append(g)
                    queue.append(g)
                j = index[g]
                while len(preds) <= max(j, k):
                    preds.append([])
                preds[j].append(k)
        while len(preds) < len(order):
            preds.append([])
        self.index, self.facts, self.preds = index, order, preds
        self._dist: dict = {}

    def __len__(self):
        return len(self.facts)

    def _distances(self, goal: frozenset) -> list[int]:
        if goal not in self._dist:
            dist = [-1] * len(self.facts)
            queue = deque()
            for k, f in enumerate(self.facts):
                if goal <= f:
                    dist[k] = 0
                    queue.append(k)
            while queue:
                k = queue.popleft()
                for p in self.preds[k]:
                    if dist[p] < 0:
                        dist[p] = dist[k] + 1
                        queue.append(p)
            self._dist[goal] = dist
        return self._dist[goal]

    def cost(self, state, task) -> int | None:
        goal = frozenset(tuple(g) for g in task.goal)
        d = self._distances(goal)[self.index[state_to_facts(self.scene, state)]]
        return None if d < 0 else d


class TabularEnv:
    """Deterministic finite MDP with one-hot observations and actions.

    ``nxt[s, a]`` is the successor state and ``R[s, a]`` the reward. There
    are no terminal states; episodes end by truncation in the caller.
    """

    def __init__(self, nxt, R):
        self.nxt, self.R = np.asarray(nxt), np.asarray(R, dtype=float)
        self.n_states, self.n_actions = self.R.shape
        self.action_features = np.eye(self.n_actions)
        self.state = 0

    @classmethod
    def random(cls, rng, n_states, n_actions):
        return cls(rng.integers(n_states, size=(n_states, n_actions)),
                   rng.uniform(-1.0, 1.0, size=(n_states, n_actions)))

    def obs(self):
        return np.eye(self.n_states)[self.state]

    def reset(self, seed=0):
        self.state = int(np.random.default_rng(seed).integers(self.n_states))
        return self.obs()

    def step(self, a):
        r = self.R[self.state, a]
        self.state = int(self.nxt[self.state, a])
        return self.obs(), r, False, SimpleNamespace(success=False, truncated=False)

    def P(self):
        P = np.zeros((self.n_states, self.n_actions, self.n_states))
        for s in range(self.n_states):
            P[s, np.arange(self.n_actions), self.nxt[s]] = 1.0
        return P


def policy_iteration_q(P, R, gamma):
    """Optimal Q by Howard policy iteration (exact linear solves)."""
    S, A = R.shape
    pi = np.zeros(S, dtype=int)
    while True:
        q = policy_eval_q(P, R, gamma, pi)
        new = q.argmax(axis=1)
        # keep the current action on ties so the loop terminates
        keep = q[np.arange(S), pi] >= q.max(axis=1) - 1e-12
        new[keep] = pi[keep]
        if np.array_equal(new, pi):
            return q
        pi = new


def policy_eval_q(P, R, gamma, pi):
    S = R.shape[0]
    idx = np.arange(S)
    v = np.linalg.solve(np.eye(S) - gamma * P[idx, pi], R[idx, pi])
    return R + gamma * np.einsum("sat,t->sa", P, v)


def gpi_gap(P, phi, gamma, w_list, w_new, noise):
    """Gap between Q* of the new task and Q of the max-over-tasks greedy policy.

    Each source policy is optimal for its own w; its successor features come
    from iterating the policy's feature recursion to convergence.
    """
    S, A, d = phi.shape
    idx = np.arange(S)
    R_new = phi @ w_new
    approx = []
    for w, eps in zip(w_list, noise):
        pi = policy_iteration_q(P, phi @ w, gamma).argmax(axis=1)
        psi = phi.copy()
        for _ in range(5000):
            nxt = phi + gamma * np.einsum("sat,td->sad", P, psi[idx, pi])
            if np.abs(nxt - psi).max() < 1e-13:
                break
            psi = nxt
        approx.append(psi @ w_new + eps)
    pi_new = np.max(approx, axis=0).argmax(axis=1)
    return float(np.max(policy_iteration_q(P, R_new, gamma) - policy_eval_q(P, R_new, gamma, pi_new)))
