"""Episodic MDP over a kitchen scene with symbolic observations."""

from __future__ import annotations

import io
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .domain import (
    INVENTORY,
    NOTHING,
    ActionType,
    GroundedAction,
    SceneSpec,
    Task,
    TaskLevel,
    WorldState,
    apply_action,
    goal_satisfied,
    randomize_scene,
)
from .strips import scene_actions

HISTORY = 4
MAX_EPISODE_STEPS = 5000
N_TYPES = len(ActionType)


class EnvUsageError(RuntimeError):
    """The environment was driven outside its protocol."""


@dataclass(frozen=True)
class RewardConfig:
    """Per-step rewards.

    ``completion``/``invalid``/``step`` apply to easy and medium tasks,
    the ``hard_*`` fields to hard tasks.
    """

    completion: float = 10.0
    invalid: float = -5.0
    step: float = -1.0
    hard_completion: float = 1.0
    hard_invalid: float = -1.0
    hard_step: float = -0.01

    def __post_init__(self):
        if not (self.completion > 0 > self.step and self.hard_completion > 0 > self.hard_step):
            raise ValueError("reward config needs completion > 0 > step")

    @classmethod
    def time_cost(cls) -> "RewardConfig":
        """Alternative profile: small time cost, no separate invalid penalty."""
        return cls(completion=10.0, invalid=-0.01, step=-0.01)

    def for_level(self, level: TaskLevel) -> tuple[float, float, float]:
        """(completion, invalid, step) for a task level."""
        if level is TaskLevel.HARD:
            return self.hard_completion, self.hard_invalid, self.hard_step
        return self.completion, self.invalid, self.step


@dataclass(frozen=True)
class Observation:
    """``frames[0]`` is the current frame, ``frames[1:]`` older ones (zero-padded)."""

    frames: np.ndarray  # (HISTORY, frame_dim) uint8
    internal: np.ndarray  # (n_items + 1 + 4 + 3,) uint8

    def vector(self) -> np.ndarray:
        return np.concatenate([self.frames.ravel(), self.internal])

    def __eq__(self, other):
        return (
            isinstance(other, Observation)
            and np.array_equal(self.frames, other.frames)
            and np.array_equal(self.internal, other.internal)
        )

    __hash__ = None


# --------------------------------------------------------------------------
# encoders


class FrameEncoder:
    """Visible-state features, one block per interactable object.

    Receptacle: visible bit, plus an open bit for containers.
    Item: visible bit, plus a one-hot over (receptacles..., inventory) giving
    where it is. Everything the agent cannot see encodes as zeros.
    """

    def __init__(self, scene: SceneSpec):
        self.scene = scene
        n_rec = len(scene.receptacles)
        offs, k = [], 0
        for r in scene.receptacles:
            offs.append(k)
            k += 2 if r.is_container else 1
        self.rec_offset = offs
        self.item_offset = [k + i * (n_rec + 2) for i in range(len(scene.items))]
        self.dim = k + len(scene.items) * (n_rec + 2)
        self.internal_dim = len(scene.items) + 1 + 4 + 3

    def frame(self, state: WorldState) -> np.ndarray:
        scene = self.scene
        out = np.zeros(self.dim, dtype=np.uint8)
        here = state.agent_location
        rloc = scene.receptacle_location
        n_rec = len(scene.receptacles)
        accessible = [True] * n_rec
        for r, slot in scene.container_slot.items():
            accessible[r] = state.container_open[slot]
        for r in range(n_rec):
            if rloc[r] == here:
                o = self.rec_offset[r]
                out[o] = 1
                if r in scene.container_slot:
                    out[o + 1] = accessible[r]
        for i, r in enumerate(state.item_location):
            o = self.item_offset[i]
            if r == INVENTORY:
                out[o] = 1
                out[o + 1 + n_rec] = 1
            elif rloc[r] == here and accessible[r]:
                out[o] = 1
                out[o + 1 + r] = 1
        return out

    def internal(self, state: WorldState) -> np.ndarray:
        n_items = len(self.scene.items)
        out = np.zeros(self.internal_dim, dtype=np.uint8)
        out[0 if state.held == NOTHING else 1 + state.held] = 1
        out[n_items + 1 + state.agent_rotation] = 1
        out[n_items + 5 + state.agent_viewpoint] = 1
        return out


def encode_action(scene: SceneSpec, action: GroundedAction) -> tuple[np.ndarray, np.ndarray]:
    """(type one-hot of length 7, argument one-hot of length n_objects + 1).

    Argument slot 0 is the null argument; object k of ``scene.objects``
    (receptacles first, then items) sits at slot k + 1.
    """
    if not isinstance(action, GroundedAction):
        raise TypeError(f"expected a GroundedAction, got {type(action).__name__}")
    t = np.zeros(N_TYPES, dtype=np.uint8)
    t[int(action.type)] = 1
    arg = np.zeros(scene.n_objects + 1, dtype=np.uint8)
    if action.argument is None:
        arg[0] = 1
    else:
        try:
            arg[1 + scene.objects.index(action.argument)] = 1
        except ValueError:
            raise KeyError(f"{action.argument!r} is not an object of {scene.name}") from None
    return t, arg


def action_table(scene: SceneSpec, actions: Sequence[GroundedAction]) -> np.ndarray:
    """Stacked [type one-hot | argument one-hot] rows, one per action."""
    rows = [np.concatenate(encode_action(scene, a)) for a in actions]
    return np.asarray(rows, dtype=np.float64)


# --------------------------------------------------------------------------
# logging


class EpisodeLogger:
    """Append-only CSV records: ``episode,step,action,reward,done,success``."""

    FIELDS = ("episode", "step", "action", "reward", "done", "success")

    def __init__(self, path: "str | os.PathLike | io.TextIOBase"):
        if hasattr(path, "write"):
            self._fh, self._own = path, False
        else:
            p = Path(path)
            fresh = not p.exists() or p.stat().st_size == 0
            self._fh, self._own = open(p, "a", encoding="utf-8", newline=""), True
            if fresh:
                self._fh.write(",".join(self.FIELDS) + "\n")
        self.episode = 0

    def record(self, step: int, action: str, reward: float, done: bool, success: bool):
        self._fh.write(
            f"{self.episode},{step},{action},{reward!r},{int(done)},{int(success)}\n"
        )

    def close(self):
        if self._own:
            self._fh.close()


# --------------------------------------------------------------------------
# environment


@dataclass
class StepInfo:
    success: bool
    action_ok: bool
    truncated: bool
    steps: int
    violation: bool = False
    extra: dict = field(default_factory=dict)


class KitchenEnv:
    """One task in one scene as an episodic MDP.

    Rewards follow :class:`RewardConfig`. An episode ends when the goal is
    reached or after ``max_steps`` actions (a failure). Actions are indices
    into :attr:`actions` or the grounded actions themselves.
    """

    def __init__(
        self,
        scene: SceneSpec,
        task: Task,
        rewards: RewardConfig | None = None,
        max_steps: int = MAX_EPISODE_STEPS,
        actions: Sequence[GroundedAction] | None = None,
        logger: EpisodeLogger | None = None,
    ):
        self.scene = scene
        self.task_template = task
        self.rewards = rewards or RewardConfig()
        self.max_steps = max_steps
        self.actions = tuple(actions if actions is not None else scene_actions(scene))
        self.encoder = FrameEncoder(scene)
        self.action_features = action_table(scene, self.actions)
        self.logger = logger
        self.task: Task | None = None
        self.state: WorldState | None = None
        self._frames = np.zeros((HISTORY, self.encoder.dim), dtype=np.uint8)
        self.steps = 0
        self.done = True
        self.reserve = tuple(g[2] for g in task.goal if g[0] == "in")
        self._completion, self._invalid, self._step = self.rewards.for_level(task.level)

    # sizes
    @property
    def n_actions(self) -> int:
        return len(self.actions)

    @property
    def frame_dim(self) -> int:
        return self.encoder.dim

    @property
    def obs_dim(self) -> int:
        return HISTORY * self.encoder.dim + self.encoder.internal_dim

    # protocol
    def sample_state(self, seed: int) -> WorldState:
        """Initial state for ``seed``; redraws while the goal already holds."""
        for attempt in range(1000):
            sub = int(np.random.SeedSequence([seed, attempt]).generate_state(1)[0])
            st = randomize_scene(self.scene, self.task_template.level, sub if attempt else seed,
                                 self.reserve)
            if not goal_satisfied(self.scene, self.task_template.bind(self.scene, st), st):
                return st
        raise RuntimeError(f"could not sample an unsolved start for {self.task_template.id}")

    def reset(self, seed: int = 0, state: WorldState | None = None) -> Observation:
        self.state = self.sample_state(seed) if state is None else state
        self.task = self.task_template.bind(self.scene, self.state)
        self._frames[:] = 0
        self._frames[0] = self.encoder.frame(self.state)
        self.steps = 0
        self.done = False
        if self.logger is not None:
            self.logger.episode += 1
        return self.observation()

    def observation(self) -> Observation:
        return Observation(self._frames.copy(), self.encoder.internal(self.state))

    def resolve(self, action: "int | GroundedAction") -> GroundedAction:
        if isinstance(action, GroundedAction):
            if self.actions[action.ordinal] != action:
                raise KeyError(f"action {action} is not from this scene")
            return action
        a = int(action)
        if not 0 <= a < len(self.actions):
            raise KeyError(f"action id {a} out of range")
        return self.actions[a]

    def step(self, action: "int | GroundedAction"):
        if self.done:
            raise EnvUsageError("step() called on a finished episode; call reset()")
        act = self.resolve(action)
        self.state, ok = apply_action(self.scene, self.state, act)
        self.steps += 1
        success = ok and goal_satisfied(self.scene, self.task, self.state)
        if success:
            reward = self._completion
        elif not ok:
            reward = self._invalid
        else:
            reward = self._step
        truncated = not success and self.steps >= self.max_steps
        self.done = success or truncated
        self._frames[1:] = self._frames[:-1]
        self._frames[0] = self.encoder.frame(self.state)
        if self.logger is not None:
            self.logger.record(self.steps, str(act), reward, self.done, success)
        info = StepInfo(success=success, action_ok=ok, truncated=truncated, steps=self.steps)
        return self.observation(), reward, self.done, info

    def end_episode(self) -> None:
        """Force-terminate (e.g. on a hard-task order violation)."""
        self.done = True

    def snapshot(self) -> tuple:
        """Everything :meth:`restore` needs to rewind to this point."""
        return self.state, self._frames.copy(), self.steps, self.done

    def restore(self, snap: tuple) -> Observation:
        self.state, frames, self.steps, self.done = snap
        self._frames[:] = frames
        return self.observation()
