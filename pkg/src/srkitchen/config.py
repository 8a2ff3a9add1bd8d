"""Training configuration (JSON)."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .env import RewardConfig
from .sr_model import SRConfig


@dataclass
class TrainConfig:
    """Hyperparameters for imitation and reinforcement learning.

    Desk-scale defaults; the JSON file may override any field. ``rewards``
    and ``model`` are nested objects with the fields of
    :class:`~srkitchen.env.RewardConfig` and :class:`~srkitchen.sr_model.SRConfig`.
    """

    gamma: float = 0.99
    lr: float = 1e-4
    batch_size: int = 32
    optimizer: str = "adam"  # "adam" or "sgd"
    # imitation learning
    il_episodes: int = 400
    il_updates: int = 50_000
    il_max_steps: int = 200
    p_random: float = 0.2
    random_pool: str = "applicable"  # "applicable" or "all"
    q_targets: str = "plan"  # "plan" (planner return after the pair) or "episode"
    sr_weight: float = 1.0
    il_invalid_weight: float = 1.0  # weight of the inapplicable-action regression
    # reinforcement learning
    rl_episodes: int = 2000
    rl_lr: float | None = None
    buffer_size: int = 20_000
    tau: float = 0.1
    eps_start: float = 1.0
    eps_end: float = 0.1
    eps_episodes: int | None = None
    rl_max_steps: int = 500
    updates_per_step: int = 1
    alternate: bool = False
    target_actions: str = "all"  # argmax range for a' in the SR target
    # evaluation
    eval_episodes: int = 100
    eval_epsilon: float = 0.1
    eval_max_steps: int = 5000
    applicable_only: bool = False
    # affordance
    affordance_episodes: int = 1000
    affordance_steps: int = 50
    seed: int = 0
    rewards: RewardConfig = field(default_factory=RewardConfig)
    model: SRConfig = field(default_factory=SRConfig)

    def __post_init__(self):
        if isinstance(self.rewards, dict):
            self.rewards = RewardConfig(**self.rewards)
        if isinstance(self.model, dict):
            self.model = SRConfig(**self.model)
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError("gamma must lie in [0, 1)")
        if self.buffer_size < self.batch_size:
            raise ValueError("buffer_size must be at least batch_size")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError("optimizer must be 'adam' or 'sgd'")
        if self.random_pool not in ("all", "applicable"):
            raise ValueError("random_pool must be 'all' or 'applicable'")
        if self.q_targets not in ("plan", "episode"):
            raise ValueError("q_targets must be 'plan' or 'episode'")
        if self.target_actions not in ("all", "applicable"):
            raise ValueError("target_actions must be 'all' or 'applicable'")
        if not 0.0 <= self.p_random <= 1.0:
            raise ValueError("p_random must lie in [0, 1]")

    @classmethod
    def from_dict(cls, doc: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ValueError(f"unknown config keys: {', '.join(sorted(unknown))}")
        return cls(**doc)

    @classmethod
    def load(cls, path: "str | Path") -> "TrainConfig":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))

    def to_dict(self) -> dict:
        return asdict(self)
