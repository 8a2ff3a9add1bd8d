"""Deterministic seed splitting.

Every random stream is derived from one root seed and a component name:
``SeedSequence([root, crc32(name)])``. Sub-streams nest by joining names
with ``/`` (for example ``"il/episode/17"``).
"""

from __future__ import annotations

import zlib

import numpy as np


def seed_sequence(root: int, name: str) -> np.random.SeedSequence:
    return np.random.SeedSequence([int(root) & 0xFFFFFFFF, zlib.crc32(name.encode("utf-8"))])


def derive_seed(root: int, name: str) -> int:
    """A 32-bit integer seed for ``name`` under ``root``."""
    return int(seed_sequence(root, name).generate_state(1)[0])


def rng_for(root: int, name: str) -> np.random.Generator:
    return np.random.default_rng(seed_sequence(root, name))
