"""Named random streams derived from one run seed."""

from __future__ import annotations

import numpy as np


def child_seed(seed: int, name: str) -> int:
    """Deterministic 63-bit seed for the stream ``name`` under ``seed``."""
    ss = np.random.SeedSequence(entropy=seed, spawn_key=tuple(name.encode("utf-8")))
    return int(ss.generate_state(2, np.uint64)[0] >> np.uint64(1))


def stream(seed: int, name: str) -> np.random.Generator:
    return np.random.default_rng(child_seed(seed, name))
