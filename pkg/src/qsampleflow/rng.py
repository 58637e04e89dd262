"""Seeded counter-based random streams."""
from __future__ import annotations

import numpy as np


def make_rng(seed) -> np.random.Generator:
    """Philox generator for an integer seed or an existing SeedSequence."""
    if isinstance(seed, np.random.SeedSequence):
        return np.random.Generator(np.random.Philox(seed))
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed))))


def substreams(seed: int, count: int) -> list:
    """Independent per-chunk generators derived from one seed."""
    return [make_rng(s) for s in np.random.SeedSequence(int(seed)).spawn(count)]
