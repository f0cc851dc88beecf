"""
Seeded random streams

A single master seed fans out into named substreams ("data", "svm", "mso",
"verify", "rfe") and per-worker children, so each pipeline stage is reproducible
regardless of which other stages ran or how many threads were used.
"""
from typing import List

import numpy as np

from src.constants import STREAM_IDS


def substream(seed: int, name: str, *index: int) -> np.random.Generator:
    """Generator for the named stream, optionally keyed further by index."""
    if name not in STREAM_IDS:
        raise KeyError(f"unknown random stream: {name}")
    sequence = np.random.SeedSequence(
        entropy=int(seed), spawn_key=(STREAM_IDS[name], *map(int, index))
    )
    return np.random.Generator(np.random.PCG64(sequence))


def child_generators(rng: np.random.Generator, count: int) -> List[np.random.Generator]:
    """Independent children of an existing generator, one per shard/restart."""
    return list(rng.spawn(count))
