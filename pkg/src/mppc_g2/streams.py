"""Deterministic random-stream splitting.

Rule: block ``b`` of a run seeded with ``seed`` draws from
``SeedSequence(seed, spawn_key=(b,))``. Each block then spawns one child
per simulation stage, always in the order given by ``STAGES``. A block's
draws therefore depend only on ``(seed, b)``, never on how many workers
ran it or in which order. Stages drawing from separate children keeps runs
that differ in a single parameter (say, the dark rate) coupled in all
other stages.
"""
from __future__ import annotations

import numpy as np

STAGES = ("source", "loss", "pixels", "dark", "crosstalk")

# Trials per block; fixed so that block boundaries never depend on the trial count.
BLOCK_SIZE = 1 << 16

# Leading spawn-key word that keeps derived seeds disjoint from block streams.
_DERIVED_TAG = 0x5EED


def block_seed(seed: int, block: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(seed, spawn_key=(block,))


def stage_generators(seed: int, block: int) -> dict[str, np.random.Generator]:
    children = block_seed(seed, block).spawn(len(STAGES))
    return {name: np.random.default_rng(child) for name, child in zip(STAGES, children)}


def derive_seed(seed: int, *path: int) -> int:
    """A 64-bit child seed for a named sub-task (sweep point, bootstrap, ...)."""
    ss = np.random.SeedSequence(seed, spawn_key=(_DERIVED_TAG, *path))
    return int(ss.generate_state(2, dtype=np.uint32).view(np.uint64)[0])


def block_sizes(trials: int, block_size: int = BLOCK_SIZE) -> list[int]:
    full, rest = divmod(trials, block_size)
    return [block_size] * full + ([rest] if rest else [])
