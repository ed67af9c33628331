"""Seeded random streams.

Every source of randomness in a run (init, dropout, shuffling, dev split,
synthetic data) draws from its own named substream of one base seed, so adding
draws to one consumer never perturbs the others. Names are hashed with sha256,
not Python's salted hash(), to keep streams stable across processes.
"""

from __future__ import annotations

import hashlib

import numpy as np

__all__ = ["named_rng"]


def _name_key(name: str) -> int:
    digest = hashlib.sha256(name.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def named_rng(seed: int, name: str) -> np.random.Generator:
    """Independent generator for (seed, name)."""
    return np.random.default_rng(np.random.SeedSequence([int(seed) & (2**64 - 1), _name_key(name)]))
