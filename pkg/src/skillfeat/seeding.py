"""Counter-based seed derivation.

Every stochastic step draws its generator from ``(master_seed, *keys)``, so a
result depends only on what it is (task, repetition, component, condition),
never on evaluation order or on how work is split across processes.
"""
from __future__ import annotations

import hashlib

import numpy as np


def _key_int(key):
    if isinstance(key, (int, np.integer)):
        if key < 0:
            raise ValueError("seed keys must be non-negative")
        return int(key)
    digest = hashlib.sha256(str(key).encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def seed_sequence(master_seed, *keys) -> np.random.SeedSequence:
    return np.random.SeedSequence([_key_int(master_seed)] + [_key_int(k) for k in keys])


def rng_for(master_seed, *keys) -> np.random.Generator:
    return np.random.default_rng(seed_sequence(master_seed, *keys))


def int_seed(master_seed, *keys) -> int:
    return int(seed_sequence(master_seed, *keys).generate_state(1, dtype=np.uint32)[0])
