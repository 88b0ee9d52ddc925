"""Counter-based random streams.

Every random draw in the package comes from a Philox generator whose key is
derived from ``(seed, *keys)``.  The same key tuple always reproduces the same
numbers, independent of call order or of how work is split across workers.
"""
from __future__ import annotations

import hashlib

import numpy as np

_ROLES = {"pattern": 1, "increment": 2, "path": 3, "direction": 4, "test": 5}


def _key_int(key) -> int:
    if isinstance(key, str):
        if key in _ROLES:
            return _ROLES[key]
        return int.from_bytes(hashlib.sha256(key.encode()).digest()[:8], "little")
    key = int(key)
    if key < 0:
        raise ValueError("stream keys must be non-negative")
    return key


def stream(seed: int, *keys) -> np.random.Generator:
    """Return an independent generator for the stream named by ``keys``."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(_key_int(k) for k in keys))
    return np.random.Generator(np.random.Philox(ss))


def derive_seed(seed: int, *keys) -> int:
    """Derive a 63-bit child seed, e.g. one per Monte-Carlo path."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(_key_int(k) for k in keys))
    return int(ss.generate_state(2, dtype=np.uint32).view(np.uint64)[0] >> np.uint64(1))
