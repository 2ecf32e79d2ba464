"""Index-keyed random streams derived from one root seed.

``stream(seed, 3, 1)`` always yields the same generator, independent of how
many other streams were drawn before it, so parallel or reordered evaluation
reproduces the same numbers.
"""
from __future__ import annotations

import hashlib

import numpy as np


def stream(seed: int, *key: int) -> np.random.Generator:
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.PCG64(ss))


def seed_from_text(text: str) -> int:
    """Stable 63-bit seed from arbitrary text (used for config-hash defaults)."""
    return int.from_bytes(hashlib.sha256(text.encode()).digest()[:8], "big") >> 1
