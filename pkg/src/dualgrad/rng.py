"""Deterministic RNG substreams.

A master seed plus a stream label derives every substream, so results do not
depend on the order in which independent pieces of work are evaluated.
"""

import hashlib

import numpy as np

_MASK64 = (1 << 64) - 1


def stream(master_seed: int, label: str) -> np.random.Generator:
    """Return a generator deterministically derived from (master_seed, label)."""
    salt = int.from_bytes(hashlib.sha256(label.encode("utf-8")).digest()[:8], "little")
    return np.random.default_rng(np.random.SeedSequence([master_seed & _MASK64, salt]))
