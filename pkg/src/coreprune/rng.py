"""
Seed derivation for every randomized stage of the pipeline.

Each stage gets its own generator, keyed by the root seed plus a chain of
labels (stage name, dataset name, core level, ...).  Generators are
counter-based (Philox), so a stage's stream never depends on how many
draws another stage consumed.
"""

from __future__ import annotations

import hashlib

import numpy as np

MASK64 = (1 << 64) - 1


def derive_seed(seed: int, *labels: object) -> int:
    """Derive a 64-bit child seed from a root seed and a chain of labels."""
    if not 0 <= seed <= MASK64:
        raise ValueError(f"seed must be an unsigned 64-bit integer, got {seed}")
    h = hashlib.sha256(str(seed).encode())
    for label in labels:
        h.update(b"\x1f")
        h.update(str(label).encode())
    return int.from_bytes(h.digest()[:8], "little")


def make_rng(seed: int, *labels: object) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(derive_seed(seed, *labels)))
