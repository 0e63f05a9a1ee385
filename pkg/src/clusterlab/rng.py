"""Deterministic random-stream derivation.

A single master seed fans out to independent child streams through stable
hashing, so dataset generation, weight init, and shuffling can each be
re-run in isolation and stimuli can be generated concurrently without
sharing generator state.
"""

from __future__ import annotations

import hashlib

import numpy as np


def child_seed(master_seed: int, *tags) -> int:
    """Derive a 64-bit child seed from a master seed and a tag path."""
    h = hashlib.blake2b(digest_size=8)
    h.update(str(int(master_seed)).encode())
    for tag in tags:
        h.update(b"/")
        h.update(str(tag).encode())
    return int.from_bytes(h.digest(), "little")


def stream(master_seed: int, *tags) -> np.random.Generator:
    """Independent PCG64 stream for the given tag path."""
    return np.random.default_rng(child_seed(master_seed, *tags))
