"""Deterministic random-stream derivation.

Every random draw in the pipeline flows from one top-level integer seed.
Independent streams are derived by hashing a tag path (module name,
fold, epoch, ...) into a spawn key, so the same seed reproduces a whole
run bit-for-bit while streams stay statistically independent and
insensitive to scheduling order.
"""

from __future__ import annotations

import hashlib

import numpy as np


def _tag_to_int(tag) -> int:
    if isinstance(tag, (int, np.integer)):
        return int(tag) & 0xFFFFFFFF
    digest = hashlib.blake2s(str(tag).encode("utf-8"), digest_size=4).digest()
    return int.from_bytes(digest, "little")


def derive_seed_sequence(seed: int, *tags) -> np.random.SeedSequence:
    return np.random.SeedSequence(seed, spawn_key=tuple(_tag_to_int(t) for t in tags))


def derive_rng(seed: int, *tags) -> np.random.Generator:
    """A Generator for the stream identified by (seed, *tags)."""
    return np.random.default_rng(derive_seed_sequence(seed, *tags))
