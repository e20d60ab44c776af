"""Deterministic RNG derivation shared by every stochastic component.

All randomness in a run flows from a single root seed.  Independent
streams (data generation, weight init, per-sample augmentation, dropout)
are derived by hashing the root seed together with a tag and integer
indices, so results never depend on execution order or scheduling.
"""

from __future__ import annotations

import hashlib

import numpy as np

__all__ = ["derive_rng", "derive_seed_sequence", "stream_key"]

_KEY_CACHE: dict[str, int] = {}


def stream_key(tag: str) -> int:
    """Stable 64-bit integer for a stream name (process-independent)."""
    key = _KEY_CACHE.get(tag)
    if key is None:
        key = int.from_bytes(hashlib.sha256(tag.encode("utf-8")).digest()[:8], "big")
        _KEY_CACHE[tag] = key
    return key


def derive_seed_sequence(root_seed: int, *keys: int | str) -> np.random.SeedSequence:
    """SeedSequence for the stream identified by (root_seed, *keys).

    String keys are hashed; integer keys are used as-is, so callers can mix
    a tag with epoch/sample indices: ``derive_seed_sequence(s, "aug", epoch, i)``.
    """
    entropy = [int(root_seed)]
    for k in keys:
        entropy.append(stream_key(k) if isinstance(k, str) else int(k))
    return np.random.SeedSequence(entropy)


def derive_rng(root_seed: int, *keys: int | str) -> np.random.Generator:
    """Generator seeded for the stream identified by (root_seed, *keys)."""
    return np.random.default_rng(derive_seed_sequence(root_seed, *keys))
