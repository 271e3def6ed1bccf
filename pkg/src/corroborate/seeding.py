"""Labeled, counter-based seed derivation.

Every random stream in the pipeline is keyed by ``(master_seed, *labels)`` so
that the draws of e.g. tree 17 or the message from device A to device B at
tick 30000 do not depend on the order in which anything else ran.
"""

from __future__ import annotations

import hashlib

import numpy as np

_MASK64 = (1 << 64) - 1


def derive_seed(master: int, *labels: object) -> int:
    """Return a 64-bit seed derived from ``master`` and a sequence of labels."""
    key = "\x1f".join([str(int(master) & _MASK64), *map(str, labels)])
    digest = hashlib.blake2b(key.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def rng_for(master: int, *labels: object) -> np.random.Generator:
    return np.random.default_rng(derive_seed(master, *labels))


def uniform(master: int, *labels: object) -> float:
    """A single uniform draw in [0, 1) keyed by the labels (no generator state)."""
    return derive_seed(master, *labels) / 2.0**64
