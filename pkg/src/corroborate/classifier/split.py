"""Train/test partitioning: the random window-level split and a session-held-out variant."""

from __future__ import annotations

from collections.abc import Sequence
from typing import TypeVar

import numpy as np

from ..errors import SplitError
from ..seeding import rng_for

T = TypeVar("T")


def _n_test(n: int, test_fraction: float) -> int:
    if not 0 < test_fraction < 1:
        raise SplitError(f"test_fraction must lie in (0, 1), got {test_fraction}")
    if n < 2:
        raise SplitError(f"need at least 2 items to split, got {n}")
    return min(n - 1, max(1, int(round(n * test_fraction))))


def split_train_test(
    items: Sequence[T], test_fraction: float = 0.2, seed: int = 0
) -> tuple[list[T], list[T]]:
    """Random disjoint partition; both halves keep the input order."""
    n = len(items)
    k = _n_test(n, test_fraction)
    perm = rng_for(seed, "split").permutation(n)
    is_test = np.zeros(n, dtype=bool)
    is_test[perm[:k]] = True
    train = [it for it, t in zip(items, is_test) if not t]
    test = [it for it, t in zip(items, is_test) if t]
    return train, test


def split_by_session(windows: Sequence, test_fraction: float = 0.2, seed: int = 0):
    """Hold out whole sessions, stratified by activity.

    Each activity with ``n >= 2`` sessions contributes ``round(n * test_fraction)``
    (clamped to ``1..n-1``) held-out sessions. Returns
    ``(train, test, test_session_ids)``.
    """
    by_label: dict[int, set[str]] = {}
    for w in windows:
        by_label.setdefault(w.label.id, set()).add(w.session_id)
    if sum(len(v) for v in by_label.values()) < 2:
        raise SplitError("session split needs at least 2 sessions")
    if not 0 < test_fraction < 1:
        raise SplitError(f"test_fraction must lie in (0, 1), got {test_fraction}")
    held: set[str] = set()
    for label_id in sorted(by_label):
        ids = sorted(by_label[label_id])
        if len(ids) < 2:
            continue
        k = _n_test(len(ids), test_fraction)
        perm = rng_for(seed, "session-split", label_id).permutation(len(ids))
        held.update(ids[i] for i in perm[:k])
    if not held:
        raise SplitError("no activity has two or more sessions to hold one out")
    train = [w for w in windows if w.session_id not in held]
    test = [w for w in windows if w.session_id in held]
    return train, test, sorted(held)
