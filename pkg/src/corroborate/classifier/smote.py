"""SMOTE oversampling of feature vectors."""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from ..errors import BalanceError, ConfigError
from ..seeding import rng_for


@dataclass(frozen=True)
class SmoteConfig:
    k_neighbors: int = 5
    seed: int = 0

    def __post_init__(self):
        if self.k_neighbors < 1:
            raise ConfigError(f"k_neighbors must be >= 1, got {self.k_neighbors}")


def nearest_neighbors(X: np.ndarray, k: int) -> np.ndarray:
    """Indices of the ``k`` nearest other rows (Euclidean), ties broken by row index."""
    d2 = cdist(X, X, "sqeuclidean")
    np.fill_diagonal(d2, np.inf)
    return np.argsort(d2, axis=1, kind="stable")[:, :k]


def synthesize(x: np.ndarray, neighbor: np.ndarray, lam) -> np.ndarray:
    """Point ``x + lam * (neighbor - x)`` on the segment from ``x`` to ``neighbor``."""
    return x + lam * (neighbor - x)


def smote_balance(
    X: np.ndarray,
    y: np.ndarray,
    cfg: SmoteConfig = SmoteConfig(),
    class_names: Sequence[str] | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Oversample every present class up to the majority count.

    Each synthetic row is ``x + lam * (nb - x)`` with ``x`` a uniformly drawn
    real row of the class, ``nb`` one of its ``k`` nearest same-class rows and
    ``lam`` uniform in (0, 1). Real rows come first, then synthetics by class.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if X.ndim != 2 or y.shape != (X.shape[0],):
        raise BalanceError(f"shape mismatch: X {X.shape}, y {y.shape}")
    classes, counts = np.unique(y, return_counts=True)
    if classes.size == 0:
        return X.copy(), y.copy()
    for c, n in zip(classes, counts):
        if n < 2:
            name = class_names[c] if class_names is not None else str(c)
            raise BalanceError(f"class {name!r} has {n} sample(s); SMOTE needs at least 2")

    target = counts.max()
    new_X, new_y = [X], [y]
    for c, n in zip(classes.tolist(), counts.tolist()):
        deficit = target - n
        if not deficit:
            continue
        members = X[y == c]
        k = min(cfg.k_neighbors, n - 1)
        knn = nearest_neighbors(members, k)
        rng = rng_for(cfg.seed, "smote", c)
        base = rng.integers(0, n, deficit)
        nb = knn[base, rng.integers(0, k, deficit)]
        lam = rng.uniform(np.nextafter(0.0, 1.0), 1.0, deficit)[:, None]
        new_X.append(synthesize(members[base], members[nb], lam))
        new_y.append(np.full(deficit, c, dtype=np.int64))
    return np.concatenate(new_X), np.concatenate(new_y)
