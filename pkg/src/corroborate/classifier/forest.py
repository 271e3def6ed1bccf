"""Random forest of CART trees with gini impurity.

Trees are stored as flat arrays (preorder node ids) so that prediction is a
vectorized walk and serialization is a plain JSON document.
"""

from __future__ import annotations

import json
import math
from collections.abc import Sequence
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Protocol, runtime_checkable

import numpy as np

from ..dataset import LabelDictionary
from ..errors import ConfigError, FormatError, InputError, TrainingError
from ..seeding import rng_for

FORMAT_VERSION = 1


def gini(counts) -> float:
    """Gini impurity ``1 - sum(p_i^2)`` of a class histogram."""
    counts = np.asarray(counts, dtype=np.float64)
    total = counts.sum()
    if total <= 0:
        return 0.0
    p = counts / total
    return float(1.0 - np.dot(p, p))


@dataclass(frozen=True)
class ForestConfig:
    n_trees: int = 100
    criterion: str = "gini"
    min_samples_split: int = 2
    # "sqrt", "log2", "all", an int count or a float fraction of the features
    max_features: str | int | float = "sqrt"
    bootstrap: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.n_trees < 1:
            raise ConfigError(f"n_trees must be >= 1, got {self.n_trees}")
        if self.criterion != "gini":
            raise ConfigError(f"only the gini criterion is supported, got {self.criterion!r}")
        if self.min_samples_split < 2:
            raise ConfigError(f"min_samples_split must be >= 2, got {self.min_samples_split}")
        if isinstance(self.max_features, str) and self.max_features not in ("sqrt", "log2", "all"):
            raise ConfigError(f"unknown max_features strategy {self.max_features!r}")

    def n_candidates(self, n_features: int) -> int:
        mf = self.max_features
        if mf == "sqrt":
            m = math.isqrt(n_features)
        elif mf == "log2":
            m = int(math.log2(n_features)) if n_features > 1 else 1
        elif mf == "all":
            m = n_features
        elif isinstance(mf, bool):
            raise ConfigError("max_features must not be a bool")
        elif isinstance(mf, int):
            m = mf
        else:
            m = int(mf * n_features)
        return min(n_features, max(1, m))


@dataclass(frozen=True, eq=False)
class DecisionTree:
    """Flat binary tree. Leaves have ``feature == -1``; ``x[feature] <= threshold`` goes left.

    ``counts[i]`` is the (bootstrap-weighted) class histogram of the training
    samples that reached node ``i``.
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    counts: np.ndarray

    @property
    def n_nodes(self) -> int:
        return int(self.feature.size)

    @property
    def depth(self) -> int:
        depth = np.zeros(self.n_nodes, dtype=np.int64)
        for i in range(self.n_nodes):  # preorder: parents precede children
            if self.feature[i] >= 0:
                depth[self.left[i]] = depth[self.right[i]] = depth[i] + 1
        return int(depth.max())

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Leaf index reached by every row of ``X``."""
        node = np.zeros(X.shape[0], dtype=np.int64)
        rows = np.arange(X.shape[0])
        while True:
            feat = self.feature[node]
            inner = feat >= 0
            if not inner.any():
                return node
            go_left = X[rows, np.where(inner, feat, 0)] <= self.threshold[node]
            node = np.where(inner, np.where(go_left, self.left[node], self.right[node]), node)

    def leaf_proportions(self) -> np.ndarray:
        totals = self.counts.sum(axis=1, keepdims=True)
        return self.counts / np.where(totals > 0, totals, 1.0)

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        return self.leaf_proportions()[self.apply(X)]

    def to_dict(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "counts": self.counts.astype(np.int64).tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> DecisionTree:
        return cls(
            np.asarray(d["feature"], dtype=np.int64),
            np.asarray(d["threshold"], dtype=np.float64),
            np.asarray(d["left"], dtype=np.int64),
            np.asarray(d["right"], dtype=np.int64),
            np.asarray(d["counts"], dtype=np.float64),
        )


def _best_split(Xn: np.ndarray, Yn: np.ndarray, feats: np.ndarray):
    """Best (score, feature, threshold) over candidate features, or None.

    Maximizes ``sum(L^2)/nL + sum(R^2)/nR``, which is equivalent to
    minimizing the weighted gini of the children. Ties keep the lowest
    feature index, then the lowest threshold.
    """
    vals = Xn[:, feats]
    order = np.argsort(vals, axis=0, kind="stable")
    sorted_vals = np.take_along_axis(vals, order, axis=0)
    if vals.shape[0] < 2:
        return None
    cum = np.cumsum(Yn[order], axis=0)[:-1]  # (n-1, m, K)
    total = Yn.sum(axis=0)
    n_left = cum.sum(axis=2)
    n_right = total.sum() - n_left
    right = total - cum
    valid = sorted_vals[:-1] < sorted_vals[1:]
    with np.errstate(divide="ignore", invalid="ignore"):
        score = (cum * cum).sum(axis=2) / n_left + (right * right).sum(axis=2) / n_right
    score = np.where(valid, score, -np.inf)
    per_feat = score.argmax(axis=0)
    best = score[per_feat, np.arange(feats.size)]
    j = int(np.argmax(best))  # feats ascending, so first max = lowest index
    if not np.isfinite(best[j]):
        return None
    i = int(per_feat[j])
    lo, hi = sorted_vals[i, j], sorted_vals[i + 1, j]
    thr = lo + (hi - lo) / 2.0
    if not lo <= thr < hi:
        thr = lo
    return float(best[j]), int(feats[j]), float(thr)


def fit_tree(
    X: np.ndarray,
    y: np.ndarray,
    n_classes: int,
    cfg: ForestConfig,
    rng: np.random.Generator,
) -> DecisionTree:
    n, n_features = X.shape
    if cfg.bootstrap:
        weights = np.bincount(rng.integers(0, n, n), minlength=n).astype(np.float64)
    else:
        weights = np.ones(n)
    rows = np.flatnonzero(weights > 0)
    Xb = X[rows]
    Y = np.zeros((rows.size, n_classes))
    Y[np.arange(rows.size), y[rows]] = weights[rows]
    m = cfg.n_candidates(n_features)

    feature, threshold, left, right, counts = [], [], [], [], []
    # (parent, is_left, histogram, sample rows); ids are assigned on pop, and
    # pushing right before left numbers the nodes in preorder.
    stack = [(-1, False, Y.sum(axis=0), np.arange(rows.size))]
    while stack:
        parent, is_left, hist, idx = stack.pop()
        node = len(feature)
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        counts.append(hist)
        if parent >= 0:
            (left if is_left else right)[parent] = node

        n_node = hist.sum()
        if n_node < cfg.min_samples_split or np.count_nonzero(hist) <= 1:
            continue
        if m < n_features:
            feats = np.sort(rng.choice(n_features, m, replace=False))
        else:
            feats = np.arange(n_features)
        Xn, Yn = Xb[idx], Y[idx]
        found = _best_split(Xn, Yn, feats)
        if found is None:
            continue
        score, f, thr = found
        if not score > float(np.dot(hist, hist)) / n_node * (1 + 1e-12):
            continue
        feature[node], threshold[node] = f, thr
        go_left = Xn[:, f] <= thr
        li, ri = idx[go_left], idx[~go_left]
        stack.append((node, False, Y[ri].sum(axis=0), ri))
        stack.append((node, True, Y[li].sum(axis=0), li))

    return DecisionTree(
        np.asarray(feature, dtype=np.int64),
        np.asarray(threshold, dtype=np.float64),
        np.asarray(left, dtype=np.int64),
        np.asarray(right, dtype=np.int64),
        np.asarray(counts, dtype=np.float64).reshape(-1, n_classes),
    )


@runtime_checkable
class BackboneModel(Protocol):
    """Anything that maps feature rows to per-activity probabilities."""

    labels: LabelDictionary

    def predict_proba(self, X: np.ndarray) -> np.ndarray: ...


class RandomForest:
    """Trained forest; immutable once built and safe to share between threads."""

    def __init__(
        self,
        trees: Sequence[DecisionTree],
        labels: LabelDictionary,
        config: ForestConfig,
        n_features: int,
    ):
        if not trees:
            raise TrainingError("a forest needs at least one tree")
        self.trees = tuple(trees)
        self.labels = labels
        self.config = config
        self.n_features = int(n_features)
        self._leaf_probs = tuple(t.leaf_proportions() for t in self.trees)

    def predict_proba(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        single = X.ndim == 1
        X2 = X.reshape(1, -1) if single else X
        if X2.ndim != 2 or X2.shape[1] != self.n_features:
            raise InputError(
                f"expected feature vectors of dimension {self.n_features}, got shape {X.shape}"
            )
        total = np.zeros((X2.shape[0], len(self.labels)))
        for tree, probs in zip(self.trees, self._leaf_probs):
            total += probs[tree.apply(X2)]
        out = total / len(self.trees)
        return out[0] if single else out

    def predict(self, X) -> np.ndarray:
        return np.argmax(self.predict_proba(X), axis=-1)

    def to_dict(self) -> dict:
        return {
            "format_version": FORMAT_VERSION,
            "labels": list(self.labels.names),
            "forest_config": asdict(self.config),
            "n_features": self.n_features,
            "trees": [t.to_dict() for t in self.trees],
        }

    @classmethod
    def from_dict(cls, d: dict) -> RandomForest:
        for key in ("format_version", "labels", "forest_config", "trees"):
            if key not in d:
                raise FormatError(f"model document lacks field {key!r}")
        if d["format_version"] != FORMAT_VERSION:
            raise FormatError(f"unsupported model format_version {d['format_version']!r}")
        trees = [DecisionTree.from_dict(t) for t in d["trees"]]
        n_features = d.get("n_features")
        if n_features is None:
            n_features = max(int(t.feature.max()) for t in trees) + 1
        return cls(trees, LabelDictionary(d["labels"]), ForestConfig(**d["forest_config"]), n_features)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), separators=(",", ":")) + "\n")

    @classmethod
    def load(cls, path) -> RandomForest:
        try:
            doc = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise FormatError(f"{path}: not a JSON model file ({exc})") from None
        return cls.from_dict(doc)


def _fit_one(X, y, n_classes, cfg, i):
    return fit_tree(X, y, n_classes, cfg, rng_for(cfg.seed, "tree", i))


def train_forest(
    X,
    y,
    labels: LabelDictionary,
    cfg: ForestConfig = ForestConfig(),
    n_jobs: int = 1,
) -> RandomForest:
    """Fit ``cfg.n_trees`` trees; tree ``i`` draws only from its own derived seed.

    ``n_jobs != 1`` trains trees in worker processes with identical results.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if X.ndim != 2 or y.shape != (X.shape[0],):
        raise TrainingError(f"shape mismatch: X {X.shape}, y {y.shape}")
    if not np.isfinite(X).all():
        raise TrainingError("training features contain non-finite values")
    if y.size and (y.min() < 0 or y.max() >= len(labels)):
        raise TrainingError("class ids outside the label dictionary")
    if np.unique(y).size < 2:
        raise TrainingError("training data must contain at least two classes")
    K = len(labels)
    if n_jobs == 1:
        trees = [_fit_one(X, y, K, cfg, i) for i in range(cfg.n_trees)]
    else:
        from joblib import Parallel, delayed

        trees = Parallel(n_jobs=n_jobs)(
            delayed(_fit_one)(X, y, K, cfg, i) for i in range(cfg.n_trees)
        )
    return RandomForest(trees, labels, cfg, X.shape[1])


def predict_proba(model: BackboneModel, x) -> np.ndarray:
    return model.predict_proba(x)
