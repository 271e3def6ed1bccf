import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from corroborate.classifier import ForestConfig, train_forest  # noqa: E402
from corroborate.dataset import (  # noqa: E402
    GWS_LABELS,
    LabelDictionary,
    Session,
    SubjectStream,
    SyntheticConfig,
    generate_synthetic,
)
from corroborate.features import WindowSpec, extract_batch  # noqa: E402
from corroborate.pipeline import labeled_windows  # noqa: E402

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


class FixedModel:
    """Backbone stub: the same probability vector for every input."""

    def __init__(self, probs, labels=GWS_LABELS):
        self.labels = labels
        self.probs = np.asarray(probs, dtype=float)

    def predict_proba(self, X):
        X = np.asarray(X)
        if X.ndim == 1:
            return self.probs.copy()
        return np.tile(self.probs, (X.shape[0], 1))


class FeatureHashModel:
    """Backbone stub: a deterministic, input-dependent softmax over a few features."""

    def __init__(self, labels=GWS_LABELS):
        self.labels = labels

    def predict_proba(self, X):
        X = np.asarray(X, dtype=float)
        X2 = np.atleast_2d(X)
        K = len(self.labels)
        z = np.stack([np.sin(X2[:, 9 * k + 1] * 50 + k) for k in range(K)], axis=1) * 3
        e = np.exp(z - z.max(axis=1, keepdims=True))
        p = e / e.sum(axis=1, keepdims=True)
        return p[0] if X.ndim == 1 else p


def constant_stream(subject_id, seconds, rate_hz=100.0, value=0.0):
    n = int(seconds * rate_hz)
    t = np.rint(np.arange(n) * 1000 / rate_hz).astype(np.int64)
    return SubjectStream(subject_id, t, np.full((n, 6), value), rate_hz)


@pytest.fixture(scope="session")
def small_cfg():
    return SyntheticConfig(devices_per_session=3, sessions_per_activity=2, session_length_s=60.0, seed=11)


@pytest.fixture(scope="session")
def small_corpus(small_cfg):
    return generate_synthetic(small_cfg)


@pytest.fixture(scope="session")
def small_forest(small_corpus):
    windows = labeled_windows(small_corpus, WindowSpec())
    X = extract_batch(windows)
    y = np.array([w.label.id for w in windows])
    return train_forest(X, y, GWS_LABELS, ForestConfig(n_trees=10, seed=5))
