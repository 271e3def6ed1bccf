"""End-to-end steps shared by the CLI and the acceptance suite."""

from __future__ import annotations

import logging
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from .classifier import (
    ForestConfig,
    RandomForest,
    SmoteConfig,
    smote_balance,
    split_by_session,
    split_train_test,
    train_forest,
)
from .dataset import DEFAULT_MAX_GAP_MS, LabelDictionary, Session, repair_session
from .errors import ConfigError
from .evaluation import Ablation, ablate
from .features import LabeledWindow, WindowSpec, extract_batch, windows_for
from .simulator import SimConfig, run_experiment

log = logging.getLogger(__name__)

SPLIT_MODES = ("window", "session")


@dataclass
class TrainResult:
    model: RandomForest
    train: list[LabeledWindow]
    test: list[LabeledWindow]
    test_sessions: list[str] | None
    n_balanced: int
    test_accuracy: float
    split: str

    def test_keys(self) -> list[tuple[str, str, int]]:
        return [w.key for w in self.test]


def labeled_windows(
    sessions: Sequence[Session], spec: WindowSpec, max_gap_ms: int = DEFAULT_MAX_GAP_MS
) -> list[LabeledWindow]:
    return windows_for([repair_session(s, max_gap_ms) for s in sessions], spec)


def train_pipeline(
    sessions: Sequence[Session],
    labels: LabelDictionary,
    spec: WindowSpec = WindowSpec(),
    forest: ForestConfig = ForestConfig(),
    smote: SmoteConfig = SmoteConfig(),
    split: str = "window",
    test_fraction: float = 0.2,
    split_seed: int = 0,
    max_gap_ms: int = DEFAULT_MAX_GAP_MS,
    n_jobs: int = 1,
) -> TrainResult:
    """Window, split, SMOTE-balance the training part, fit the forest, score the held-out part."""
    if split not in SPLIT_MODES:
        raise ConfigError(f"split must be one of {SPLIT_MODES}, got {split!r}")
    windows = labeled_windows(sessions, spec, max_gap_ms)
    test_sessions = None
    if split == "window":
        train, test = split_train_test(windows, test_fraction, split_seed)
    else:
        train, test, test_sessions = split_by_session(windows, test_fraction, split_seed)
    X = extract_batch(train)
    y = np.array([w.label.id for w in train], dtype=np.int64)
    Xb, yb = smote_balance(X, y, smote, labels.names)
    model = train_forest(Xb, yb, labels, forest, n_jobs=n_jobs)
    if test:
        pred = model.predict(extract_batch(test))
        acc = float(np.mean(pred == np.array([w.label.id for w in test])))
    else:
        acc = float("nan")
    log.info("train %d windows (%d after SMOTE), test %d, held-out accuracy %.4f",
             len(train), len(yb), len(test), acc)
    return TrainResult(model, train, test, test_sessions, len(yb), acc, split)


def simulate_held_out(
    sessions: Sequence[Session],
    result: TrainResult,
    cfg: SimConfig = SimConfig(),
    broadcast: str = "held-out",
):
    """Simulate and record only decisions on held-out windows (or held-out sessions).

    With a window split, ``broadcast="all"`` lets every device infer and
    broadcast at every tick, so neighbor vectors may come from training
    windows; ``"held-out"`` restricts inference and broadcasting to held-out
    windows as well.
    """
    if result.split == "session":
        held = set(result.test_sessions or ())
        return run_experiment([s for s in sessions if s.session_id in held], result.model, cfg)
    keys = set(result.test_keys())
    if broadcast == "all":
        return run_experiment(sessions, result.model, cfg, include=keys)
    if broadcast == "held-out":
        return run_experiment(sessions, result.model, cfg, include=keys, participate=keys)
    raise ConfigError(f"broadcast must be 'all' or 'held-out', got {broadcast!r}")


def corroboration_gain(
    sessions: Sequence[Session],
    result: TrainResult,
    cfg: SimConfig = SimConfig(),
    broadcast: str = "held-out",
) -> Ablation:
    return ablate(simulate_held_out(sessions, result, cfg, broadcast))
