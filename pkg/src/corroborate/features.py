"""Sliding windows over subject streams and the nine per-channel window statistics."""

from __future__ import annotations

import csv
import math
from collections.abc import Iterable, Sequence
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dataset import CHANNELS, ActivityLabel, Session, SubjectStream
from .errors import ConfigError, FeatureError

FEATURES = (
    "mean",
    "variance",
    "max",
    "min",
    "skewness",
    "kurtosis",
    "energy",
    "sma",
    "zcr",
)
N_FEATURES = len(CHANNELS) * len(FEATURES)
# Channel-major: index = channel * 9 + feature.
FEATURE_NAMES = tuple(f"{c}_{f}" for c in CHANNELS for f in FEATURES)

_ACCEL = slice(0, 3)
_SMA = FEATURES.index("sma")


@dataclass(frozen=True)
class WindowSpec:
    length_s: float = 10.0
    stride_s: float = 5.0

    def __post_init__(self):
        if not (self.length_s > 0 and self.stride_s > 0):
            raise ConfigError(f"window length and stride must be positive: {self}")
        if self.stride_s > self.length_s:
            raise ConfigError(f"stride {self.stride_s}s exceeds window length {self.length_s}s")

    @property
    def length_ms(self) -> int:
        return int(round(self.length_s * 1000))

    @property
    def stride_ms(self) -> int:
        return int(round(self.stride_s * 1000))


@dataclass(frozen=True, eq=False)
class LabeledWindow:
    session_id: str
    subject_id: str
    start_ms: int
    end_ms: int
    label: ActivityLabel
    channels: np.ndarray  # shape (6, n)

    @property
    def key(self) -> tuple[str, str, int]:
        return (self.session_id, self.subject_id, self.start_ms)


def _overlaps_break(stream: SubjectStream, start: int, end: int) -> bool:
    period = stream.period_ms
    return any(start < b and end > a + period for a, b in stream.breaks)


def make_windows(
    stream: SubjectStream,
    spec: WindowSpec,
    label: ActivityLabel,
    session_id: str = "",
) -> list[LabeledWindow]:
    """Cut ``[k*stride, k*stride + length)`` windows that lie within the stream.

    A window is kept when the stream covers it to within one sampling period
    at each end and no break marker falls inside it.
    """
    t = stream.t
    if t.size < 2:
        return []
    length, stride = spec.length_ms, spec.stride_ms
    period = stream.period_ms
    first = max(0, int(math.ceil((t[0] - period) / stride)))
    if t[0] - first * stride >= period:
        first += 1
    out = []
    start = first * stride
    while start + length <= t[-1] + period:
        end = start + length
        if not _overlaps_break(stream, start, end):
            lo, hi = np.searchsorted(t, [start, end], side="left")
            if hi - lo >= 2:
                out.append(
                    LabeledWindow(
                        session_id,
                        stream.subject_id,
                        start,
                        end,
                        label,
                        stream.values[lo:hi].T.copy(),
                    )
                )
        start += stride
    return out


def session_windows(session: Session, spec: WindowSpec) -> list[LabeledWindow]:
    return [
        w
        for stream in session.streams
        for w in make_windows(stream, spec, session.activity, session.session_id)
    ]


def _channel_stats(x: np.ndarray) -> np.ndarray:
    """Statistics along the last axis of ``x`` (shape ``(..., n)``), SMA slot left at 0."""
    n = x.shape[-1]
    mean = x.mean(axis=-1)
    d = x - mean[..., None]
    m2 = (d * d).mean(axis=-1)
    # Shape moments on data scaled to unit peak, so tiny signals cannot underflow.
    scale = np.abs(x).max(axis=-1)
    u = d / np.where(scale > 0, scale, 1.0)[..., None]
    u2 = (u * u).mean(axis=-1)
    flat = u2 <= (64 * np.finfo(float).eps) ** 2
    safe = np.where(flat, 1.0, u2)
    skew = np.where(flat, 0.0, (u**3).mean(axis=-1) / safe**1.5)
    kurt = np.where(flat, 0.0, (u**4).mean(axis=-1) / safe**2 - 3.0)
    pos = d >= 0
    crossings = np.count_nonzero(pos[..., 1:] != pos[..., :-1], axis=-1)
    zcr = np.where(flat, 0.0, crossings / (n - 1))
    energy = (x * x).mean(axis=-1)
    zeros = np.zeros_like(mean)
    return np.stack(
        [mean, m2, x.max(axis=-1), x.min(axis=-1), skew, kurt, energy, zeros, zcr], axis=-1
    )


def features_from_channels(channels: np.ndarray) -> np.ndarray:
    """54-vector for a ``(6, n)`` array, or ``(m, 54)`` for a ``(m, 6, n)`` batch."""
    x = np.asarray(channels, dtype=np.float64)
    if x.shape[-2] != 6 or x.shape[-1] < 2:
        raise FeatureError(f"expected 6 channels of >= 2 samples, got shape {x.shape}")
    bad = ~np.isfinite(x)
    if bad.any():
        idx = np.argwhere(bad)[0]
        ch, i = int(idx[-2]), int(idx[-1])
        raise FeatureError(f"non-finite sample in channel {CHANNELS[ch]} at index {i}")
    stats = _channel_stats(x)
    sma = np.abs(x[..., _ACCEL, :]).sum(axis=-2).mean(axis=-1)
    stats[..., _ACCEL, _SMA] = sma[..., None]
    return stats.reshape(*x.shape[:-2], N_FEATURES)


def extract_features(w: LabeledWindow) -> np.ndarray:
    return features_from_channels(w.channels)


def extract_batch(windows: Sequence[LabeledWindow]) -> np.ndarray:
    """Feature matrix for many windows; equal-length windows are computed in one pass."""
    if not windows:
        return np.zeros((0, N_FEATURES))
    lengths = {w.channels.shape[1] for w in windows}
    if len(lengths) == 1:
        return features_from_channels(np.stack([w.channels for w in windows]))
    return np.stack([extract_features(w) for w in windows])


def write_feature_dump(
    path, windows: Sequence[LabeledWindow], features: np.ndarray | None = None
) -> None:
    """CSV with columns ``session_id,subject_id,start_ms,label,f00..f53``."""
    if features is None:
        features = extract_batch(windows)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(
            ["session_id", "subject_id", "start_ms", "label"]
            + [f"f{i:02d}" for i in range(N_FEATURES)]
        )
        for w, row in zip(windows, features.tolist()):
            out.writerow([w.session_id, w.subject_id, w.start_ms, w.label.name, *map(repr, row)])


def read_feature_dump(path) -> tuple[list[tuple[str, str, int, str]], np.ndarray]:
    keys, rows = [], []
    with open(path, newline="", encoding="utf-8") as fh:
        for rec in csv.DictReader(fh):
            keys.append((rec["session_id"], rec["subject_id"], int(rec["start_ms"]), rec["label"]))
            rows.append([float(rec[f"f{i:02d}"]) for i in range(N_FEATURES)])
    return keys, np.array(rows, dtype=float).reshape(-1, N_FEATURES)


def windows_for(sessions: Iterable[Session], spec: WindowSpec) -> list[LabeledWindow]:
    return [w for s in sessions for w in session_windows(s, spec)]
