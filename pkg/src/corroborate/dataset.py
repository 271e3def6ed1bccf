"""Session data model, CSV ingestion, gap repair and the synthetic group-session generator.

A corpus is a set of sessions; each session is one activity performed
concurrently by several subjects, each wearing one wrist IMU. Timestamps are
integer milliseconds from session start, acceleration is in g and angular
velocity in deg/s.
"""

from __future__ import annotations

import json
import logging
import math
from collections.abc import Iterable, Iterator, Mapping, Sequence
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from .errors import ConfigError, DictionaryError, FormatError, IntegrityError
from .seeding import rng_for

log = logging.getLogger(__name__)

CHANNELS = ("ax", "ay", "az", "gx", "gy", "gz")
CSV_COLUMNS = ("timestamp_ms", "subject_id", "activity", *CHANNELS)
GWS_ACTIVITIES = ("eating", "lecture", "meeting", "office")
DEFAULT_RATE_HZ = 100.0
DEFAULT_MAX_GAP_MS = 200


@dataclass(frozen=True)
class ActivityLabel:
    id: int
    name: str


class LabelDictionary(Sequence):
    """Ordered activity names with contiguous ids ``0..K-1``."""

    def __init__(self, names: Iterable[str]):
        names = tuple(str(n) for n in names)
        if not names:
            raise DictionaryError("label dictionary is empty")
        if len(set(names)) != len(names):
            raise DictionaryError(f"duplicate label names in {names}")
        self._names = names
        self._ids = {n: i for i, n in enumerate(names)}

    @property
    def names(self) -> tuple[str, ...]:
        return self._names

    def __len__(self) -> int:
        return len(self._names)

    def __getitem__(self, i):
        if isinstance(i, slice):
            return [ActivityLabel(j, self._names[j]) for j in range(len(self))[i]]
        return ActivityLabel(range(len(self))[i], self._names[i])

    def __contains__(self, name) -> bool:
        if isinstance(name, ActivityLabel):
            return self._ids.get(name.name) == name.id
        return name in self._ids

    def __eq__(self, other) -> bool:
        return isinstance(other, LabelDictionary) and other._names == self._names

    def __hash__(self) -> int:
        return hash(self._names)

    def __repr__(self) -> str:
        return f"LabelDictionary({list(self._names)!r})"

    def label(self, name: str) -> ActivityLabel:
        try:
            return ActivityLabel(self._ids[name], name)
        except KeyError:
            raise DictionaryError(
                f"unknown activity {name!r}; expected one of {list(self._names)}"
            ) from None


GWS_LABELS = LabelDictionary(GWS_ACTIVITIES)


@dataclass(frozen=True)
class ImuSample:
    t: int
    accel: tuple[float, float, float]
    gyro: tuple[float, float, float]


@dataclass(frozen=True, eq=False)
class SubjectStream:
    """One subject's samples, stored column-wise.

    ``t`` is an int64 array of timestamps (ms), ``values`` an ``(n, 6)`` array
    in :data:`CHANNELS` order. ``breaks`` lists ``(last_before, first_after)``
    timestamp pairs around gaps too long to interpolate; windows spanning one
    are dropped.
    """

    subject_id: str
    t: np.ndarray
    values: np.ndarray
    nominal_rate_hz: float = DEFAULT_RATE_HZ
    breaks: tuple[tuple[int, int], ...] = ()

    def __post_init__(self):
        t = np.asarray(self.t, dtype=np.int64).reshape(-1)
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 2 or values.shape[1] != 6 or values.shape[0] != t.shape[0]:
            raise IntegrityError(
                f"subject {self.subject_id!r}: values must be (n, 6) with n={t.shape[0]}, "
                f"got {values.shape}"
            )
        if t.size and t[0] < 0:
            raise IntegrityError(f"subject {self.subject_id!r}: negative timestamp {t[0]}")
        if t.size > 1 and np.any(np.diff(t) <= 0):
            raise IntegrityError(f"subject {self.subject_id!r}: timestamps not strictly increasing")
        if not self.nominal_rate_hz > 0:
            raise IntegrityError(f"nominal_rate_hz must be positive, got {self.nominal_rate_hz}")
        t.flags.writeable = False
        values.flags.writeable = False
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "breaks", tuple((int(a), int(b)) for a, b in self.breaks))

    @classmethod
    def from_samples(cls, subject_id: str, samples: Iterable[ImuSample], **kw) -> SubjectStream:
        samples = list(samples)
        t = [s.t for s in samples]
        values = np.array([(*s.accel, *s.gyro) for s in samples], dtype=float).reshape(-1, 6)
        return cls(subject_id, t, values, **kw)

    @property
    def samples(self) -> Iterator[ImuSample]:
        for ti, row in zip(self.t.tolist(), self.values.tolist()):
            yield ImuSample(ti, tuple(row[:3]), tuple(row[3:]))

    @property
    def period_ms(self) -> float:
        return 1000.0 / self.nominal_rate_hz

    @property
    def duration_ms(self) -> float:
        """Covered time, counting one sampling period per sample span plus the last sample."""
        if not self.t.size:
            return 0.0
        return float(self.t[-1] - self.t[0]) + self.period_ms

    def __len__(self) -> int:
        return int(self.t.size)

    def __eq__(self, other) -> bool:
        if not isinstance(other, SubjectStream):
            return NotImplemented
        return (
            self.subject_id == other.subject_id
            and self.nominal_rate_hz == other.nominal_rate_hz
            and self.breaks == other.breaks
            and np.array_equal(self.t, other.t)
            and np.array_equal(self.values, other.values)
        )

    def check_rate(self) -> None:
        if self.t.size < 2:
            return
        median = float(np.median(np.diff(self.t)))
        if abs(median - self.period_ms) > 0.2 * self.period_ms:
            raise IntegrityError(
                f"subject {self.subject_id!r}: median sample gap {median} ms is not within 20% "
                f"of {self.period_ms} ms ({self.nominal_rate_hz} Hz)"
            )


@dataclass(frozen=True)
class Session:
    session_id: str
    activity: ActivityLabel
    streams: tuple[SubjectStream, ...]

    def __post_init__(self):
        streams = tuple(self.streams)
        if not streams:
            raise IntegrityError(f"session {self.session_id!r} has no streams")
        ids = [s.subject_id for s in streams]
        if len(set(ids)) != len(ids):
            raise IntegrityError(f"session {self.session_id!r} has duplicate subject ids")
        object.__setattr__(self, "streams", streams)

    @property
    def duration_ms(self) -> float:
        return max(s.duration_ms for s in self.streams)


# ---------------------------------------------------------------- CSV I/O


def _csv_files(path: Path) -> list[Path]:
    if path.is_file():
        return [path]
    if not path.is_dir():
        raise FormatError(f"{path}: no such file or directory")
    return sorted(path.glob("*.csv"))


def _read_session_csv(path: Path, dictionary: LabelDictionary, rate_hz: float) -> Session:
    try:
        frame = pd.read_csv(
            path,
            dtype={"subject_id": str, "activity": str},
            keep_default_na=False,
            float_precision="round_trip",
        )
    except pd.errors.EmptyDataError:
        raise FormatError(f"{path}: empty file, expected header {','.join(CSV_COLUMNS)}") from None
    missing = [c for c in CSV_COLUMNS if c not in frame.columns]
    if missing:
        raise FormatError(f"{path}: header is missing column {missing[0]!r}")
    extra = [c for c in frame.columns if c not in CSV_COLUMNS]
    if extra:
        raise FormatError(f"{path}: unexpected column {extra[0]!r}")

    # Columns with any unparseable cell arrive as text; coerce those to NaN.
    ts = pd.to_numeric(frame["timestamp_ms"], errors="coerce")
    nums = frame[list(CHANNELS)].apply(
        lambda col: col if col.dtype.kind in "fi" else pd.to_numeric(col, errors="coerce")
    )
    # Whole non-negative integers only; float channels must be finite.
    ok = ts.notna() & (ts >= 0) & (ts == np.floor(ts))
    ok &= np.isfinite(nums.to_numpy(dtype=float, na_value=np.nan)).all(axis=1)
    ok &= frame["subject_id"].str.len() > 0
    rejected = int((~ok).sum())
    if rejected:
        log.warning("%s: rejected %d unparseable row(s)", path, rejected)
    frame = frame[ok]
    if frame.empty:
        raise FormatError(f"{path}: no valid rows")

    activities = frame["activity"].unique()
    if len(activities) != 1:
        raise FormatError(f"{path}: activity must be constant per file, found {sorted(activities)}")
    activity = dictionary.label(activities[0])

    table = pd.DataFrame(
        {"t": ts[ok].astype(np.int64), "subject_id": frame["subject_id"], **nums[ok]}
    )
    streams = []
    for subject_id, group in table.groupby("subject_id", sort=True):
        group = group.drop_duplicates().sort_values("t", kind="stable")
        t = group["t"].to_numpy(dtype=np.int64)
        if t.size > 1 and np.any(np.diff(t) <= 0):
            dup = int(t[1:][np.diff(t) <= 0][0])
            raise IntegrityError(
                f"{path}: subject {subject_id!r} has conflicting samples at t={dup} ms"
            )
        stream = SubjectStream(
            str(subject_id), t, group[list(CHANNELS)].to_numpy(dtype=float), rate_hz
        )
        stream.check_rate()
        streams.append(stream)
    return Session(path.stem, activity, tuple(streams))


def load_sessions(
    path, dictionary: LabelDictionary = GWS_LABELS, nominal_rate_hz: float = DEFAULT_RATE_HZ
) -> list[Session]:
    """Read every ``*.csv`` under ``path`` (or the single file ``path``); one session per file.

    The session id is the file stem. Rows whose timestamp or channels do not
    parse are dropped with a warning.
    """
    path = Path(path)
    files = _csv_files(path)
    sessions = [_read_session_csv(f, dictionary, nominal_rate_hz) for f in files]
    ids = [s.session_id for s in sessions]
    if len(set(ids)) != len(ids):
        raise FormatError(f"{path}: duplicate session ids {ids}")
    return sessions


def write_sessions(sessions: Iterable[Session], out_dir) -> list[Path]:
    """Write one CSV per session, rows ordered by (timestamp, subject)."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for session in sessions:
        rows = []
        for stream in sorted(session.streams, key=lambda s: s.subject_id):
            prefix = f",{stream.subject_id},{session.activity.name},"
            for ti, vals in zip(stream.t.tolist(), stream.values.tolist()):
                rows.append((ti, stream.subject_id, f"{ti}{prefix}{','.join(map(repr, vals))}"))
        rows.sort(key=lambda r: (r[0], r[1]))
        target = out_dir / f"{session.session_id}.csv"
        with open(target, "w", newline="\n", encoding="utf-8") as fh:
            fh.write(",".join(CSV_COLUMNS) + "\n")
            fh.writelines(r[2] + "\n" for r in rows)
        paths.append(target)
    return paths


def corpus_summary(sessions: Sequence[Session]) -> dict[str, dict[str, float]]:
    """Per-activity totals: participant-hours, session count, mean participants per session."""
    out: dict[str, dict[str, float]] = {}
    for s in sessions:
        row = out.setdefault(s.activity.name, {"hours": 0.0, "sessions": 0, "participants": 0})
        row["hours"] += sum(st.duration_ms for st in s.streams) / 3.6e6
        row["sessions"] += 1
        row["participants"] += len(s.streams)
    for row in out.values():
        row["mean_participants"] = row.pop("participants") / row["sessions"]
    return out


# ---------------------------------------------------------------- gap repair


def repair_gaps(stream: SubjectStream, max_gap_ms: int = DEFAULT_MAX_GAP_MS) -> SubjectStream:
    """Fill short gaps by linear interpolation on the nominal grid; mark long ones.

    A gap is a spacing of at least 1.5 sampling periods. Gaps no longer than
    ``max_gap_ms`` receive samples at ``t_before + k * period``; longer gaps
    become entries of ``breaks``. Existing samples are never modified.
    """
    t = stream.t
    if t.size < 2:
        return stream
    period = stream.period_ms
    gaps = np.flatnonzero(np.diff(t) >= 1.5 * period)
    if not gaps.size:
        return stream

    new_t, new_v = [], []
    breaks = list(stream.breaks)
    for i in gaps.tolist():
        a, b = int(t[i]), int(t[i + 1])
        if b - a > max_gap_ms:
            breaks.append((a, b))
            continue
        k = np.arange(1, int(math.ceil((b - a) / period)) + 1)
        ins = a + np.rint(k * period).astype(np.int64)
        ins = ins[ins <= b - period / 2]
        if not ins.size:
            continue
        frac = ((ins - a) / (b - a))[:, None]
        new_t.append(ins)
        new_v.append(stream.values[i] + frac * (stream.values[i + 1] - stream.values[i]))

    if new_t:
        all_t = np.concatenate([t, *new_t])
        all_v = np.concatenate([stream.values, *new_v])
        order = np.argsort(all_t, kind="stable")
        all_t, all_v = all_t[order], all_v[order]
    else:
        all_t, all_v = t, stream.values
    return SubjectStream(
        stream.subject_id, all_t, all_v, stream.nominal_rate_hz, tuple(sorted(breaks))
    )


def repair_session(session: Session, max_gap_ms: int = DEFAULT_MAX_GAP_MS) -> Session:
    return Session(
        session.session_id,
        session.activity,
        tuple(repair_gaps(s, max_gap_ms) for s in session.streams),
    )


# ---------------------------------------------------------------- synthetic corpus


@dataclass(frozen=True)
class ActivityMotion:
    """Motion archetype of one activity.

    Bursts arrive as a Poisson process of ``burst_rate_hz`` and oscillate at
    ``burst_freq_hz`` with amplitude ``base_amplitude`` (g). ``jitter`` is the
    relative per-subject spread of amplitude, rate and frequency.
    """

    base_amplitude: float
    burst_rate_hz: float
    burst_freq_hz: float = 1.5
    jitter: float = 0.25

    def __post_init__(self):
        if self.base_amplitude < 0 or self.burst_rate_hz < 0 or self.burst_freq_hz <= 0:
            raise ConfigError(f"invalid motion parameters {self}")
        if self.jitter < 0:
            raise ConfigError(f"jitter must be non-negative, got {self.jitter}")


# Held-out-session standalone accuracy of a default forest is about 0.70 with these.
DEFAULT_MOTIONS = {
    "eating": ActivityMotion(0.35, 0.35, 1.6, 0.15),
    "lecture": ActivityMotion(0.08, 0.12, 0.8, 0.15),
    "meeting": ActivityMotion(0.22, 0.20, 1.2, 0.15),
    "office": ActivityMotion(0.13, 0.32, 2.8, 0.15),
}


@dataclass(frozen=True)
class SyntheticConfig:
    labels: tuple[str, ...] = GWS_ACTIVITIES
    motions: Mapping[str, ActivityMotion] = field(default_factory=lambda: dict(DEFAULT_MOTIONS))
    devices_per_session: int = 4
    sessions_per_activity: int = 4
    session_length_s: float = 180.0
    seed: int = 0
    nominal_rate_hz: float = DEFAULT_RATE_HZ
    noise_accel_g: float = 0.02
    noise_gyro_dps: float = 2.0
    gyro_gain_dps_per_g: float = 120.0
    posture_gain: float = 0.5
    session_coupling: float = 0.5
    session_jitter: float = 0.05
    confusion_rate: float = 0.15
    segment_mean_s: float = 40.0
    coupling_period_s: float = 60.0
    gap_rate_per_min: float = 0.0
    window_length_s: float = 10.0

    def __post_init__(self):
        object.__setattr__(self, "labels", tuple(self.labels))
        motions = {
            k: v if isinstance(v, ActivityMotion) else ActivityMotion(**v)
            for k, v in dict(self.motions).items()
        }
        object.__setattr__(self, "motions", motions)
        LabelDictionary(self.labels)
        missing = [n for n in self.labels if n not in motions]
        if missing:
            raise ConfigError(f"no motion parameters for activity {missing[0]!r}")
        if self.devices_per_session < 1:
            raise ConfigError("devices_per_session must be >= 1")
        if self.sessions_per_activity < 1:
            raise ConfigError("sessions_per_activity must be >= 1")
        if not self.session_length_s >= self.window_length_s:
            raise ConfigError("session_length_s must be at least the window length")
        if not 0 <= self.confusion_rate <= 1 or self.segment_mean_s <= 0:
            raise ConfigError("confusion_rate must lie in [0, 1] and segment_mean_s be positive")
        if self.session_jitter < 0:
            raise ConfigError("session_jitter must be non-negative")
        if not 0 <= self.session_coupling <= 1:
            raise ConfigError("session_coupling must lie in [0, 1]")
        if self.nominal_rate_hz <= 0 or self.noise_accel_g < 0 or self.noise_gyro_dps < 0:
            raise ConfigError("rates and noise levels must be non-negative")

    @property
    def dictionary(self) -> LabelDictionary:
        return LabelDictionary(self.labels)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["labels"] = list(self.labels)
        d["motions"] = {k: asdict(v) for k, v in self.motions.items()}
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> SyntheticConfig:
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown synthetic config field(s): {sorted(unknown)}")
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def from_json(cls, path) -> SyntheticConfig:
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def _unit_vectors(rng: np.random.Generator, n: int) -> np.ndarray:
    v = rng.normal(size=(n, 3))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


@dataclass(frozen=True)
class _SessionPlan:
    """Group-level terms shared by every subject of one synthetic session."""

    phase: float
    scale: tuple[float, float]
    bounds: np.ndarray  # segment start times in s, bounds[0] == 0
    motions: tuple[ActivityMotion, ...]

    def segment_of(self, secs: np.ndarray) -> np.ndarray:
        return np.searchsorted(self.bounds, secs, side="right") - 1


def _plan_session(cfg: SyntheticConfig, own: str, rng: np.random.Generator) -> _SessionPlan:
    phase = rng.uniform(0, 2 * np.pi)
    scale = tuple(float(v) for v in np.maximum(0.2, 1.0 + cfg.session_jitter * rng.standard_normal(2)))
    others = [n for n in cfg.labels if n != own]
    bounds, motions, t = [], [], 0.0
    while t < cfg.session_length_s:
        bounds.append(t)
        if others and rng.uniform() < cfg.confusion_rate:
            motions.append(cfg.motions[others[rng.integers(len(others))]])
        else:
            motions.append(cfg.motions[own])
        t += rng.exponential(cfg.segment_mean_s)
    return _SessionPlan(phase, scale, np.asarray(bounds), tuple(motions))


def _synth_stream(
    cfg: SyntheticConfig,
    motion: ActivityMotion,
    plan: _SessionPlan,
    rng: np.random.Generator,
    subject_id: str,
) -> SubjectStream:
    fs = cfg.nominal_rate_hz
    n = int(round(cfg.session_length_s * fs))
    secs = np.arange(n) / fs

    def factor(spread: float = 1.0) -> float:
        return max(0.2, 1.0 + spread * motion.jitter * rng.standard_normal())

    f_amp, f_rate, f_freq = factor(), factor(), factor(0.5)
    amp = motion.base_amplitude * plan.scale[0] * f_amp
    seg_amp = np.array([m.base_amplitude for m in plan.motions]) * plan.scale[0] * f_amp
    seg_rate = np.array([m.burst_rate_hz for m in plan.motions]) * plan.scale[1] * f_rate
    seg_freq = np.array([m.burst_freq_hz for m in plan.motions]) * f_freq

    values = np.zeros((n, 6))
    values[:, 2] = 1.0  # gravity on the vertical axis

    # slow posture drift, a handful of sub-0.1 Hz components
    drift_f = rng.uniform(0.005, 0.05, size=(3, 6))
    drift_phase = rng.uniform(0, 2 * np.pi, size=(3, 6))
    drift = np.sin(2 * np.pi * secs[:, None, None] * drift_f + drift_phase).sum(axis=1) / 3
    values[:, :3] += cfg.posture_gain * amp * drift[:, :3]
    values[:, 3:] += cfg.posture_gain * amp * 0.2 * cfg.gyro_gain_dps_per_g * drift[:, 3:]

    # bursts: Poisson process thinned by the segment's rate and the shared intensity
    c = cfg.session_coupling
    peak = seg_rate.max() * (1 + c)
    if peak > 0 and seg_amp.max() > 0:
        n_cand = rng.poisson(peak * cfg.session_length_s)
        starts = np.sort(rng.uniform(0, cfg.session_length_s, n_cand))
        seg = plan.segment_of(starts)
        intensity = 1 + c * np.sin(2 * np.pi * starts / cfg.coupling_period_s + plan.phase)
        keep = rng.uniform(0, peak, n_cand) < seg_rate[seg] * intensity
        starts, seg = starts[keep], seg[keep]
        m = starts.size
        durs = rng.uniform(0.5, 2.0, m)
        amps = seg_amp[seg] * rng.lognormal(0.0, 0.5, m)
        phases = rng.uniform(0, 2 * np.pi, m)
        accel_dir = _unit_vectors(rng, m)
        gyro_dir = _unit_vectors(rng, m)
        for s0, d, a, f, ph, u, w in zip(
            starts, durs, amps, seg_freq[seg], phases, accel_dir, gyro_dir
        ):
            i0 = int(s0 * fs)
            i1 = min(n, i0 + int(d * fs))
            if i1 - i0 < 2:
                continue
            local = secs[i0:i1] - secs[i0]
            env = np.sin(np.pi * local / d) ** 2
            arg = 2 * np.pi * f * local + ph
            values[i0:i1, :3] += (a * env * np.sin(arg))[:, None] * u
            values[i0:i1, 3:] += (a * cfg.gyro_gain_dps_per_g * env * np.cos(arg))[:, None] * w

    values[:, :3] += rng.normal(0, cfg.noise_accel_g, size=(n, 3))
    values[:, 3:] += rng.normal(0, cfg.noise_gyro_dps, size=(n, 3))

    t = np.rint(secs * 1000).astype(np.int64)
    keep = np.ones(n, dtype=bool)
    if cfg.gap_rate_per_min > 0:
        n_gaps = rng.poisson(cfg.gap_rate_per_min * cfg.session_length_s / 60)
        for g0, glen in zip(rng.integers(1, n - 1, n_gaps), rng.integers(2, 60, n_gaps)):
            keep[g0 : min(n - 1, g0 + glen)] = False
    return SubjectStream(subject_id, t[keep], values[keep], fs)


def generate_synthetic(cfg: SyntheticConfig) -> list[Session]:
    """Synthesize ``sessions_per_activity`` sessions per activity, deterministic in ``cfg.seed``.

    Subjects in a session share the activity archetype and a group-level
    plan: a burst-intensity phase, a scaling of amplitude and burst rate
    (``session_jitter``), and occasional segments (probability
    ``confusion_rate``, mean length ``segment_mean_s``) during which the whole
    group moves like another activity. Noise, burst timing and per-subject
    jitter are drawn independently per subject.
    """
    sessions = []
    for label in cfg.dictionary:
        motion = cfg.motions[label.name]
        for j in range(cfg.sessions_per_activity):
            session_id = f"{label.name}_{j:02d}"
            plan = _plan_session(cfg, label.name, rng_for(cfg.seed, "session", session_id))
            streams = tuple(
                _synth_stream(
                    cfg, motion, plan, rng_for(cfg.seed, "stream", session_id, d), f"s{d + 1:02d}"
                )
                for d in range(cfg.devices_per_session)
            )
            sessions.append(Session(session_id, label, streams))
    return sessions
