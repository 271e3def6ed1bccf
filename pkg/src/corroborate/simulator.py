"""Synchronous-round replay of sessions: infer, broadcast, aggregate at every tick."""

from __future__ import annotations

import heapq
import json
import logging
from collections.abc import Collection, Sequence
from dataclasses import dataclass, field

import numpy as np

from .classifier.forest import BackboneModel
from .corroboration import (
    DEFAULT_STALENESS_MS,
    Aggregation,
    Decision,
    DeviceState,
    ProbabilityVector,
    aggregate,
    receive,
)
from .dataset import DEFAULT_MAX_GAP_MS, ActivityLabel, LabelDictionary, Session, repair_gaps
from .errors import ConfigError, FormatError, SimulationError
from .features import WindowSpec, extract_batch, make_windows
from .seeding import uniform

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class NetworkModel:
    """Independent per-(sender, receiver, tick) loss plus a fixed delivery latency."""

    drop_probability: float = 0.0
    latency_ms: int = 0
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.drop_probability <= 1.0:
            raise ConfigError(f"drop_probability must lie in [0, 1], got {self.drop_probability}")
        if self.latency_ms < 0:
            raise ConfigError(f"latency_ms must be non-negative, got {self.latency_ms}")

    def delivers(self, session_id: str, sender: str, receiver: str, tick_ms: int) -> bool:
        if self.drop_probability == 0.0:
            return True
        u = uniform(self.seed, "drop", session_id, sender, receiver, tick_ms)
        return u >= self.drop_probability


@dataclass(frozen=True)
class SimConfig:
    window: WindowSpec = WindowSpec()
    tick_ms: int | None = None  # defaults to the window stride
    network: NetworkModel = NetworkModel()
    aggregation: Aggregation = Aggregation()
    staleness_ms: int = DEFAULT_STALENESS_MS
    max_gap_ms: int = DEFAULT_MAX_GAP_MS
    seed: int = 0

    def __post_init__(self):
        if self.tick_ms is None:
            object.__setattr__(self, "tick_ms", self.window.stride_ms)
        if self.tick_ms != self.window.stride_ms:
            raise ConfigError(
                f"tick period {self.tick_ms} ms must equal the window stride {self.window.stride_ms} ms"
            )


@dataclass(eq=False)
class SessionTrace:
    session_id: str
    truth: ActivityLabel
    labels: LabelDictionary
    decisions: dict[str, list[Decision]] = field(default_factory=dict)

    def all_decisions(self) -> list[Decision]:
        return [d for dev in sorted(self.decisions) for d in self.decisions[dev]]

    def __len__(self) -> int:
        return sum(len(v) for v in self.decisions.values())


def run_session(
    session: Session,
    model: BackboneModel,
    cfg: SimConfig = SimConfig(),
    include: Collection[tuple[str, str, int]] | None = None,
    participate: Collection[tuple[str, str, int]] | None = None,
) -> SessionTrace:
    """Replay one session.

    Ticks fall at every window end (``length``, ``length + stride``, ...). At
    each tick every device with a valid window infers, all broadcasts are
    delivered or dropped, then every device aggregates. ``include`` limits
    which ``(session_id, subject_id, window_start_ms)`` decisions are
    recorded; ``participate`` limits which windows are inferred and
    broadcast at all (default: every complete window).
    """
    if not session.streams:
        raise SimulationError(f"session {session.session_id!r} has no devices")
    spec, length = cfg.window, cfg.window.length_ms
    K = len(model.labels)

    # Local inference does not depend on network state, so each device's
    # windows are classified up front in one batch.
    local: dict[str, dict[int, ProbabilityVector]] = {}
    for stream in session.streams:
        windows = make_windows(
            repair_gaps(stream, cfg.max_gap_ms), spec, session.activity, session.session_id
        )
        if participate is not None:
            windows = [w for w in windows if w.key in participate]
        if not windows:
            log.warning("%s/%s: no complete window", session.session_id, stream.subject_id)
            local[stream.subject_id] = {}
            continue
        probs = np.atleast_2d(model.predict_proba(extract_batch(windows)))
        local[stream.subject_id] = {
            w.end_ms: ProbabilityVector(stream.subject_id, w.end_ms, p)
            for w, p in zip(windows, probs)
        }
    ends = [t for per_dev in local.values() for t in per_dev]
    if not ends:
        if participate is not None:
            return SessionTrace(
                session.session_id, session.activity, model.labels, {d: [] for d in local}
            )
        raise SimulationError(f"session {session.session_id!r} has no complete window")

    devices = sorted(local)
    states = {
        d: DeviceState(d, model, K, cfg.staleness_ms, cfg.aggregation) for d in devices
    }
    trace = SessionTrace(session.session_id, session.activity, model.labels, {d: [] for d in devices})
    pending: list[tuple[int, int, str, ProbabilityVector]] = []
    seq = 0
    for tick in range(length, max(ends) + 1, cfg.tick_ms):
        # 1. infer
        fresh = {d: local[d][tick] for d in devices if tick in local[d]}
        # 2. broadcast and deliver
        for sender, pv in fresh.items():
            for receiver in devices:
                if receiver == sender:
                    continue
                if cfg.network.delivers(session.session_id, sender, receiver, tick):
                    heapq.heappush(pending, (tick + cfg.network.latency_ms, seq, receiver, pv))
                    seq += 1
        while pending and pending[0][0] <= tick:
            at, _, receiver, pv = heapq.heappop(pending)
            receive(states[receiver], pv, at)
        # 3. aggregate
        for d, pv in fresh.items():
            if include is not None and (session.session_id, d, tick - length) not in include:
                continue
            trace.decisions[d].append(aggregate(states[d], pv, tick))
    return trace


def run_experiment(
    sessions: Sequence[Session],
    model: BackboneModel,
    cfg: SimConfig = SimConfig(),
    include: Collection[tuple[str, str, int]] | None = None,
    participate: Collection[tuple[str, str, int]] | None = None,
) -> list[SessionTrace]:
    for s in sessions:
        if s.activity not in model.labels:
            raise ConfigError(
                f"session {s.session_id!r} has activity {s.activity.name!r} "
                f"not covered by the model labels {list(model.labels.names)}"
            )
    if include is not None and not isinstance(include, (set, frozenset)):
        include = set(include)
    if participate is not None and not isinstance(participate, (set, frozenset)):
        participate = set(participate)
    return [run_session(s, model, cfg, include, participate) for s in sessions]


# ---------------------------------------------------------------- JSON-lines traces

TRACE_FIELDS = (
    "session_id",
    "device_id",
    "tick_ms",
    "truth",
    "standalone",
    "corroborated",
    "standalone_probs",
    "corroborated_probs",
    "n_neighbors_used",
)


def write_traces(traces: Sequence[SessionTrace], path) -> int:
    """Write one decision per line; returns the number of lines."""
    n = 0
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for tr in traces:
            names = tr.labels.names
            for dec in tr.all_decisions():
                rec = {
                    "session_id": tr.session_id,
                    "device_id": dec.device_id,
                    "tick_ms": dec.tick_ms,
                    "truth": tr.truth.name,
                    "standalone": names[dec.standalone_label],
                    "corroborated": names[dec.corroborated_label],
                    "standalone_probs": dec.standalone_probs.tolist(),
                    "corroborated_probs": dec.corroborated_probs.tolist(),
                    "n_neighbors_used": dec.n_neighbors_used,
                }
                fh.write(json.dumps(rec) + "\n")
                n += 1
    return n


def read_traces(path, labels: LabelDictionary) -> list[SessionTrace]:
    """Inverse of :func:`write_traces`; sessions keep their first-seen order."""
    traces: dict[str, SessionTrace] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                missing = [f for f in TRACE_FIELDS if f not in rec]
                if missing:
                    raise FormatError(f"{path}:{lineno}: missing field {missing[0]!r}")
                truth = labels.label(rec["truth"])
                tr = traces.setdefault(
                    rec["session_id"], SessionTrace(rec["session_id"], truth, labels)
                )
                if tr.truth != truth:
                    raise FormatError(f"{path}:{lineno}: truth changes within session")
                dec = Decision(
                    device_id=rec["device_id"],
                    tick_ms=int(rec["tick_ms"]),
                    standalone_label=labels.label(rec["standalone"]).id,
                    corroborated_label=labels.label(rec["corroborated"]).id,
                    standalone_probs=np.asarray(rec["standalone_probs"], dtype=float),
                    corroborated_probs=np.asarray(rec["corroborated_probs"], dtype=float),
                    n_neighbors_used=int(rec["n_neighbors_used"]),
                )
            except json.JSONDecodeError as exc:
                raise FormatError(f"{path}:{lineno}: invalid JSON ({exc})") from None
            tr.decisions.setdefault(dec.device_id, []).append(dec)
    return list(traces.values())
