"""Device-side corroboration: local inference, neighbor inbox, aggregation."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .classifier.forest import BackboneModel
from .errors import ConfigError, ProtocolError
from .features import LabeledWindow, extract_features

DEFAULT_STALENESS_MS = 5000
STRATEGIES = ("mean", "weighted", "vote")


@dataclass(frozen=True, eq=False)
class ProbabilityVector:
    """One device's per-activity probabilities at one tick; the broadcast payload."""

    device_id: str
    tick_ms: int
    probs: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=np.float64).reshape(-1)
        if p.size == 0 or np.any(p < 0) or not np.isfinite(p).all():
            raise ProtocolError(f"invalid probabilities from {self.device_id!r}: {p}")
        if abs(p.sum() - 1.0) > 1e-9:
            raise ProtocolError(f"probabilities from {self.device_id!r} sum to {p.sum()!r}")
        p.flags.writeable = False
        object.__setattr__(self, "probs", p)
        object.__setattr__(self, "tick_ms", int(self.tick_ms))

    def __eq__(self, other) -> bool:
        if not isinstance(other, ProbabilityVector):
            return NotImplemented
        return (
            self.device_id == other.device_id
            and self.tick_ms == other.tick_ms
            and np.array_equal(self.probs, other.probs)
        )

    def to_json(self) -> str:
        return json.dumps(
            {"device_id": self.device_id, "tick_ms": self.tick_ms, "probs": self.probs.tolist()}
        )

    @classmethod
    def from_json(cls, text: str) -> ProbabilityVector:
        try:
            d = json.loads(text)
            return cls(str(d["device_id"]), int(d["tick_ms"]), d["probs"])
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, ProtocolError):
                raise
            raise ProtocolError(f"malformed broadcast payload: {exc}") from None


@dataclass(frozen=True)
class Aggregation:
    """``mean`` (default), ``weighted`` with local weight ``alpha``, or ``vote``."""

    kind: str = "mean"
    alpha: float = 0.5

    def __post_init__(self):
        if self.kind not in STRATEGIES:
            raise ConfigError(f"unknown aggregation {self.kind!r}; choose from {STRATEGIES}")
        if not 0.0 <= self.alpha <= 1.0:
            raise ConfigError(f"alpha must lie in [0, 1], got {self.alpha}")


@dataclass(frozen=True, eq=False)
class Decision:
    device_id: str
    tick_ms: int
    standalone_label: int
    corroborated_label: int
    standalone_probs: np.ndarray
    corroborated_probs: np.ndarray
    n_neighbors_used: int


def argmax_label(probs: np.ndarray) -> int:
    """Index of the largest probability; the lowest index wins ties."""
    return int(np.argmax(probs))


@dataclass(eq=False)
class DeviceState:
    """Mutable per-device state, owned by exactly one logical actor."""

    device_id: str
    model: BackboneModel | None
    n_classes: int
    staleness_ms: int = DEFAULT_STALENESS_MS
    aggregation: Aggregation = Aggregation()
    # neighbor id -> (latest vector, receipt time in ms)
    inbox: dict[str, tuple[ProbabilityVector, int]] = field(default_factory=dict)

    def __post_init__(self):
        if self.staleness_ms < 0:
            raise ConfigError(f"staleness_ms must be non-negative, got {self.staleness_ms}")

    def eligible(self, now_ms: int) -> list[ProbabilityVector]:
        """Neighbor vectors received no later than ``now_ms`` and at most ``staleness_ms`` ago."""
        return [
            pv
            for _, (pv, at) in sorted(self.inbox.items())
            if at <= now_ms and now_ms - at <= self.staleness_ms
        ]


def local_infer(state: DeviceState, window: LabeledWindow, tick_ms: int | None = None) -> ProbabilityVector:
    """Classify the device's own window; the tick defaults to the window end."""
    if state.model is None:
        raise ConfigError(f"device {state.device_id!r} has no model")
    probs = state.model.predict_proba(extract_features(window))
    tick = window.end_ms if tick_ms is None else tick_ms
    return ProbabilityVector(state.device_id, tick, probs)


def receive(state: DeviceState, pv: ProbabilityVector, now_ms: int) -> DeviceState:
    """Store ``pv`` if it is newer than what the inbox holds for that neighbor."""
    if pv.device_id == state.device_id:
        raise ProtocolError(f"device {state.device_id!r} received its own broadcast")
    if pv.probs.size != state.n_classes:
        raise ProtocolError(
            f"vector from {pv.device_id!r} has {pv.probs.size} classes, expected {state.n_classes}"
        )
    held = state.inbox.get(pv.device_id)
    if held is None or pv.tick_ms > held[0].tick_ms:
        state.inbox[pv.device_id] = (pv, int(now_ms))
    return state


def combine(local: np.ndarray, neighbors: list[np.ndarray], agg: Aggregation) -> np.ndarray:
    if not neighbors:
        if agg.kind == "vote":
            out = np.zeros_like(local)
            out[argmax_label(local)] = 1.0
            return out
        return local.copy()
    if agg.kind == "mean":
        return np.vstack([local, *neighbors]).mean(axis=0)
    if agg.kind == "weighted":
        return agg.alpha * local + (1.0 - agg.alpha) * np.vstack(neighbors).mean(axis=0)
    votes = np.bincount(
        [argmax_label(p) for p in (local, *neighbors)], minlength=local.size
    ).astype(np.float64)
    return votes / votes.sum()


def aggregate(state: DeviceState, local: ProbabilityVector, now_ms: int) -> Decision:
    neighbors = [pv.probs for pv in state.eligible(now_ms)]
    corroborated = combine(local.probs, neighbors, state.aggregation)
    return Decision(
        device_id=state.device_id,
        tick_ms=int(now_ms),
        standalone_label=argmax_label(local.probs),
        corroborated_label=argmax_label(corroborated),
        standalone_probs=local.probs,
        corroborated_probs=corroborated,
        n_neighbors_used=len(neighbors),
    )
