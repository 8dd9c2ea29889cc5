"""Directed, profile-keyed trust scores between devices.

Scores live in ``[0, 1]``. Each direction of a pair is stored separately,
so ``T(a, b)`` and ``T(b, a)`` evolve independently. Time is measured in
simulation ticks; decay is applied lazily whenever a score is read.
"""

from __future__ import annotations

import enum
import json
import math
import threading
from dataclasses import asdict, dataclass, field, fields
from typing import IO, Iterable, Iterator, Optional

DeviceId = int
ProfileKey = str

DEFAULT_PROFILE: ProfileKey = "default"
HEALTH_PROFILE: ProfileKey = "health-data"

TICKS_PER_DAY = 1440  # at the default 60 s tick


class InteractionKind(str, enum.Enum):
    CONVERSATION = "Conversation"
    HANDSHAKE = "Handshake"
    WAVE = "Wave"
    CO_PRESENCE = "CoPresence"
    MESSAGE_EXCHANGE = "MessageExchange"
    HEALTH_CONSULT = "HealthConsult"


# Quality used for scripted interactions that do not carry their own value.
# CoPresence is absent on purpose: its quality is the proximity score.
DEFAULT_KIND_QUALITY = {
    InteractionKind.CONVERSATION: 0.7,
    InteractionKind.HANDSHAKE: 0.8,
    InteractionKind.WAVE: 0.4,
    InteractionKind.MESSAGE_EXCHANGE: 0.6,
    InteractionKind.HEALTH_CONSULT: 0.9,
}


@dataclass(frozen=True)
class TrustModelParams:
    """Weights and time constants of the trust model.

    Time constants are in ticks and default to a 60 second tick: the
    proximity saturation is 30 minutes, the decay half-life 30 days and the
    previous-session window 90 days.
    """

    w_prev: float = 0.35
    w_peer: float = 0.25
    w_int: float = 0.10
    w_app: float = 0.10
    w_prox: float = 0.15
    w_phys: float = 0.05
    learning_rate: float = 0.2
    half_life: float = 30 * TICKS_PER_DAY
    baseline: float = 0.0
    peer_cutoff: float = 0.5
    session_window: float = 90 * TICKS_PER_DAY
    prox_saturation: float = 30.0
    distance_scale: float = 5.0

    def __post_init__(self):
        problems = self.problems()
        if problems:
            raise ValueError("; ".join(f"{k}: {v}" for k, v in problems))

    def problems(self) -> list[tuple[str, str]]:
        out = []
        weights = self.weights()
        for name, w in zip(FACTOR_NAMES, weights):
            if not w >= 0:
                out.append((f"w_{name}", "must be >= 0"))
        if not any(w > 0 for w in weights):
            out.append(("weights", "at least one weight must be > 0"))
        if not 0 < self.learning_rate <= 1:
            out.append(("learning_rate", "must be in (0, 1]"))
        for name in ("half_life", "prox_saturation", "distance_scale"):
            if not getattr(self, name) > 0:
                out.append((name, "must be > 0"))
        for name in ("baseline", "peer_cutoff"):
            if not 0 <= getattr(self, name) <= 1:
                out.append((name, "must be in [0, 1]"))
        if not self.session_window >= 0:
            out.append(("session_window", "must be >= 0"))
        return out

    def weights(self) -> tuple[float, ...]:
        return (self.w_prev, self.w_peer, self.w_int, self.w_app, self.w_prox, self.w_phys)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "TrustModelParams":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown trust parameters: {sorted(unknown)}")
        return cls(**data)


FACTOR_NAMES = ("prev", "peer", "int", "app", "prox", "phys")


@dataclass(frozen=True)
class FactorInputs:
    """One optional value per trust factor; ``None`` means not observed."""

    prev_score: Optional[float] = None
    peer_score: Optional[float] = None
    interest_overlap: Optional[float] = None
    app_overlap: Optional[float] = None
    prox_score: Optional[float] = None
    phys_score: Optional[float] = None

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if v is not None and not 0.0 <= v <= 1.0:
                raise ValueError(f"{f.name}={v} outside [0, 1]")

    def values(self) -> tuple[Optional[float], ...]:
        return (
            self.prev_score,
            self.peer_score,
            self.interest_overlap,
            self.app_overlap,
            self.prox_score,
            self.phys_score,
        )


@dataclass(frozen=True)
class InteractionEvent:
    a: DeviceId
    b: DeviceId
    time: int
    duration: float
    distance: float
    kind: InteractionKind = InteractionKind.CO_PRESENCE
    quality: float = 1.0

    def __post_init__(self):
        if self.a == self.b:
            raise ValueError("interaction needs two distinct devices")
        if self.duration < 0 or self.distance < 0:
            raise ValueError("duration and distance must be non-negative")
        if not 0.0 <= self.quality <= 1.0:
            raise ValueError(f"quality={self.quality} outside [0, 1]")


@dataclass
class DirectedTrust:
    source: DeviceId
    target: DeviceId
    profile: ProfileKey
    score: float
    last_updated: int
    interaction_count: int = 0

    def to_record(self) -> dict:
        return {
            "from": self.source,
            "to": self.target,
            "profile": self.profile,
            "score": self.score,
            "last_updated": self.last_updated,
            "interaction_count": self.interaction_count,
        }

    @classmethod
    def from_record(cls, rec: dict) -> "DirectedTrust":
        return cls(
            source=int(rec["from"]),
            target=int(rec["to"]),
            profile=rec["profile"],
            score=float(rec["score"]),
            last_updated=int(rec["last_updated"]),
            interaction_count=int(rec["interaction_count"]),
        )


def _clamp(x: float) -> float:
    return 0.0 if x < 0.0 else 1.0 if x > 1.0 else x


def proximity_score(duration: float, distance: float, params: TrustModelParams) -> float:
    """Saturating in exposure time, exponentially discounted by distance."""
    if duration <= 0:
        return 0.0
    return -math.expm1(-duration / params.prox_saturation) * math.exp(-distance / params.distance_scale)


def overlap_score(set_a: Iterable[str], set_b: Iterable[str]) -> float:
    """Jaccard similarity, 0 when both sets are empty."""
    a, b = set(set_a), set(set_b)
    union = len(a | b)
    return len(a & b) / union if union else 0.0


def initial_trust(inputs: FactorInputs, params: TrustModelParams) -> float:
    num = den = 0.0
    for w, x in zip(params.weights(), inputs.values()):
        if x is None:
            continue
        num += w * x
        den += w
    if den == 0.0:
        # either nothing observed or only zero-weight factors present
        return params.baseline
    return _clamp(num / den)


def update_on_interaction(current: float, event: InteractionEvent, params: TrustModelParams) -> float:
    """Move ``current`` toward the event's effective quality by the learning rate."""
    q_eff = event.quality * proximity_score(event.duration, event.distance, params)
    return _clamp(current + params.learning_rate * (q_eff - current))


def decay(current: float, elapsed: float, params: TrustModelParams) -> float:
    if elapsed <= 0:
        return current
    base = params.baseline
    return _clamp(base + (current - base) * 2.0 ** (-elapsed / params.half_life))


class TrustStore:
    """Map of ``(from, to, profile)`` to :class:`DirectedTrust`.

    Reads take no lock. Writes go through a single lock, which serializes
    writers on every key (and so on each key individually).
    """

    def __init__(self, params: Optional[TrustModelParams] = None):
        self.params = params or TrustModelParams()
        self._entries: dict[tuple[DeviceId, DeviceId, ProfileKey], DirectedTrust] = {}
        self._outgoing: dict[tuple[DeviceId, ProfileKey], dict[DeviceId, DirectedTrust]] = {}
        self._incoming: dict[tuple[DeviceId, ProfileKey], dict[DeviceId, DirectedTrust]] = {}
        self._pairs: set[tuple[DeviceId, DeviceId]] = set()
        self._lock = threading.Lock()

    def __len__(self) -> int:
        return len(self._entries)

    def __iter__(self) -> Iterator[DirectedTrust]:
        return iter(self._entries.values())

    def __contains__(self, key) -> bool:
        return key in self._entries

    def entry(self, a: DeviceId, b: DeviceId, profile: ProfileKey = DEFAULT_PROFILE) -> Optional[DirectedTrust]:
        return self._entries.get((a, b, profile))

    def outgoing(self, a: DeviceId, profile: ProfileKey = DEFAULT_PROFILE) -> dict[DeviceId, DirectedTrust]:
        return self._outgoing.get((a, profile), {})

    def incoming(self, b: DeviceId, profile: ProfileKey = DEFAULT_PROFILE) -> dict[DeviceId, DirectedTrust]:
        return self._incoming.get((b, profile), {})

    def knows(self, a: DeviceId, b: DeviceId) -> bool:
        """True when ``a`` holds a score for ``b`` under any profile."""
        return (a, b) in self._pairs

    def profiles(self) -> set[ProfileKey]:
        return {DEFAULT_PROFILE} | {p for (_, p) in self._outgoing}

    def set(
        self,
        a: DeviceId,
        b: DeviceId,
        score: float,
        now: int = 0,
        profile: ProfileKey = DEFAULT_PROFILE,
        interaction_count: Optional[int] = None,
    ) -> DirectedTrust:
        if a == b:
            raise ValueError("a device does not score itself")
        if not 0.0 <= score <= 1.0:
            raise ValueError(f"score={score} outside [0, 1]")
        if not profile:
            raise ValueError("profile name must be non-empty")
        with self._lock:
            old = self._entries.get((a, b, profile))
            count = interaction_count if interaction_count is not None else (old.interaction_count if old else 0)
            rec = DirectedTrust(a, b, profile, float(score), int(now), int(count))
            self._entries[(a, b, profile)] = rec
            self._outgoing.setdefault((a, profile), {})[b] = rec
            self._incoming.setdefault((b, profile), {})[a] = rec
            self._pairs.add((a, b))
            return rec

    def score(self, a: DeviceId, b: DeviceId, profile: ProfileKey = DEFAULT_PROFILE, now: Optional[int] = None) -> float:
        """Current score with lazy decay; ``now=None`` returns the stored value."""
        rec = self._entries.get((a, b, profile))
        if rec is None:
            return self.params.baseline
        if now is None:
            return rec.score
        return decay(rec.score, now - rec.last_updated, self.params)

    def copy(self) -> "TrustStore":
        other = TrustStore(self.params)
        for rec in self._entries.values():
            other.set(rec.source, rec.target, rec.score, rec.last_updated, rec.profile, rec.interaction_count)
        return other

    def records(self) -> list[dict]:
        return [r.to_record() for r in sorted(self._entries.values(), key=lambda r: (r.source, r.target, r.profile))]

    def dump_jsonl(self, fh: IO[str]) -> None:
        for rec in self.records():
            fh.write(json.dumps(rec, sort_keys=True) + "\n")

    @classmethod
    def load_jsonl(cls, fh: IO[str], params: Optional[TrustModelParams] = None) -> "TrustStore":
        store = cls(params)
        for line in fh:
            line = line.strip()
            if line:
                r = DirectedTrust.from_record(json.loads(line))
                store.set(r.source, r.target, r.score, r.last_updated, r.profile, r.interaction_count)
        return store


def get_score(store: TrustStore, a: DeviceId, b: DeviceId, profile: ProfileKey, now: int) -> float:
    return store.score(a, b, profile, now)


def transitive_trust(
    store: TrustStore,
    a: DeviceId,
    b: DeviceId,
    profile: ProfileKey = DEFAULT_PROFILE,
    params: Optional[TrustModelParams] = None,
    now: Optional[int] = None,
) -> Optional[float]:
    """Trust-weighted mean of what ``a``'s trusted peers think of ``b``.

    Only peers that ``a`` trusts at least ``peer_cutoff`` and that hold a
    score for ``b`` count. Returns ``None`` when there is no such peer.
    With ``now`` given, every score is read with decay applied.
    """
    if a == b:
        raise ValueError("transitive trust needs two distinct devices")
    params = params or store.params
    out_a, in_b = store.outgoing(a, profile), store.incoming(b, profile)
    if len(out_a) <= len(in_b):
        mutual = [p for p in out_a if p in in_b]
    else:
        mutual = [p for p in in_b if p in out_a]
    num = den = 0.0
    for p in sorted(mutual):
        t_ap = store.score(a, p, profile, now)
        if t_ap < params.peer_cutoff:
            continue
        num += t_ap * store.score(p, b, profile, now)
        den += t_ap
    if den == 0.0:
        # also covers peers that pass a zero cutoff with zero trust
        return None
    return _clamp(num / den)


def verify_authority(
    store: TrustStore,
    requester: DeviceId,
    peer: DeviceId,
    profile: ProfileKey,
    threshold: float,
    now: int,
) -> bool:
    """Does ``requester`` trust ``peer`` enough under ``profile``?"""
    if not 0.0 <= threshold <= 1.0:
        raise ValueError(f"threshold={threshold} outside [0, 1]")
    return store.score(requester, peer, profile, now) >= threshold


@dataclass
class SessionContext:
    """What a device knows about a peer at the start of an interaction."""

    interests_a: frozenset = field(default_factory=frozenset)
    interests_b: frozenset = field(default_factory=frozenset)
    apps_a: frozenset = field(default_factory=frozenset)
    apps_b: frozenset = field(default_factory=frozenset)


def session_start_score(
    store: TrustStore,
    a: DeviceId,
    b: DeviceId,
    profile: ProfileKey,
    now: int,
    event: Optional[InteractionEvent] = None,
    context: Optional[SessionContext] = None,
) -> float:
    """Score ``a`` holds for ``b`` before applying a new interaction.

    A recent entry (within the session window) is the previous-session
    factor and is blended with whatever else is observable now. An entry
    older than the window is used as-is after decay. Without any entry the
    score comes from the remaining factors alone.
    """
    params = store.params
    rec = store.entry(a, b, profile)
    if rec is not None and now - rec.last_updated > params.session_window:
        return store.score(a, b, profile, now)
    prev = store.score(a, b, profile, now) if rec is not None else None
    ctx = context or SessionContext()
    interest = None
    if ctx.interests_a or ctx.interests_b:
        interest = overlap_score(ctx.interests_a, ctx.interests_b)
    apps = None
    if ctx.apps_a or ctx.apps_b:
        apps = overlap_score(ctx.apps_a, ctx.apps_b)
    prox = phys = None
    if event is not None:
        prox = proximity_score(event.duration, event.distance, params)
        if event.kind is not InteractionKind.CO_PRESENCE:
            phys = event.quality
    inputs = FactorInputs(
        prev_score=prev,
        peer_score=transitive_trust(store, a, b, profile, params, now),
        interest_overlap=interest,
        app_overlap=apps,
        prox_score=prox,
        phys_score=phys,
    )
    return initial_trust(inputs, params)


def apply_interaction(
    store: TrustStore,
    a: DeviceId,
    b: DeviceId,
    event: InteractionEvent,
    profile: ProfileKey = DEFAULT_PROFILE,
    context: Optional[SessionContext] = None,
) -> DirectedTrust:
    """Update ``a``'s score for ``b`` after ``event`` and store it at ``event.time``."""
    start = session_start_score(store, a, b, profile, event.time, event, context)
    new = update_on_interaction(start, event, store.params)
    rec = store.entry(a, b, profile)
    count = (rec.interaction_count if rec else 0) + 1
    return store.set(a, b, new, event.time, profile, count)
