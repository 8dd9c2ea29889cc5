"""Trust-gated messaging with partitioned, staged ("slow") reveal.

A message is split into contiguous partitions, each XOR-ed with its own
keystream. Partition ``i`` carries a trust threshold; the receiver can
read it once its trust in the sender reaches that threshold. Revealed
partitions stay revealed, so a message opens up gradually as trust grows.

The keystream is SHAKE-256 over the key seed, key id and partition index.
It is a deterministic stand-in and not a secure cipher.
"""

from __future__ import annotations

import enum
import hashlib
import math
import struct
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .routing import Delivery, MeshGraph, Route, relay, route_for_session
from .trust import DEFAULT_PROFILE, DeviceId, ProfileKey, TrustStore

MAGIC = b"SRV1"


class EmptyPlaintext(ValueError):
    pass


class KeyMismatch(ValueError):
    pass


class BelowTransmissionThreshold(PermissionError):
    def __init__(self, score: float, threshold: float):
        super().__init__(f"trust {score:.6f} below transmission threshold {threshold:.6f}")
        self.score = score
        self.threshold = threshold


class RevealMode(str, enum.Enum):
    DETERMINISTIC = "Deterministic"
    PROBABILISTIC = "Probabilistic"


_MODE_CODES = {RevealMode.DETERMINISTIC: 0, RevealMode.PROBABILISTIC: 1}


@dataclass(frozen=True)
class SecurityKey:
    key_id: str
    seed: int

    def __post_init__(self):
        if not 0 <= self.seed < 2**64:
            raise ValueError("key seed must fit in 64 bits")


def issue_key(rng: np.random.Generator) -> SecurityKey:
    return SecurityKey(key_id=rng.bytes(8).hex(), seed=int(rng.integers(0, 2**63)))


def keystream(key: SecurityKey, index: int, n: int) -> bytes:
    material = struct.pack("<Q", key.seed) + key.key_id.encode() + struct.pack("<I", index)
    return hashlib.shake_256(material).digest(n)


def _xor(data: bytes, stream: bytes) -> bytes:
    return bytes(a ^ b for a, b in zip(data, stream))


@dataclass(frozen=True)
class SlowRevealEnvelope:
    sender: DeviceId
    receiver: DeviceId
    profile: ProfileKey
    partitions: tuple
    partition_thresholds: tuple
    tx_threshold: float
    rx_threshold: float
    key_id: str
    sent_at: int = 0
    reveal_mode: RevealMode = RevealMode.DETERMINISTIC
    temperature: Optional[float] = None

    def __post_init__(self):
        th = self.partition_thresholds
        if len(self.partitions) != len(th) or not th:
            raise ValueError("need one threshold per partition and at least one partition")
        if th[0] != self.rx_threshold:
            raise ValueError("first partition threshold must equal the reception threshold")
        if any(b < a for a, b in zip(th, th[1:])) or th[-1] > 1.0:
            raise ValueError("partition thresholds must be non-decreasing and <= 1")
        if not 0.0 <= self.tx_threshold <= 1.0 or not 0.0 <= self.rx_threshold <= 1.0:
            raise ValueError("thresholds must lie in [0, 1]")
        if self.reveal_mode is RevealMode.PROBABILISTIC and not (self.temperature and self.temperature > 0):
            raise ValueError("probabilistic reveal needs a positive temperature")

    def __len__(self) -> int:
        return len(self.partitions)

    def to_bytes(self) -> bytes:
        profile = self.profile.encode()
        key_id = self.key_id.encode()
        body = [
            struct.pack(
                "<QQqBdddH",
                self.sender,
                self.receiver,
                self.sent_at,
                _MODE_CODES[self.reveal_mode],
                self.temperature or 0.0,
                self.tx_threshold,
                self.rx_threshold,
                len(profile),
            ),
            profile,
            struct.pack("<H", len(key_id)),
            key_id,
            struct.pack("<I", len(self.partitions)),
        ]
        for threshold, block in zip(self.partition_thresholds, self.partitions):
            body.append(struct.pack("<dI", threshold, len(block)))
            body.append(block)
        payload = b"".join(body)
        return MAGIC + struct.pack("<I", len(payload)) + payload

    @classmethod
    def from_bytes(cls, data: bytes) -> "SlowRevealEnvelope":
        if data[:4] != MAGIC:
            raise ValueError("not a slow-reveal envelope")
        (length,) = struct.unpack_from("<I", data, 4)
        if len(data) != 8 + length:
            raise ValueError("envelope length prefix does not match payload")
        off = 8
        sender, receiver, sent_at, mode, temperature, tx, rx, plen = struct.unpack_from("<QQqBdddH", data, off)
        off += struct.calcsize("<QQqBdddH")
        profile = data[off : off + plen].decode()
        off += plen
        (klen,) = struct.unpack_from("<H", data, off)
        off += 2
        key_id = data[off : off + klen].decode()
        off += klen
        (k,) = struct.unpack_from("<I", data, off)
        off += 4
        thresholds, blocks = [], []
        for _ in range(k):
            th, blen = struct.unpack_from("<dI", data, off)
            off += 12
            thresholds.append(th)
            blocks.append(bytes(data[off : off + blen]))
            off += blen
        reveal_mode = RevealMode.PROBABILISTIC if mode == 1 else RevealMode.DETERMINISTIC
        return cls(
            sender=sender,
            receiver=receiver,
            profile=profile,
            partitions=tuple(blocks),
            partition_thresholds=tuple(thresholds),
            tx_threshold=tx,
            rx_threshold=rx,
            key_id=key_id,
            sent_at=sent_at,
            reveal_mode=reveal_mode,
            temperature=temperature if reveal_mode is RevealMode.PROBABILISTIC else None,
        )

    def to_json(self) -> dict:
        return {
            "sender": self.sender,
            "receiver": self.receiver,
            "profile": self.profile,
            "key_id": self.key_id,
            "sent_at": self.sent_at,
            "reveal_mode": self.reveal_mode.value,
            "temperature": self.temperature,
            "tx_threshold": self.tx_threshold,
            "rx_threshold": self.rx_threshold,
            "partition_thresholds": list(self.partition_thresholds),
            "partitions": [b.hex() for b in self.partitions],
        }


def partition_thresholds(k: int, rx_threshold: float, theta_full: float) -> list[float]:
    if k == 1:
        return [rx_threshold]
    step = (theta_full - rx_threshold) / (k - 1)
    # clip so rounding can never push a threshold past theta_full
    return [min(rx_threshold + i * step, theta_full) for i in range(k - 1)] + [theta_full]


def split_blocks(plaintext: bytes, k: int) -> list[bytes]:
    """``k`` contiguous blocks of ``ceil(n/k)`` bytes; trailing ones may be short or empty."""
    size = math.ceil(len(plaintext) / k)
    return [plaintext[i * size : (i + 1) * size] for i in range(k)]


def encode(
    plaintext: bytes,
    k: int,
    tx_threshold: float,
    rx_threshold: float,
    theta_full: float,
    key: SecurityKey,
    mode: RevealMode = RevealMode.DETERMINISTIC,
    *,
    sender: DeviceId = 0,
    receiver: DeviceId = 0,
    profile: ProfileKey = DEFAULT_PROFILE,
    sent_at: int = 0,
    temperature: Optional[float] = None,
) -> SlowRevealEnvelope:
    if not plaintext:
        raise EmptyPlaintext("nothing to send")
    if k < 1:
        raise ValueError("need at least one partition")
    if not 0.0 <= rx_threshold <= theta_full <= 1.0:
        raise ValueError("need 0 <= rx_threshold <= theta_full <= 1")
    mode = RevealMode(mode)
    blocks = split_blocks(bytes(plaintext), k)
    cipher = tuple(_xor(b, keystream(key, i, len(b))) for i, b in enumerate(blocks))
    return SlowRevealEnvelope(
        sender=sender,
        receiver=receiver,
        profile=profile,
        partitions=cipher,
        partition_thresholds=tuple(partition_thresholds(k, rx_threshold, theta_full)),
        tx_threshold=tx_threshold,
        rx_threshold=rx_threshold,
        key_id=key.key_id,
        sent_at=sent_at,
        reveal_mode=mode,
        temperature=temperature if mode is RevealMode.PROBABILISTIC else None,
    )


@dataclass(frozen=True)
class TransmissionDecision:
    permitted: bool
    score: float
    threshold: float


def send(store: TrustStore, envelope: SlowRevealEnvelope, now: int) -> TransmissionDecision:
    """Sender-side gate: raises unless the sender trusts the receiver enough."""
    score = store.score(envelope.sender, envelope.receiver, envelope.profile, now)
    if score < envelope.tx_threshold:
        raise BelowTransmissionThreshold(score, envelope.tx_threshold)
    return TransmissionDecision(True, score, envelope.tx_threshold)


def transmit(
    store: TrustStore,
    envelope: SlowRevealEnvelope,
    now: int,
    graph: MeshGraph,
    event_log=None,
    both_in_proximity: bool = False,
    prefer_internet: bool = True,
) -> Delivery:
    """Gate at the sender, then route and relay to the receiver."""
    send(store, envelope, now)
    route: Route = route_for_session(graph, envelope.sender, envelope.receiver, both_in_proximity, prefer_internet)
    return relay(route, envelope, event_log, graph, now)


@dataclass(frozen=True)
class RevealResult:
    revealed_partitions: frozenset
    plaintext_fragments: tuple
    complete: bool
    score: float = 0.0

    def prefix(self) -> bytes:
        """Plaintext of the longest run of revealed partitions from index 0."""
        out = []
        for i, frag in self.plaintext_fragments:
            if i != len(out):
                break
            out.append(frag)
        return b"".join(out)


class RevealTracker:
    """Revealed partition indices per ``(key_id, receiver)``; only ever grows."""

    def __init__(self):
        self._revealed: dict[tuple[str, DeviceId], set[int]] = {}

    def revealed(self, envelope: SlowRevealEnvelope) -> set[int]:
        return self._revealed.setdefault((envelope.key_id, envelope.receiver), set())


def _logistic(x: float) -> float:
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


def reveal_probability(score: float, threshold: float, temperature: float) -> float:
    return _logistic((score - threshold) / temperature)


def attempt_decode(
    store: TrustStore,
    envelope: SlowRevealEnvelope,
    key: SecurityKey,
    now: int,
    rng: Optional[np.random.Generator] = None,
    reveals: Optional[RevealTracker] = None,
    receiver_policy: Optional[Callable[[float, SlowRevealEnvelope], bool]] = None,
) -> RevealResult:
    """Receiver-side decode of whatever the current trust unlocks.

    ``receiver_policy`` lets the receiver refuse on its own terms on top of
    the sender's reception threshold.
    """
    if key.key_id != envelope.key_id:
        raise KeyMismatch(f"key {key.key_id} does not open envelope {envelope.key_id}")
    reveals = reveals if reveals is not None else RevealTracker()
    revealed = reveals.revealed(envelope)
    score = store.score(envelope.receiver, envelope.sender, envelope.profile, now)
    gate = score >= envelope.rx_threshold
    if gate and receiver_policy is not None:
        gate = bool(receiver_policy(score, envelope))
    if gate:
        for i, th in enumerate(envelope.partition_thresholds):
            if i in revealed:
                continue
            if envelope.reveal_mode is RevealMode.DETERMINISTIC:
                if score >= th:
                    revealed.add(i)
            else:
                if rng is None:
                    raise ValueError("probabilistic reveal needs an rng")
                if rng.random() < reveal_probability(score, th, envelope.temperature):
                    revealed.add(i)
    fragments = tuple(
        (i, _xor(envelope.partitions[i], keystream(key, i, len(envelope.partitions[i])))) for i in sorted(revealed)
    )
    return RevealResult(frozenset(revealed), fragments, len(revealed) == len(envelope.partitions), score)


def reveal_over_time(
    store: TrustStore,
    envelope: SlowRevealEnvelope,
    key: SecurityKey,
    schedule: Sequence[int],
    rng: Optional[np.random.Generator] = None,
    reveals: Optional[RevealTracker] = None,
    before_attempt: Optional[Callable[[int], None]] = None,
) -> list[RevealResult]:
    """Decode at every tick of ``schedule``.

    ``before_attempt(tick)`` runs ahead of each attempt, which is where
    callers feed in the interactions that move trust between attempts.
    """
    if any(b <= a for a, b in zip(schedule, schedule[1:])):
        raise ValueError("schedule must be strictly increasing")
    reveals = reveals if reveals is not None else RevealTracker()
    out = []
    for tick in schedule:
        if before_attempt is not None:
            before_attempt(tick)
        out.append(attempt_decode(store, envelope, key, tick, rng, reveals))
    return out

