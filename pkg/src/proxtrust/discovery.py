"""Peer discovery: range-limited advertisement scanning and a zone registry.

The registry stands in for looking peers up through an online social
network: zones map to members and the interests they registered.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .trust import DeviceId, TrustStore
from .world import DeviceNode, World

MAX_ADVERTISED_TOPICS = 16


class UnknownZone(LookupError):
    pass


class Via(str, enum.Enum):
    OFFLINE = "Offline"
    ONLINE_REGISTRY = "OnlineRegistry"


@dataclass(frozen=True)
class AdvertisingPacket:
    device: DeviceId
    topics: frozenset
    accepts_relay: bool = True
    has_internet: bool = False

    def __post_init__(self):
        if len(self.topics) > MAX_ADVERTISED_TOPICS:
            raise ValueError(f"at most {MAX_ADVERTISED_TOPICS} topics fit in a packet")


def advertise(node: DeviceNode, accepts_relay: bool = True) -> AdvertisingPacket:
    # sorted truncation keeps the packet content deterministic
    topics = frozenset(sorted(node.interests)[:MAX_ADVERTISED_TOPICS])
    return AdvertisingPacket(node.id, topics, accepts_relay, node.online)


@dataclass(frozen=True)
class DiscoveryResult:
    peer: DeviceId
    distance: float
    via: Via
    matched_topics: frozenset = field(default_factory=frozenset)
    previously_known: bool = False
    directly_reachable: bool = True
    packet: Optional[AdvertisingPacket] = None


def scan(
    scanner: DeviceNode,
    world: Iterable[DeviceNode],
    now: int = 0,
    store: Optional[TrustStore] = None,
    topic: Optional[str] = None,
) -> list[DiscoveryResult]:
    """Every other node within the scanner's radio range, ordered by id.

    ``matched_topics`` holds the interests shared with the scanner. Passing
    ``topic`` filters during the scan, with the same result as
    :func:`topic_filter` applied afterwards. ``world`` may be a
    :class:`World`, which takes a vectorized path.
    """
    if isinstance(world, World):
        return _scan_world(scanner, world, store, topic)
    out = []
    for node in sorted(world, key=lambda n: n.id):
        if node.id == scanner.id:
            continue
        d = scanner.distance_to(node)
        if d > scanner.radio_range:
            continue
        packet = advertise(node)
        if topic is not None:
            if topic not in packet.topics:
                continue
            matched = frozenset({topic})
        else:
            matched = packet.topics & scanner.interests
        out.append(
            DiscoveryResult(
                peer=node.id,
                distance=d,
                via=Via.OFFLINE,
                matched_topics=matched,
                previously_known=store is not None and store.knows(scanner.id, node.id),
                directly_reachable=True,
                packet=packet,
            )
        )
    return out


def _scan_world(scanner: DeviceNode, world: World, store, topic) -> list[DiscoveryResult]:
    dist = np.hypot(world.pos[:, 0] - scanner.position[0], world.pos[:, 1] - scanner.position[1])
    in_range = np.nonzero((dist <= scanner.radio_range) & (world.ids != scanner.id))[0]
    out = []
    online = world.online
    for k in in_range.tolist():
        peer = int(world.ids[k])
        topics = frozenset(sorted(world.interests[k])[:MAX_ADVERTISED_TOPICS])
        if topic is not None:
            if topic not in topics:
                continue
            matched = frozenset({topic})
        else:
            matched = topics & scanner.interests
        out.append(
            DiscoveryResult(
                peer=peer,
                distance=float(dist[k]),
                via=Via.OFFLINE,
                matched_topics=matched,
                previously_known=store is not None and store.knows(scanner.id, peer),
                directly_reachable=True,
                packet=AdvertisingPacket(peer, topics, True, bool(online[k])),
            )
        )
    return out


def topic_filter(results: Sequence[DiscoveryResult], topic: str) -> list[DiscoveryResult]:
    kept = [
        replace(r, matched_topics=frozenset({topic}))
        for r in results
        if r.packet is not None and topic in r.packet.topics
    ]
    return sorted(kept, key=lambda r: r.peer)


class Registry:
    """Zone -> members, each with the interests they registered online."""

    def __init__(self, zones: Optional[Mapping[str, Mapping[DeviceId, Iterable[str]]]] = None):
        self.zones: dict[str, dict[DeviceId, frozenset]] = {}
        for zone, members in (zones or {}).items():
            for device, interests in members.items():
                self.register(zone, device, interests)

    def register(self, zone: str, device: DeviceId, interests: Iterable[str]) -> None:
        self.zones.setdefault(zone, {})[int(device)] = frozenset(interests)

    @classmethod
    def from_config(cls, section: Mapping) -> "Registry":
        reg = cls()
        for zone, members in section.get("zones", {}).items():
            reg.zones.setdefault(zone, {})
            for m in members:
                reg.register(zone, m["id"], m.get("interests", ()))
        return reg


def registry_lookup(registry: Registry, location_zone: str, topic: str) -> list[DeviceId]:
    try:
        members = registry.zones[location_zone]
    except KeyError:
        raise UnknownZone(location_zone) from None
    return sorted(d for d, interests in members.items() if topic in interests)


def discover(
    scanner: DeviceNode,
    world: Sequence[DeviceNode],
    now: int,
    topic: str,
    store: Optional[TrustStore] = None,
    registry: Optional[Registry] = None,
    zone: Optional[str] = None,
) -> list[DiscoveryResult]:
    """Offline scan plus registry lookup for one topic.

    A peer found both ways appears twice, once per ``via``; merging is left
    to the caller.
    """
    results = scan(scanner, world, now, store, topic=topic)
    if registry is None or zone is None:
        return results
    nodes = world.nodes() if isinstance(world, World) else list(world)
    by_id = {n.id: n for n in nodes}
    for device in registry_lookup(registry, zone, topic):
        if device == scanner.id:
            continue
        node = by_id.get(device)
        d = scanner.distance_to(node) if node is not None else float("inf")
        results.append(
            DiscoveryResult(
                peer=device,
                distance=d,
                via=Via.ONLINE_REGISTRY,
                matched_topics=frozenset({topic}),
                previously_known=store is not None and store.knows(scanner.id, device),
                directly_reachable=d <= scanner.radio_range,
                packet=advertise(node) if node is not None else None,
            )
        )
    return results
