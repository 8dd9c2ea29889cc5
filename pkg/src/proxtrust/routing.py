"""Mesh connectivity, route selection, and relaying.

Offline links follow a disk model with the min-range rule, so the graph is
undirected. When sender and receiver sit in different offline components,
a hybrid route walks to an internet gateway on each side and crosses
between them over the internet.
"""

from __future__ import annotations

import enum
from collections import deque
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .trust import DeviceId
from .world import DeviceNode


class DuplicateDeviceId(ValueError):
    pass


class NoRoute(RuntimeError):
    pass


class LinkDown(RuntimeError):
    def __init__(self, a: DeviceId, b: DeviceId):
        super().__init__(f"link {a}-{b} is down")
        self.a, self.b = a, b


class SessionKind(str, enum.Enum):
    OFFLINE = "Offline"
    ONLINE_PROXIMITY = "OnlineProximity"
    HYBRID = "Hybrid"


@dataclass(frozen=True)
class MeshGraph:
    nodes: frozenset
    offline_edges: frozenset
    internet_nodes: frozenset
    adjacency: dict = field(compare=False, repr=False)

    @classmethod
    def from_edges(cls, nodes, edges, internet_nodes=()) -> "MeshGraph":
        nodes = frozenset(int(n) for n in nodes)
        norm = frozenset((min(a, b), max(a, b)) for a, b in edges if a != b)
        adj: dict[DeviceId, list] = {n: [] for n in nodes}
        for a, b in norm:
            adj[a].append(b)
            adj[b].append(a)
        for n in adj:
            adj[n].sort()
        return cls(nodes, norm, frozenset(internet_nodes) & nodes, adj)

    def has_edge(self, a: DeviceId, b: DeviceId) -> bool:
        return (min(a, b), max(a, b)) in self.offline_edges

    def neighbors(self, a: DeviceId) -> list[DeviceId]:
        return self.adjacency[a]

    def component(self, start: DeviceId) -> set[DeviceId]:
        return set(bfs_distances(self, start))


@dataclass(frozen=True)
class Route:
    hops: tuple
    kind: SessionKind

    @property
    def latency(self) -> int:
        """Hop count; the internet bridge costs one hop like a radio link."""
        return len(self.hops) - 1

    @property
    def relays(self) -> tuple:
        return self.hops[1:-1]


def build_mesh(nodes: Sequence[DeviceNode]) -> MeshGraph:
    ids = [n.id for n in nodes]
    if len(set(ids)) != len(ids):
        seen, dup = set(), None
        for i in ids:
            if i in seen:
                dup = i
                break
            seen.add(i)
        raise DuplicateDeviceId(f"device id {dup} appears more than once")
    if not nodes:
        return MeshGraph.from_edges((), ())
    pos = np.array([n.position for n in nodes], dtype=float)
    rng_ = np.array([n.radio_range for n in nodes], dtype=float)
    diff = pos[:, None, :] - pos[None, :, :]
    dist = np.hypot(diff[..., 0], diff[..., 1])
    reach = dist <= np.minimum(rng_[:, None], rng_[None, :])
    ii, jj = np.nonzero(np.triu(reach, k=1))
    edges = [(ids[i], ids[j]) for i, j in zip(ii.tolist(), jj.tolist())]
    return MeshGraph.from_edges(ids, edges, [n.id for n in nodes if n.online])


def bfs_distances(graph: MeshGraph, start: DeviceId) -> dict[DeviceId, int]:
    dist = {start: 0}
    queue = deque([start])
    while queue:
        u = queue.popleft()
        for v in graph.adjacency[u]:
            if v not in dist:
                dist[v] = dist[u] + 1
                queue.append(v)
    return dist


def _offline_path(graph: MeshGraph, src: DeviceId, dst: DeviceId) -> Optional[list[DeviceId]]:
    # Distances from dst, then a greedy walk from src through the smallest
    # neighbour one step closer: shortest, and lexicographically least.
    to_dst = bfs_distances(graph, dst)
    if src not in to_dst:
        return None
    path = [src]
    u = src
    while u != dst:
        u = next(v for v in graph.adjacency[u] if to_dst.get(v) == to_dst[u] - 1)
        path.append(u)
    return path


def _nearest_gateway(graph: MeshGraph, start: DeviceId) -> Optional[DeviceId]:
    dist = bfs_distances(graph, start)
    gateways = [(d, n) for n, d in dist.items() if n in graph.internet_nodes]
    return min(gateways)[1] if gateways else None


def find_route(graph: MeshGraph, sender: DeviceId, receiver: DeviceId) -> Route:
    for n in (sender, receiver):
        if n not in graph.nodes:
            raise KeyError(f"device {n} not in mesh")
    path = _offline_path(graph, sender, receiver)
    if path is not None:
        return Route(tuple(path), SessionKind.OFFLINE)
    g_out = _nearest_gateway(graph, sender)
    g_in = _nearest_gateway(graph, receiver)
    if g_out is None or g_in is None:
        raise NoRoute(f"no offline path and no internet bridge from {sender} to {receiver}")
    hops = _offline_path(graph, sender, g_out) + _offline_path(graph, g_in, receiver)
    return Route(tuple(hops), SessionKind.HYBRID)


def classify_session(
    graph: MeshGraph,
    sender: DeviceId,
    receiver: DeviceId,
    both_in_proximity: bool,
    prefer_internet: bool = True,
) -> SessionKind:
    if (
        prefer_internet
        and both_in_proximity
        and sender in graph.internet_nodes
        and receiver in graph.internet_nodes
    ):
        return SessionKind.ONLINE_PROXIMITY
    return find_route(graph, sender, receiver).kind


def route_for_session(
    graph: MeshGraph,
    sender: DeviceId,
    receiver: DeviceId,
    both_in_proximity: bool,
    prefer_internet: bool = True,
) -> Route:
    kind = classify_session(graph, sender, receiver, both_in_proximity, prefer_internet)
    if kind is SessionKind.ONLINE_PROXIMITY:
        return Route((sender, receiver), kind)
    return find_route(graph, sender, receiver)


@dataclass
class Delivery:
    envelope: object
    route: Route
    delivered_at: int
    relay_count: int


def _link_ok(graph: MeshGraph, route: Route, a: DeviceId, b: DeviceId) -> bool:
    if graph.has_edge(a, b):
        return True
    # internet legs: the bridge of a hybrid route, or an online session
    if route.kind is not SessionKind.OFFLINE:
        return a in graph.internet_nodes and b in graph.internet_nodes
    return False


def relay(route: Route, envelope, event_log=None, graph: Optional[MeshGraph] = None, now: int = 0) -> Delivery:
    """Carry ``envelope`` hop by hop as opaque bytes.

    Intermediate nodes only forward the serialized payload. Each one adds a
    ``relay_hop`` event. With ``graph`` given, every link is checked against
    it first and :class:`LinkDown` raised if one has vanished.
    """
    if graph is not None:
        for a, b in zip(route.hops, route.hops[1:]):
            if a not in graph.nodes or b not in graph.nodes or not _link_ok(graph, route, a, b):
                raise LinkDown(a, b)
    payload = envelope.to_bytes()
    key_id = getattr(envelope, "key_id", None)
    for i, node in enumerate(route.relays, start=1):
        if event_log is not None:
            event_log.emit("relay_hop", now, key_id=key_id, node=node, hop=i)
    received = type(envelope).from_bytes(payload)
    return Delivery(received, route, now, len(route.relays))
