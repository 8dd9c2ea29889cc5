"""Simulated devices, their positions, and random-waypoint mobility."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .trust import DeviceId


@dataclass
class DeviceNode:
    id: DeviceId
    position: tuple[float, float] = (0.0, 0.0)
    radio_range: float = 10.0
    has_internet: bool = False
    airplane_mode: bool = False
    interests: frozenset = field(default_factory=frozenset)
    apps: frozenset = field(default_factory=frozenset)
    waypoint: Optional[tuple[float, float]] = None
    speed: float = 0.0

    def __post_init__(self):
        self.position = (float(self.position[0]), float(self.position[1]))
        self.interests = frozenset(self.interests)
        self.apps = frozenset(self.apps)
        if self.waypoint is not None:
            self.waypoint = (float(self.waypoint[0]), float(self.waypoint[1]))

    @property
    def online(self) -> bool:
        """Internet access as seen by session logic; airplane mode cuts it."""
        return self.has_internet and not self.airplane_mode

    def distance_to(self, other: "DeviceNode") -> float:
        return float(np.hypot(self.position[0] - other.position[0], self.position[1] - other.position[1]))


def step_positions(
    pos: np.ndarray,
    target: np.ndarray,
    speed: np.ndarray,
    arena: tuple[float, float],
    rng: np.random.Generator,
) -> None:
    """Advance every node one tick toward its waypoint, in place.

    Nodes that reach their waypoint this tick stop on it and draw a fresh
    uniform waypoint, in array order, from ``rng``.
    """
    delta = target - pos
    dist = np.hypot(delta[:, 0], delta[:, 1])
    moving = speed > 0
    arrive = moving & (dist <= speed)
    go = moving & ~arrive
    if go.any():
        step = (speed[go] / dist[go])[:, None] * delta[go]
        pos[go] += step
    if arrive.any():
        pos[arrive] = target[arrive]
        k = int(arrive.sum())
        target[arrive] = rng.uniform((0.0, 0.0), arena, size=(k, 2))
    np.clip(pos[:, 0], 0.0, arena[0], out=pos[:, 0])
    np.clip(pos[:, 1], 0.0, arena[1], out=pos[:, 1])


def step_mobility(node: DeviceNode, rng: np.random.Generator, arena: tuple[float, float] = (100.0, 100.0)) -> DeviceNode:
    """Move a single node one tick; returns the node with its new position."""
    if node.waypoint is None or node.speed <= 0:
        return node
    pos = np.array([node.position], dtype=float)
    target = np.array([node.waypoint], dtype=float)
    step_positions(pos, target, np.array([node.speed], dtype=float), arena, rng)
    node.position = (float(pos[0, 0]), float(pos[0, 1]))
    node.waypoint = (float(target[0, 0]), float(target[0, 1]))
    return node


class World:
    """Array-backed population used by the simulation loop.

    Node attributes that change every tick (position, waypoint) live in
    numpy arrays; :meth:`node` and :meth:`nodes` build :class:`DeviceNode`
    snapshots for the pure discovery and routing functions.
    """

    def __init__(self, nodes: Sequence[DeviceNode], arena: tuple[float, float] = (100.0, 100.0)):
        ids = [n.id for n in nodes]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate device ids")
        order = np.argsort(ids, kind="stable")
        nodes = [nodes[i] for i in order]
        self.arena = (float(arena[0]), float(arena[1]))
        self.ids = np.array([n.id for n in nodes], dtype=np.int64)
        self.index = {int(i): k for k, i in enumerate(self.ids)}
        self.pos = np.array([n.position for n in nodes], dtype=float).reshape(-1, 2)
        self.target = np.array([n.waypoint if n.waypoint is not None else n.position for n in nodes], dtype=float).reshape(-1, 2)
        self.speed = np.array([n.speed for n in nodes], dtype=float)
        self.radio_range = np.array([n.radio_range for n in nodes], dtype=float)
        self.has_internet = np.array([n.has_internet for n in nodes], dtype=bool)
        self.airplane = np.array([n.airplane_mode for n in nodes], dtype=bool)
        self.interests = [n.interests for n in nodes]
        self.apps = [n.apps for n in nodes]

    def __len__(self) -> int:
        return len(self.ids)

    @property
    def online(self) -> np.ndarray:
        return self.has_internet & ~self.airplane

    def node(self, device: DeviceId) -> DeviceNode:
        k = self.index[device]
        return DeviceNode(
            id=int(self.ids[k]),
            position=(self.pos[k, 0], self.pos[k, 1]),
            radio_range=float(self.radio_range[k]),
            has_internet=bool(self.has_internet[k]),
            airplane_mode=bool(self.airplane[k]),
            interests=self.interests[k],
            apps=self.apps[k],
            waypoint=(self.target[k, 0], self.target[k, 1]),
            speed=float(self.speed[k]),
        )

    def nodes(self) -> list[DeviceNode]:
        return [self.node(int(i)) for i in self.ids]

    def step(self, rng: np.random.Generator) -> None:
        step_positions(self.pos, self.target, self.speed, self.arena, rng)

    def set_positions(self, updates: Iterable[tuple[DeviceId, float, float]]) -> None:
        """Pin nodes to given coordinates (trace-driven mobility)."""
        for device, x, y in updates:
            k = self.index[device]
            self.pos[k] = (x, y)
            self.target[k] = (x, y)
