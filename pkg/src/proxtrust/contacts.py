"""Proximity contacts: detection from positions and per-device indexing."""

from __future__ import annotations

from bisect import bisect_right
from dataclasses import dataclass
from typing import Iterable, Optional, Union

import numpy as np
from scipy.spatial import cKDTree

from .trust import DeviceId, InteractionKind


@dataclass(frozen=True)
class ContactRecord:
    a: DeviceId
    b: DeviceId
    start: int
    duration: int
    mean_distance: float
    kind: InteractionKind = InteractionKind.CO_PRESENCE

    def __post_init__(self):
        if not self.a < self.b:
            raise ValueError("contact endpoints must be ordered a < b")
        if self.duration < 1:
            raise ValueError("a contact lasts at least one tick")

    @property
    def end(self) -> int:
        """Last tick the pair was in contact."""
        return self.start + self.duration - 1

    def other(self, device: DeviceId) -> DeviceId:
        return self.b if device == self.a else self.a

    def overlaps(self, t0: float, t1: float) -> bool:
        return self.start <= t1 and self.end >= t0

    def to_record(self) -> dict:
        return {
            "a": self.a,
            "b": self.b,
            "start": self.start,
            "duration": self.duration,
            "mean_distance": self.mean_distance,
            "kind": self.kind.value,
        }

    @classmethod
    def from_record(cls, rec: dict) -> "ContactRecord":
        return cls(
            int(rec["a"]),
            int(rec["b"]),
            int(rec["start"]),
            int(rec["duration"]),
            float(rec["mean_distance"]),
            InteractionKind(rec.get("kind", "CoPresence")),
        )


def close_pairs(pos: np.ndarray, radius: float) -> tuple[np.ndarray, np.ndarray]:
    """Index pairs ``(i, j)``, ``i < j``, no farther apart than ``radius``, and their distances."""
    if len(pos) < 2:
        return np.empty((0, 2), dtype=np.intp), np.empty(0)
    pairs = cKDTree(pos).query_pairs(radius, output_type="ndarray")
    if len(pairs) == 0:
        return pairs.reshape(0, 2), np.empty(0)
    pairs = pairs[np.lexsort((pairs[:, 1], pairs[:, 0]))]
    d = pos[pairs[:, 0]] - pos[pairs[:, 1]]
    return pairs, np.hypot(d[:, 0], d[:, 1])


class ContactTracker:
    """Opens, extends and closes contacts tick by tick.

    A pair within ``radius`` opens (or extends) a contact; the first tick it
    is found apart closes the contact and yields its record.
    """

    def __init__(self, radius: float):
        self.radius = radius
        self._open: dict[tuple[int, int], list] = {}
        self.active: list[tuple[int, int, float]] = []

    def update(self, ids: np.ndarray, pos: np.ndarray, now: int) -> list[ContactRecord]:
        pairs, dist = close_pairs(pos, self.radius)
        # ids are sorted ascending, so index order gives a < b
        a_ids = ids[pairs[:, 0]].tolist()
        b_ids = ids[pairs[:, 1]].tolist()
        dists = dist.tolist()
        current = {}
        opened = self._open
        for a, b, d in zip(a_ids, b_ids, dists):
            key = (a, b)
            st = opened.get(key)
            if st is None:
                current[key] = [now, 1, d]
            else:
                st[1] += 1
                st[2] += d
                current[key] = st
        closed = [self._record(key, st) for key, st in opened.items() if key not in current]
        self._open = current
        self.active = list(zip(a_ids, b_ids, dists))
        closed.sort(key=lambda r: (r.a, r.b))
        return closed

    def flush(self) -> list[ContactRecord]:
        closed = [self._record(key, st) for key, st in sorted(self._open.items())]
        self._open = {}
        self.active = []
        return closed

    @staticmethod
    def _record(key, st) -> ContactRecord:
        start, count, total = st
        return ContactRecord(key[0], key[1], start, count, total / count)


def detect_contacts(tracker: ContactTracker, world, now: int) -> list[ContactRecord]:
    return tracker.update(world.ids, world.pos, now)


class ContactIndex:
    """Contacts grouped by device, each list sorted by start tick."""

    def __init__(self, contacts: Iterable[ContactRecord]):
        self.contacts = list(contacts)
        self.by_device: dict[DeviceId, list[ContactRecord]] = {}
        for c in self.contacts:
            self.by_device.setdefault(c.a, []).append(c)
            self.by_device.setdefault(c.b, []).append(c)
        self._starts = {}
        for dev, lst in self.by_device.items():
            lst.sort(key=lambda c: (c.start, c.a, c.b))
            self._starts[dev] = [c.start for c in lst]

    @classmethod
    def of(cls, contacts: Union["ContactIndex", Iterable[ContactRecord]]) -> "ContactIndex":
        return contacts if isinstance(contacts, ContactIndex) else cls(contacts)

    def devices(self) -> set[DeviceId]:
        return set(self.by_device)

    def of_device(self, device: DeviceId, t0: Optional[float] = None, t1: Optional[float] = None) -> list[ContactRecord]:
        """Contacts of ``device`` overlapping ``[t0, t1]``."""
        lst = self.by_device.get(device, [])
        if t1 is not None:
            lst = lst[: bisect_right(self._starts.get(device, []), t1)]
        if t0 is not None:
            lst = [c for c in lst if c.end >= t0]
        return lst
