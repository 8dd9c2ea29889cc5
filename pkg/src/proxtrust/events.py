"""JSON-lines event log shared by the simulator and the analysis tools.

Every record has ``type`` and ``tick``; the remaining keys depend on the
type. The record schemas (all ids are integers, all times ticks):

header          version, seed, config_hash, population, adopters,
                initial_infected, trust_params, epidemic_params, arena
mode_flip       device, airplane_mode
trigger         device, trigger (UserInstruction | NoInfrastructure |
                PeersInProximity), detail
discovery       device, peers, known
contact         a, b, start, duration, mean_distance, kind
trust_update    from, to, profile, score, count
key_issued      sender, receiver, key_id
send_blocked    sender, receiver, key_id, score, threshold
relay_hop       key_id, node, hop
delivery        key_id, sender, receiver, route, session
undeliverable   key_id, sender, receiver, reason
reveal          key_id, receiver, score, revealed, complete
infection       infector, infectee
infectious      device
recovered       device
confirmed       device, onset
trace           trace_id, index, chain, patient_zero, forward, backward
alert           trace_id, to, tier, message_class, ... (see epidemic.issue_alerts)
"""

from __future__ import annotations

import json
from typing import IO, Iterable, Iterator


def dumps(record: dict) -> str:
    return json.dumps(record, sort_keys=True, separators=(",", ":"))


class EventLog:
    def __init__(self):
        self.records: list[dict] = []

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self) -> Iterator[dict]:
        return iter(self.records)

    def emit(self, type: str, tick: int, **fields) -> dict:
        rec = {"type": type, "tick": int(tick), **fields}
        self.records.append(rec)
        return rec

    def of_type(self, *types: str) -> list[dict]:
        return [r for r in self.records if r["type"] in types]

    def lines(self) -> Iterator[str]:
        for r in self.records:
            yield dumps(r)

    def to_text(self) -> str:
        return "".join(line + "\n" for line in self.lines())

    def write(self, fh: IO[str]) -> None:
        for line in self.lines():
            fh.write(line)
            fh.write("\n")


def read_events(fh: Iterable[str]) -> list[dict]:
    return [json.loads(line) for line in fh if line.strip()]
