"""SEIR spread over simulated contacts, contact tracing, and tiered alerts.

Tracing only looks at what the protocol can observe: contacts between
adopting devices, symptom onsets, confirmations and trust scores. The
ground-truth infection ledger is used for scoring traces and nothing else.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from .contacts import ContactIndex, ContactRecord
from .messaging import RevealMode, SecurityKey, SlowRevealEnvelope, encode, issue_key
from .trust import (
    DEFAULT_PROFILE,
    TICKS_PER_DAY,
    DeviceId,
    TrustModelParams,
    TrustStore,
    proximity_score,
)


class CycleDetected(RuntimeError):
    def __init__(self, report: "TraceReport", node: DeviceId):
        super().__init__(f"backward chain revisits device {node}")
        self.report = report
        self.node = node


class Compartment(enum.IntEnum):
    S = 0
    E = 1
    I = 2  # noqa: E741
    R = 3


class TransmissionMode(str, enum.Enum):
    CONTACT = "contact"
    TRUST_PROXY = "trust-proxy"


class AlertTier(str, enum.Enum):
    INDIVIDUAL = "Individual"
    LOCALITY = "Locality"
    NONE = "NoAlert"


@dataclass(frozen=True)
class EpidemicParams:
    beta: float = 0.05
    incubation: int = 3 * TICKS_PER_DAY
    infectious_period: int = 7 * TICKS_PER_DAY
    mode: TransmissionMode = TransmissionMode.CONTACT
    trace_window: int = 14 * TICKS_PER_DAY
    trace_threshold: float = 0.3
    adoption_rate: float = 1.0
    theta_individual: float = 0.7
    theta_locality: float = 0.3
    confirm_delay: int = 0
    # maps a contact weight to a hazard multiplier; identity when unset
    hazard: Optional[Callable[[float], float]] = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "mode", TransmissionMode(self.mode))
        problems = self.problems()
        if problems:
            raise ValueError("; ".join(f"{k}: {v}" for k, v in problems))

    def problems(self) -> list[tuple[str, str]]:
        out = []
        if not self.beta >= 0:
            out.append(("beta", "must be >= 0"))
        for name in ("incubation", "infectious_period"):
            if not getattr(self, name) >= 1:
                out.append((name, "must be >= 1"))
        if not self.trace_window >= 0:
            out.append(("trace_window", "must be >= 0"))
        if not self.confirm_delay >= 0:
            out.append(("confirm_delay", "must be >= 0"))
        for name in ("trace_threshold", "adoption_rate", "theta_individual", "theta_locality"):
            if not 0 <= getattr(self, name) <= 1:
                out.append((name, "must be in [0, 1]"))
        if not self.theta_locality < self.theta_individual:
            out.append(("theta_locality", "must be below theta_individual"))
        return out

    def to_dict(self) -> dict:
        return {
            "beta": self.beta,
            "incubation": self.incubation,
            "infectious_period": self.infectious_period,
            "mode": self.mode.value,
            "trace_window": self.trace_window,
            "trace_threshold": self.trace_threshold,
            "adoption_rate": self.adoption_rate,
            "theta_individual": self.theta_individual,
            "theta_locality": self.theta_locality,
            "confirm_delay": self.confirm_delay,
        }


@dataclass(frozen=True)
class Infection:
    infector: Optional[DeviceId]  # None for seeded cases
    infectee: DeviceId
    tick: int


class EpidemicState:
    """Compartments and transition times for a fixed population."""

    def __init__(self, population: Sequence[DeviceId]):
        self.ids = np.array(sorted(population), dtype=np.int64)
        self.index = {int(d): k for k, d in enumerate(self.ids)}
        n = len(self.ids)
        self.comp = np.zeros(n, dtype=np.int8)
        self.exposed_at = np.full(n, -1, dtype=np.int64)
        self.infectious_at = np.full(n, -1, dtype=np.int64)
        self.recovered_at = np.full(n, -1, dtype=np.int64)
        self.ledger: list[Infection] = []

    def __len__(self) -> int:
        return len(self.ids)

    def compartment(self, device: DeviceId) -> Compartment:
        return Compartment(int(self.comp[self.index[device]]))

    def counts(self) -> tuple[int, int, int, int]:
        c = np.bincount(self.comp, minlength=4)
        return int(c[0]), int(c[1]), int(c[2]), int(c[3])

    def seed_infectious(self, device: DeviceId, now: int) -> None:
        k = self.index[device]
        if self.comp[k] != Compartment.S:
            raise ValueError(f"device {device} is not susceptible")
        self.comp[k] = Compartment.I
        self.exposed_at[k] = now
        self.infectious_at[k] = now
        self.ledger.append(Infection(None, device, now))

    def expose(self, infector: Optional[DeviceId], infectee: DeviceId, now: int) -> bool:
        k = self.index[infectee]
        if self.comp[k] != Compartment.S:
            return False
        self.comp[k] = Compartment.E
        self.exposed_at[k] = now
        self.ledger.append(Infection(infector, infectee, now))
        return True

    def onsets(self) -> dict[DeviceId, int]:
        ks = np.nonzero(self.infectious_at >= 0)[0]
        return {int(self.ids[k]): int(self.infectious_at[k]) for k in ks}

    def transmission_edges(self) -> set[tuple[DeviceId, DeviceId]]:
        return {(e.infector, e.infectee) for e in self.ledger if e.infector is not None}

    def patient_zeros(self) -> set[DeviceId]:
        return {e.infectee for e in self.ledger if e.infector is None}


def infection_probability(weight: float, params: EpidemicParams, dt: float = 1.0) -> float:
    h = params.hazard(weight) if params.hazard is not None else weight
    return -math.expm1(-params.beta * dt * h)


def contact_weight_for_transmission(
    infector: DeviceId,
    infectee: DeviceId,
    distance: float,
    params: EpidemicParams,
    store: Optional[TrustStore],
    now: int,
) -> float:
    if params.mode is TransmissionMode.TRUST_PROXY:
        return store.score(infector, infectee, DEFAULT_PROFILE, now) if store is not None else 0.0
    scale = store.params.distance_scale if store is not None else TrustModelParams().distance_scale
    return math.exp(-distance / scale)


def progress(state: EpidemicState, params: EpidemicParams, now: int, log=None) -> None:
    """E to I after the incubation period, I to R after the infectious period."""
    comp = state.comp
    to_i = np.nonzero((comp == Compartment.E) & (now - state.exposed_at >= params.incubation))[0]
    to_r = np.nonzero((comp == Compartment.I) & (now - state.infectious_at >= params.infectious_period))[0]
    comp[to_r] = Compartment.R
    state.recovered_at[to_r] = now
    comp[to_i] = Compartment.I
    state.infectious_at[to_i] = now
    if log is not None:
        for k in to_r.tolist():
            log.emit("recovered", now, device=int(state.ids[k]))
        for k in to_i.tolist():
            log.emit("infectious", now, device=int(state.ids[k]))


def infection_step(
    state: EpidemicState,
    contacts: Iterable[tuple[DeviceId, DeviceId, float]],
    store: Optional[TrustStore],
    params: EpidemicParams,
    rng: np.random.Generator,
    now: int,
    log=None,
    dt: float = 1.0,
) -> EpidemicState:
    """Advance one tick: progression first, then transmission over ``contacts``.

    ``contacts`` are the ``(a, b, distance)`` pairs in contact this tick. A
    random draw is made only for pairs with one infectious and one
    susceptible end, in the order given.
    """
    progress(state, params, now, log)
    if params.beta <= 0:
        return state
    comp, index = state.comp, state.index
    for a, b, distance in contacts:
        ca, cb = comp[index[a]], comp[index[b]]
        if ca == Compartment.I and cb == Compartment.S:
            src, dst = a, b
        elif cb == Compartment.I and ca == Compartment.S:
            src, dst = b, a
        else:
            continue
        w = contact_weight_for_transmission(src, dst, distance, params, store, now)
        p = infection_probability(w, params, dt)
        if rng.random() < p:
            state.expose(src, dst, now)
            if log is not None:
                log.emit("infection", now, infector=src, infectee=dst)
    return state


@dataclass
class Observations:
    """What the tracing side can see: onsets, confirmations, adopters."""

    onset: dict = field(default_factory=dict)
    confirmed: dict = field(default_factory=dict)
    adopters: frozenset = frozenset()
    zones: dict = field(default_factory=dict)

    def confirmation_time(self, device: DeviceId) -> int:
        return self.confirmed.get(device, self.onset[device])


def draw_adopters(population: Sequence[DeviceId], rate: float, rng: np.random.Generator) -> frozenset:
    ids = sorted(population)
    flags = rng.random(len(ids)) < rate
    return frozenset(d for d, f in zip(ids, flags.tolist()) if f)


def trace_weight(
    contact: ContactRecord,
    source: DeviceId,
    target: DeviceId,
    params: EpidemicParams,
    store: Optional[TrustStore],
    now: int,
    trust_params: Optional[TrustModelParams] = None,
) -> float:
    """Proximity score of the contact, or the trust ``source -> target`` in trust-proxy mode."""
    if params.mode is TransmissionMode.TRUST_PROXY:
        return store.score(source, target, DEFAULT_PROFILE, now) if store is not None else 0.0
    tp = trust_params or (store.params if store is not None else TrustModelParams())
    return proximity_score(contact.duration, contact.mean_distance, tp)


def forward_trace(
    contacts,
    index: DeviceId,
    t_confirmed: int,
    params: EpidemicParams,
    obs: Observations,
    store: Optional[TrustStore] = None,
    trust_params: Optional[TrustModelParams] = None,
) -> set[DeviceId]:
    if index not in obs.adopters:
        return set()
    cidx = ContactIndex.of(contacts)
    found = set()
    for c in cidx.of_device(index, t_confirmed - params.trace_window, t_confirmed):
        j = c.other(index)
        if j in found or j not in obs.adopters:
            continue
        if trace_weight(c, index, j, params, store, t_confirmed, trust_params) >= params.trace_threshold:
            found.add(j)
    return found


@dataclass(frozen=True)
class Candidate:
    device: DeviceId
    weight: float
    contact_time: int


def backward_trace(
    contacts,
    obs: Observations,
    index: DeviceId,
    t_onset: int,
    params: EpidemicParams,
    store: Optional[TrustStore] = None,
    trust_params: Optional[TrustModelParams] = None,
) -> list[Candidate]:
    """Likely infectors of ``index``, best first.

    A candidate is an adopting, observed case whose onset precedes
    ``t_onset`` and who had a qualifying contact with ``index`` in the
    trace window while already infectious. Ranked by contact weight, then
    earlier contact, then id.
    """
    if index not in obs.adopters:
        return []
    cidx = ContactIndex.of(contacts)
    best: dict[DeviceId, tuple[float, int]] = {}
    for c in cidx.of_device(index, t_onset - params.trace_window, t_onset):
        j = c.other(index)
        if j not in obs.adopters:
            continue
        onset_j = obs.onset.get(j)
        if onset_j is None or onset_j >= t_onset or c.end < onset_j:
            continue
        w = trace_weight(c, j, index, params, store, t_onset, trust_params)
        if w < params.trace_threshold:
            continue
        t = max(c.start, onset_j)
        cur = best.get(j)
        if cur is None or (w, -t) > (cur[0], -cur[1]):
            best[j] = (w, t)
    ranked = sorted(best.items(), key=lambda kv: (-kv[1][0], kv[1][1], kv[0]))
    return [Candidate(j, w, t) for j, (w, t) in ranked]


@dataclass
class TraceReport:
    index_case: DeviceId
    forward_set: set
    backward_set: set
    inferred_chain: list
    patient_zero_estimate: DeviceId
    coverage: Optional[float] = None
    recovered_edges: set = field(default_factory=set)

    def to_json(self, include_backward: bool = True) -> dict:
        out = {
            "index_case": self.index_case,
            "forward_set": sorted(self.forward_set),
            "inferred_chain": list(self.inferred_chain),
            "patient_zero_estimate": self.patient_zero_estimate,
            "coverage": self.coverage,
        }
        if include_backward:
            out["backward_set"] = sorted(self.backward_set)
        return out


def edge_coverage(recovered: set, truth: set) -> float:
    """Share of true transmission edges that were recovered; 1.0 when there are none."""
    if not truth:
        return 1.0
    return len(recovered & truth) / len(truth)


def _forward_edges(cidx, nodes, params, obs, store, trust_params):
    fwd, edges = set(), set()
    for x in nodes:
        found = forward_trace(cidx, x, obs.confirmation_time(x), params, obs, store, trust_params)
        fwd |= found
        edges |= {(x, y) for y in found}
    return fwd, edges


def trace_to_patient_zero(
    contacts,
    obs: Observations,
    index: DeviceId,
    params: EpidemicParams,
    store: Optional[TrustStore] = None,
    ledger: Optional[Iterable[Infection]] = None,
    trust_params: Optional[TrustModelParams] = None,
) -> TraceReport:
    """Walk backward from ``index`` through top-ranked candidates.

    The last node reached is the patient-zero estimate. Forward tracing
    runs from every node of the chain. ``ledger`` is only read to score
    the result.
    """
    if index not in obs.confirmed:
        raise ValueError(f"device {index} is not a confirmed case")
    cidx = ContactIndex.of(contacts)
    back = [index]
    backward_set: set = set()
    cycle_at = None
    current = index
    while True:
        cands = backward_trace(cidx, obs, current, obs.onset[current], params, store, trust_params)
        backward_set |= {c.device for c in cands}
        if not cands:
            break
        top = cands[0].device
        if top in back:
            cycle_at = top
            break
        back.append(top)
        current = top
    chain = back[::-1]
    forward_set, edges = _forward_edges(cidx, chain, params, obs, store, trust_params)
    edges |= set(zip(chain, chain[1:]))
    report = TraceReport(
        index_case=index,
        forward_set=forward_set - {index},
        backward_set=backward_set,
        inferred_chain=chain,
        patient_zero_estimate=chain[0],
        recovered_edges=edges,
    )
    if ledger is not None:
        truth = {(e.infector, e.infectee) for e in ledger if e.infector is not None}
        report.coverage = edge_coverage(edges, truth)
    if cycle_at is not None:
        raise CycleDetected(report, cycle_at)
    return report


def trace_forward_only(
    contacts,
    obs: Observations,
    index: DeviceId,
    params: EpidemicParams,
    store: Optional[TrustStore] = None,
    ledger: Optional[Iterable[Infection]] = None,
    trust_params: Optional[TrustModelParams] = None,
) -> TraceReport:
    cidx = ContactIndex.of(contacts)
    forward_set, edges = _forward_edges(cidx, [index], params, obs, store, trust_params)
    report = TraceReport(index, forward_set, set(), [index], index, recovered_edges=edges)
    if ledger is not None:
        truth = {(e.infector, e.infectee) for e in ledger if e.infector is not None}
        report.coverage = edge_coverage(edges, truth)
    return report


def _qualifying_pairs(contacts, params, store, trust_params):
    for c in ContactIndex.of(contacts).contacts:
        if trace_weight(c, c.a, c.b, params, store, c.end, trust_params) >= params.trace_threshold:
            yield c.a, c.b


def find_super_spreaders(
    top_n: int,
    ledger: Optional[Iterable[Infection]] = None,
    contacts=None,
    params: Optional[EpidemicParams] = None,
    store: Optional[TrustStore] = None,
    trust_params: Optional[TrustModelParams] = None,
) -> list[tuple[DeviceId, int]]:
    """Rank devices by transmissions caused (ledger) or by qualifying-contact degree.

    Devices with a zero count are left out; ties go to the smaller id.
    """
    if top_n < 1:
        raise ValueError("top_n must be >= 1")
    counts: dict[DeviceId, int] = {}
    if ledger is not None:
        for e in ledger:
            if e.infector is not None:
                counts[e.infector] = counts.get(e.infector, 0) + 1
    elif contacts is not None:
        peers: dict[DeviceId, set] = {}
        for a, b in _qualifying_pairs(contacts, params or EpidemicParams(), store, trust_params):
            peers.setdefault(a, set()).add(b)
            peers.setdefault(b, set()).add(a)
        counts = {d: len(p) for d, p in peers.items()}
    else:
        raise ValueError("need a ledger or contacts")
    ranked = sorted(((d, n) for d, n in counts.items() if n > 0), key=lambda x: (-x[1], x[0]))
    return ranked[:top_n]


def isolated_groups(
    contacts,
    params: EpidemicParams,
    devices: Iterable[DeviceId] = (),
    store: Optional[TrustStore] = None,
    trust_params: Optional[TrustModelParams] = None,
) -> list[tuple]:
    """Connected components of the qualifying-contact graph, smallest first."""
    adj: dict[DeviceId, set] = {d: set() for d in devices}
    for a, b in _qualifying_pairs(contacts, params, store, trust_params):
        adj.setdefault(a, set()).add(b)
        adj.setdefault(b, set()).add(a)
    seen, groups = set(), []
    for start in sorted(adj):
        if start in seen:
            continue
        comp, stack = [], [start]
        seen.add(start)
        while stack:
            u = stack.pop()
            comp.append(u)
            for v in adj[u]:
                if v not in seen:
                    seen.add(v)
                    stack.append(v)
        groups.append(tuple(sorted(comp)))
    return sorted(groups, key=lambda g: (len(g), g))


@dataclass
class Alert:
    recipient: DeviceId
    tier: AlertTier
    message_class: Optional[str]
    score: float
    payload: dict = field(default_factory=dict)
    envelope: Optional[SlowRevealEnvelope] = None
    key: Optional[SecurityKey] = None

    def log_record(self, trace_id: int) -> dict:
        """Alert-log fields. Locality records carry no identity of the index case."""
        rec = {
            "trace_id": trace_id,
            "to": self.recipient,
            "tier": self.tier.value,
            "message_class": self.message_class,
            "score": self.score,
        }
        if self.tier is AlertTier.INDIVIDUAL:
            rec["index"] = self.payload["index"]
            rec["window"] = self.payload["window"]
        elif self.tier is AlertTier.LOCALITY:
            rec["zone"] = self.payload["zone"]
            rec["day"] = self.payload["day"]
        return rec


def alert_tier(score: float, params: EpidemicParams) -> AlertTier:
    if score >= params.theta_individual:
        return AlertTier.INDIVIDUAL
    if score >= params.theta_locality:
        return AlertTier.LOCALITY
    return AlertTier.NONE


def _exposure_window(cidx, index, j, t0, t1):
    spans = [(c.start, c.end) for c in cidx.of_device(index, t0, t1) if c.other(index) == j]
    if not spans:
        return [int(t0), int(t1)]
    return [min(s for s, _ in spans), max(e for _, e in spans)]


def issue_alerts(
    report: TraceReport,
    store: TrustStore,
    params: EpidemicParams,
    now: int,
    rng: Optional[np.random.Generator] = None,
    zone: str = "unknown",
    contacts=None,
    ticks_per_day: int = TICKS_PER_DAY,
) -> list[Alert]:
    """One alert decision per traced peer, tiered by the index's trust in them.

    Individual alerts name the index case and the exposure window.
    Locality alerts only carry the zone and the day. Both go out as
    slow-reveal envelopes whose reception threshold is the tier threshold.
    """
    index = report.index_case
    rng = rng if rng is not None else np.random.default_rng([index, max(now, 0)])
    cidx = ContactIndex.of(contacts if contacts is not None else ())
    alerts = []
    for j in sorted((report.forward_set | report.backward_set) - {index}):
        score = store.score(index, j, DEFAULT_PROFILE, now)
        tier = alert_tier(score, params)
        if tier is AlertTier.NONE:
            alerts.append(Alert(j, tier, None, score))
            continue
        if tier is AlertTier.INDIVIDUAL:
            threshold = params.theta_individual
            payload = {
                "class": "exposure-individual",
                "index": index,
                "window": _exposure_window(cidx, index, j, now - params.trace_window, now),
            }
        else:
            threshold = params.theta_locality
            payload = {"class": "exposure-locality", "zone": zone, "day": now // ticks_per_day}
        key = issue_key(rng)
        env = encode(
            json.dumps(payload, sort_keys=True).encode(),
            1,
            threshold,
            threshold,
            threshold,
            key,
            RevealMode.DETERMINISTIC,
            sender=index,
            receiver=j,
            sent_at=now,
        )
        alerts.append(Alert(j, tier, payload["class"], score, payload, env, key))
    return alerts
