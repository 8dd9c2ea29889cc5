"""Deterministic tick-driven simulation of the trust protocol and an outbreak.

Each tick runs the same phases in the same order: scripted mode flips,
mobility, contact detection, triggers and discovery, trust updates,
scheduled messages, and the epidemic step. All randomness comes from
independent streams spawned from the scenario seed, so a seed and a
scenario fully determine the event log.
"""

from __future__ import annotations

import csv
import enum
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from . import __version__
from .config import SimConfig, apply_overrides, build_config
from .contacts import ContactIndex, ContactRecord, ContactTracker, close_pairs
from .discovery import scan
from .epidemic import (
    Compartment,
    CycleDetected,
    EpidemicState,
    Observations,
    draw_adopters,
    edge_coverage,
    infection_step,
    issue_alerts,
    trace_forward_only,
    trace_to_patient_zero,
)
from .events import EventLog
from .messaging import (
    BelowTransmissionThreshold,
    RevealMode,
    RevealTracker,
    attempt_decode,
    encode,
    issue_key,
    transmit,
)
from .routing import LinkDown, NoRoute, build_mesh
from .trust import (
    DEFAULT_KIND_QUALITY,
    DEFAULT_PROFILE,
    HEALTH_PROFILE,
    InteractionEvent,
    InteractionKind,
    SessionContext,
    TrustStore,
    apply_interaction,
    proximity_score,
)
from .world import DeviceNode, World

STREAMS = ("population", "mobility", "adoption", "epidemic", "messaging")


class TriggerKind(str, enum.Enum):
    USER_INSTRUCTION = "UserInstruction"
    NO_INFRASTRUCTURE = "NoInfrastructure"
    PEERS_IN_PROXIMITY = "PeersInProximity"


@dataclass(frozen=True)
class TriggerFiring:
    device: int
    kind: TriggerKind
    detail: int = 0


@dataclass
class TriggerRules:
    peers_in_proximity: int = 3
    instructions: dict = field(default_factory=dict)  # tick -> [device, ...]

    @classmethod
    def from_config(cls, section: dict) -> "TriggerRules":
        instr: dict = {}
        for item in section.get("instructions", []):
            instr.setdefault(int(item["tick"]), []).append(int(item["device"]))
        return cls(int(section.get("peers_in_proximity", 3)), instr)


def trigger_conditions(world: World) -> tuple[np.ndarray, np.ndarray]:
    """Per node: no internet reachable over the mesh, and peers in own radio range."""
    n = len(world)
    if n == 0:
        return np.zeros(0, dtype=bool), np.zeros(0, dtype=np.int64)
    pairs, dist = close_pairs(world.pos, float(world.radio_range.max()))
    i, j = pairs[:, 0], pairs[:, 1]
    rr = world.radio_range
    peers = np.bincount(i[dist <= rr[i]], minlength=n) + np.bincount(j[dist <= rr[j]], minlength=n)
    linked = dist <= np.minimum(rr[i], rr[j])
    graph = coo_matrix((np.ones(int(linked.sum())), (i[linked], j[linked])), shape=(n, n))
    ncomp, labels = connected_components(graph, directed=False)
    has_gateway = np.zeros(ncomp, dtype=bool)
    has_gateway[labels[world.online]] = True
    return ~has_gateway[labels], peers


def evaluate_triggers(world: World, device: int, now: int, rules: Optional[TriggerRules] = None) -> list[TriggerFiring]:
    """Triggers whose condition holds for ``device`` at ``now``."""
    rules = rules or TriggerRules()
    k = world.index[device]
    no_infra, peers = trigger_conditions(world)
    out = []
    if device in rules.instructions.get(now, ()):
        out.append(TriggerFiring(device, TriggerKind.USER_INSTRUCTION))
    if no_infra[k]:
        out.append(TriggerFiring(device, TriggerKind.NO_INFRASTRUCTURE))
    if peers[k] >= rules.peers_in_proximity:
        out.append(TriggerFiring(device, TriggerKind.PEERS_IN_PROXIMITY, int(peers[k])))
    return out


def _draw(rng: np.random.Generator, spec, integer: bool = False):
    if isinstance(spec, list):
        lo, hi = spec
        return int(rng.integers(lo, hi + 1)) if integer else float(rng.uniform(lo, hi))
    return int(spec) if integer else float(spec)


def generate_nodes(gen: dict, arena: tuple, rng: np.random.Generator) -> list[DeviceNode]:
    count = int(gen["count"])
    interest_pool = sorted(gen.get("interest_pool", []))
    app_pool = sorted(gen.get("app_pool", []))
    nodes = []
    for device in range(1, count + 1):
        pos = rng.uniform((0.0, 0.0), arena)
        way = rng.uniform((0.0, 0.0), arena)
        radio = _draw(rng, gen.get("radio_range", 10.0))
        speed = _draw(rng, gen.get("speed", 0.0))
        online = bool(rng.random() < gen.get("internet_fraction", 0.0))
        airplane = bool(rng.random() < gen.get("airplane_fraction", 0.0))
        k_int = min(_draw(rng, gen.get("interests_per_node", 0), integer=True), len(interest_pool))
        k_app = min(_draw(rng, gen.get("apps_per_node", 0), integer=True), len(app_pool))
        interests = [interest_pool[i] for i in rng.choice(len(interest_pool), k_int, replace=False)] if k_int else []
        apps = [app_pool[i] for i in rng.choice(len(app_pool), k_app, replace=False)] if k_app else []
        nodes.append(
            DeviceNode(device, tuple(pos), radio, online, airplane, frozenset(interests), frozenset(apps), tuple(way), speed)
        )
    return nodes


def nodes_from_config(items: list) -> list[DeviceNode]:
    return [
        DeviceNode(
            id=int(n["id"]),
            position=tuple(n["position"]),
            radio_range=float(n["radio_range"]),
            has_internet=bool(n.get("has_internet", False)),
            airplane_mode=bool(n.get("airplane_mode", False)),
            interests=frozenset(n.get("interests", [])),
            apps=frozenset(n.get("apps", [])),
            waypoint=tuple(n["waypoint"]) if "waypoint" in n else None,
            speed=float(n.get("speed", 0.0)),
        )
        for n in items
    ]


def load_mobility_trace(path) -> dict[int, list[tuple[int, float, float]]]:
    """CSV ``tick,device_id,x,y`` grouped by tick."""
    out: dict[int, list] = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            out.setdefault(int(row["tick"]), []).append((int(row["device_id"]), float(row["x"]), float(row["y"])))
    return out


def zone_label(pos, size: float) -> str:
    return f"zone-{int(pos[0] // size)}-{int(pos[1] // size)}"


@dataclass
class SimulationReport:
    config: SimConfig
    log: EventLog
    store: TrustStore
    state: EpidemicState
    observations: Observations
    contacts: list
    compartments: list
    traces: list = field(default_factory=list)
    alerts: list = field(default_factory=list)
    world: Optional[World] = None

    @property
    def attack_rate(self) -> float:
        n = len(self.state)
        return float((self.state.comp != 0).sum()) / n if n else 0.0

    def write_outputs(self, out_dir) -> dict[str, Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = {
            "events": out / "events.jsonl",
            "compartments": out / "compartments.csv",
            "trust": out / "trust.jsonl",
            "traces": out / "traces.json",
            "alerts": out / "alerts.jsonl",
        }
        with open(paths["events"], "w") as fh:
            self.log.write(fh)
        with open(paths["compartments"], "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["tick", "S", "E", "I", "R"])
            w.writerows(self.compartments)
        with open(paths["trust"], "w") as fh:
            self.store.dump_jsonl(fh)
        with open(paths["traces"], "w") as fh:
            json.dump([{"trace_id": tid, **rep.to_json()} for tid, rep in self.traces], fh, indent=1, sort_keys=True)
            fh.write("\n")
        with open(paths["alerts"], "w") as fh:
            for rec in self.alerts:
                fh.write(json.dumps(rec, sort_keys=True) + "\n")
        return paths


class Simulation:
    def __init__(self, config: SimConfig):
        self.config = cfg = config
        streams = np.random.SeedSequence(cfg.seed).spawn(len(STREAMS))
        self.rng = {name: np.random.default_rng(s) for name, s in zip(STREAMS, streams)}
        if "nodes" in cfg.data:
            nodes = nodes_from_config(cfg.data["nodes"])
        else:
            nodes = generate_nodes(cfg.data["node_generator"], cfg.arena, self.rng["population"])
        self.world = World(nodes, cfg.arena)
        self.population = [int(d) for d in self.world.ids]
        self.log = EventLog()
        self.store = TrustStore(cfg.trust)
        self.tracker = ContactTracker(cfg.contact_radius)
        self.contacts: list[ContactRecord] = []
        self.rules = TriggerRules.from_config(cfg.section("triggers"))
        self.flips: dict[int, list] = {}
        for f in cfg.section("triggers").get("mode_flips", []):
            self.flips.setdefault(int(f["tick"]), []).append((int(f["device"]), bool(f["airplane_mode"])))
        self.interactions: dict[int, list] = {}
        for it in cfg.section("interactions", []):
            self.interactions.setdefault(int(it["tick"]), []).append(it)
        self.messages: dict[int, list] = {}
        for m in cfg.section("messages", []):
            self.messages.setdefault(int(m["tick"]), []).append(m)
        self.pending_reveals: dict[int, list] = {}
        self.reveals = RevealTracker()
        trace_path = cfg.data["sim"].get("mobility_trace")
        if trace_path:
            p = Path(trace_path)
            if not p.is_absolute() and cfg.base_dir is not None:
                p = cfg.base_dir / p
            self.trace = load_mobility_trace(p)
        else:
            self.trace = {}

        epi = cfg.section("epidemic")
        self.epi_params = cfg.epidemic
        self.state = EpidemicState(self.population)
        adopters = draw_adopters(self.population, self.epi_params.adoption_rate, self.rng["adoption"])
        self.obs = Observations(adopters=adopters)
        seeds = [int(d) for d in epi.get("initial_infected", [])]
        if not seeds and cfg.epidemic_enabled:
            count = min(int(epi.get("initial_count", 1)), len(self.population))
            pick = self.rng["epidemic"].choice(len(self.population), count, replace=False) if count else []
            seeds = sorted(self.population[int(k)] for k in pick)
        self.seeds = seeds if cfg.epidemic_enabled else []
        for d in self.seeds:
            self.state.seed_infectious(d, 0)
        self.forced: dict[int, list] = {}
        for f in epi.get("forced_infections", []):
            self.forced.setdefault(int(f["tick"]), []).append((int(f["infector"]), int(f["infectee"])))
        self.trace_index = epi.get("trace_index", "all")
        self.zone_size = float(epi.get("zone_size", 50.0))
        self.compartments: list = []
        self._no_infra = np.zeros(len(self.world), dtype=bool)
        self._crowded = np.zeros(len(self.world), dtype=bool)

    # -- phases ---------------------------------------------------------

    def _header(self) -> None:
        cfg = self.config
        self.log.emit(
            "header",
            0,
            version=__version__,
            seed=cfg.seed,
            config_hash=cfg.source_hash,
            ticks_total=cfg.ticks_total,
            tick_length=cfg.tick_length,
            arena=list(cfg.arena),
            population=self.population,
            adopters=sorted(self.obs.adopters),
            initial_infected=self.seeds,
            trust_params=cfg.trust.to_dict(),
            epidemic_params=self.epi_params.to_dict(),
        )

    def _mode_flips(self, now: int) -> None:
        for device, airplane in self.flips.get(now, ()):
            self.world.airplane[self.world.index[device]] = airplane
            self.log.emit("mode_flip", now, device=device, airplane_mode=airplane)

    def _move(self, now: int) -> None:
        self.world.step(self.rng["mobility"])
        if now in self.trace:
            self.world.set_positions(self.trace[now])

    def _triggers(self, now: int) -> None:
        world, rules = self.world, self.rules
        fired: list[TriggerFiring] = [
            TriggerFiring(d, TriggerKind.USER_INSTRUCTION) for d in sorted(rules.instructions.get(now, ()))
        ]
        if now % self.config.trigger_interval == 0:
            no_infra, peers = trigger_conditions(world)
            crowded = peers >= rules.peers_in_proximity
            # level conditions fire on their rising edge only
            for k in np.nonzero(no_infra & ~self._no_infra)[0].tolist():
                fired.append(TriggerFiring(int(world.ids[k]), TriggerKind.NO_INFRASTRUCTURE))
            for k in np.nonzero(crowded & ~self._crowded)[0].tolist():
                fired.append(TriggerFiring(int(world.ids[k]), TriggerKind.PEERS_IN_PROXIMITY, int(peers[k])))
            self._no_infra, self._crowded = no_infra, crowded
        fired.sort(key=lambda f: (f.device, f.kind.value))
        scanned = set()
        for f in fired:
            self.log.emit("trigger", now, device=f.device, trigger=f.kind.value, detail=f.detail)
            if f.device in scanned:
                continue
            scanned.add(f.device)
            results = scan(world.node(f.device), world, now, self.store)
            self.log.emit(
                "discovery",
                now,
                device=f.device,
                peers=[r.peer for r in results],
                known=sum(r.previously_known for r in results),
            )

    def _context(self, a: int, b: int) -> SessionContext:
        w = self.world
        ka, kb = w.index[a], w.index[b]
        return SessionContext(w.interests[ka], w.interests[kb], w.apps[ka], w.apps[kb])

    def _update_pair(self, contact: ContactRecord, now: int, q_ab: float, q_ba: float, profile: str) -> None:
        for src, dst, q in ((contact.a, contact.b, q_ab), (contact.b, contact.a, q_ba)):
            event = InteractionEvent(src, dst, now, contact.duration, contact.mean_distance, contact.kind, q)
            rec = apply_interaction(self.store, src, dst, event, profile, self._context(src, dst))
            self.log.emit(
                "trust_update", now, **{"from": src, "to": dst}, profile=profile, score=rec.score, count=rec.interaction_count
            )

    def _record_contact(self, contact: ContactRecord, now: int) -> None:
        self.contacts.append(contact)
        self.log.emit("contact", now, **contact.to_record())

    def _close_contacts(self, closed: list[ContactRecord], now: int) -> None:
        tp = self.config.trust
        for c in closed:
            self._record_contact(c, now)
            q = proximity_score(c.duration, c.mean_distance, tp)
            self._update_pair(c, now, q, q, DEFAULT_PROFILE)

    def _scripted_interactions(self, now: int) -> None:
        for it in self.interactions.get(now, ()):
            kind = InteractionKind(it.get("kind", "Conversation"))
            a, b = sorted((int(it["a"]), int(it["b"])))
            forward = int(it["a"]) == a
            q = float(it.get("quality", DEFAULT_KIND_QUALITY.get(kind, 1.0)))
            q_rev = float(it.get("quality_reverse", q))
            q_ab, q_ba = (q, q_rev) if forward else (q_rev, q)
            default_profile = HEALTH_PROFILE if kind is InteractionKind.HEALTH_CONSULT else DEFAULT_PROFILE
            profile = it.get("profile", default_profile)
            c = ContactRecord(a, b, now, int(it["duration"]), float(it.get("distance", 1.0)), kind)
            self._record_contact(c, now)
            self._update_pair(c, now, q_ab, q_ba, profile)

    def _send_messages(self, now: int) -> None:
        rng = self.rng["messaging"]
        graph = None
        for m in self.messages.get(now, ()):
            if graph is None:
                graph = build_mesh(self.world.nodes())
            sender, receiver = int(m["sender"]), int(m["receiver"])
            key = issue_key(rng)
            mode = RevealMode.PROBABILISTIC if str(m.get("mode", "")).lower() == "probabilistic" else RevealMode.DETERMINISTIC
            rx = float(m.get("rx_threshold", 0.0))
            env = encode(
                m["text"].encode(),
                int(m.get("partitions", 1)),
                float(m.get("tx_threshold", 0.0)),
                rx,
                float(m.get("theta_full", rx)),
                key,
                mode,
                sender=sender,
                receiver=receiver,
                profile=m.get("profile", DEFAULT_PROFILE),
                sent_at=now,
                temperature=m.get("temperature"),
            )
            self.log.emit("key_issued", now, sender=sender, receiver=receiver, key_id=key.key_id)
            a, b = self.world.node(sender), self.world.node(receiver)
            near = a.distance_to(b) <= min(a.radio_range, b.radio_range)
            try:
                delivery = transmit(self.store, env, now, graph, self.log, near, self.config.prefer_internet)
            except BelowTransmissionThreshold as e:
                self.log.emit(
                    "send_blocked", now, sender=sender, receiver=receiver, key_id=key.key_id, score=e.score, threshold=e.threshold
                )
                continue
            except (NoRoute, LinkDown) as e:
                self.log.emit("undeliverable", now, sender=sender, receiver=receiver, key_id=key.key_id, reason=str(e))
                continue
            self.log.emit(
                "delivery",
                now,
                key_id=key.key_id,
                sender=sender,
                receiver=receiver,
                route=list(delivery.route.hops),
                session=delivery.route.kind.value,
            )
            self.pending_reveals.setdefault(now, []).append((delivery.envelope, key))
            for t in m.get("reveal_ticks", []):
                if t > now:
                    self.pending_reveals.setdefault(int(t), []).append((delivery.envelope, key))

    def _reveal(self, now: int) -> None:
        for env, key in self.pending_reveals.pop(now, ()):
            res = attempt_decode(self.store, env, key, now, self.rng["messaging"], self.reveals)
            self.log.emit(
                "reveal",
                now,
                key_id=env.key_id,
                receiver=env.receiver,
                score=res.score,
                revealed=sorted(res.revealed_partitions),
                complete=res.complete,
            )

    def _epidemic(self, now: int) -> None:
        if not self.config.epidemic_enabled:
            return
        state, log = self.state, self.log
        infection_step(state, self.tracker.active, self.store, self.epi_params, self.rng["epidemic"], now, log)
        for infector, infectee in self.forced.get(now, ()):
            if state.compartment(infector) is Compartment.I and state.expose(infector, infectee, now):
                log.emit("infection", now, infector=infector, infectee=infectee)
        due = np.nonzero((state.infectious_at >= 0) & (state.infectious_at + self.epi_params.confirm_delay == now))[0]
        for k in due.tolist():
            device = int(state.ids[k])
            onset = int(state.infectious_at[k])
            self.obs.onset[device] = onset
            self.obs.confirmed[device] = now
            self.obs.zones[device] = zone_label(self.world.pos[self.world.index[device]], self.zone_size)
            log.emit("confirmed", now, device=device, onset=onset)

    # -- analysis -------------------------------------------------------

    def trace_indices(self) -> list[int]:
        cases = sorted(
            (t, d) for d, t in self.obs.confirmed.items() if d in self.obs.adopters
        )
        if self.trace_index == "none" or not cases:
            return []
        if self.trace_index == "latest":
            latest = max(self.obs.onset[d] for _, d in cases)
            return [min(d for _, d in cases if self.obs.onset[d] == latest)]
        return [d for _, d in cases]

    def _analyse(self, now: int) -> tuple[list, list]:
        traces, alerts = [], []
        if not self.config.epidemic_enabled:
            return traces, alerts
        contacts = ContactIndex(self.contacts)
        for trace_id, index in enumerate(self.trace_indices()):
            try:
                report = trace_to_patient_zero(
                    contacts, self.obs, index, self.epi_params, self.store, self.state.ledger
                )
            except CycleDetected as e:
                report = e.report
            traces.append((trace_id, report))
            self.log.emit(
                "trace",
                now,
                trace_id=trace_id,
                index=index,
                chain=report.inferred_chain,
                patient_zero=report.patient_zero_estimate,
                forward=sorted(report.forward_set),
                backward=sorted(report.backward_set),
            )
            issued = issue_alerts(
                report,
                self.store,
                self.epi_params,
                now,
                self.rng["messaging"],
                zone=self.obs.zones.get(index, "unknown"),
                contacts=contacts,
                ticks_per_day=self.config.ticks_per_day,
            )
            for alert in issued:
                if alert.envelope is None:
                    continue
                rec = alert.log_record(trace_id)
                alerts.append({"tick": now, **rec})
                self.log.emit("alert", now, **rec)
        return traces, alerts

    def run(self) -> SimulationReport:
        self._header()
        cfg = self.config
        for now in range(cfg.ticks_total):
            self._mode_flips(now)
            self._move(now)
            closed = self.tracker.update(self.world.ids, self.world.pos, now)
            self._triggers(now)
            self._close_contacts(closed, now)
            self._scripted_interactions(now)
            self._send_messages(now)
            self._reveal(now)
            self._epidemic(now)
            self.compartments.append((now, *self.state.counts()))
        end = cfg.ticks_total
        if end > 0:
            self._close_contacts(self.tracker.flush(), end)
        traces, alerts = self._analyse(end)
        return SimulationReport(
            cfg, self.log, self.store, self.state, self.obs, self.contacts, self.compartments, traces, alerts, self.world
        )


def run(config: SimConfig) -> SimulationReport:
    return Simulation(config).run()


def trace_summary(report: SimulationReport) -> dict:
    """Forward-only versus bidirectional tracing over every adopting confirmed case.

    Recovered edges are pooled across indices before scoring, so coverage
    describes the whole tracing campaign. ``patient_zero_hit`` is the share
    of bidirectional traces whose estimate is a seeded case.
    """
    sim_obs = report.observations
    cases = sorted((sim_obs.onset[d], d) for d in sim_obs.confirmed if d in sim_obs.adopters)
    out = {
        "attack_rate": report.attack_rate,
        "traced": len(cases),
        "coverage_forward": 0.0,
        "coverage_bidirectional": 0.0,
        "patient_zero_hit": 0.0,
    }
    truth = report.state.transmission_edges()
    if not cases:
        out["coverage_forward"] = out["coverage_bidirectional"] = edge_coverage(set(), truth)
        return out
    params, store = report.config.epidemic, report.store
    contacts = ContactIndex(report.contacts)
    fwd_edges, both_edges, hits = set(), set(), 0
    seeds = report.state.patient_zeros()
    for _, index in cases:
        fwd_edges |= trace_forward_only(contacts, sim_obs, index, params, store).recovered_edges
        try:
            both = trace_to_patient_zero(contacts, sim_obs, index, params, store)
        except CycleDetected as e:
            both = e.report
        both_edges |= both.recovered_edges
        hits += both.patient_zero_estimate in seeds
    out.update(
        coverage_forward=edge_coverage(fwd_edges, truth),
        coverage_bidirectional=edge_coverage(both_edges, truth),
        patient_zero_hit=hits / len(cases),
    )
    return out


SWEEP_COLUMNS = (
    "run",
    "param",
    "value",
    "seed",
    "attack_rate",
    "coverage_forward",
    "coverage_bidirectional",
    "patient_zero_hit",
)


def _sweep_one(args) -> dict:
    data, param, value, run_index, base_dir = args
    seed = int(data["sim"]["seed"]) + run_index
    d = apply_overrides(data, [f"{param}={json.dumps(value)}", f"sim.seed={seed}"])
    summary = trace_summary(run(build_config(d, base_dir=base_dir)))
    return {"run": run_index, "param": param, "value": value, "seed": seed, **{k: summary[k] for k in SWEEP_COLUMNS[4:]}}


def sweep(data: dict, param: str, values: list, replicates: int = 1, base_dir=None, jobs: int = 1) -> list[dict]:
    """One run per (value, replicate); run ``i`` uses seed ``sim.seed + i``.

    Runs are numbered value-major, so the rows come back grouped by value.
    """
    if not values:
        raise ValueError("sweep needs at least one value")
    if replicates < 1:
        raise ValueError("replicates must be >= 1")
    for v in values:
        build_config(apply_overrides(data, [f"{param}={json.dumps(v)}"]), base_dir=base_dir)
    tasks = [
        (data, param, v, i * replicates + r, base_dir) for i, v in enumerate(values) for r in range(replicates)
    ]
    if jobs > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(jobs) as pool:
            return list(pool.map(_sweep_one, tasks))
    return [_sweep_one(t) for t in tasks]
