"""Scenario files: parsing, dotted-path overrides, validation.

A scenario is a JSON document with the sections ``sim``, ``nodes`` or
``node_generator``, ``registry``, ``triggers``, ``interactions``,
``messages`` and ``epidemic``. Validation collects every problem with the
path of the offending field instead of stopping at the first one.
"""

from __future__ import annotations

import copy
import hashlib
import json
import re
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any, Optional

from .epidemic import EpidemicParams, TransmissionMode
from .messaging import RevealMode
from .trust import TrustModelParams, InteractionKind

TRACE_INDEX_CHOICES = ("all", "latest", "none")


class ConfigError(Exception):
    pass


class ConfigParseError(ConfigError):
    def __init__(self, path, msg: str, line: int = 0, column: int = 0):
        super().__init__(f"{path}:{line}:{column}: {msg}")
        self.line, self.column = line, column


class ConfigInvalid(ConfigError):
    def __init__(self, problems: list[tuple[str, str]]):
        self.problems = problems
        super().__init__("\n".join(f"{p} {m}" for p, m in problems))


def load_text(text: str, source: str = "<string>") -> dict:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigParseError(source, e.msg, e.lineno, e.colno) from None
    if not isinstance(data, dict):
        raise ConfigParseError(source, "top level must be an object", 1, 1)
    return data


def config_hash(raw: bytes) -> str:
    return hashlib.sha256(raw).hexdigest()


_PATH_TOKEN = re.compile(r"([^.\[\]]+)|\[(\d+)\]")


def _split_path(path: str) -> list:
    parts = []
    for name, idx in _PATH_TOKEN.findall(path):
        parts.append(int(idx) if idx else name)
    if not parts:
        raise ConfigError(f"empty override path {path!r}")
    return parts


def _parse_value(text: str) -> Any:
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(data: dict, overrides: list[str]) -> dict:
    """Return a copy of ``data`` with ``key.path=value`` assignments applied.

    Values are read as JSON when they parse, else as plain strings.
    """
    out = copy.deepcopy(data)
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not key=value")
        key, value = item.split("=", 1)
        parts = _split_path(key.strip())
        cur = out
        for p in parts[:-1]:
            if isinstance(p, int):
                cur = cur[p]
            else:
                cur = cur.setdefault(p, {})
        cur[parts[-1]] = _parse_value(value)
    return out


def has_path(data: dict, path: str) -> bool:
    cur: Any = data
    for p in _split_path(path):
        try:
            cur = cur[p]
        except (KeyError, IndexError, TypeError):
            return False
    return True


def _num(x) -> bool:
    return isinstance(x, (int, float)) and not isinstance(x, bool)


def _int(x) -> bool:
    return isinstance(x, int) and not isinstance(x, bool)


def _range_ok(v, lo_ok) -> bool:
    if _num(v):
        return lo_ok(v)
    return isinstance(v, list) and len(v) == 2 and all(_num(x) and lo_ok(x) for x in v) and v[0] <= v[1]


TRUST_KEYS = {f.name for f in fields(TrustModelParams)}
EPIDEMIC_PARAM_KEYS = {f.name for f in fields(EpidemicParams)} - {"hazard"}
EPIDEMIC_EXTRA_KEYS = {"enabled", "initial_infected", "initial_count", "forced_infections", "trace_index", "zone_size"}


def _probe(cls, values: dict):
    """Unvalidated instance of a frozen params class, to ask for its problems."""
    obj = object.__new__(cls)
    for f in fields(cls):
        object.__setattr__(obj, f.name, values.get(f.name, f.default))
    return obj


class _Checker:
    def __init__(self):
        self.problems: list[tuple[str, str]] = []

    def bad(self, path: str, msg: str) -> None:
        self.problems.append((path, msg))

    def section(self, data: dict, name: str, required: bool = False) -> dict:
        sec = data.get(name)
        if sec is None:
            if required:
                self.bad(name, "section required")
            return {}
        if not isinstance(sec, dict):
            self.bad(name, "must be an object")
            return {}
        return sec

    def items(self, data: dict, name: str) -> list:
        sec = data.get(name, [])
        if not isinstance(sec, list):
            self.bad(name, "must be a list")
            return []
        return sec


def validate(data: dict) -> list[tuple[str, str]]:
    """Every violated constraint as ``(field path, message)``."""
    ck = _Checker()
    sim = ck.section(data, "sim", required=True)
    if "seed" not in sim:
        ck.bad("sim.seed", "required")
    elif not _int(sim["seed"]) or not 0 <= sim["seed"] < 2**64:
        ck.bad("sim.seed", "must be an integer in [0, 2^64)")
    if "ticks_total" not in sim:
        ck.bad("sim.ticks_total", "required")
    elif not _int(sim["ticks_total"]) or sim["ticks_total"] < 0:
        ck.bad("sim.ticks_total", "must be a non-negative integer")
    if "tick_length" in sim and not (_num(sim["tick_length"]) and sim["tick_length"] > 0):
        ck.bad("sim.tick_length", "must be > 0")
    arena = sim.get("arena", [100, 100])
    if not (isinstance(arena, list) and len(arena) == 2 and all(_num(v) and v > 0 for v in arena)):
        ck.bad("sim.arena", "must be [width, height] with positive sides")
        arena = None
    if "contact_radius" in sim and not (_num(sim["contact_radius"]) and sim["contact_radius"] > 0):
        ck.bad("sim.contact_radius", "must be > 0")
    for key in ("trigger_interval",):
        if key in sim and not (_int(sim[key]) and sim[key] >= 1):
            ck.bad(f"sim.{key}", "must be an integer >= 1")
    if "prefer_internet" in sim and not isinstance(sim["prefer_internet"], bool):
        ck.bad("sim.prefer_internet", "must be true or false")
    if "mobility_trace" in sim and not isinstance(sim["mobility_trace"], str):
        ck.bad("sim.mobility_trace", "must be a file path")
    trust = sim.get("trust", {})
    if not isinstance(trust, dict):
        ck.bad("sim.trust", "must be an object")
    else:
        for k in sorted(set(trust) - TRUST_KEYS):
            ck.bad(f"sim.trust.{k}", "unknown parameter")
        known = {k: v for k, v in trust.items() if k in TRUST_KEYS}
        for k, v in known.items():
            if not _num(v):
                ck.bad(f"sim.trust.{k}", "must be a number")
        if all(_num(v) for v in known.values()):
            for name, msg in _probe(TrustModelParams, known).problems():
                ck.bad(f"sim.trust.{name}", msg)

    ids = _validate_nodes(ck, data, arena)
    _validate_registry(ck, data)
    _validate_triggers(ck, data, ids)
    _validate_interactions(ck, data, ids)
    _validate_messages(ck, data, ids)
    _validate_epidemic(ck, data, ids)
    return ck.problems


def _validate_nodes(ck: _Checker, data: dict, arena) -> Optional[set]:
    if "nodes" in data:
        nodes = ck.items(data, "nodes")
        ids: set = set()
        for i, n in enumerate(nodes):
            p = f"nodes[{i}]"
            if not isinstance(n, dict):
                ck.bad(p, "must be an object")
                continue
            nid = n.get("id")
            if not _int(nid) or nid < 0 or nid >= 2**64:
                ck.bad(f"{p}.id", "required non-negative integer")
            elif nid in ids:
                ck.bad(f"{p}.id", f"duplicate device id {nid}")
            else:
                ids.add(nid)
            pos = n.get("position")
            if not (isinstance(pos, list) and len(pos) == 2 and all(_num(v) for v in pos)):
                ck.bad(f"{p}.position", "required [x, y]")
            elif arena and not (0 <= pos[0] <= arena[0] and 0 <= pos[1] <= arena[1]):
                ck.bad(f"{p}.position", "outside the arena")
            if "radio_range" not in n or not (_num(n["radio_range"]) and n["radio_range"] > 0):
                ck.bad(f"{p}.radio_range", "must be > 0")
            if "speed" in n and not (_num(n["speed"]) and n["speed"] >= 0):
                ck.bad(f"{p}.speed", "must be >= 0")
            if "waypoint" in n:
                wp = n["waypoint"]
                if not (isinstance(wp, list) and len(wp) == 2 and all(_num(v) for v in wp)):
                    ck.bad(f"{p}.waypoint", "must be [x, y]")
            for key in ("has_internet", "airplane_mode"):
                if key in n and not isinstance(n[key], bool):
                    ck.bad(f"{p}.{key}", "must be true or false")
            for key in ("interests", "apps"):
                if key in n and not (isinstance(n[key], list) and all(isinstance(t, str) for t in n[key])):
                    ck.bad(f"{p}.{key}", "must be a list of strings")
        return ids
    if "node_generator" in data:
        gen = ck.section(data, "node_generator")
        count = gen.get("count")
        if not _int(count) or count < 1:
            ck.bad("node_generator.count", "must be an integer >= 1")
            count = 0
        if not _range_ok(gen.get("radio_range", 10.0), lambda v: v > 0):
            ck.bad("node_generator.radio_range", "must be > 0 or [lo, hi] with 0 < lo <= hi")
        if not _range_ok(gen.get("speed", 0.0), lambda v: v >= 0):
            ck.bad("node_generator.speed", "must be >= 0 or [lo, hi]")
        for key in ("internet_fraction", "airplane_fraction"):
            v = gen.get(key, 0.0)
            if not (_num(v) and 0 <= v <= 1):
                ck.bad(f"node_generator.{key}", "must be in [0, 1]")
        for key in ("interest_pool", "app_pool"):
            v = gen.get(key, [])
            if not (isinstance(v, list) and all(isinstance(t, str) for t in v)):
                ck.bad(f"node_generator.{key}", "must be a list of strings")
        for key in ("interests_per_node", "apps_per_node"):
            if key in gen and not _range_ok(gen[key], lambda v: v >= 0 and float(v).is_integer()):
                ck.bad(f"node_generator.{key}", "must be a count or [lo, hi]")
        return set(range(1, count + 1))
    ck.bad("nodes", "either nodes or node_generator is required")
    return None


def _check_device(ck: _Checker, path: str, value, ids: Optional[set]) -> None:
    if not _int(value):
        ck.bad(path, "must be a device id")
    elif ids is not None and value not in ids:
        ck.bad(path, f"unknown device {value}")


def _check_tick(ck: _Checker, path: str, value) -> None:
    if not _int(value) or value < 0:
        ck.bad(path, "must be a non-negative integer tick")


def _validate_registry(ck: _Checker, data: dict) -> None:
    reg = ck.section(data, "registry")
    zones = reg.get("zones", {})
    if not isinstance(zones, dict):
        ck.bad("registry.zones", "must map zone names to member lists")
        return
    for zone, members in zones.items():
        if not isinstance(members, list):
            ck.bad(f"registry.zones.{zone}", "must be a list")
            continue
        for i, m in enumerate(members):
            p = f"registry.zones.{zone}[{i}]"
            if not isinstance(m, dict) or not _int(m.get("id")):
                ck.bad(f"{p}.id", "required device id")
            elif not (isinstance(m.get("interests", []), list)):
                ck.bad(f"{p}.interests", "must be a list of strings")


def _validate_triggers(ck: _Checker, data: dict, ids) -> None:
    trg = ck.section(data, "triggers")
    if "peers_in_proximity" in trg and not (_int(trg["peers_in_proximity"]) and trg["peers_in_proximity"] >= 1):
        ck.bad("triggers.peers_in_proximity", "must be an integer >= 1")
    for i, ins in enumerate(trg.get("instructions", [])):
        _check_tick(ck, f"triggers.instructions[{i}].tick", ins.get("tick"))
        _check_device(ck, f"triggers.instructions[{i}].device", ins.get("device"), ids)
    for i, flip in enumerate(trg.get("mode_flips", [])):
        _check_tick(ck, f"triggers.mode_flips[{i}].tick", flip.get("tick"))
        _check_device(ck, f"triggers.mode_flips[{i}].device", flip.get("device"), ids)
        if not isinstance(flip.get("airplane_mode"), bool):
            ck.bad(f"triggers.mode_flips[{i}].airplane_mode", "must be true or false")


def _validate_interactions(ck: _Checker, data: dict, ids) -> None:
    kinds = {k.value for k in InteractionKind}
    for i, it in enumerate(ck.items(data, "interactions")):
        p = f"interactions[{i}]"
        _check_tick(ck, f"{p}.tick", it.get("tick"))
        _check_device(ck, f"{p}.a", it.get("a"), ids)
        _check_device(ck, f"{p}.b", it.get("b"), ids)
        if it.get("a") == it.get("b"):
            ck.bad(f"{p}.b", "must differ from a")
        if it.get("kind", "Conversation") not in kinds:
            ck.bad(f"{p}.kind", f"must be one of {sorted(kinds)}")
        if not (_int(it.get("duration")) and it["duration"] >= 1):
            ck.bad(f"{p}.duration", "must be an integer >= 1")
        if not (_num(it.get("distance", 1.0)) and it.get("distance", 1.0) >= 0):
            ck.bad(f"{p}.distance", "must be >= 0")
        for key in ("quality", "quality_reverse"):
            if key in it and not (_num(it[key]) and 0 <= it[key] <= 1):
                ck.bad(f"{p}.{key}", "must be in [0, 1]")


def _validate_messages(ck: _Checker, data: dict, ids) -> None:
    modes = {m.value.lower() for m in RevealMode}
    for i, m in enumerate(ck.items(data, "messages")):
        p = f"messages[{i}]"
        _check_tick(ck, f"{p}.tick", m.get("tick"))
        _check_device(ck, f"{p}.sender", m.get("sender"), ids)
        _check_device(ck, f"{p}.receiver", m.get("receiver"), ids)
        if not (isinstance(m.get("text"), str) and m["text"]):
            ck.bad(f"{p}.text", "must be a non-empty string")
        if not (_int(m.get("partitions", 1)) and m.get("partitions", 1) >= 1):
            ck.bad(f"{p}.partitions", "must be an integer >= 1")
        rx = m.get("rx_threshold", 0.0)
        full = m.get("theta_full", rx)
        for key, v in (("tx_threshold", m.get("tx_threshold", 0.0)), ("rx_threshold", rx), ("theta_full", full)):
            if not (_num(v) and 0 <= v <= 1):
                ck.bad(f"{p}.{key}", "must be in [0, 1]")
        if _num(rx) and _num(full) and full < rx:
            ck.bad(f"{p}.theta_full", "must be >= rx_threshold")
        mode = str(m.get("mode", "deterministic")).lower()
        if mode not in modes:
            ck.bad(f"{p}.mode", f"must be one of {sorted(modes)}")
        elif mode == "probabilistic" and not (_num(m.get("temperature")) and m["temperature"] > 0):
            ck.bad(f"{p}.temperature", "must be > 0 in probabilistic mode")
        ticks = m.get("reveal_ticks", [])
        if not (isinstance(ticks, list) and all(_int(t) for t in ticks)):
            ck.bad(f"{p}.reveal_ticks", "must be a list of ticks")
        elif any(b <= a for a, b in zip(ticks, ticks[1:])):
            ck.bad(f"{p}.reveal_ticks", "must be strictly increasing")


def _validate_epidemic(ck: _Checker, data: dict, ids) -> None:
    epi = ck.section(data, "epidemic")
    for k in sorted(set(epi) - EPIDEMIC_PARAM_KEYS - EPIDEMIC_EXTRA_KEYS):
        ck.bad(f"epidemic.{k}", "unknown parameter")
    params = {k: v for k, v in epi.items() if k in EPIDEMIC_PARAM_KEYS}
    if "mode" in params:
        try:
            params["mode"] = TransmissionMode(params["mode"])
        except ValueError:
            ck.bad("epidemic.mode", "must be 'contact' or 'trust-proxy'")
            params.pop("mode")
    numeric = {k: v for k, v in params.items() if k != "mode"}
    for k, v in numeric.items():
        if not _num(v):
            ck.bad(f"epidemic.{k}", "must be a number")
    if all(_num(v) for v in numeric.values()):
        for name, msg in _probe(EpidemicParams, params).problems():
            ck.bad(f"epidemic.{name}", msg)
    if "enabled" in epi and not isinstance(epi["enabled"], bool):
        ck.bad("epidemic.enabled", "must be true or false")
    for i, d in enumerate(epi.get("initial_infected", [])):
        _check_device(ck, f"epidemic.initial_infected[{i}]", d, ids)
    if "initial_count" in epi and not (_int(epi["initial_count"]) and epi["initial_count"] >= 0):
        ck.bad("epidemic.initial_count", "must be an integer >= 0")
    for i, f in enumerate(epi.get("forced_infections", [])):
        _check_tick(ck, f"epidemic.forced_infections[{i}].tick", f.get("tick"))
        _check_device(ck, f"epidemic.forced_infections[{i}].infector", f.get("infector"), ids)
        _check_device(ck, f"epidemic.forced_infections[{i}].infectee", f.get("infectee"), ids)
    if epi.get("trace_index", "all") not in TRACE_INDEX_CHOICES:
        ck.bad("epidemic.trace_index", f"must be one of {list(TRACE_INDEX_CHOICES)}")
    if "zone_size" in epi and not (_num(epi["zone_size"]) and epi["zone_size"] > 0):
        ck.bad("epidemic.zone_size", "must be > 0")


@dataclass
class SimConfig:
    """Validated scenario, ready to run."""

    data: dict
    seed: int
    ticks_total: int
    tick_length: float = 60.0
    arena: tuple = (100.0, 100.0)
    contact_radius: float = 2.0
    trigger_interval: int = 1
    prefer_internet: bool = True
    trust: TrustModelParams = field(default_factory=TrustModelParams)
    epidemic: EpidemicParams = field(default_factory=EpidemicParams)
    epidemic_enabled: bool = True
    source_hash: str = ""
    base_dir: Optional[Path] = None

    @property
    def ticks_per_day(self) -> int:
        return max(1, int(round(86400 / self.tick_length)))

    def section(self, name: str, default=None):
        return self.data.get(name, {} if default is None else default)


def build_config(data: dict, source_hash: Optional[str] = None, base_dir: Optional[Path] = None) -> SimConfig:
    problems = validate(data)
    if problems:
        raise ConfigInvalid(problems)
    sim = data["sim"]
    epi = data.get("epidemic", {})
    epi_params = {k: v for k, v in epi.items() if k in EPIDEMIC_PARAM_KEYS}
    if source_hash is None:
        source_hash = config_hash(json.dumps(data, sort_keys=True).encode())
    return SimConfig(
        data=data,
        seed=int(sim["seed"]),
        ticks_total=int(sim["ticks_total"]),
        tick_length=float(sim.get("tick_length", 60.0)),
        arena=tuple(float(v) for v in sim.get("arena", [100, 100])),
        contact_radius=float(sim.get("contact_radius", 2.0)),
        trigger_interval=int(sim.get("trigger_interval", 1)),
        prefer_internet=bool(sim.get("prefer_internet", True)),
        trust=TrustModelParams(**sim.get("trust", {})),
        epidemic=EpidemicParams(**epi_params),
        epidemic_enabled="epidemic" in data and bool(epi.get("enabled", True)),
        source_hash=source_hash,
        base_dir=base_dir,
    )


def load_config(path, overrides: Optional[list[str]] = None) -> SimConfig:
    path = Path(path)
    raw = path.read_bytes()
    data = load_text(raw.decode(), str(path))
    if overrides:
        data = apply_overrides(data, overrides)
    return build_config(data, config_hash(raw), path.parent)
