import json

import pytest

from proxtrust.config import (
    ConfigError,
    ConfigInvalid,
    ConfigParseError,
    apply_overrides,
    build_config,
    config_hash,
    load_config,
    load_text,
    validate,
)


def minimal():
    return {"sim": {"seed": 1, "ticks_total": 10}, "nodes": [{"id": 1, "position": [0, 0], "radio_range": 5}]}


def paths(data):
    return [p for p, _ in validate(data)]


def test_minimal_is_valid():
    assert validate(minimal()) == []
    cfg = build_config(minimal())
    assert cfg.seed == 1 and cfg.ticks_total == 10 and not cfg.epidemic_enabled


def test_bundled_scenarios_valid(scenario_path):
    for name in ("reference", "chain", "star"):
        assert load_config(scenario_path(name)).ticks_total > 0


def test_every_problem_reported():
    d = minimal()
    del d["sim"]["seed"]
    d["nodes"].append({"id": 1, "position": [0, 0], "radio_range": -2})
    d["epidemic"] = {"beta": -1, "mode": "airborne"}
    problems = validate(d)
    got = {f"{p} {m}" for p, m in problems}
    assert "sim.seed required" in got
    assert {"nodes[1].id", "nodes[1].radio_range", "epidemic.beta", "epidemic.mode"} <= {p for p, _ in problems}
    with pytest.raises(ConfigInvalid) as e:
        build_config(d)
    assert "sim.seed required" in str(e.value)


def test_unknown_device_references():
    d = minimal()
    d["interactions"] = [{"tick": 1, "a": 1, "b": 7, "duration": 5}]
    assert "interactions[0].b" in paths(d)


def test_zero_ticks_allowed():
    d = minimal()
    d["sim"]["ticks_total"] = 0
    assert validate(d) == []


def test_parse_error_location():
    with pytest.raises(ConfigParseError) as e:
        load_text('{\n  "sim": {,\n}', "x.json")
    assert (e.value.line, e.value.column) == (2, 11)


def test_overrides():
    d = minimal()
    out = apply_overrides(d, ["sim.seed=5", "nodes[0].radio_range=2.5", "epidemic.mode=trust-proxy"])
    assert out["sim"]["seed"] == 5 and out["nodes"][0]["radio_range"] == 2.5
    assert out["epidemic"]["mode"] == "trust-proxy"
    assert d["sim"]["seed"] == 1  # input untouched
    with pytest.raises(ConfigError):
        apply_overrides(d, ["no-equals-sign"])


def test_hash_is_of_file_bytes(tmp_path):
    raw = json.dumps(minimal(), indent=3).encode()
    (tmp_path / "c.json").write_bytes(raw)
    assert load_config(tmp_path / "c.json").source_hash == config_hash(raw)
    assert load_config(tmp_path / "c.json", ["sim.seed=2"]).source_hash == config_hash(raw)
