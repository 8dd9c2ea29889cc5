import json
from collections import defaultdict

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from proxtrust.config import build_config
from proxtrust.contacts import ContactIndex, ContactRecord, ContactTracker, detect_contacts
from proxtrust.sim import (
    STREAMS,
    TriggerKind,
    TriggerRules,
    evaluate_triggers,
    run,
)
from proxtrust.world import DeviceNode, World, step_mobility, step_positions

from . import oracles


def two_node_config(ticks=100, distance=1.0, **sim):
    return build_config(
        {
            "sim": {"seed": 1, "ticks_total": ticks, "arena": [50, 50], "contact_radius": 2.0, **sim},
            "nodes": [
                {"id": 1, "position": [10, 10], "radio_range": 10},
                {"id": 2, "position": [10 + distance, 10], "radio_range": 10},
            ],
        }
    )


class TestMobility:
    def test_straight_step(self):
        n = step_mobility(DeviceNode(1, (0, 0), waypoint=(10, 0), speed=1.0), np.random.default_rng(0))
        assert n.position == (1.0, 0.0)

    def test_speed_zero(self):
        n = step_mobility(DeviceNode(1, (3, 4), waypoint=(10, 0), speed=0.0), np.random.default_rng(0))
        assert n.position == (3.0, 4.0)

    def test_arrival_draws_new_waypoint(self):
        n = step_mobility(DeviceNode(1, (9.5, 0), waypoint=(10, 0), speed=1.0), np.random.default_rng(0))
        assert n.position == (10.0, 0.0) and n.waypoint != (10.0, 0.0)

    def test_same_seed_same_trajectory(self):
        def trajectory(seed):
            w = World([DeviceNode(i, (i, i), waypoint=(50, 50), speed=2.0) for i in range(10)], (60, 60))
            rng = np.random.default_rng(seed)
            out = []
            for _ in range(200):
                w.step(rng)
                out.append(w.pos.copy())
            return np.array(out)

        assert np.array_equal(trajectory(5), trajectory(5))
        assert not np.array_equal(trajectory(5), trajectory(6))

    @given(st.integers(1, 30), st.floats(0.1, 20), st.integers(0, 2**32 - 1))
    def test_positions_stay_in_arena(self, n, speed, seed):
        rng = np.random.default_rng(seed)
        arena = (40.0, 25.0)
        pos = rng.uniform((0, 0), arena, size=(n, 2))
        target = rng.uniform((0, 0), arena, size=(n, 2))
        for _ in range(50):
            step_positions(pos, target, np.full(n, speed), arena, rng)
            assert (pos >= 0).all() and (pos[:, 0] <= arena[0]).all() and (pos[:, 1] <= arena[1]).all()


class TestContacts:
    def replay(self, positions, radius):
        tracker = ContactTracker(radius)
        w = World([DeviceNode(1), DeviceNode(2)], (100, 100))
        records = []
        for t, (p, q) in enumerate(positions):
            w.set_positions([(1, *p), (2, *q)])
            records += detect_contacts(tracker, w, t)
        return records + tracker.flush()

    def test_ten_ticks_then_apart(self):
        trace = [((0, 0), (3, 0))] * 10 + [((0, 0), (30, 0))] * 5
        recs = self.replay(trace, 5.0)
        assert [(r.start, r.duration) for r in recs] == oracles.hand_contacts(trace, 5.0) == [(0, 10)]
        assert recs[0].mean_distance == pytest.approx(3.0)

    def test_never_close(self):
        assert self.replay([((0, 0), (30, 0))] * 5, 5.0) == []

    def test_single_tick(self):
        trace = [((0, 0), (30, 0)), ((0, 0), (1, 0)), ((0, 0), (30, 0))]
        assert [(r.start, r.duration) for r in self.replay(trace, 5.0)] == [(1, 1)]

    def test_record_validation(self):
        with pytest.raises(ValueError):
            ContactRecord(2, 1, 0, 1, 0.0)
        with pytest.raises(ValueError):
            ContactRecord(1, 2, 0, 0, 0.0)

    def test_index_window(self):
        idx = ContactIndex([ContactRecord(1, 2, 0, 5, 1.0), ContactRecord(1, 3, 10, 5, 1.0)])
        assert [c.b for c in idx.of_device(1, 6, 20)] == [3]
        assert [c.b for c in idx.of_device(1, 0, 4)] == [2]
        assert len(idx.of_device(1)) == 2


class TestTriggers:
    def test_airplane_everywhere(self):
        w = World([DeviceNode(i, (i, 0), has_internet=True, airplane_mode=True) for i in range(4)])
        for i in range(4):
            assert TriggerKind.NO_INFRASTRUCTURE in [f.kind for f in evaluate_triggers(w, i, 0)]

    def test_gateway_in_component_suppresses_no_infrastructure(self):
        w = World([DeviceNode(0, (0, 0), has_internet=True), DeviceNode(1, (5, 0)), DeviceNode(2, (90, 0))])
        kinds = {i: [f.kind for f in evaluate_triggers(w, i, 0)] for i in range(3)}
        assert TriggerKind.NO_INFRASTRUCTURE not in kinds[1]
        assert TriggerKind.NO_INFRASTRUCTURE in kinds[2]

    def test_peer_threshold(self):
        w = World([DeviceNode(i, (i, 0)) for i in range(3)])
        rules = TriggerRules(peers_in_proximity=3)
        assert TriggerKind.PEERS_IN_PROXIMITY not in [f.kind for f in evaluate_triggers(w, 0, 0, rules)]
        w4 = World([DeviceNode(i, (i, 0)) for i in range(4)])
        fired = [f for f in evaluate_triggers(w4, 0, 0, rules) if f.kind is TriggerKind.PEERS_IN_PROXIMITY]
        assert fired and fired[0].detail == 3

    def test_instruction_tick(self):
        w = World([DeviceNode(1)])
        rules = TriggerRules(instructions={100: [1]})
        for t in (99, 100, 101):
            got = TriggerKind.USER_INSTRUCTION in [f.kind for f in evaluate_triggers(w, 1, t, rules)]
            assert got == (t == 100)

    def test_instruction_in_run(self):
        cfg = two_node_config(ticks=120)
        cfg.data["triggers"] = {"instructions": [{"tick": 100, "device": 1}]}
        cfg = build_config(cfg.data)
        fired = [r for r in run(cfg).log.of_type("trigger") if r["trigger"] == "UserInstruction"]
        assert [(r["tick"], r["device"]) for r in fired] == [(100, 1)]


class TestRun:
    def test_zero_ticks(self):
        report = run(two_node_config(ticks=0))
        assert [r["type"] for r in report.log] == ["header"]

    def test_stationary_pair_builds_trust(self):
        report = run(two_node_config(ticks=100))
        assert report.store.score(1, 2) > 0.0 and report.store.score(2, 1) > 0.0

    def test_deterministic(self):
        a = run(two_node_config(ticks=50)).log.to_text()
        b = run(two_node_config(ticks=50)).log.to_text()
        assert a == b

    def test_streams(self):
        assert STREAMS == ("population", "mobility", "adoption", "epidemic", "messaging")

    def test_mobility_trace(self, tmp_path):
        (tmp_path / "trace.csv").write_text("tick,device_id,x,y\n3,2,40,40\n")
        data = two_node_config(ticks=10, mobility_trace="trace.csv").data
        (tmp_path / "s.json").write_text(json.dumps(data))
        from proxtrust.config import load_config

        report = run(load_config(tmp_path / "s.json"))
        contacts = report.log.of_type("contact")
        assert [(c["start"], c["duration"]) for c in contacts] == [(0, 3)]

    def test_reference_log_properties(self, reference_report):
        log = list(reference_report.log)
        ticks = [r["tick"] for r in log]
        assert ticks == sorted(ticks)
        # every closed contact updates both directions at the same tick
        updates = defaultdict(set)
        for r in log:
            if r["type"] == "trust_update":
                updates[r["tick"]].add((r["from"], r["to"]))
        for c in reference_report.log.of_type("contact"):
            assert (c["a"], c["b"]) in updates[c["tick"]] and (c["b"], c["a"]) in updates[c["tick"]]
        w = reference_report.world
        assert (w.pos >= 0).all() and (w.pos <= np.array(w.arena)).all()

    def test_outputs(self, chain_report, tmp_path):
        paths = chain_report.write_outputs(tmp_path)
        assert all(p.exists() for p in paths.values())
        rows = paths["compartments"].read_text().splitlines()
        assert rows[0] == "tick,S,E,I,R" and len(rows) == 1 + chain_report.config.ticks_total
