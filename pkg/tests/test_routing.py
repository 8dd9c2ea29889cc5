import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from proxtrust.events import EventLog
from proxtrust.messaging import encode, issue_key
from proxtrust.routing import (
    DuplicateDeviceId,
    LinkDown,
    MeshGraph,
    NoRoute,
    SessionKind,
    build_mesh,
    classify_session,
    find_route,
    relay,
    route_for_session,
)
from proxtrust.world import DeviceNode

from . import oracles


def line(*xs, r=10.0, online=()):
    return [DeviceNode(i + 1, (x, 0.0), r, has_internet=(i + 1) in online) for i, x in enumerate(xs)]


class TestBuildMesh:
    def test_examples(self):
        assert build_mesh(line(0, 5)).offline_edges == {(1, 2)}
        nodes = [DeviceNode(1, (0, 0), 10), DeviceNode(2, (5, 0), 3)]
        assert build_mesh(nodes).offline_edges == frozenset()
        assert build_mesh(line(0, 8, 16)).offline_edges == {(1, 2), (2, 3)}

    def test_duplicate_ids(self):
        with pytest.raises(DuplicateDeviceId):
            build_mesh([DeviceNode(1), DeviceNode(1, (1, 1))])

    def test_airplane_nodes_are_not_gateways(self):
        nodes = [DeviceNode(1, has_internet=True, airplane_mode=True), DeviceNode(2, (1, 0), has_internet=True)]
        assert build_mesh(nodes).internet_nodes == {2}

    @given(st.lists(st.tuples(st.floats(0, 60), st.floats(0, 60), st.floats(1, 30)), max_size=30))
    def test_matches_pairwise_oracle_and_symmetric(self, specs):
        nodes = [DeviceNode(i, (x, y), r) for i, (x, y, r) in enumerate(specs)]
        g = build_mesh(nodes)
        want = oracles.geometric_edges({n.id: n.position for n in nodes}, {n.id: n.radio_range for n in nodes})
        assert g.offline_edges == set(want)
        for a, b in g.offline_edges:
            assert g.has_edge(a, b) and g.has_edge(b, a)
            assert b in g.neighbors(a) and a in g.neighbors(b)


class TestFindRoute:
    def test_adjacent(self):
        r = find_route(build_mesh(line(0, 5)), 1, 2)
        assert r.hops == (1, 2) and r.kind is SessionKind.OFFLINE and r.latency == 1

    def test_line(self):
        r = find_route(build_mesh(line(0, 8, 16)), 1, 3)
        assert r.hops == (1, 2, 3) and r.relays == (2,)
        assert len(r.hops) - 1 == oracles.bfs_hops([(1, 2), (2, 3)], [1, 2, 3], 1, 3)

    def test_hybrid_bridge(self):
        # component A: 1-2(gw), component B: 3(gw)-4
        g = build_mesh(line(0, 5, 100, 105, online={2, 3}))
        r = find_route(g, 1, 4)
        assert r.kind is SessionKind.HYBRID
        assert r.hops == (1, 2, 3, 4)

    def test_no_route(self):
        with pytest.raises(NoRoute):
            find_route(build_mesh(line(0, 100)), 1, 2)

    def test_one_side_without_gateway(self):
        with pytest.raises(NoRoute):
            find_route(build_mesh(line(0, 5, 100, online={2})), 1, 3)

    def test_lexicographic_tie_break(self):
        g = MeshGraph.from_edges([1, 2, 3, 4], [(1, 3), (3, 4), (1, 2), (2, 4)])
        assert find_route(g, 1, 4).hops == (1, 2, 4)

    @given(st.integers(2, 50), st.floats(0.02, 0.3), st.integers(0, 2**32 - 1))
    def test_random_graphs_against_bfs(self, n, p, seed):
        rng = np.random.default_rng(seed)
        edges = [(a, b) for a in range(n) for b in range(a + 1, n) if rng.random() < p]
        g = MeshGraph.from_edges(range(n), edges)
        s, r = (int(v) for v in rng.choice(n, 2, replace=False))
        want = oracles.bfs_hops(edges, range(n), s, r)
        if want is None:
            with pytest.raises(NoRoute):
                find_route(g, s, r)
            return
        route = find_route(g, s, r)
        assert len(route.hops) - 1 == want
        assert len(set(route.hops)) == len(route.hops)
        assert all(g.has_edge(a, b) for a, b in zip(route.hops, route.hops[1:]))


class TestSessions:
    def test_offline_without_internet(self):
        g = build_mesh(line(0, 5))
        assert classify_session(g, 1, 2, True) is SessionKind.OFFLINE

    def test_prefer_internet(self):
        g = build_mesh(line(0, 5, online={1, 2}))
        assert classify_session(g, 1, 2, True) is SessionKind.ONLINE_PROXIMITY
        assert classify_session(g, 1, 2, True, prefer_internet=False) is SessionKind.OFFLINE
        assert route_for_session(g, 1, 2, True).kind is SessionKind.ONLINE_PROXIMITY

    def test_hybrid(self):
        g = build_mesh(line(0, 100, online={1, 2}))
        assert classify_session(g, 1, 2, False) is SessionKind.HYBRID


class TestRelay:
    def envelope(self, payload=b"hello mesh"):
        return encode(payload, 2, 0.1, 0.2, 0.8, issue_key(np.random.default_rng(1)), sender=1, receiver=3)

    def test_hop_events(self):
        g = build_mesh(line(0, 8, 16))
        log = EventLog()
        env = self.envelope()
        d = relay(find_route(g, 1, 3), env, log, g)
        assert len(log.of_type("relay_hop")) == 1
        assert d.envelope == env and d.envelope.to_bytes() == env.to_bytes()
        log2 = EventLog()
        relay(find_route(g, 1, 2), env, log2, g)
        assert log2.of_type("relay_hop") == []

    def test_link_down(self):
        g = build_mesh(line(0, 8, 16))
        route = find_route(g, 1, 3)
        broken = MeshGraph.from_edges(g.nodes, [(1, 2)])
        with pytest.raises(LinkDown):
            relay(route, self.envelope(), EventLog(), broken)

    @given(st.binary(min_size=1, max_size=300))
    def test_payload_bit_identical(self, payload):
        g = build_mesh(line(0, 8, 16, 24))
        env = self.envelope(payload)
        assert relay(find_route(g, 1, 4), env, None, g).envelope.to_bytes() == env.to_bytes()
