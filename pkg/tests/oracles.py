"""Reference implementations written independently of the package code.

They work from first principles (closed forms, brute force, networkx) so
the tests can compare the package against something it does not share
code with.
"""

import math

import networkx as nx

E = math.e


def prox_closed_form(duration, distance, tau_d=30.0, rho=5.0):
    return (1 - E ** (-duration / tau_d)) * E ** (-distance / rho) if duration > 0 else 0.0


def jaccard(a, b):
    a, b = set(a), set(b)
    return len(a & b) / len(a | b) if a | b else 0.0


def weighted_mean(pairs):
    """pairs of (weight, value); None values dropped."""
    pairs = [(w, v) for w, v in pairs if v is not None]
    den = sum(w for w, _ in pairs)
    return sum(w * v for w, v in pairs) / den if den else None


def brute_transitive(scores, a, b, cutoff):
    """scores: dict (x, y) -> T(x, y). Enumerates every device as a possible peer."""
    devices = {x for pair in scores for x in pair}
    num = den = 0.0
    for p in sorted(devices):
        if (a, p) not in scores or (p, b) not in scores:
            continue
        t = scores[(a, p)]
        if t < cutoff:
            continue
        num += t * scores[(p, b)]
        den += t
    return num / den if den > 0 else None


def ema_iterate(s, q, eta, n):
    for _ in range(n):
        s = s + eta * (q - s)
    return s


def half_life(s, base, h, elapsed):
    return base + (s - base) * 0.5 ** (elapsed / h)


def bfs_hops(edges, nodes, s, r):
    g = nx.Graph()
    g.add_nodes_from(nodes)
    g.add_edges_from(edges)
    try:
        return nx.shortest_path_length(g, s, r)
    except nx.NetworkXNoPath:
        return None


def components(edges, nodes):
    g = nx.Graph()
    g.add_nodes_from(nodes)
    g.add_edges_from(edges)
    return [set(c) for c in nx.connected_components(g)]


def geometric_edges(points, ranges):
    """points: {id: (x, y)}; edge when distance <= both ranges."""
    ids = sorted(points)
    out = []
    for i, a in enumerate(ids):
        for b in ids[i + 1 :]:
            d = math.dist(points[a], points[b])
            if d <= min(ranges[a], ranges[b]):
                out.append((a, b))
    return out


def hand_contacts(positions_by_tick, radius):
    """Replay a tiny 2-node trace: positions_by_tick is a list of ((x,y), (x,y)).
    Returns (start, duration) of each maximal run of ticks within radius."""
    runs, start = [], None
    for t, (p, q) in enumerate(positions_by_tick):
        close = math.dist(p, q) <= radius
        if close and start is None:
            start = t
        if not close and start is not None:
            runs.append((start, t - start))
            start = None
    if start is not None:
        runs.append((start, len(positions_by_tick) - start))
    return runs

