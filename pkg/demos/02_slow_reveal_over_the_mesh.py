"""
A message that opens as trust grows
===================================

A sender splits a message into partitions with rising thresholds. It is
relayed across an offline mesh as opaque bytes, and the receiver sees
more of it each time their trust in the sender rises.
"""

# %%
# Five phones on a street, radio range 10 m. Only neighbours can talk, so a
# message from one end to the other needs relays.
import numpy as np

from proxtrust.events import EventLog
from proxtrust.messaging import RevealTracker, attempt_decode, encode, issue_key, transmit
from proxtrust.routing import build_mesh, find_route
from proxtrust.trust import TrustStore
from proxtrust.world import DeviceNode

nodes = [DeviceNode(i, (8.0 * i, 0.0), 10.0) for i in range(5)]
mesh = build_mesh(nodes)
print("edges:", sorted(mesh.offline_edges))
print("route 0 -> 4:", find_route(mesh, 0, 4).hops)

# %%
# The sender trusts the receiver enough to send, and encodes four
# partitions whose thresholds run from 0.2 to 0.8.
rng = np.random.default_rng(7)
key = issue_key(rng)
store = TrustStore()
store.set(0, 4, 0.7)
message = b"meet at the north gate at noon, bring the blue folder"
env = encode(message, 4, tx_threshold=0.5, rx_threshold=0.2, theta_full=0.8, key=key, sender=0, receiver=4)
print("thresholds:", [round(x, 2) for x in env.partition_thresholds])

log = EventLog()
delivery = transmit(store, env, now=0, graph=mesh, event_log=log)
print("relayed by:", [r["node"] for r in log.of_type("relay_hop")])

# %%
# The receiver's own trust in the sender decides how much opens. Revealed
# partitions stay revealed, even if trust later falls.
seen = RevealTracker()
for tick, trust in [(0, 0.1), (10, 0.3), (20, 0.5), (30, 0.9), (40, 0.2)]:
    store.set(4, 0, trust, now=tick)
    res = attempt_decode(store, delivery.envelope, key, tick, reveals=seen)
    print(f"trust {trust:.1f}: partitions {sorted(res.revealed_partitions)} -> {res.prefix()!r}")
