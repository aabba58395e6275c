"""Cut one link of a 6-node ring and watch the link-state protocol route around it."""
from wnetlab import config as cfg
from wnetlab.emucore import Emulator
from wnetlab.linkevents import EventLog, LinkEvent
from wnetlab.routing import RoutingPlane

SCENARIO = """
duration: 30
seed: 1
topology: {num_nodes: 6, structure: ring}
links: [{select: all, capacity: 11.0e6, prop_delay: 0.001}]
routing: [{nodes: all, protocol: olsr}]
"""

sc = cfg.expand(cfg.parse(SCENARIO))
cut_us = 10_000_000
# 200 dB of path loss is far below any receive threshold: the link is gone.
events = EventLog([LinkEvent(cut_us, 0, 1, 200.0), LinkEvent(cut_us, 1, 0, 200.0)])
plane = RoutingPlane(sc.network, sc.protocols)
Emulator(sc.network, events, plane, [], sc.spec.duration, sc.spec.seed).run()

print("table changes at node 0 (t_s, protocol):")
for t, node, proto in plane.changes:
    if node == 0:
        print(f"  {t:8.4f}  {proto}")
entry = plane.table(0).lookup(1)
print(f"after the cut node 0 reaches node 1 via node {entry.gateway} at cost {entry.cost:g}")
