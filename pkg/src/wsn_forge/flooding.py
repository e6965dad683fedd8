"""Flooding with per-node duplicate suppression."""
from __future__ import annotations

from collections import Counter

from .domain import SimulationError


class FloodRouter:
    """Every node rebroadcasts each packet id once.

    ``transport`` is ``"csma"`` (contended broadcast on the common channel) or
    ``"down"`` (the tree downlink slot of the TDMA MAC; only nodes with
    children rebroadcast). ``on_first(node, packet, sender)`` runs on the
    first arrival of a packet at a node, before it is forwarded.
    """

    def __init__(self, sim, csma=None, transport="csma", on_first=None):
        if transport not in ("csma", "down"):
            raise ValueError(f"unknown flood transport {transport!r}")
        if transport == "csma" and csma is None:
            raise ValueError("csma transport needs a CsmaMac")
        self.sim = sim
        self.csma = csma
        self.transport = transport
        self.on_first = on_first
        self.transmissions = Counter()
        self.receptions = Counter()
        self.reached = {}

    def install(self, kind):
        self.sim.handlers[kind] = self.handle_flood_packet
        return self

    def _send(self, node, packet):
        pid = packet.id

        def done(ok, delivered):
            if ok:
                self.transmissions[pid] += 1

        if self.transport == "csma":
            return self.csma.send(node, packet.to(None), done)
        if not self.sim.nodes[node].children:
            return False
        return self.sim.enqueue(node, packet.to(None), "down", done)

    def start_flood(self, source, packet):
        sim = self.sim
        if not sim.alive(source):
            raise SimulationError(f"flood source {source} is dead")
        sim.nodes[source].seen.add(packet.id)
        self.reached.setdefault(packet.id, set()).add(source)
        self._send(source, packet)

    def handle_flood_packet(self, node, packet, sender=None):
        """Returns True when this arrival was new and got forwarded."""
        self.receptions[packet.id] += 1
        seen = self.sim.nodes[node].seen
        if packet.id in seen:
            return False
        seen.add(packet.id)
        self.reached.setdefault(packet.id, set()).add(node)
        if self.on_first is not None:
            self.on_first(node, packet, sender)
        if not self.sim.alive(node):
            return False
        self._send(node, packet.forwarded(node))
        return True

    def receivers(self, packet_id):
        """Nodes holding the packet (the source included)."""
        return set(self.reached.get(packet_id, ()))
