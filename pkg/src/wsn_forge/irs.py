"""Increasing Ray Search: queries travel outward from the sink along
equally spaced rays; the ray count doubles on each timeout, and a flood
round is the last resort."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

from .domain import PacketKind, SimulationError
from .flooding import FloodRouter

FLOOD = "flood"


@dataclass(frozen=True)
class Ray:
    index: int
    angle: float
    corridor_width: float

    @property
    def direction(self):
        return math.cos(self.angle), math.sin(self.angle)


def spawn_rays(k, corridor_width):
    if k < 1:
        raise ValueError("need at least one ray")
    return [Ray(i, i * 2.0 * math.pi / k, float(corridor_width)) for i in range(k)]


def increase_rays(k, k_max=64):
    """Next ray count, or None when the cap is reached and flooding should follow."""
    if k < 1:
        raise ValueError("ray count must be positive")
    if k >= k_max:
        return None
    return min(2 * k, k_max)


def ray_schedule(k0=4, k_max=64, fallback=True):
    out = []
    k = k0
    while k is not None:
        out.append(k)
        k = increase_rays(k, k_max)
    if fallback:
        out.append(FLOOD)
    return out


def ray_coordinates(topology, node, ray, origin):
    """(projection along the ray, perpendicular distance to the ray line)."""
    c, s = ray.direction
    dx = topology.xs[node] - topology.xs[origin]
    dy = topology.ys[node] - topology.ys[origin]
    return dx * c + dy * s, abs(dy * c - dx * s)


def next_hop_on_ray(topology, current, ray, seen, origin=None, alive=None):
    """Greedy corridor forwarding: furthest projection wins, lowest id on ties."""
    origin = topology.sink if origin is None else origin
    half = ray.corridor_width / 2.0
    here, _ = ray_coordinates(topology, current, ray, origin)
    best = None
    best_proj = None
    for v in sorted(topology.neighbors(current)):
        if v in seen or (alive is not None and not alive(v)):
            continue
        proj, perp = ray_coordinates(topology, v, ray, origin)
        if perp > half or proj <= here:
            continue
        if best is None or proj > best_proj:
            best, best_proj = v, proj
    return best


def corridor_nodes(topology, rays, origin=None):
    """Nodes ahead of the origin within half a corridor width of some ray, plus the origin."""
    origin = topology.sink if origin is None else origin
    out = {origin}
    for v in range(topology.n):
        for ray in rays:
            proj, perp = ray_coordinates(topology, v, ray, origin)
            if proj > 0 and perp <= ray.corridor_width / 2.0:
                out.add(v)
                break
    return out


@dataclass(frozen=True)
class SearchResult:
    found: bool
    rounds: int
    latency: Optional[float]
    latency_target: Optional[float]
    energy: float
    transmissions: int
    reply_hops: Optional[int] = None
    # nodes that transmitted a Query, per round
    forwarders: tuple = ()
    ray_counts: tuple = ()
    issued_at: Optional[float] = None


class RaySearch:
    """One discovery run driven by the simulator clock.

    Members of a round (corridor nodes, or every node for the flood round)
    are held awake for its duration. Queries go hop by hop as CSMA unicasts;
    the target answers the first Query it decodes or overhears in a round, and
    the Reply retraces that Query's path in reverse.
    """

    def __init__(self, sim, csma, *, k0=4, k_max=64, corridor_width=None, timeout=None,
                 schedule=None, frame_duration=None, query_bytes=24, reply_bytes=32,
                 target=None, on_finish=None):
        topo = sim.topology
        self.sim = sim
        self.csma = csma
        self.topology = topo
        self.sink = topo.sink
        self.target = topo.target if target is None else target
        self.corridor_width = topo.radio_range if corridor_width is None else float(corridor_width)
        self.schedule = list(schedule) if schedule is not None else ray_schedule(k0, k_max)
        if not self.schedule:
            raise ValueError("empty search schedule")
        if timeout is None:
            if frame_duration is None:
                raise ValueError("give either timeout or frame_duration")
            diameter = max(sim.core.hop_diameter(topo.adjacency), 1)
            timeout = 2 * diameter * frame_duration
        self.timeout = timeout
        self.query_bytes = query_bytes
        self.reply_bytes = reply_bytes
        self.on_finish = on_finish
        self.flood = FloodRouter(sim, csma, "csma", on_first=self._flood_first)
        self.round = -1
        self.members = set()
        self.rays = []
        self.done = False
        self.result = None
        self.issued_at = None
        self.latency_target = None
        self.replied_round = -1
        self.forwarders = []
        self._e0 = 0.0
        self._tx0 = 0
        sim.handlers[PacketKind.QUERY] = self._on_query
        sim.overhear[PacketKind.QUERY] = self._on_overhear
        sim.handlers[PacketKind.REPLY] = self._on_reply

    def _is_target(self, v):
        return v == self.target and self.target is not None

    def _search_tx(self):
        by = self.sim.metrics.tx_by_kind
        return by[PacketKind.QUERY] + by[PacketKind.REPLY]

    def start(self, t=None):
        sim = self.sim
        t = sim.now if t is None else t
        sim.at(t, self._begin)

    def run_search(self, t_max=math.inf):
        """Start now and drive the simulator until the search finishes."""
        self.start()
        self.sim.run_while(lambda: not self.done, t_max)
        return self.result

    def _begin(self):
        sim = self.sim
        if not sim.alive(self.sink):
            raise SimulationError("search needs a live sink")
        self._e0 = sim.ledger.total_consumed(sim.now)
        self._tx0 = self._search_tx()
        self._start_round(0)

    def _start_round(self, r):
        sim = self.sim
        self.round = r
        k = self.schedule[r]
        if k == FLOOD:
            self.rays = []
            members = {v for v in range(sim.n) if sim.alive(v)}
        else:
            self.rays = spawn_rays(k, self.corridor_width)
            members = {v for v in corridor_nodes(self.topology, self.rays, self.sink) if sim.alive(v)}
        self.members = members
        for v in sorted(members):
            sim.hold(v)
        self.forwarders.append(set())
        # members that were asleep need the wake-up latency before the first Query
        sim.at(sim.now + sim.energy.wake_latency, self._issue, r)

    def _end_round(self):
        for v in sorted(self.members):
            self.sim.release(v)
        self.members = set()

    def _issue(self, r):
        if self.done or r != self.round:
            return
        sim = self.sim
        if self.issued_at is None:
            self.issued_at = sim.now
        sim.at(sim.now + self.timeout, self._timeout, r)
        k = self.schedule[r]
        self.forwarders[r].add(self.sink)
        if k == FLOOD:
            pkt = sim.new_packet(PacketKind.QUERY, self.sink, self.query_bytes, data=(r,))
            self.flood.start_flood(self.sink, pkt)
            return
        alive = sim.alive
        for ray in self.rays:
            nh = next_hop_on_ray(self.topology, self.sink, ray, {self.sink}, self.sink, alive)
            if nh is None:
                continue
            pkt = sim.new_packet(PacketKind.QUERY, self.sink, self.query_bytes,
                                 ray_id=ray.index, dest=nh, data=(r,))
            self.csma.send(self.sink, pkt)

    def _on_query(self, v, pkt, sender):
        r = pkt.data[0]
        if self.done or r != self.round:
            return
        if pkt.ray_id is None:
            self.flood.handle_flood_packet(v, pkt, sender)
            return
        if self._is_target(v):
            self._reply(v, pkt)
            return
        ray = self.rays[pkt.ray_id]
        seen = set(pkt.path)
        seen.add(v)
        nh = next_hop_on_ray(self.topology, v, ray, seen, self.sink, self.sim.alive)
        if nh is not None:
            self.forwarders[r].add(v)
            self.csma.send(v, pkt.forwarded(v, dest=nh))

    def _flood_first(self, v, pkt, sender):
        if self._is_target(v):
            self._reply(v, pkt)
        elif v != self.sink:
            self.forwarders[pkt.data[0]].add(v)

    def _on_overhear(self, v, pkt, sender):
        if self._is_target(v) and not self.done and pkt.data[0] == self.round:
            self._reply(v, pkt)

    def _reply(self, v, qpkt):
        sim = self.sim
        r = qpkt.data[0]
        if self.replied_round == r:
            return
        self.replied_round = r
        if self.latency_target is None:
            self.latency_target = sim.now - self.issued_at
            sim.metrics.latency_target = self.latency_target
        route = tuple(reversed(qpkt.path))
        pkt = sim.new_packet(PacketKind.REPLY, v, self.reply_bytes, dest=route[0], data=(r, route))
        self.csma.send(v, pkt)

    def _on_reply(self, v, pkt, sender):
        if self.done:
            return
        r, route = pkt.data
        if v == self.sink:
            self._finish(True, pkt.hop_count + 1)
            return
        k = route.index(v)
        self.csma.send(v, pkt.forwarded(v, dest=route[k + 1]))

    def _timeout(self, r):
        if self.done or r != self.round:
            return
        self._end_round()
        if r + 1 < len(self.schedule):
            self._start_round(r + 1)
        else:
            self._finish(False, None)

    def _finish(self, found, reply_hops):
        sim = self.sim
        self.done = True
        self._end_round()
        latency = sim.now - self.issued_at if found else None
        if found:
            sim.metrics.discovery_found = True
            sim.metrics.latency = latency
        self.result = SearchResult(
            found=found,
            rounds=self.round + 1,
            latency=latency,
            latency_target=self.latency_target if found else None,
            energy=sim.ledger.total_consumed(sim.now) - self._e0,
            transmissions=self._search_tx() - self._tx0,
            reply_hops=reply_hops,
            forwarders=tuple(frozenset(f) for f in self.forwarders),
            ray_counts=tuple(self.schedule[:self.round + 1]),
            issued_at=self.issued_at,
        )
        if self.on_finish is not None:
            self.on_finish(self.result)


def run_search(sim, csma, **kw):
    """Convenience wrapper: build a RaySearch, run it to completion, return its result."""
    return RaySearch(sim, csma, **kw).run_search()
