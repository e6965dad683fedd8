"""Low-power layer: energy model, tree setup over CSMA, TDMA slot schedule and
the duty-cycled slot MAC."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

from .domain import (ConfigError, DisconnectedTopologyError, PacketKind, SimulationError,
                     WsnError)
from .engine import DEAD, IDLE, RECEIVE, SLEEP, TRANSMIT, WAKING_UP, RadioState


@dataclass(frozen=True)
class EnergyModel:
    p_tx: float = 0.060
    p_rx: float = 0.045
    p_idle: float = 0.045
    p_sleep: float = 3e-6
    wake_latency: float = 0.015
    data_rate: float = 250_000

    def __post_init__(self):
        if not (0 <= self.p_sleep < self.p_idle <= self.p_rx <= self.p_tx):
            raise ConfigError("p_sleep", "powers must satisfy p_sleep < p_idle <= p_rx <= p_tx")
        if self.wake_latency <= 0:
            raise ConfigError("wake_latency", "wake latency must be positive")
        if self.data_rate <= 0:
            raise ConfigError("data_rate", "data rate must be positive")

    def powers(self):
        """Power per radio state, indexed by RadioState."""
        return [self.p_tx, self.p_rx, self.p_idle, self.p_sleep, self.p_idle, 0.0]

    def power(self, state):
        return self.powers()[int(state)]

    @property
    def energy_per_bit(self):
        return self.p_tx / self.data_rate


def energy_for_interval(state, dt, model):
    if dt < 0:
        raise ValueError("dt must be non-negative")
    return model.power(RadioState(state)) * dt


def serialization_time(size_bytes, data_rate):
    return size_bytes * 8 / data_rate


def default_slot_duration(max_packet_bytes, data_rate, guard=0.001):
    return serialization_time(max_packet_bytes, data_rate) + guard


# ---------------------------------------------------------------------------
# tree and slots


@dataclass(frozen=True)
class Tree:
    root: int
    parent: tuple
    children: tuple
    depth: tuple

    @property
    def height(self):
        return max(d for d in self.depth if d is not None)

    def path_to_root(self, node):
        out = [node]
        while self.parent[out[-1]] is not None:
            out.append(self.parent[out[-1]])
        return out


def _attach(order, root, n, candidates_of, max_children):
    """Greedy parent choice: settled candidate with least (depth, id) and spare capacity."""
    parent = [None] * n
    depth = [None] * n
    kids = [[] for _ in range(n)]
    depth[root] = 0
    pending = [v for v in order if v != root]
    while pending:
        left = []
        for v in pending:
            best = None
            for u in candidates_of(v):
                if depth[u] is None or u == v:
                    continue
                if max_children is not None and len(kids[u]) >= max_children:
                    continue
                key = (depth[u], u)
                if best is None or key < best:
                    best = key
            if best is None:
                left.append(v)
            else:
                parent[v] = best[1]
                depth[v] = best[0] + 1
                kids[best[1]].append(v)
        if len(left) == len(pending):
            return parent, depth, kids, left
        pending = left
    return parent, depth, kids, []


def _make_tree(root, parent, depth, kids):
    return Tree(root, tuple(parent), tuple(tuple(sorted(k)) for k in kids), tuple(depth))


def setup_tree(topology, max_children=None):
    """Shortest-hop spanning tree rooted at the sink (no radio cost)."""
    hops = topology.hops_from(topology.sink)
    missing = [i for i, h in enumerate(hops) if h < 0]
    if missing:
        raise DisconnectedTopologyError(missing)
    order = sorted(range(topology.n), key=lambda v: (hops[v], v))
    parent, depth, kids, left = _attach(order, topology.sink, topology.n,
                                        lambda v: topology.neighbors(v), max_children)
    if left:
        raise SlotAllocationError(None, f"no parent with spare capacity for nodes {sorted(left)}")
    return _make_tree(topology.sink, parent, depth, kids)


class SlotAllocationError(WsnError, ValueError):
    def __init__(self, parent, message):
        self.parent = parent
        super().__init__(message)


@dataclass(frozen=True)
class SlotSchedule:
    frame_length: int
    slot_duration: float
    # child id -> (send slot in the parent's frame, receive slot in the parent's frame)
    assignment: dict
    miss_limit: int = 1
    # node id -> index of the frame in which that node's children send to it
    frame_of: dict = field(default_factory=dict)
    n_frames: int = 1

    @property
    def frame_duration(self):
        return self.frame_length * self.slot_duration

    @property
    def superframe(self):
        return self.n_frames * self.frame_length * self.slot_duration

    @property
    def downlink_slot(self):
        return self.frame_length - 1

    def receive_slots(self, parent, tree):
        return [self.assignment[c][0] for c in tree.children[parent]]


def allocate_slots(tree, frame_length, slot_duration, miss_limit=1):
    if frame_length < 2:
        raise ConfigError("frame_length", "frame needs at least one send slot and the downlink slot")
    if miss_limit < 1:
        raise ConfigError("miss_limit", "miss_limit must be at least 1")
    assignment = {}
    for p, kids in enumerate(tree.children):
        if len(kids) > frame_length - 1:
            raise SlotAllocationError(p, f"node {p} has {len(kids)} children but a "
                                         f"{frame_length}-slot frame holds {frame_length - 1}")
        for k, c in enumerate(sorted(kids)):
            assignment[c] = (k, frame_length - 1)
    height = tree.height
    n_frames = max(height, 1)
    # deepest parents first so a report climbs the whole tree in one superframe
    frame_of = {v: n_frames - 1 - d for v, d in enumerate(tree.depth) if d is not None and d < n_frames}
    return SlotSchedule(frame_length, slot_duration, assignment, miss_limit, frame_of, n_frames)


# ---------------------------------------------------------------------------
# CSMA


class CsmaMac:
    """Unslotted CSMA over the node buffers' 'csma' route.

    Random backoff, one clear-channel check, transmit. A busy channel costs one
    retry; after ``max_retries`` the packet is dropped. Unicast frames whose
    destination did not decode them are resent up to ``unicast_retries``
    times (the engine knows the outcome, so no ACK frame is modelled).
    """

    def __init__(self, sim, backoff_slots=32, unit=320e-6, max_retries=5, unicast_retries=5):
        self.sim = sim
        self.backoff_slots = backoff_slots
        self.unit = unit
        self.max_retries = max_retries
        self.unicast_retries = unicast_retries
        self.jobs = {}
        sim.route_hooks["csma"] = self._kick
        sim.csma = self

    @property
    def busy(self):
        return bool(self.jobs)

    def send(self, node, packet, on_done=None):
        return self.sim.enqueue(node, packet, "csma", on_done)

    def _kick(self, i):
        if i in self.jobs:
            return
        self._next(i)

    def _next(self, i):
        sim = self.sim
        rt = sim.nodes[i]
        entry = None
        for e in rt.buffer:
            if e[1] == "csma":
                entry = e
                break
        if entry is None:
            self.jobs.pop(i, None)
            rt.csma_active = False
            if sim.duty is not None:
                sim.duty.doze(i)
            return
        rt.csma_active = True
        # [entry, busy-channel count, transmissions so far]
        job = [entry, 0, 0]
        self.jobs[i] = job
        st = sim.ledger.sync(i, sim.now)
        if st == DEAD:
            self._flush(i)
            return
        if st == SLEEP:
            self._wake(i)
        self._backoff(i, job)

    def _wake(self, i):
        sim = self.sim
        wl = sim.energy.wake_latency
        sim.ledger.clear_plans(i)
        sim.ledger.set_state(i, WAKING_UP, sim.now)
        sim.ledger.plan(i, sim.now + wl, IDLE)

    def _backoff(self, i, job):
        sim = self.sim
        sim.at(sim.now + sim.rng.random() * self.backoff_slots * self.unit, self._cca, i, job)

    def _finish(self, i, job, ok, delivered, reason=None):
        sim = self.sim
        entry = job[0]
        buf = sim.nodes[i].buffer
        for k, e in enumerate(buf):
            if e is entry:
                del buf[k]
                break
        if not ok:
            sim.metrics.record_event("drop", reason=reason)
        if entry[2] is not None:
            entry[2](ok, delivered)
        self._next(i)

    def _flush(self, i):
        sim = self.sim
        rt = sim.nodes[i]
        dropped = [e for e in rt.buffer if e[1] == "csma"]
        rt.buffer = type(rt.buffer)(e for e in rt.buffer if e[1] != "csma")
        self.jobs.pop(i, None)
        rt.csma_active = False
        for e in dropped:
            sim.metrics.record_event("drop", reason="dead")
            if e[2] is not None:
                e[2](False, None)

    def _cca(self, i, job):
        sim = self.sim
        if self.jobs.get(i) is not job:
            return
        st = sim.ledger.sync(i, sim.now)
        if st == DEAD:
            self._flush(i)
            return
        if st == SLEEP or st == WAKING_UP:
            if st == SLEEP:
                self._wake(i)
            sim.at(sim.now + sim.energy.wake_latency, self._cca, i, job)
            return
        if sim.channel.busy(i) or sim.channel.is_transmitting(i):
            job[1] += 1
            if self.max_retries is not None and job[1] > self.max_retries:
                self._finish(i, job, False, None, "channel_access")
            else:
                self._backoff(i, job)
            return
        packet = job[0][0]
        if (packet.kind == PacketKind.REPORT and packet.src != i and not packet.congestion_bit
                and sim.congested(i)):
            packet = packet.with_congestion()
        job[2] += 1
        sim.transmit(i, packet, self._done_cb(i, job))

    def _done_cb(self, i, job):
        return lambda sender, packet, delivered: self._done(i, job, packet, delivered)

    def _done(self, i, job, packet, delivered):
        if delivered is None:
            self._finish(i, job, False, None, "dead")
            return
        if packet.dest is None or packet.dest in delivered:
            self._finish(i, job, True, delivered)
            return
        if job[2] > self.unicast_retries:
            self._finish(i, job, False, delivered, "unicast_failed")
            return
        job[1] = 0
        self._backoff(i, job)


def csma_tree_setup(sim, csma, max_children=None, control_bytes=16, solicit_rounds=5,
                    join=True, t_max=None):
    """Build the routing tree on the air.

    The sink starts a beacon wave (each node rebroadcasts its hop depth when it
    improves), nodes that heard nothing solicit up to ``solicit_rounds`` times,
    parents are chosen from beacons actually heard, and a join/accept exchange
    confirms each link. Returns the tree; the simulation clock has advanced by
    the time the exchange took.
    """
    topo = sim.topology
    n = topo.n
    sink = topo.sink
    if not topo.is_connected():
        raise DisconnectedTopologyError(topo.unreachable())
    t_max = math.inf if t_max is None else t_max
    best = [math.inf] * n
    best[sink] = 0
    heard = [dict() for _ in range(n)]
    answered = [-1] * n
    round_no = [0]
    previous = sim.handlers.get(PacketKind.CONTROL)

    def beacon(v, d):
        csma.send(v, sim.new_packet(PacketKind.CONTROL, v, control_bytes, data=("beacon", d)))

    def on_control(v, pkt, sender):
        tag = pkt.data[0]
        if tag == "beacon":
            d = pkt.data[1]
            if d < heard[v].get(sender, math.inf):
                heard[v][sender] = d
            if d + 1 < best[v]:
                best[v] = d + 1
                beacon(v, d + 1)
        elif tag == "solicit":
            if best[v] < math.inf and answered[v] != round_no[0]:
                answered[v] = round_no[0]
                beacon(v, best[v])
        elif tag == "join":
            if pkt.dest == v:
                csma.send(v, sim.new_packet(PacketKind.CONTROL, v, control_bytes,
                                            dest=sender, data=("accept",)))

    sim.handlers[PacketKind.CONTROL] = on_control
    try:
        beacon(sink, 0)
        sim.run_while(lambda: csma.busy, t_max)
        for r in range(1, solicit_rounds + 1):
            orphans = [v for v in range(n) if best[v] == math.inf and sim.alive(v)]
            if not orphans:
                break
            round_no[0] = r
            for v in orphans:
                csma.send(v, sim.new_packet(PacketKind.CONTROL, v, control_bytes, data=("solicit",)))
            sim.run_while(lambda: csma.busy, t_max)

        order = sorted(range(n), key=lambda v: (best[v], v))
        parent, depth, kids, left = _attach(order, sink, n, lambda v: sorted(heard[v]), max_children)
        if left:
            # beacons lost to collisions: leftovers may attach to any neighbour
            leftover = set(left)
            parent, depth, kids, left = _attach(
                order, sink, n,
                lambda v: sorted(set(heard[v]) | topo.neighbors(v)) if v in leftover else sorted(heard[v]),
                max_children)
            if left:
                raise SlotAllocationError(None, f"no parent with spare capacity for {sorted(left)}")
        tree = _make_tree(sink, parent, depth, kids)

        if join:
            for v in range(n):
                if v != sink and sim.alive(v):
                    csma.send(v, sim.new_packet(PacketKind.CONTROL, v, control_bytes,
                                                dest=parent[v], data=("join",)))
            sim.run_while(lambda: csma.busy, t_max)
    finally:
        if previous is None:
            sim.handlers.pop(PacketKind.CONTROL, None)
        else:
            sim.handlers[PacketKind.CONTROL] = previous
    return tree


# ---------------------------------------------------------------------------
# TDMA slot MAC with duty cycling

RX_UP, RX_DOWN, TX_UP, TX_DOWN = range(4)
_EPS = 1e-9


class TdmaMac:
    """Slot MAC over a fixed tree.

    Per superframe a node owns up to four windows: its children's send slots
    (receive block), its parent's downlink slot, its own send slot in the
    parent's frame, and the downlink slot of its own frame. Transmit windows
    are used only when the buffer holds a packet for them. With duty cycling
    the radio sleeps between windows whenever the gap covers the wake-up
    latency; inside a receive block it sleeps after ``miss_limit`` consecutive
    empty slots.
    """

    def __init__(self, sim, tree, schedule, duty_cycle=True, start=None):
        self.sim = sim
        self.tree = tree
        self.schedule = schedule
        self.duty_cycle = bool(duty_cycle)
        self.t0 = sim.now if start is None else start
        if self.t0 < sim.now:
            raise SimulationError("TDMA cannot start in the past")
        self.slot = schedule.slot_duration
        self.sf = schedule.superframe
        self.wl = sim.energy.wake_latency
        self.windows = [self._windows(i) for i in range(sim.n)]
        for i, rt in enumerate(sim.nodes):
            rt.parent = tree.parent[i]
            rt.children = tree.children[i]
            rt.depth = tree.depth[i]
            rt.slot = schedule.assignment.get(i)
        sim.duty = self
        sim.route_hooks["up"] = self._rearm
        sim.route_hooks["down"] = self._rearm
        for i in range(sim.n):
            if sim.alive(i):
                self.settle(i, self.t0)

    def _windows(self, i):
        sch = self.schedule
        fl = sch.frame_length
        slot = self.slot
        out = []
        kids = self.tree.children[i]
        if kids and i in sch.frame_of:
            own = sch.frame_of[i] * fl * slot
            out.append((own, RX_UP, len(kids)))
            out.append((own + (fl - 1) * slot, TX_DOWN, 1))
        p = self.tree.parent[i]
        if p is not None:
            par = sch.frame_of[p] * fl * slot
            out.append((par + (fl - 1) * slot, RX_DOWN, 1))
            out.append((par + sch.assignment[i][0] * slot, TX_UP, 1))
        out.sort()
        return out

    def window_offsets(self, i):
        """Static (offset, kind, length in slots) windows of node ``i``."""
        return list(self.windows[i])

    def _active(self, i, kind):
        if kind == RX_UP or kind == RX_DOWN:
            return self.duty_cycle
        route = "up" if kind == TX_UP else "down"
        return self.sim.has_route(i, route)

    def next_window(self, i, t):
        wins = self.windows[i]
        if not wins:
            return math.inf, None, 0
        k = max(0, math.floor((t - self.t0) / self.sf))
        for kk in (k, k + 1, k + 2):
            base = self.t0 + kk * self.sf
            for off, kind, ln in wins:
                w = base + off
                if w >= t - _EPS and self._active(i, kind):
                    return w, kind, ln
        return math.inf, None, 0

    def _schedule_window(self, i, w, kind, ln):
        sim = self.sim
        rt = sim.nodes[i]
        rt.gen += 1
        rt.next_at = w
        if w == math.inf:
            return
        w = max(w, sim.now)
        rt.next_at = w
        if kind == TX_UP or kind == TX_DOWN:
            sim.at(w, self.duty_cycle_step, i, rt.gen, kind, w, 0, 0, ln)
        else:
            sim.at(w + self.slot, self.duty_cycle_step, i, rt.gen, kind, w, 0, 0, ln)

    def settle(self, i, t=None):
        """Pick the next window at or after ``t`` (default now) and doze until it."""
        t = self.sim.now if t is None else t
        w, kind, ln = self.next_window(i, t)
        self._schedule_window(i, w, kind, ln)
        self.doze(i)

    def doze(self, i):
        if not self.duty_cycle:
            return
        sim = self.sim
        rt = sim.nodes[i]
        if rt.held or rt.csma_active:
            return
        ledger = sim.ledger
        st = ledger.sync(i, sim.now)
        if st != IDLE and st != RECEIVE:
            return
        w = rt.next_at
        if w - sim.now < self.wl:
            return
        sim.sleep(i)
        if w != math.inf:
            ledger.plan(i, w - self.wl, WAKING_UP)
            ledger.plan(i, w, IDLE)

    def on_hold(self, i):
        sim = self.sim
        ledger = sim.ledger
        if ledger.sync(i, sim.now) == SLEEP:
            ledger.clear_plans(i)
            ledger.set_state(i, WAKING_UP, sim.now)
            ledger.plan(i, sim.now + self.wl, IDLE)

    def on_release(self, i):
        self.doze(i)

    def _rearm(self, i):
        """A packet for a transmit window arrived; move the next wake-up earlier if needed."""
        sim = self.sim
        rt = sim.nodes[i]
        st = sim.ledger.sync(i, sim.now)
        if st == DEAD or st == WAKING_UP:
            return
        asleep = st == SLEEP
        w, kind, ln = self.next_window(i, sim.now + (self.wl if asleep else 0.0))
        if w >= rt.next_at - _EPS:
            return
        self._schedule_window(i, w, kind, ln)
        if asleep:
            sim.ledger.clear_plans(i)
            sim.ledger.plan(i, w - self.wl, WAKING_UP)
            sim.ledger.plan(i, w, IDLE)

    def duty_cycle_step(self, i, gen, kind, w, j, misses, ln):
        """Slot-boundary handler: transmit in a send window, or check a receive slot."""
        sim = self.sim
        rt = sim.nodes[i]
        if rt.gen != gen:
            return
        st = sim.ledger.sync(i, sim.now)
        if st == DEAD:
            return
        if kind == TX_UP or kind == TX_DOWN:
            if st == SLEEP or st == WAKING_UP or sim.channel.is_transmitting(i):
                self.settle(i, sim.now + self.slot)
                return
            route = "up" if kind == TX_UP else "down"
            congested = sim.congested(i)
            entry = sim.dequeue(i, route)
            if entry is None:
                self.settle(i)
                return
            packet, _, on_done = entry
            if route == "up":
                bit = packet.congestion_bit or (congested and packet.src != i)
                packet = packet.to(rt.parent)
                if bit and not packet.congestion_bit:
                    packet = packet.with_congestion()
            else:
                packet = packet.to(None)
            sim.transmit(i, packet, lambda s, p, d: self._sent(i, on_done, d))
            return
        # receive slot j of the window just ended
        got = rt.last_rx > w + j * self.slot
        misses = 0 if got else misses + 1
        if j + 1 >= ln:
            self.settle(i)
            return
        sim.at(w + (j + 2) * self.slot, self.duty_cycle_step, i, gen, kind, w, j + 1,
               misses if misses < self.schedule.miss_limit else 0, ln)
        if misses >= self.schedule.miss_limit:
            # every child slot is an owned receive slot: doze until the next one
            rt.next_at = w + (j + 1) * self.slot
            self.doze(i)

    def _sent(self, i, on_done, delivered):
        if on_done is not None:
            on_done(delivered is not None, delivered)
        if self.sim.ledger.sync(i, self.sim.now) != DEAD:
            self.settle(i)
