"""Discrete-event core: event loop, packet propagation over the shared channel,
per-node FIFO buffers with tail drop."""
from __future__ import annotations

import enum
import math
import random
from collections import deque

from . import kernels
from .domain import Packet, PacketKind, SimulationError
from .metrics import MetricsCollector, MetricsRecord, sink_disconnect_time


class RadioState(enum.IntEnum):
    TRANSMIT = 0
    RECEIVE = 1
    IDLE = 2
    SLEEP = 3
    WAKING_UP = 4
    DEAD = 5


TRANSMIT, RECEIVE, IDLE, SLEEP, WAKING_UP, DEAD = range(6)


class EventKind(enum.IntEnum):
    TRANSMIT_START = 0
    TRANSMIT_END = 1
    DELIVER = 2
    TIMER = 3
    WAKE_COMPLETE = 4
    EPOCH_BOUNDARY = 5


# TransmitEnd sorts ahead of everything else at the same instant, so a frame
# ending at t never overlaps one starting at t
PRIO_END = 0
PRIO_NORMAL = 1


class SimEvent:
    __slots__ = ("time", "sequence", "kind", "subject", "payload", "fn")

    def __init__(self, time, kind, subject=-1, payload=None, fn=None):
        self.time = time
        self.sequence = -1
        self.kind = EventKind(kind)
        self.subject = subject
        self.payload = payload
        self.fn = fn

    def __repr__(self):
        return f"SimEvent(t={self.time!r}, seq={self.sequence}, {self.kind.name}, node={self.subject})"


class NodeRuntime:
    """Mutable per-node state. Radio state and energy live in the shared ledger."""

    __slots__ = ("id", "_ledger", "buffer", "seen", "slot", "parent", "children", "depth",
                 "held", "csma_active", "next_at", "gen", "last_rx", "max_occupancy",
                 "frequency", "report_gen")

    def __init__(self, node_id, ledger):
        self.id = node_id
        self._ledger = ledger
        self.buffer = deque()
        self.seen = set()
        self.slot = None
        self.parent = None
        self.children = ()
        self.depth = None
        self.held = 0
        self.csma_active = False
        self.next_at = math.inf
        self.gen = 0
        self.last_rx = -math.inf
        self.max_occupancy = 0
        self.frequency = None
        self.report_gen = 0

    @property
    def radio_state(self):
        return RadioState(self._ledger.state(self.id))

    @property
    def remaining_energy(self):
        return self._ledger.remaining(self.id)

    @property
    def alive(self):
        return self._ledger.state(self.id) != DEAD

    def occupancy(self):
        return len(self.buffer)


def serialization_time(size_bytes, data_rate):
    return size_bytes * 8 / data_rate


class Simulator:
    """One simulation instance over a fixed topology.

    Protocol modules plug in through ``handlers`` (packet kind -> callable
    ``(node, packet, sender)``), ``overhear`` (same signature, for unicast
    frames addressed elsewhere) and ``route_hooks`` (buffer route -> callable
    ``(node)``, called after a successful enqueue).
    """

    def __init__(self, topology, energy, *, stack_size=None, max_packet_bytes=127,
                 core=None, ideal_channel=False, seed=0, trace=False):
        if isinstance(core, str) or core is None:
            core = kernels.select(core)
        self.core = core
        self.topology = topology
        self.energy = energy
        self.n = topology.n
        self.stack_size = stack_size
        self.max_packet_bytes = max_packet_bytes
        self.ledger = core.RadioLedger([r.initial_energy for r in topology.nodes],
                                       energy.powers(), 0.0, IDLE, bool(trace))
        self.channel = core.Channel(topology.adjacency, self.ledger, ideal_channel)
        self.queue = core.EventQueue()
        self.now = 0.0
        self.metrics = MetricsCollector()
        self.rng = random.Random(seed)
        self.nodes = [NodeRuntime(i, self.ledger) for i in range(self.n)]
        self.handlers = {}
        self.overhear = {}
        self.event_handlers = {}
        self.route_hooks = {}
        self.duty = None
        self._pid = 0
        self._txid = 0
        self._collisions_seen = 0

    # -- events ---------------------------------------------------------

    def schedule(self, event):
        if event.time < self.now:
            raise SimulationError(f"event scheduled in the past: {event!r} at now={self.now!r}")
        prio = PRIO_END if event.kind == EventKind.TRANSMIT_END else PRIO_NORMAL
        event.sequence = self.queue.push(event.time, prio, event)
        return event

    def at(self, time, fn, *args):
        if time < self.now:
            raise SimulationError(f"callback scheduled in the past: t={time!r} now={self.now!r}")
        return self.queue.push(time, PRIO_NORMAL, (fn, args))

    def after(self, delay, fn, *args):
        return self.at(self.now + delay, fn, *args)

    def _dispatch(self, item):
        if type(item) is tuple:
            item[0](*item[1])
            return
        if item.fn is not None:
            item.fn(item)
            return
        handler = self.event_handlers.get(item.kind)
        if handler is None:
            raise SimulationError(f"no handler for {item.kind.name}")
        handler(item)

    def step(self):
        t, _, _, item = self.queue.pop()
        self.now = t
        self._dispatch(item)

    def advance(self, t_end):
        queue = self.queue
        pop = queue.pop
        dispatch = self._dispatch
        while queue.peek_time() <= t_end:
            t, _, _, item = pop()
            self.now = t
            if type(item) is tuple:
                item[0](*item[1])
            else:
                dispatch(item)
        if t_end > self.now:
            self.now = t_end

    def run_while(self, predicate, t_max):
        """Process events while ``predicate()`` holds and time stays within t_max."""
        queue = self.queue
        while predicate() and queue.peek_time() <= t_max:
            self.step()
        return predicate()

    def run_until(self, t_end):
        self.advance(t_end)
        return self.finalize(t_end)

    # -- packets and radio ---------------------------------------------

    def new_packet(self, kind, src, size, **kw):
        if size > self.max_packet_bytes:
            raise SimulationError(f"{size}-byte packet exceeds the {self.max_packet_bytes}-byte maximum")
        pid = self._pid
        self._pid += 1
        kw.setdefault("path", (src,))
        return Packet(pid, PacketKind(kind), src, self.now, size, **kw)

    def airtime(self, size_bytes):
        return size_bytes * 8 / self.energy.data_rate

    def state(self, i):
        return self.ledger.sync(i, self.now)

    def alive(self, i):
        return self.ledger.sync(i, self.now) != DEAD

    def transmit(self, sender, packet, on_end=None, start=None):
        """Put ``packet`` on the air from ``sender`` now (or at ``start``)."""
        if packet.size_bytes > self.max_packet_bytes:
            raise SimulationError(f"packet {packet.id} exceeds maximum packet size")
        if start is not None and start > self.now:
            ev = SimEvent(start, EventKind.TRANSMIT_START, sender, (packet, on_end),
                          fn=self._scheduled_start)
            self.schedule(ev)
            return
        st = self.ledger.sync(sender, self.now)
        if st == DEAD:
            raise SimulationError(f"node {sender} is dead and cannot transmit")
        if st == SLEEP or st == WAKING_UP:
            raise SimulationError(f"node {sender} is asleep and cannot transmit")
        if self.channel.is_transmitting(sender):
            raise SimulationError(f"node {sender} is already transmitting")
        self._start(sender, packet, on_end)

    def _scheduled_start(self, ev):
        packet, on_end = ev.payload
        st = self.ledger.sync(ev.subject, self.now)
        if st == DEAD or st == SLEEP or st == WAKING_UP:
            if on_end is not None:
                on_end(ev.subject, packet, None)
            return
        self._start(ev.subject, packet, on_end)

    def _start(self, sender, packet, on_end):
        tx_id = self._txid
        self._txid = tx_id + 1
        listeners = self.channel.begin(sender, tx_id, self.now)
        self.metrics.record_event("tx", size=packet.size_bytes, stage="start",
                                  packet_kind=packet.kind)
        self.queue.push(self.now + packet.size_bytes * 8 / self.energy.data_rate, PRIO_END,
                        (self._end, (sender, packet, tx_id, listeners, on_end)))

    def _end(self, sender, packet, tx_id, listeners, on_end):
        now = self.now
        delivered = self.channel.end(sender, tx_id, listeners, now)
        m = self.metrics
        if self.ledger.state(sender) != DEAD:
            m.record_event("tx", size=packet.size_bytes, stage="end")
        c = self.channel.collisions
        if c != self._collisions_seen:
            m.record_event("collision", count=c - self._collisions_seen)
            self._collisions_seen = c
        if delivered:
            m.record_event("rx", size=packet.size_bytes, receivers=len(delivered))
        if delivered or on_end is not None:
            self.queue.push(now, PRIO_NORMAL, (self._deliver, (sender, packet, delivered, on_end)))

    def _deliver(self, sender, packet, delivered, on_end):
        now = self.now
        nodes = self.nodes
        dest = packet.dest
        handler = self.handlers.get(packet.kind)
        for v in delivered:
            nodes[v].last_rx = now
            if dest is None or dest == v:
                if handler is not None:
                    handler(v, packet, sender)
            else:
                oh = self.overhear.get(packet.kind)
                if oh is not None:
                    oh(v, packet, sender)
        if on_end is not None:
            on_end(sender, packet, delivered)

    def sleep(self, i):
        """Radio off now; any frame being received is lost."""
        self.channel.abort(i)
        self.ledger.set_state(i, SLEEP, self.now)

    # -- buffers --------------------------------------------------------

    def enqueue(self, node, packet, route="csma", on_done=None):
        """Append to the node's FIFO; tail-drop when full. Returns acceptance."""
        if self.ledger.sync(node, self.now) == DEAD:
            self.metrics.record_event("drop", reason="dead")
            return False
        rt = self.nodes[node]
        buf = rt.buffer
        if self.stack_size is not None and len(buf) >= self.stack_size:
            self.metrics.record_event("drop", reason="overflow")
            if on_done is not None:
                on_done(False, None)
            return False
        buf.append((packet, route, on_done))
        if len(buf) > rt.max_occupancy:
            rt.max_occupancy = len(buf)
        hook = self.route_hooks.get(route)
        if hook is not None:
            hook(node)
        return True

    def dequeue(self, node, route):
        buf = self.nodes[node].buffer
        for k, entry in enumerate(buf):
            if entry[1] == route:
                del buf[k]
                return entry
        return None

    def has_route(self, node, route):
        for entry in self.nodes[node].buffer:
            if entry[1] == route:
                return True
        return False

    def congested(self, node):
        """Relay-side congestion test: occupancy above 80% of the stack size."""
        if self.stack_size is None:
            return False
        return len(self.nodes[node].buffer) > 0.8 * self.stack_size

    # -- awake holds ----------------------------------------------------

    def hold(self, i):
        """Keep node ``i`` awake until a matching release()."""
        self.nodes[i].held += 1
        if self.duty is not None:
            self.duty.on_hold(i)

    def release(self, i):
        rt = self.nodes[i]
        if rt.held <= 0:
            raise SimulationError(f"release without hold on node {i}")
        rt.held -= 1
        if rt.held == 0 and self.duty is not None:
            self.duty.on_release(i)

    # -- finalization ---------------------------------------------------

    def finalize(self, t_end=None):
        t_end = self.now if t_end is None else t_end
        ledger = self.ledger
        ledger.finalize(t_end)
        m = self.metrics
        powers = self.energy.powers()
        per_node = []
        durations = []
        deaths = []
        m.state_energy = 0.0
        for i in range(self.n):
            per_node.append(ledger.consumed(i))
            d = ledger.durations(i)
            durations.append(tuple(d))
            for s, dt in enumerate(d):
                if dt > 0:
                    m.record_event("state_change", node=i, state=s, duration=dt, power=powers[s])
            td = ledger.death_time(i)
            deaths.append(td)
            if td >= 0:
                m.record_event("death", node=i, time=td)
        if self.stack_size is not None:
            worst = max(rt.max_occupancy for rt in self.nodes)
            if worst > self.stack_size:
                raise SimulationError(f"buffer bound violated: {worst} > {self.stack_size}")
        c = self.channel.collisions
        if c != self._collisions_seen:
            m.record_event("collision", count=c - self._collisions_seen)
            self._collisions_seen = c
        dead = sum(1 for t in deaths if t >= 0)
        return MetricsRecord(
            discovery_found=m.discovery_found,
            total_energy=math.fsum(per_node),
            per_node_energy=tuple(per_node),
            latency=m.latency,
            latency_target=m.latency_target,
            sent_bytes=m.sent_bytes,
            recv_bytes=m.recv_bytes,
            sending_bytes=m.sending_bytes,
            drops=m.drops,
            collisions=m.collisions,
            lifetime=m.first_death if m.first_death is not None else t_end,
            dead_nodes=dead,
            sink_disconnect=sink_disconnect_time(self.channel.adj, self.topology.sink, deaths, t_end),
            duration=t_end,
            per_node_durations=tuple(durations),
        )
