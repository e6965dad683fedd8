"""Event-to-sink reliable transport: the sink classifies each epoch by
reliability and congestion and broadcasts one report frequency to all sources."""
from __future__ import annotations

from dataclasses import dataclass, field

from .domain import PacketKind, SimulationError
from .engine import EventKind, SimEvent

OOR = "OOR"
NC_LR = "NC_LR"
NC_HR = "NC_HR"
C_HR = "C_HR"
C_LR = "C_LR"
REGIONS = (OOR, NC_LR, NC_HR, C_HR, C_LR)


def observe_epoch(reports, desired):
    """(eta, congested) from the Report packets the sink got this epoch."""
    if desired <= 0:
        raise ValueError("desired reports per epoch must be positive")
    reports = list(reports)
    return len(reports) / desired, any(p.congestion_bit for p in reports)


def classify_region(eta, congested, epsilon=0.05):
    if eta < 0:
        raise ValueError("eta must be non-negative")
    if congested:
        return C_HR if eta > 1 + epsilon else C_LR
    if eta < 1 - epsilon:
        return NC_LR
    if eta > 1 + epsilon:
        return NC_HR
    return OOR


def update_frequency(f, region, eta, f_min=0.1, f_max=100.0):
    if region == OOR:
        new = f
    elif region in (NC_LR, C_HR):
        new = f_max if eta == 0 else f / eta
    elif region == NC_HR:
        new = f_max if eta == 0 else (f / 2.0) * (1.0 + 1.0 / eta)
    elif region == C_LR:
        new = f * eta / 2.0
    else:
        raise ValueError(f"unknown region {region!r}")
    return min(max(new, f_min), f_max)


@dataclass
class EsrtState:
    desired: float
    epsilon: float = 0.05
    epoch_length: float = 2.0
    frequency: float = 1.0
    f_min: float = 0.1
    f_max: float = 100.0
    history: list = field(default_factory=list)

    def __post_init__(self):
        if self.desired <= 0:
            raise ValueError("desired reports per epoch must be positive")
        if not 0 < self.f_min <= self.f_max:
            raise ValueError("need 0 < f_min <= f_max")
        self.frequency = min(max(self.frequency, self.f_min), self.f_max)

    def step(self, eta, congested):
        """Classify one epoch and return the new frequency."""
        region = classify_region(eta, congested, self.epsilon)
        new = update_frequency(self.frequency, region, eta, self.f_min, self.f_max)
        self.history.append((len(self.history), eta, region, new))
        self.frequency = new
        return new

    def in_band(self, eta):
        return classify_region(eta, False, self.epsilon) == OOR


class ReportSources:
    """Periodic Report generators at the chosen source nodes.

    ``route(node, packet)`` hands each new report to the transport in use.
    """

    def __init__(self, sim, sources, frequency, route, report_bytes=32):
        self.sim = sim
        self.sources = list(sources)
        self.route = route
        self.report_bytes = report_bytes
        self.generated = 0
        for s in self.sources:
            sim.nodes[s].frequency = frequency

    def start(self, t):
        rng = self.sim.rng
        for s in self.sources:
            rt = self.sim.nodes[s]
            # random phase so sources do not fire in lockstep
            self._arm(s, t + rng.random() / rt.frequency)

    def _arm(self, s, t):
        rt = self.sim.nodes[s]
        rt.report_gen += 1
        self.sim.at(t, self._fire, s, rt.report_gen)

    def _fire(self, s, gen):
        sim = self.sim
        rt = sim.nodes[s]
        if gen != rt.report_gen or not sim.alive(s):
            return
        self.generated += 1
        self.route(s, sim.new_packet(PacketKind.REPORT, s, self.report_bytes))
        self._arm(s, sim.now + 1.0 / rt.frequency)

    def adopt(self, s, frequency):
        rt = self.sim.nodes[s]
        if rt.frequency == frequency:
            return
        rt.frequency = frequency
        self._arm(s, self.sim.now + 1.0 / frequency)

    def frequencies(self):
        return {s: self.sim.nodes[s].frequency for s in self.sources}


class EsrtController:
    """Sink-resident ESRT loop running on EpochBoundary events.

    Control packets carry the new frequency and travel by ``flood`` (a
    FloodRouter installed for Control packets by the caller). A source adopts
    the frequency when the broadcast reaches it, i.e. in the epoch after the
    one that was measured; a source the broadcast misses keeps its old rate.
    """

    def __init__(self, sim, state, sources, flood, control_bytes=16):
        self.sim = sim
        self.state = state
        self.sources = sources
        self.flood = flood
        self.control_bytes = control_bytes
        self.received = []
        self.broadcasts = 0
        self.epoch = 0
        self._source_set = set(sources.sources)
        for s in sources.sources:
            sim.nodes[s].frequency = state.frequency

    def start(self, t):
        self.sim.schedule(SimEvent(t + self.state.epoch_length, EventKind.EPOCH_BOUNDARY,
                                   self.sim.topology.sink, fn=self._boundary))

    def collect(self, packet):
        """Sink-side hook for every Report that arrives."""
        self.received.append(packet)

    def on_control(self, node, packet, sender):
        tag = packet.data
        if tag and tag[0] == "esrt" and node in self._source_set:
            self.sources.adopt(node, tag[1])

    def _boundary(self, ev):
        sim = self.sim
        sink = sim.topology.sink
        eta, congested = observe_epoch(self.received, self.state.desired)
        self.received = []
        old = self.state.frequency
        new = self.state.step(eta, congested)
        self.epoch += 1
        if new != old and sim.alive(sink):
            self.broadcast_frequency(new)
        sim.schedule(SimEvent(ev.time + self.state.epoch_length, EventKind.EPOCH_BOUNDARY,
                              sink, fn=self._boundary))

    def broadcast_frequency(self, f):
        sim = self.sim
        sink = sim.topology.sink
        if not sim.alive(sink):
            raise SimulationError("ESRT broadcast needs a live sink")
        self.broadcasts += 1
        pkt = sim.new_packet(PacketKind.CONTROL, sink, self.control_bytes, data=("esrt", f, self.epoch))
        self.flood.start_flood(sink, pkt)


def simulate_plant(state, delivery, epochs, n_sources, congested=False):
    """Closed loop against a linear plant: eta = delivery * f * sources * epoch / desired."""
    trace = []
    for _ in range(epochs):
        eta = delivery * state.frequency * n_sources * state.epoch_length / state.desired
        trace.append((state.frequency, eta))
        state.step(eta, congested)
    return trace
