"""Run counters and the finalized per-run record."""
from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, fields
from typing import Optional


@dataclass(frozen=True)
class MetricsRecord:
    discovery_found: bool
    total_energy: float
    per_node_energy: tuple
    latency: Optional[float]
    latency_target: Optional[float]
    sent_bytes: int
    recv_bytes: int
    sending_bytes: int
    drops: int
    collisions: int
    lifetime: float
    dead_nodes: int
    sink_disconnect: Optional[float]
    duration: float
    # seconds spent in each radio state, per node (for conservation checks)
    per_node_durations: tuple = ()


# fields that summarize() averages, in output order
NUMERIC_FIELDS = ("total_energy", "latency", "latency_target", "sent_bytes", "recv_bytes",
                  "sending_bytes", "drops", "collisions", "lifetime", "dead_nodes",
                  "sink_disconnect")


class MetricsCollector:
    def __init__(self):
        self.sent_bytes = 0
        self.recv_bytes = 0
        self.sending_bytes = 0
        self.drops = 0
        self.collisions = 0
        self.transmissions = 0
        self.tx_by_kind = Counter()
        self.drop_reasons = Counter()
        self.state_energy = 0.0
        self.first_death = None
        self.discovery_found = False
        self.latency = None
        self.latency_target = None
        self.report_latencies = []
        self.power_samples = []

    def record_event(self, kind, **details):
        if kind == "tx":
            size = details["size"]
            stage = details.get("stage")
            if stage in (None, "start"):
                self.sending_bytes += size
                self.transmissions += 1
                pk = details.get("packet_kind")
                if pk is not None:
                    self.tx_by_kind[pk] += 1
            if stage in (None, "end"):
                self.sent_bytes += size
        elif kind == "rx":
            self.recv_bytes += details["size"] * details.get("receivers", 1)
        elif kind == "drop":
            self.drops += details.get("count", 1)
            self.drop_reasons[details.get("reason", "unspecified")] += details.get("count", 1)
        elif kind == "collision":
            self.collisions += details.get("count", 1)
        elif kind == "state_change":
            self.state_energy += details["power"] * details["duration"]
        elif kind == "death":
            t = details["time"]
            if self.first_death is None or t < self.first_death:
                self.first_death = t
        else:
            raise ValueError(f"unknown metrics event {kind!r}")


def sink_disconnect_time(adjacency, sink, death_times, end):
    """First instant at which some alive node has no alive path to the sink."""
    deaths = sorted((t, i) for i, t in enumerate(death_times) if t >= 0)
    if not deaths:
        return None
    dead = set()
    for t, i in deaths:
        dead.add(i)
        if i == sink:
            return t
        seen = {sink}
        stack = [sink]
        while stack:
            u = stack.pop()
            for v in adjacency[u]:
                if v not in seen and v not in dead:
                    seen.add(v)
                    stack.append(v)
        if len(seen) + len(dead) < len(adjacency):
            return t
    return None


def summarize(records):
    """Mean/min/max per numeric field plus the discovery probability."""
    records = list(records)
    if not records:
        raise ValueError("summarize needs at least one record")
    out = {"runs": len(records),
           "discovery_probability": sum(bool(r.discovery_found) for r in records) / len(records)}
    for name in NUMERIC_FIELDS:
        vals = [getattr(r, name) for r in records if getattr(r, name) is not None]
        if vals:
            out[name] = {"mean": math.fsum(vals) / len(vals), "min": min(vals), "max": max(vals)}
        else:
            out[name] = {"mean": None, "min": None, "max": None}
    return out


def record_fields():
    return [f.name for f in fields(MetricsRecord)]
