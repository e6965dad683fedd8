"""Value types shared by every module and the unit-disk communication graph."""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Any, Optional

from . import kernels


class WsnError(Exception):
    pass


class TopologyError(WsnError, ValueError):
    """Invalid topology, or a reference to a node that is not in it."""


class DisconnectedTopologyError(TopologyError):
    def __init__(self, unreachable):
        self.unreachable = sorted(unreachable)
        super().__init__(f"nodes unreachable from the sink: {self.unreachable}")


class ConfigError(WsnError, ValueError):
    """Bad or contradictory configuration; ``key`` names the offending entry."""

    def __init__(self, key, message):
        self.key = key
        super().__init__(f"{key}: {message}")


class SimulationError(WsnError, RuntimeError):
    """A protocol asked the engine for something impossible (a bug, not a scenario)."""


class Role(str, enum.Enum):
    SINK = "sink"
    SENSOR = "sensor"
    TARGET = "target"


class PacketKind(str, enum.Enum):
    QUERY = "Query"
    REPORT = "Report"
    REPLY = "Reply"
    CONTROL = "Control"


@dataclass(frozen=True)
class NodeRecord:
    id: int
    x: float
    y: float
    initial_energy: float
    role: Role = Role.SENSOR

    @property
    def position(self):
        return (self.x, self.y)


class Topology:
    """Immutable node set plus radio range.

    Node ids must be 0..n-1 in list order so they double as array indices in
    the engine. Adjacency is the unit-disk graph with an inclusive boundary.
    """

    def __init__(self, nodes, radio_range, area):
        nodes = tuple(nodes)
        if not nodes:
            raise TopologyError("topology needs at least one node")
        if radio_range <= 0:
            raise TopologyError("radio_range must be positive")
        w, h = float(area[0]), float(area[1])
        if w <= 0 or h <= 0:
            raise TopologyError("area dimensions must be positive")
        sinks = []
        targets = []
        for idx, rec in enumerate(nodes):
            if rec.id != idx:
                raise TopologyError(f"node ids must be 0..n-1 in order, got {rec.id} at index {idx}")
            if not (0.0 <= rec.x <= w and 0.0 <= rec.y <= h):
                raise TopologyError(f"node {rec.id} at {rec.position} lies outside the area")
            if rec.initial_energy <= 0:
                raise TopologyError(f"node {rec.id} has non-positive initial energy")
            role = Role(rec.role)
            if role is Role.SINK:
                sinks.append(rec.id)
            elif role is Role.TARGET:
                targets.append(rec.id)
        if len(sinks) != 1:
            raise TopologyError(f"exactly one sink required, found {len(sinks)}")
        if len(targets) > 1:
            raise TopologyError(f"at most one target allowed, found {len(targets)}")
        self.nodes = nodes
        self.radio_range = float(radio_range)
        self.area = (w, h)
        self.sink = sinks[0]
        self.target = targets[0] if targets else None
        self.xs = [float(r.x) for r in nodes]
        self.ys = [float(r.y) for r in nodes]
        self._adj = kernels.core.unit_disk_adjacency(self.xs, self.ys, self.radio_range)

    def __len__(self):
        return len(self.nodes)

    @property
    def n(self):
        return len(self.nodes)

    @property
    def adjacency(self):
        """Sorted neighbour lists (a fresh copy)."""
        return [list(a) for a in self._adj]

    def neighbors(self, node_id):
        if not (0 <= node_id < len(self.nodes)):
            raise TopologyError(f"unknown node id {node_id}")
        return frozenset(self._adj[node_id])

    def degree(self, node_id):
        return len(self._adj[node_id])

    def hops_from(self, node_id):
        return kernels.core.bfs_hops(self._adj, node_id)

    def is_connected(self):
        return all(h >= 0 for h in self.hops_from(self.sink))

    def unreachable(self):
        return [i for i, h in enumerate(self.hops_from(self.sink)) if h < 0]

    def distance(self, a, b):
        dx = self.xs[a] - self.xs[b]
        dy = self.ys[a] - self.ys[b]
        return (dx * dx + dy * dy) ** 0.5

    def dumps(self):
        lines = [f"area {self.area[0]!r} {self.area[1]!r} range {self.radio_range!r}"]
        for r in self.nodes:
            lines.append(f"node {r.id} {float(r.x)!r} {float(r.y)!r} "
                         f"{float(r.initial_energy)!r} {Role(r.role).value}")
        return "\n".join(lines) + "\n"

    @classmethod
    def loads(cls, text):
        header = None
        nodes = []
        for lineno, line in enumerate(text.splitlines(), 1):
            parts = line.split()
            if not parts or parts[0].startswith("#"):
                continue
            try:
                if parts[0] == "area" and len(parts) == 5 and parts[3] == "range":
                    header = (float(parts[1]), float(parts[2]), float(parts[4]))
                elif parts[0] == "node" and len(parts) == 6:
                    nodes.append(NodeRecord(int(parts[1]), float(parts[2]), float(parts[3]),
                                            float(parts[4]), Role(parts[5])))
                else:
                    raise ValueError(line)
            except ValueError as exc:
                raise TopologyError(f"line {lineno}: cannot parse {line!r}") from exc
        if header is None:
            raise TopologyError("missing 'area <w> <h> range <r>' header")
        return cls(nodes, header[2], header[:2])


def neighbors(topology, node_id):
    return topology.neighbors(node_id)


def is_connected(topology):
    return topology.is_connected()


@dataclass(frozen=True, slots=True)
class Packet:
    id: int
    kind: PacketKind
    src: int
    created_at: float
    size_bytes: int
    hop_count: int = 0
    ray_id: Optional[int] = None
    congestion_bit: bool = False
    # unicast destination; None means broadcast
    dest: Optional[int] = None
    # nodes the packet has visited, source first
    path: tuple = ()
    data: Any = field(default=None, compare=False)

    def forwarded(self, via, dest=None, congestion_bit=None):
        """Copy for the next hop: one more hop, ``via`` appended to the path."""
        return Packet(self.id, self.kind, self.src, self.created_at, self.size_bytes,
                      self.hop_count + 1, self.ray_id,
                      self.congestion_bit if congestion_bit is None else congestion_bit,
                      dest, self.path + (via,), self.data)

    def with_congestion(self):
        return Packet(self.id, self.kind, self.src, self.created_at, self.size_bytes,
                      self.hop_count, self.ray_id, True, self.dest, self.path, self.data)

    def to(self, dest):
        return Packet(self.id, self.kind, self.src, self.created_at, self.size_bytes,
                      self.hop_count, self.ray_id, self.congestion_bit, dest, self.path,
                      self.data)
