"""Deterministic discrete-event simulator for duty-cycled wireless sensor networks."""
from .domain import (ConfigError, DisconnectedTopologyError, NodeRecord, Packet, PacketKind, Role,
                     SimulationError, Topology, TopologyError, is_connected, neighbors)
from .engine import EventKind, NodeRuntime, RadioState, SimEvent, Simulator
from .kernels import BACKEND
from .metrics import MetricsRecord, summarize
from .placement import PlacementSpec, generate_placement
from .power import EnergyModel, SlotSchedule, allocate_slots, energy_for_interval, setup_tree

__version__ = "0.1.0"
