import os

import pytest
from hypothesis import HealthCheck, settings

from wsn_forge import kernels
from wsn_forge.domain import NodeRecord, Role, Topology
from wsn_forge.engine import Simulator
from wsn_forge.power import EnergyModel

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

CORES = [kernels.python_core]
if kernels.compiled_core is not None:
    CORES.append(kernels.compiled_core)


@pytest.fixture(params=CORES, ids=lambda c: c.BACKEND)
def core(request):
    return request.param


def make_topology(points, radio_range=25.0, energy=5.0, target=None, area=(100.0, 100.0)):
    """Node 0 is the sink; ``points`` is a list of (x, y)."""
    nodes = []
    for i, (x, y) in enumerate(points):
        role = Role.SINK if i == 0 else (Role.TARGET if i == target else Role.SENSOR)
        nodes.append(NodeRecord(i, float(x), float(y), energy, role))
    return Topology(nodes, radio_range, area)


def line(n, spacing=20.0, radio_range=25.0, energy=5.0, target=None):
    return make_topology([(5 + k * spacing, 50) for k in range(n)], radio_range, energy, target,
                         area=(max(100.0, 10 + n * spacing), 100.0))


def make_sim(topo, core=None, **kw):
    energy = kw.pop("energy", None) or EnergyModel()
    return Simulator(topo, energy, core=core, **kw)
