import pytest
from hypothesis import assume, given, strategies as st

from wsn_forge.domain import NodeRecord, Packet, PacketKind, Role, Topology
from wsn_forge.engine import DEAD
from wsn_forge.esrt import (C_HR, C_LR, NC_HR, NC_LR, OOR, EsrtController, EsrtState, ReportSources,
                            classify_region, observe_epoch, simulate_plant, update_frequency)
from wsn_forge.flooding import FloodRouter
from wsn_forge.power import CsmaMac

from conftest import line, make_sim


def _reports(n, congested=0):
    return [Packet(k, PacketKind.REPORT, 1, 0.0, 32, congestion_bit=k < congested) for k in range(n)]


def test_observe_epoch():
    assert observe_epoch(_reports(100), 100) == (1.0, False)
    assert observe_epoch(_reports(50), 100)[0] == 0.5
    assert observe_epoch(_reports(10, congested=1), 100)[1] is True
    with pytest.raises(ValueError):
        observe_epoch([], 0)


def test_relay_at_ninety_percent_marks_congestion():
    sim = make_sim(line(3), stack_size=10)
    for _ in range(9):
        sim.enqueue(1, sim.new_packet(PacketKind.REPORT, 1, 10), "up")
    assert sim.congested(1)
    assert not sim.congested(2)


def test_region_table():
    assert classify_region(1.0, False) == OOR
    assert classify_region(0.5, False) == NC_LR
    assert classify_region(1.5, False) == NC_HR
    assert classify_region(1.5, True) == C_HR
    assert classify_region(0.5, True) == C_LR
    with pytest.raises(ValueError):
        classify_region(-0.1, False)


def test_frequency_updates():
    assert update_frequency(10, OOR, 1.0) == 10
    assert update_frequency(10, NC_LR, 0.5) == 20
    assert update_frequency(10, C_LR, 0.5) == 2.5
    assert update_frequency(10, NC_HR, 2.0) == pytest.approx(7.5)
    assert update_frequency(10, NC_LR, 0.0) == 100.0
    assert update_frequency(0.2, C_LR, 0.1) == 0.1
    with pytest.raises(ValueError):
        update_frequency(1, "LOST", 1.0)


def test_state_validation():
    with pytest.raises(ValueError):
        EsrtState(desired=0)
    with pytest.raises(ValueError):
        EsrtState(desired=5, f_min=2, f_max=1)
    assert EsrtState(desired=5, frequency=1000).frequency == 100.0


def _controller(core=None, dead_relay=None):
    # 0 - 1 - 2 - 3, sources 1 and 3
    sim = make_sim(line(4), core, ideal_channel=True)
    if dead_relay is not None:
        sim.ledger.set_state(dead_relay, DEAD, 0.0)
    csma = CsmaMac(sim, max_retries=None)
    reports = ReportSources(sim, [1, 3], 0.5, lambda s, p: None)
    holder = {}
    flood = FloodRouter(sim, csma, on_first=lambda v, p, s: holder["c"].on_control(v, p, s))
    flood.install(PacketKind.CONTROL)
    ctl = EsrtController(sim, EsrtState(desired=5, frequency=0.5), reports, flood)
    holder["c"] = ctl
    return sim, ctl, reports


def test_broadcast_reaches_all_sources(core):
    sim, ctl, reports = _controller(core)
    ctl.broadcast_frequency(4.0)
    sim.advance(1.0)
    assert reports.frequencies() == {1: 4.0, 3: 4.0}


def test_unreachable_source_keeps_old_frequency(core):
    sim, ctl, reports = _controller(core, dead_relay=2)
    ctl.broadcast_frequency(4.0)
    sim.advance(1.0)
    assert reports.frequencies() == {1: 4.0, 3: 0.5}


def test_oor_suppresses_broadcast():
    sim, ctl, reports = _controller()
    ctl.start(0.0)
    # exactly the desired count arrives in the first epoch
    for p in _reports(5):
        ctl.collect(p)
    sim.advance(2.0)
    assert ctl.epoch == 1 and ctl.broadcasts == 0
    sim.advance(4.0)
    assert ctl.broadcasts == 1


def test_sources_fire_at_their_frequency():
    sim = make_sim(line(3))
    sent = []
    src = ReportSources(sim, [1, 2], 2.0, lambda s, p: sent.append((sim.now, s)))
    src.start(0.0)
    sim.advance(5.0)
    assert sum(1 for _, s in sent if s == 1) in (9, 10)
    src.adopt(1, 10.0)
    before = len(sent)
    sim.advance(6.0)
    assert sum(1 for t, s in sent[before:] if s == 1) in (9, 10)


@given(st.floats(0.0, 3.0), st.booleans(), st.floats(0.1, 100.0))
def test_update_direction(eta, congested, f):
    region = classify_region(eta, congested)
    new = update_frequency(f, region, eta)
    if region == OOR:
        assert new == f
    elif region in (C_HR, C_LR) and new > 0.1:
        assert new < f
    elif region == NC_LR and new < 100.0:
        assert new > f


@given(st.floats(0.95, 1.05))
def test_oor_fixpoint(eta):
    s = EsrtState(desired=10, frequency=3.0)
    assert s.step(eta, False) == 3.0


@given(st.floats(0.1, 100.0), st.floats(0.05, 1.0), st.integers(1, 10))
def test_convergence_against_linear_plant(f0, delivery, n_sources):
    desired = 10.0
    # the plant must be able to hit eta = 1 inside [f_min, f_max]
    f_star = desired / (delivery * n_sources * 2.0)
    assume(0.1 * 1.06 <= f_star <= 100.0 / 1.06)
    s = EsrtState(desired=desired, frequency=f0)
    trace = simulate_plant(s, delivery, 40, n_sources)
    in_band = [s.in_band(eta) for _, eta in trace]
    first = in_band.index(True)
    assert first < 20
    assert all(in_band[first:])


def test_uniform_frequency_after_broadcast():
    nodes = [NodeRecord(0, 50, 50, 5.0, Role.SINK)] + [NodeRecord(i, 50 + 5 * i, 50, 5.0) for i in range(1, 6)]
    sim = make_sim(Topology(nodes, 25, (100, 100)), ideal_channel=True)
    reports = ReportSources(sim, [1, 2, 3, 4, 5], 0.5, lambda s, p: None)
    holder = {}
    flood = FloodRouter(sim, CsmaMac(sim, max_retries=None),
                        on_first=lambda v, p, s: holder["c"].on_control(v, p, s)).install(PacketKind.CONTROL)
    holder["c"] = EsrtController(sim, EsrtState(desired=5), reports, flood)
    reports.adopt(3, 9.0)
    holder["c"].broadcast_frequency(2.5)
    sim.advance(1.0)
    assert set(reports.frequencies().values()) == {2.5}
