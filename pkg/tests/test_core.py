"""Event queue, radio ledger and channel kernels, run against every available backend."""
import math

import pytest
from hypothesis import given, strategies as st

from wsn_forge import kernels

from conftest import CORES

TX, RX, IDLE, SLEEP, WAKE, DEAD = range(6)
POWERS = [0.06, 0.045, 0.045, 3e-6, 0.045, 0.0]


def test_queue_orders_by_time_then_priority_then_insertion(core):
    q = core.EventQueue()
    q.push(2.0, 1, "late")
    q.push(1.0, 1, "a")
    q.push(1.0, 1, "b")
    q.push(1.0, 0, "end")
    out = [q.pop()[3] for _ in range(4)]
    assert out == ["end", "a", "b", "late"]
    assert len(q) == 0
    assert q.peek_time() == math.inf


def test_ledger_accrues_energy_and_dies_exactly(core):
    led = core.RadioLedger([0.045], POWERS, 0.0, IDLE, False)
    # 0.045 J at 45 mW lasts exactly one second
    assert led.sync(0, 0.5) == IDLE
    assert led.remaining(0) == pytest.approx(0.0225)
    assert led.sync(0, 2.0) == DEAD
    assert led.death_time(0) == pytest.approx(1.0)
    assert led.consumed(0) == pytest.approx(0.045)
    d = led.durations(0)
    assert d[IDLE] == pytest.approx(1.0) and d[DEAD] == pytest.approx(1.0)


def test_ledger_plans_apply_in_order(core):
    led = core.RadioLedger([10.0], POWERS, 0.0, IDLE, True)
    led.set_state(0, SLEEP, 0.0)
    led.plan(0, 1.0, WAKE)
    led.plan(0, 1.015, IDLE)
    assert led.sync(0, 0.5) == SLEEP
    assert led.sync(0, 1.01) == WAKE
    assert led.sync(0, 2.0) == IDLE
    led.finalize(2.0)
    d = led.durations(0)
    assert d[SLEEP] == pytest.approx(1.0)
    assert d[WAKE] == pytest.approx(0.015)
    assert sum(d) == pytest.approx(2.0)
    assert [(o, n) for _, i, o, n in led.trace] == [(IDLE, SLEEP), (SLEEP, WAKE), (WAKE, IDLE)]


def test_hidden_terminal_collision(core):
    # A - B - C with A and C out of each other's range
    adj = [[1], [0, 2], [1]]
    led = core.RadioLedger([1.0] * 3, POWERS, 0.0, IDLE, False)
    ch = core.Channel(adj, led, False)
    la = ch.begin(0, 0, 0.0)
    lc = ch.begin(2, 1, 0.0005)
    assert ch.end(0, 0, la, 0.001) == []
    assert ch.end(2, 1, lc, 0.0015) == []
    assert ch.collisions == 1


def test_ideal_channel_never_collides(core):
    adj = [[1], [0, 2], [1]]
    led = core.RadioLedger([1.0] * 3, POWERS, 0.0, IDLE, False)
    ch = core.Channel(adj, led, True)
    la = ch.begin(0, 0, 0.0)
    lc = ch.begin(2, 1, 0.0005)
    assert ch.end(0, 0, la, 0.001) == [1]
    assert ch.end(2, 1, lc, 0.0015) == [1]
    assert ch.collisions == 0


def test_sleeping_neighbour_hears_nothing(core):
    adj = [[1, 2], [0], [0]]
    led = core.RadioLedger([1.0] * 3, POWERS, 0.0, IDLE, False)
    led.set_state(2, SLEEP, 0.0)
    ch = core.Channel(adj, led, False)
    ls = ch.begin(0, 0, 0.0)
    assert ch.end(0, 0, ls, 0.001) == [1]


def test_abort_voids_reception(core):
    adj = [[1], [0]]
    led = core.RadioLedger([1.0] * 2, POWERS, 0.0, IDLE, False)
    ch = core.Channel(adj, led, False)
    ls = ch.begin(0, 0, 0.0)
    ch.abort(1)
    assert ch.end(0, 0, ls, 0.001) == []


def test_unit_disk_boundary_is_inclusive(core):
    adj = core.unit_disk_adjacency([0.0, 25.0, 50.0], [0.0, 0.0, 0.0], 25.0)
    assert [list(a) for a in adj] == [[1], [0, 2], [1]]
    assert core.bfs_hops(adj, 0) == [0, 1, 2]
    assert core.hop_diameter(adj) == 2


def test_select_rejects_unknown_backend():
    with pytest.raises(ValueError):
        kernels.select("fortran")


def test_python_backend_is_always_available():
    assert kernels.select("python").BACKEND == "python"


@pytest.mark.skipif(len(CORES) < 2, reason="compiled core not built")
@given(st.lists(st.tuples(st.floats(0, 100), st.floats(0, 100)), min_size=1, max_size=25),
       st.floats(1, 60))
def test_backends_agree_on_geometry(points, r):
    xs = [p[0] for p in points]
    ys = [p[1] for p in points]
    a = kernels.python_core.unit_disk_adjacency(xs, ys, r)
    b = kernels.compiled_core.unit_disk_adjacency(xs, ys, r)
    assert [list(x) for x in a] == [list(x) for x in b]
    assert kernels.python_core.bfs_hops(a, 0) == list(kernels.compiled_core.bfs_hops(b, 0))


@pytest.mark.skipif(len(CORES) < 2, reason="compiled core not built")
@given(st.lists(st.tuples(st.sampled_from([TX, RX, IDLE, SLEEP, WAKE]), st.floats(0.0, 0.5)),
                max_size=30))
def test_backends_agree_on_ledger_bookkeeping(steps):
    leds = [c.RadioLedger([0.05, 1.0], POWERS, 0.0, IDLE, False) for c in CORES]
    t = 0.0
    for s, dt in steps:
        t += dt
        for led in leds:
            if led.sync(0, t) != DEAD:
                led.set_state(0, s, t)
    for led in leds:
        led.finalize(t + 1.0)
    a, b = leds
    assert a.consumed(0) == b.consumed(0)
    assert list(a.durations(0)) == list(b.durations(0))
    assert a.death_time(0) == b.death_time(0)


def test_fallback_when_extension_is_missing():
    import subprocess
    import sys
    code = (
        "import sys\n"
        "class Block:\n"
        "    def find_spec(self, name, path=None, target=None):\n"
        "        if name == 'wsn_forge._core':\n"
        "            raise ImportError('blocked')\n"
        "sys.meta_path.insert(0, Block())\n"
        "from wsn_forge import kernels\n"
        "print(kernels.BACKEND, kernels.compiled_core)\n"
    )
    out = subprocess.run([sys.executable, "-c", code], capture_output=True, text=True, check=True)
    assert out.stdout.split() == ["python", "None"]
