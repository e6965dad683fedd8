"""Pure-Python engine core.

Event heap, radio-state energy ledger and shared radio channel, plus the
unit-disk geometry kernels. ``_core.pyx`` mirrors this module operation for
operation; both must produce bit-identical simulations.
"""
import heapq
import math

TRANSMIT = 0
RECEIVE = 1
IDLE = 2
SLEEP = 3
WAKING_UP = 4
DEAD = 5
N_STATES = 6

BACKEND = "python"


class EventQueue:
    """Min-heap keyed on (time, priority, insertion sequence)."""

    __slots__ = ("_heap", "_seq")

    def __init__(self):
        self._heap = []
        self._seq = 0

    def push(self, time, prio, item):
        seq = self._seq
        self._seq = seq + 1
        heapq.heappush(self._heap, (time, prio, seq, item))
        return seq

    def pop(self):
        if not self._heap:
            raise IndexError("pop from empty event queue")
        return heapq.heappop(self._heap)

    def peek_time(self):
        if self._heap:
            return self._heap[0][0]
        return math.inf

    def __len__(self):
        return len(self._heap)


class RadioLedger:
    """Per-node radio state, remaining energy and time spent in each state.

    Energy is accrued lazily: ``sync(i, now)`` integrates the power of the
    current state from the last accrual point to ``now``, applying any planned
    transitions on the way. Depletion is detected during accrual and the exact
    death instant is recorded.
    """

    def __init__(self, initial_energy, powers, start_time=0.0, initial_state=IDLE,
                 trace=False):
        n = len(initial_energy)
        if len(powers) != N_STATES:
            raise ValueError("powers must have one entry per radio state")
        self.n = n
        self.powers = [float(p) for p in powers]
        self.powers[DEAD] = 0.0
        self._state = [int(initial_state)] * n
        self._since = [float(start_time)] * n
        self._initial = [float(e) for e in initial_energy]
        self._remaining = list(self._initial)
        self._consumed = [0.0] * n
        self._dur = [[0.0] * N_STATES for _ in range(n)]
        self._death = [-1.0] * n
        self._plans = [[] for _ in range(n)]
        self.trace = [] if trace else None

    def _switch(self, i, s, t):
        old = self._state[i]
        if old != s:
            if self.trace is not None:
                self.trace.append((t, i, old, s))
            self._state[i] = s

    def _accrue(self, i, t):
        s = self._state[i]
        since = self._since[i]
        dt = t - since
        if dt <= 0.0:
            return s == DEAD
        if s == DEAD:
            self._dur[i][DEAD] += dt
            self._since[i] = t
            return True
        p = self.powers[s]
        e = p * dt
        rem = self._remaining[i]
        if p > 0.0 and e >= rem:
            td = since + rem / p
            if td > t:
                td = t
            self._dur[i][s] += td - since
            self._consumed[i] += rem
            self._remaining[i] = 0.0
            self._death[i] = td
            if self.trace is not None:
                self.trace.append((td, i, s, DEAD))
            self._state[i] = DEAD
            self._dur[i][DEAD] += t - td
            self._since[i] = t
            self._plans[i] = []
            return True
        self._dur[i][s] += dt
        self._consumed[i] += e
        self._remaining[i] = rem - e
        self._since[i] = t
        return False

    def sync(self, i, now):
        plans = self._plans[i]
        while plans and plans[0][0] <= now:
            t, s = plans.pop(0)
            if self._accrue(i, t):
                return DEAD
            self._switch(i, s, t)
        if self._accrue(i, now):
            return DEAD
        return self._state[i]

    def set_state(self, i, s, now):
        if self.sync(i, now) == DEAD:
            return DEAD
        self._switch(i, s, now)
        return s

    def plan(self, i, t, s):
        plans = self._plans[i]
        if plans and t < plans[-1][0]:
            raise ValueError("planned transitions must be appended in time order")
        plans.append((t, s))

    def clear_plans(self, i):
        self._plans[i] = []

    def has_plans(self, i):
        return bool(self._plans[i])

    def state(self, i):
        return self._state[i]

    def remaining(self, i):
        return self._remaining[i]

    def initial(self, i):
        return self._initial[i]

    def consumed(self, i):
        return self._consumed[i]

    def durations(self, i):
        return list(self._dur[i])

    def death_time(self, i):
        return self._death[i]

    def total_consumed(self, now):
        total = 0.0
        for i in range(self.n):
            self.sync(i, now)
            total += self._consumed[i]
        return total

    def finalize(self, now):
        for i in range(self.n):
            self.sync(i, now)


class Channel:
    """Shared medium over a fixed unit-disk adjacency.

    Any temporal overlap of two in-range transmissions at a listening receiver
    corrupts everything that receiver hears until the air clears (no capture).
    With ``ideal=True`` overlapping frames are all delivered.
    """

    def __init__(self, adjacency, ledger, ideal=False):
        n = len(adjacency)
        self.adj = [list(a) for a in adjacency]
        self.ledger = ledger
        self.ideal = bool(ideal)
        self.air = [0] * n
        self.lock = [-1] * n
        self.garbled = [False] * n
        self.rx_count = [0] * n
        self.epoch = [0] * n
        self.transmitting = [False] * n
        self.collisions = 0

    def busy(self, i):
        return self.air[i] > 0

    def is_transmitting(self, i):
        return self.transmitting[i]

    def abort(self, i):
        """Drop whatever ``i`` is currently receiving (it slept or started sending)."""
        self.lock[i] = -1
        self.garbled[i] = False
        self.epoch[i] += 1

    def begin(self, sender, tx_id, now):
        """Start a transmission; the sender must already be synced and alive."""
        ledger = self.ledger
        self.abort(sender)
        ledger.set_state(sender, TRANSMIT, now)
        self.transmitting[sender] = True
        listeners = []
        air = self.air
        for v in self.adj[sender]:
            air[v] += 1
            st = ledger.sync(v, now)
            if st == RECEIVE or st == IDLE:
                if self.ideal:
                    self.rx_count[v] += 1
                    listeners.append((v, self.epoch[v]))
                    if st == IDLE:
                        ledger.set_state(v, RECEIVE, now)
                elif self.lock[v] < 0:
                    self.lock[v] = tx_id
                    self.garbled[v] = air[v] > 1
                    if st == IDLE:
                        ledger.set_state(v, RECEIVE, now)
                else:
                    self.garbled[v] = True
        return listeners

    def end(self, sender, tx_id, listeners, now):
        """Finish a transmission and return the receivers that decoded it."""
        ledger = self.ledger
        self.transmitting[sender] = False
        alive = ledger.set_state(sender, IDLE, now) != DEAD
        delivered = []
        air = self.air
        if self.ideal:
            for v in self.adj[sender]:
                air[v] -= 1
            for v, ep in listeners:
                self.rx_count[v] -= 1
                st = ledger.sync(v, now)
                if st == RECEIVE:
                    if alive and ep == self.epoch[v]:
                        delivered.append(v)
                    if self.rx_count[v] == 0:
                        ledger.set_state(v, IDLE, now)
            return delivered
        for v in self.adj[sender]:
            air[v] -= 1
            if self.lock[v] >= 0 and air[v] == 0:
                st = ledger.sync(v, now)
                if st == RECEIVE:
                    if self.garbled[v]:
                        self.collisions += 1
                    elif alive and self.lock[v] == tx_id:
                        delivered.append(v)
                    ledger.set_state(v, IDLE, now)
                self.lock[v] = -1
                self.garbled[v] = False
        return delivered


def unit_disk_adjacency(xs, ys, radio_range):
    """Sorted neighbour lists; nodes are adjacent iff dx*dx + dy*dy <= r*r."""
    n = len(xs)
    r2 = radio_range * radio_range
    adj = [[] for _ in range(n)]
    for i in range(n):
        xi = xs[i]
        yi = ys[i]
        for j in range(i + 1, n):
            dx = xs[j] - xi
            dy = ys[j] - yi
            if dx * dx + dy * dy <= r2:
                adj[i].append(j)
                adj[j].append(i)
    return adj


def bfs_hops(adjacency, source):
    """Hop distance from ``source`` to every node, -1 where unreachable."""
    n = len(adjacency)
    hops = [-1] * n
    hops[source] = 0
    frontier = [source]
    d = 0
    while frontier:
        d += 1
        nxt = []
        for u in frontier:
            for v in adjacency[u]:
                if hops[v] < 0:
                    hops[v] = d
                    nxt.append(v)
        frontier = nxt
    return hops


def hop_diameter(adjacency):
    """Largest finite hop distance over all node pairs."""
    best = 0
    for s in range(len(adjacency)):
        for h in bfs_hops(adjacency, s):
            if h > best:
                best = h
    return best
