# cython: language_level=3
"""Compiled engine core; semantics identical to ``_core_py``."""
from libc.stdlib cimport malloc, realloc, free
from libc.math cimport INFINITY

cdef enum:
    TRANSMIT_ = 0
    RECEIVE_ = 1
    IDLE_ = 2
    SLEEP_ = 3
    WAKING_UP_ = 4
    DEAD_ = 5
    NS = 6

TRANSMIT = TRANSMIT_
RECEIVE = RECEIVE_
IDLE = IDLE_
SLEEP = SLEEP_
WAKING_UP = WAKING_UP_
DEAD = DEAD_
N_STATES = NS

BACKEND = "compiled"


cdef class EventQueue:
    cdef double* _t
    cdef int* _p
    cdef long long* _s
    cdef list _items
    cdef Py_ssize_t _n
    cdef Py_ssize_t _cap
    cdef long long _seq

    def __cinit__(self):
        self._cap = 1024
        self._t = <double*> malloc(self._cap * sizeof(double))
        self._p = <int*> malloc(self._cap * sizeof(int))
        self._s = <long long*> malloc(self._cap * sizeof(long long))
        if self._t == NULL or self._p == NULL or self._s == NULL:
            raise MemoryError()
        self._items = []
        self._n = 0
        self._seq = 0

    def __dealloc__(self):
        free(self._t)
        free(self._p)
        free(self._s)

    cdef inline bint _less(self, Py_ssize_t a, Py_ssize_t b):
        if self._t[a] != self._t[b]:
            return self._t[a] < self._t[b]
        if self._p[a] != self._p[b]:
            return self._p[a] < self._p[b]
        return self._s[a] < self._s[b]

    cdef inline void _swap(self, Py_ssize_t a, Py_ssize_t b):
        cdef double t = self._t[a]
        cdef int p = self._p[a]
        cdef long long s = self._s[a]
        self._t[a] = self._t[b]
        self._p[a] = self._p[b]
        self._s[a] = self._s[b]
        self._t[b] = t
        self._p[b] = p
        self._s[b] = s
        item = self._items[a]
        self._items[a] = self._items[b]
        self._items[b] = item

    cpdef long long push(self, double time, int prio, object item):
        cdef Py_ssize_t i, parent
        cdef long long seq = self._seq
        if self._n == self._cap:
            self._cap *= 2
            self._t = <double*> realloc(self._t, self._cap * sizeof(double))
            self._p = <int*> realloc(self._p, self._cap * sizeof(int))
            self._s = <long long*> realloc(self._s, self._cap * sizeof(long long))
            if self._t == NULL or self._p == NULL or self._s == NULL:
                raise MemoryError()
        self._seq = seq + 1
        i = self._n
        self._t[i] = time
        self._p[i] = prio
        self._s[i] = seq
        self._items.append(item)
        self._n += 1
        while i > 0:
            parent = (i - 1) >> 1
            if self._less(i, parent):
                self._swap(i, parent)
                i = parent
            else:
                break
        return seq

    cpdef tuple pop(self):
        cdef Py_ssize_t i, l, r, m, last
        if self._n == 0:
            raise IndexError("pop from empty event queue")
        out = (self._t[0], self._p[0], self._s[0], self._items[0])
        last = self._n - 1
        if last > 0:
            self._swap(0, last)
        self._items.pop()
        self._n = last
        i = 0
        while True:
            l = 2 * i + 1
            if l >= self._n:
                break
            r = l + 1
            m = l
            if r < self._n and self._less(r, l):
                m = r
            if self._less(m, i):
                self._swap(m, i)
                i = m
            else:
                break
        return out

    cpdef double peek_time(self):
        if self._n == 0:
            return INFINITY
        return self._t[0]

    def __len__(self):
        return self._n


cdef class RadioLedger:
    cdef public int n
    cdef double _pw[NS]
    cdef int* _state
    cdef double* _since
    cdef double* _initial
    cdef double* _remaining
    cdef double* _consumed
    cdef double* _dur
    cdef double* _death
    cdef list _plans
    cdef public object trace

    def __cinit__(self, initial_energy, powers, double start_time=0.0,
                  int initial_state=IDLE_, bint trace=False):
        cdef int i, k
        cdef int n = len(initial_energy)
        if len(powers) != NS:
            raise ValueError("powers must have one entry per radio state")
        self.n = n
        for k in range(NS):
            self._pw[k] = float(powers[k])
        self._pw[DEAD_] = 0.0
        self._state = <int*> malloc(max(n, 1) * sizeof(int))
        self._since = <double*> malloc(max(n, 1) * sizeof(double))
        self._initial = <double*> malloc(max(n, 1) * sizeof(double))
        self._remaining = <double*> malloc(max(n, 1) * sizeof(double))
        self._consumed = <double*> malloc(max(n, 1) * sizeof(double))
        self._dur = <double*> malloc(max(n, 1) * NS * sizeof(double))
        self._death = <double*> malloc(max(n, 1) * sizeof(double))
        for i in range(n):
            self._state[i] = initial_state
            self._since[i] = start_time
            self._initial[i] = float(initial_energy[i])
            self._remaining[i] = self._initial[i]
            self._consumed[i] = 0.0
            self._death[i] = -1.0
            for k in range(NS):
                self._dur[i * NS + k] = 0.0
        self._plans = [[] for _ in range(n)]
        self.trace = [] if trace else None

    def __dealloc__(self):
        free(self._state)
        free(self._since)
        free(self._initial)
        free(self._remaining)
        free(self._consumed)
        free(self._dur)
        free(self._death)

    property powers:
        def __get__(self):
            return [self._pw[k] for k in range(NS)]

    cdef inline void _switch(self, int i, int s, double t):
        cdef int old = self._state[i]
        if old != s:
            if self.trace is not None:
                self.trace.append((t, i, old, s))
            self._state[i] = s

    cdef bint _accrue(self, int i, double t):
        cdef int s = self._state[i]
        cdef double since = self._since[i]
        cdef double dt = t - since
        cdef double p, e, rem, td
        if dt <= 0.0:
            return s == DEAD_
        if s == DEAD_:
            self._dur[i * NS + DEAD_] += dt
            self._since[i] = t
            return True
        p = self._pw[s]
        e = p * dt
        rem = self._remaining[i]
        if p > 0.0 and e >= rem:
            td = since + rem / p
            if td > t:
                td = t
            self._dur[i * NS + s] += td - since
            self._consumed[i] += rem
            self._remaining[i] = 0.0
            self._death[i] = td
            if self.trace is not None:
                self.trace.append((td, i, s, DEAD_))
            self._state[i] = DEAD_
            self._dur[i * NS + DEAD_] += t - td
            self._since[i] = t
            self._plans[i] = []
            return True
        self._dur[i * NS + s] += dt
        self._consumed[i] += e
        self._remaining[i] = rem - e
        self._since[i] = t
        return False

    cpdef int sync(self, int i, double now):
        cdef list plans = <list> self._plans[i]
        cdef double t
        cdef int s
        while plans and (<double> plans[0][0]) <= now:
            entry = plans.pop(0)
            t = entry[0]
            s = entry[1]
            if self._accrue(i, t):
                return DEAD_
            self._switch(i, s, t)
        if self._accrue(i, now):
            return DEAD_
        return self._state[i]

    cpdef int set_state(self, int i, int s, double now):
        if self.sync(i, now) == DEAD_:
            return DEAD_
        self._switch(i, s, now)
        return s

    cpdef plan(self, int i, double t, int s):
        cdef list plans = <list> self._plans[i]
        if plans and t < (<double> plans[len(plans) - 1][0]):
            raise ValueError("planned transitions must be appended in time order")
        plans.append((t, s))

    cpdef clear_plans(self, int i):
        self._plans[i] = []

    cpdef bint has_plans(self, int i):
        return len(<list> self._plans[i]) > 0

    cpdef int state(self, int i):
        return self._state[i]

    cpdef double remaining(self, int i):
        return self._remaining[i]

    cpdef double initial(self, int i):
        return self._initial[i]

    cpdef double consumed(self, int i):
        return self._consumed[i]

    cpdef list durations(self, int i):
        return [self._dur[i * NS + k] for k in range(NS)]

    cpdef double death_time(self, int i):
        return self._death[i]

    cpdef double total_consumed(self, double now):
        cdef int i
        cdef double total = 0.0
        for i in range(self.n):
            self.sync(i, now)
            total += self._consumed[i]
        return total

    cpdef finalize(self, double now):
        cdef int i
        for i in range(self.n):
            self.sync(i, now)


cdef class Channel:
    cdef public list adj
    cdef RadioLedger _ledger
    cdef public bint ideal
    cdef int* _air
    cdef long long* _lock
    cdef char* _garbled
    cdef int* _rx_count
    cdef long long* _epoch
    cdef char* _tx
    cdef public long long collisions
    cdef int n

    def __cinit__(self, adjacency, RadioLedger ledger, ideal=False):
        cdef int i, n = len(adjacency)
        self.n = n
        self.adj = [list(a) for a in adjacency]
        self._ledger = ledger
        self.ideal = bool(ideal)
        self._air = <int*> malloc(max(n, 1) * sizeof(int))
        self._lock = <long long*> malloc(max(n, 1) * sizeof(long long))
        self._garbled = <char*> malloc(max(n, 1) * sizeof(char))
        self._rx_count = <int*> malloc(max(n, 1) * sizeof(int))
        self._epoch = <long long*> malloc(max(n, 1) * sizeof(long long))
        self._tx = <char*> malloc(max(n, 1) * sizeof(char))
        for i in range(n):
            self._air[i] = 0
            self._lock[i] = -1
            self._garbled[i] = 0
            self._rx_count[i] = 0
            self._epoch[i] = 0
            self._tx[i] = 0
        self.collisions = 0

    def __dealloc__(self):
        free(self._air)
        free(self._lock)
        free(self._garbled)
        free(self._rx_count)
        free(self._epoch)
        free(self._tx)

    property ledger:
        def __get__(self):
            return self._ledger

    property air:
        def __get__(self):
            return [self._air[i] for i in range(self.n)]

    property lock:
        def __get__(self):
            return [self._lock[i] for i in range(self.n)]

    property transmitting:
        def __get__(self):
            return [bool(self._tx[i]) for i in range(self.n)]

    cpdef bint busy(self, int i):
        return self._air[i] > 0

    cpdef bint is_transmitting(self, int i):
        return self._tx[i] != 0

    cpdef abort(self, int i):
        self._lock[i] = -1
        self._garbled[i] = 0
        self._epoch[i] += 1

    cpdef list begin(self, int sender, long long tx_id, double now):
        cdef RadioLedger ledger = self._ledger
        cdef list listeners = []
        cdef int v, st
        self.abort(sender)
        ledger.set_state(sender, TRANSMIT_, now)
        self._tx[sender] = 1
        for v in <list> self.adj[sender]:
            self._air[v] += 1
            st = ledger.sync(v, now)
            if st == RECEIVE_ or st == IDLE_:
                if self.ideal:
                    self._rx_count[v] += 1
                    listeners.append((v, self._epoch[v]))
                    if st == IDLE_:
                        ledger.set_state(v, RECEIVE_, now)
                elif self._lock[v] < 0:
                    self._lock[v] = tx_id
                    self._garbled[v] = self._air[v] > 1
                    if st == IDLE_:
                        ledger.set_state(v, RECEIVE_, now)
                else:
                    self._garbled[v] = 1
        return listeners

    cpdef list end(self, int sender, long long tx_id, list listeners, double now):
        cdef RadioLedger ledger = self._ledger
        cdef list delivered = []
        cdef int v, st
        cdef long long ep
        cdef bint alive
        self._tx[sender] = 0
        alive = ledger.set_state(sender, IDLE_, now) != DEAD_
        if self.ideal:
            for v in <list> self.adj[sender]:
                self._air[v] -= 1
            for entry in listeners:
                v = entry[0]
                ep = entry[1]
                self._rx_count[v] -= 1
                st = ledger.sync(v, now)
                if st == RECEIVE_:
                    if alive and ep == self._epoch[v]:
                        delivered.append(v)
                    if self._rx_count[v] == 0:
                        ledger.set_state(v, IDLE_, now)
            return delivered
        for v in <list> self.adj[sender]:
            self._air[v] -= 1
            if self._lock[v] >= 0 and self._air[v] == 0:
                st = ledger.sync(v, now)
                if st == RECEIVE_:
                    if self._garbled[v]:
                        self.collisions += 1
                    elif alive and self._lock[v] == tx_id:
                        delivered.append(v)
                    ledger.set_state(v, IDLE_, now)
                self._lock[v] = -1
                self._garbled[v] = 0
        return delivered


def unit_disk_adjacency(xs, ys, double radio_range):
    cdef int n = len(xs)
    cdef int i, j
    cdef double r2 = radio_range * radio_range
    cdef double xi, yi, dx, dy
    cdef double* cx = <double*> malloc(max(n, 1) * sizeof(double))
    cdef double* cy = <double*> malloc(max(n, 1) * sizeof(double))
    adj = [[] for _ in range(n)]
    try:
        for i in range(n):
            cx[i] = xs[i]
            cy[i] = ys[i]
        for i in range(n):
            xi = cx[i]
            yi = cy[i]
            for j in range(i + 1, n):
                dx = cx[j] - xi
                dy = cy[j] - yi
                if dx * dx + dy * dy <= r2:
                    (<list> adj[i]).append(j)
                    (<list> adj[j]).append(i)
    finally:
        free(cx)
        free(cy)
    return adj


def bfs_hops(adjacency, int source):
    cdef int n = len(adjacency)
    cdef int d = 0
    cdef int u, v
    cdef list hops = [-1] * n
    cdef list frontier, nxt
    hops[source] = 0
    frontier = [source]
    while frontier:
        d += 1
        nxt = []
        for u in frontier:
            for v in <list> adjacency[u]:
                if <int> hops[v] < 0:
                    hops[v] = d
                    nxt.append(v)
        frontier = nxt
    return hops


def hop_diameter(adjacency):
    cdef int n = len(adjacency)
    cdef int s, best = 0, h
    cdef list adj = [list(a) for a in adjacency]
    for s in range(n):
        for h in bfs_hops(adj, s):
            if h > best:
                best = h
    return best
