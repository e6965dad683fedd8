"""Compiled core vs pure-Python fallback.

Times the event queue, the channel kernel and whole simulations on each
available backend and prints the speedup.

    python3 benchmarks/bench_core.py [--repeat 3] [--quick]
"""
import argparse
import random
import time

from wsn_forge import kernels
from wsn_forge.harness import reference_configs, simulate
from wsn_forge.placement import PlacementSpec, build_topology


def bench_queue(core, n):
    rng = random.Random(1)
    times = [rng.random() for _ in range(n)]
    t0 = time.perf_counter()
    q = core.EventQueue()
    for t in times:
        q.push(t, 1, None)
    while len(q):
        q.pop()
    return time.perf_counter() - t0


def bench_channel(core, n):
    topo = build_topology(PlacementSpec("uniform", 200, (100, 100), 3), 25.0, 1e9)
    led = core.RadioLedger([1e9] * topo.n, [0.06, 0.045, 0.045, 3e-6, 0.045, 0.0], 0.0, 2, False)
    ch = core.Channel(topo.adjacency, led, False)
    rng = random.Random(2)
    t0 = time.perf_counter()
    now = 0.0
    for k in range(n):
        s = rng.randrange(topo.n)
        if ch.is_transmitting(s):
            continue
        ls = ch.begin(s, k, now)
        now += 0.001
        ch.end(s, k, ls, now)
    return time.perf_counter() - t0


def bench_sim(core, cfg):
    t0 = time.perf_counter()
    simulate(cfg, cfg.seed, core)
    return time.perf_counter() - t0


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--quick", action="store_true", help="smaller workloads")
    args = ap.parse_args(argv)
    scale = 0.2 if args.quick else 1.0
    base, cand = reference_configs(runs=1, duration=60.0 * scale)
    cases = [
        ("event queue push+pop", lambda c: bench_queue(c, int(200_000 * scale))),
        ("channel begin/end", lambda c: bench_channel(c, int(50_000 * scale))),
        ("baseline run (flood)", lambda c: bench_sim(c, base)),
        ("candidate run (full stack)", lambda c: bench_sim(c, cand)),
    ]
    cores = [kernels.python_core]
    if kernels.compiled_core is not None:
        cores.append(kernels.compiled_core)
    else:
        print("compiled core not built; timing the Python fallback only")
    print(f"{'case':28s}" + "".join(f"{c.BACKEND:>12s}" for c in cores) + "     speedup")
    for name, fn in cases:
        best = [min(fn(c) for _ in range(args.repeat)) for c in cores]
        speed = f"{best[0] / best[1]:9.2f}x" if len(best) == 2 else ""
        print(f"{name:28s}" + "".join(f"{b:11.3f}s" for b in best) + "  " + speed)


if __name__ == "__main__":
    main()
