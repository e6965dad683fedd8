"""Experiment configuration, scenario assembly, CSV/.dat output and the
baseline-vs-candidate power comparison."""
from __future__ import annotations

import csv
import io
import math
import os
from dataclasses import asdict, dataclass, field, fields
from typing import Optional

import numpy as np

from .domain import ConfigError, PacketKind, WsnError
from .engine import Simulator
from .esrt import EsrtController, EsrtState, ReportSources
from .flooding import FloodRouter
from .irs import FLOOD, RaySearch
from .metrics import summarize
from .placement import PlacementSpec, build_topology, canonical_kind
from .power import (CsmaMac, EnergyModel, TdmaMac, allocate_slots, csma_tree_setup,
                    default_slot_duration, setup_tree)

CSV_COLUMNS = ["run_id", "seed", "n_nodes", "placement", "stack", "data_rate", "total_energy_J",
               "latency_target_s", "latency_sink_s", "sent_bytes", "recv_bytes", "sending_bytes",
               "drops", "collisions", "discovery_found", "lifetime_s", "dead_nodes",
               "sink_disconnect_s", "error"]

COMPONENTS = ("zigbee", "irs", "esrt", "flood")
TARGET_BAND = (10.0, 19.0)


def parse_stack(name):
    """Component set for a dash-joined protocol name such as 'zigbee-irs-esrt-flood'."""
    parts = [p for p in str(name).lower().replace("_", "-").split("-") if p]
    if not parts:
        raise ConfigError("protocol", "empty protocol stack")
    bad = [p for p in parts if p not in COMPONENTS]
    if bad:
        raise ConfigError("protocol", f"unknown component(s) {bad}; choose from {COMPONENTS}")
    comps = set(parts)
    if comps == {"esrt"}:
        comps.add("flood")
    if not comps & {"irs", "flood"}:
        raise ConfigError("protocol", "at least one routing protocol (irs or flood) is required")
    return frozenset(comps)


def stack_name(components):
    return "-".join(c for c in COMPONENTS if c in components)


def parse_rate(value):
    s = str(value).strip().lower().replace("bps", "")
    mult = 1
    if s.endswith("k"):
        mult, s = 1000, s[:-1]
    elif s.endswith("m"):
        mult, s = 1_000_000, s[:-1]
    try:
        rate = float(s) * mult
    except ValueError:
        raise ConfigError("data_rate", f"cannot parse {value!r}") from None
    if rate <= 0:
        raise ConfigError("data_rate", "data rate must be positive")
    return int(rate) if rate == int(rate) else rate


def format_rate(rate):
    if rate % 1_000 == 0:
        return f"{int(rate) // 1000}k"
    return repr(rate)


@dataclass(frozen=True)
class ExperimentConfig:
    nodes: int = 100
    placement: str = "uniform"
    sigma: Optional[float] = None
    bias: float = 0.5
    area_width: float = 100.0
    area_height: float = 100.0
    radio_range: float = 25.0
    initial_energy: float = 5.0
    stack_size: Optional[int] = 8
    protocol: str = "zigbee-irs-esrt-flood"
    duty_cycle: str = "auto"
    data_rate: float = 250_000
    p_tx: float = 0.060
    p_rx: float = 0.045
    p_idle: float = 0.045
    p_sleep: float = 3e-6
    wake_latency: float = 0.015
    frame_length: int = 16
    miss_limit: int = 1
    slot_guard: float = 0.001
    max_packet_bytes: int = 127
    report_bytes: int = 32
    query_bytes: int = 24
    reply_bytes: int = 32
    control_bytes: int = 16
    rays: int = 4
    kmax: int = 64
    corridor: Optional[float] = None
    sources: int = 5
    f0: float = 0.5
    desired_reports: float = 5.0
    epoch: float = 2.0
    epsilon: float = 0.05
    f_min: float = 0.1
    f_max: float = 100.0
    search_delay: float = 1.0
    sample_interval: float = 1.0
    seed: int = 42
    duration: float = 60.0
    runs: int = 1

    def __post_init__(self):
        object.__setattr__(self, "placement", canonical_kind(self.placement))
        comps = parse_stack(self.protocol)
        object.__setattr__(self, "protocol", stack_name(comps))
        if self.duty_cycle not in ("auto", "on", "off"):
            raise ConfigError("duty_cycle", "expected on, off or auto")
        if self.duty_cycle == "on" and "zigbee" not in comps:
            raise ConfigError("duty_cycle", "duty cycling needs the zigbee component in the stack")
        if self.nodes < 2:
            raise ConfigError("nodes", f"need at least 2 nodes, got {self.nodes}")
        if self.duration <= 0:
            raise ConfigError("duration", "duration must be positive")
        if self.runs < 1:
            raise ConfigError("runs", "runs must be at least 1")
        if self.stack_size is not None and self.stack_size < 1:
            raise ConfigError("stack_size", "stack size must be at least 1")
        if self.sources < 0 or self.sources > self.nodes - 1:
            raise ConfigError("sources", "sources must be between 0 and nodes - 1")
        for key in ("report_bytes", "query_bytes", "reply_bytes", "control_bytes"):
            if not 0 < getattr(self, key) <= self.max_packet_bytes:
                raise ConfigError(key, "packet size must be positive and within max_packet_bytes")
        if self.rays < 1 or self.kmax < self.rays:
            raise ConfigError("rays", "need 1 <= rays <= kmax")
        self.energy_model()

    @property
    def components(self):
        return parse_stack(self.protocol)

    @property
    def duty(self):
        if self.duty_cycle == "auto":
            return "zigbee" in self.components
        return self.duty_cycle == "on"

    def energy_model(self):
        return EnergyModel(self.p_tx, self.p_rx, self.p_idle, self.p_sleep, self.wake_latency,
                           self.data_rate)

    def placement_spec(self, seed):
        return PlacementSpec(self.placement, self.nodes, (self.area_width, self.area_height),
                             seed, self.sigma, self.bias)

    @property
    def slot_duration(self):
        return default_slot_duration(self.max_packet_bytes, self.data_rate, self.slot_guard)


_FIELDS = {f.name: f for f in fields(ExperimentConfig)}
_INT_KEYS = {"nodes", "stack_size", "frame_length", "miss_limit", "max_packet_bytes", "report_bytes",
             "query_bytes", "reply_bytes", "control_bytes", "rays", "kmax", "sources", "seed", "runs"}
_STR_KEYS = {"placement", "protocol", "duty_cycle"}
_OPTIONAL = {"sigma", "corridor", "stack_size"}


def coerce(key, value):
    if key not in _FIELDS:
        raise ConfigError(key, "unknown configuration key")
    if value is None:
        return None
    if key == "data_rate":
        return parse_rate(value)
    if key in _STR_KEYS:
        return str(value).strip()
    s = str(value).strip()
    if key in _OPTIONAL and s.lower() in ("", "none", "inf", "unbounded"):
        return None
    try:
        if key in _INT_KEYS:
            return int(s)
        return float(s)
    except ValueError:
        raise ConfigError(key, f"cannot parse {value!r}") from None


def parse_config_text(text):
    """Flat ``key = value`` lines; '#' starts a comment."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}", f"expected 'key = value', got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        out[key] = coerce(key, value)
    return out


def make_config(values):
    try:
        return ExperimentConfig(**values)
    except TypeError as exc:
        raise ConfigError("config", str(exc)) from None


def parse_config(argv=None, file_text=None, **overrides):
    """Resolve a config from defaults, then a config file, then flags.

    ``argv`` is the flag list of ``wsn-forge run`` (``--config PATH`` reads a
    file); ``file_text`` supplies config-file content directly.
    """
    from .cli import run_arguments

    values = {}
    flags = {}
    if argv is not None:
        ns = run_arguments(argv)
        flags = {k: v for k, v in vars(ns).items() if v is not None and k in _FIELDS}
        if getattr(ns, "config", None):
            with open(ns.config) as fh:
                values.update(parse_config_text(fh.read()))
    if file_text is not None:
        values.update(parse_config_text(file_text))
    for k, v in flags.items():
        values[k] = coerce(k, v)
    for k, v in overrides.items():
        values[k] = coerce(k, v)
    return make_config(values)


def config_lines(cfg):
    out = []
    for k, v in asdict(cfg).items():
        if k == "data_rate":
            v = format_rate(v)
        out.append(f"{k} = {'none' if v is None else v}")
    return out


# ---------------------------------------------------------------------------
# one run


@dataclass
class RunOutput:
    seed: int
    record: object = None
    error: Optional[str] = None
    search: object = None
    power_series: list = field(default_factory=list)
    latency_series: list = field(default_factory=list)
    esrt_history: list = field(default_factory=list)
    traffic_start: float = 0.0
    reports_generated: int = 0
    reports_delivered: int = 0
    sim: object = None


def choose_roles(n, seed, n_sources):
    """Target and report sources, drawn from a stream independent of placement."""
    rng = np.random.default_rng([seed, 1])
    target = int(rng.integers(1, n))
    others = [v for v in range(1, n) if v != target]
    k = min(n_sources, len(others))
    sources = sorted(int(v) for v in rng.choice(others, size=k, replace=False)) if k else []
    return target, sources


def build_scenario(cfg, seed, core=None, trace=False):
    """Assemble topology, MACs and protocols; returns (sim, parts dict)."""
    comps = cfg.components
    target, sources = choose_roles(cfg.nodes, seed, cfg.sources)
    topo = build_topology(cfg.placement_spec(seed), cfg.radio_range, cfg.initial_energy, target)
    energy = cfg.energy_model()
    sim = Simulator(topo, energy, stack_size=cfg.stack_size, max_packet_bytes=cfg.max_packet_bytes,
                    core=core, seed=seed, trace=trace)
    csma = CsmaMac(sim)
    slot = cfg.slot_duration
    frame = cfg.frame_length * slot
    parts = {"csma": csma, "target": target, "sources": sources, "frame_duration": frame}
    zigbee = "zigbee" in comps
    tree = None
    if zigbee:
        tree = csma_tree_setup(sim, csma, max_children=cfg.frame_length - 1,
                               control_bytes=cfg.control_bytes)
        schedule = allocate_slots(tree, cfg.frame_length, slot, cfg.miss_limit)
        parts["schedule"] = schedule
        parts["tdma"] = TdmaMac(sim, tree, schedule, duty_cycle=cfg.duty, start=sim.now)
    parts["tree"] = tree
    return sim, parts


def simulate(cfg, seed, core=None, trace=False, keep_sim=False):
    out = RunOutput(seed)
    try:
        sim, parts = build_scenario(cfg, seed, core, trace)
    except WsnError as exc:
        out.error = f"{type(exc).__name__}: {exc}"
        return out
    comps = cfg.components
    csma = parts["csma"]
    sink = sim.topology.sink
    t0 = sim.now
    out.traffic_start = t0
    esrt = None
    delivered = [0]

    def collect(packet):
        delivered[0] += 1
        out.latency_series.append((sim.now, "report", sim.now - packet.created_at))
        if esrt is not None:
            esrt.collect(packet)

    # report transport
    if "zigbee" in comps:
        def route(s, p):
            sim.enqueue(s, p, "up")

        def on_report(v, p, sender):
            if v == sink:
                collect(p)
            else:
                sim.enqueue(v, p.forwarded(v), "up")
        sim.handlers[PacketKind.REPORT] = on_report
    elif "flood" in comps:
        rflood = FloodRouter(sim, csma, on_first=lambda v, p, s: collect(p) if v == sink else None)
        rflood.install(PacketKind.REPORT)
        route = rflood.start_flood
    else:
        tree = setup_tree(sim.topology)

        def route(s, p):
            csma.send(s, p.to(tree.parent[s]))

        def on_report(v, p, sender):
            if v == sink:
                collect(p)
            else:
                csma.send(v, p.forwarded(v, dest=tree.parent[v]))
        sim.handlers[PacketKind.REPORT] = on_report

    reports = ReportSources(sim, parts["sources"], cfg.f0, route, cfg.report_bytes)
    if "esrt" in comps:
        state = EsrtState(cfg.desired_reports, cfg.epsilon, cfg.epoch, cfg.f0, cfg.f_min, cfg.f_max)
        transport = "down" if "zigbee" in comps else "csma"
        cflood = FloodRouter(sim, csma, transport, on_first=lambda v, p, s: esrt.on_control(v, p, s))
        cflood.install(PacketKind.CONTROL)
        esrt = EsrtController(sim, state, reports, cflood, cfg.control_bytes)
        esrt.start(t0)
    reports.start(t0)

    search = None
    if "irs" in comps or "flood" in comps:
        schedule = None if "irs" in comps else [FLOOD]
        search = RaySearch(sim, csma, k0=cfg.rays, k_max=cfg.kmax, corridor_width=cfg.corridor,
                           schedule=schedule, frame_duration=parts["frame_duration"],
                           query_bytes=cfg.query_bytes, reply_bytes=cfg.reply_bytes)
        t_search = t0 + cfg.search_delay
        if t_search < cfg.duration:
            search.start(t_search)

    last = [0.0, 0.0]

    def sample():
        e = sim.ledger.total_consumed(sim.now)
        out.power_series.append((sim.now, (e - last[1]) / (sim.now - last[0])))
        last[0], last[1] = sim.now, e
        nxt = sim.now + cfg.sample_interval
        if nxt <= cfg.duration:
            sim.at(nxt, sample)

    if cfg.sample_interval > 0 and sim.now + cfg.sample_interval <= cfg.duration:
        last[1] = sim.ledger.total_consumed(sim.now)
        last[0] = sim.now
        sim.at(sim.now + cfg.sample_interval, sample)

    out.record = sim.run_until(cfg.duration)
    if search is not None and search.result is not None:
        out.search = search.result
        if search.result.found:
            out.latency_series.append((search.result.issued_at + search.result.latency, "search",
                                       search.result.latency))
    if esrt is not None:
        out.esrt_history = list(esrt.state.history)
    out.reports_generated = reports.generated
    out.reports_delivered = delivered[0]
    if keep_sim:
        out.sim = sim
    return out


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def run_row(cfg, run_id, out):
    row = {"run_id": str(run_id), "seed": str(out.seed), "n_nodes": str(cfg.nodes),
           "placement": cfg.placement, "stack": cfg.protocol, "data_rate": format_rate(cfg.data_rate)}
    rec = out.record
    if rec is None:
        for c in CSV_COLUMNS[6:]:
            row[c] = ""
        row["error"] = out.error or "unknown error"
        return row
    row.update({
        "total_energy_J": _fmt(rec.total_energy),
        "latency_target_s": _fmt(rec.latency_target),
        "latency_sink_s": _fmt(rec.latency),
        "sent_bytes": _fmt(rec.sent_bytes),
        "recv_bytes": _fmt(rec.recv_bytes),
        "sending_bytes": _fmt(rec.sending_bytes),
        "drops": _fmt(rec.drops),
        "collisions": _fmt(rec.collisions),
        "discovery_found": _fmt(bool(rec.discovery_found)),
        "lifetime_s": _fmt(rec.lifetime),
        "dead_nodes": _fmt(rec.dead_nodes),
        "sink_disconnect_s": _fmt(rec.sink_disconnect),
        "error": "",
    })
    return row


def aggregate_row(cfg, outputs):
    recs = [o.record for o in outputs if o.record is not None]
    row = {"run_id": "aggregate", "seed": "", "n_nodes": str(cfg.nodes), "placement": cfg.placement,
           "stack": cfg.protocol, "data_rate": format_rate(cfg.data_rate)}
    if not recs:
        for c in CSV_COLUMNS[6:]:
            row[c] = ""
        row["error"] = "all runs failed"
        return row
    agg = summarize(recs)
    names = {"total_energy_J": "total_energy", "latency_target_s": "latency_target",
             "latency_sink_s": "latency", "sent_bytes": "sent_bytes", "recv_bytes": "recv_bytes",
             "sending_bytes": "sending_bytes", "drops": "drops", "collisions": "collisions",
             "lifetime_s": "lifetime", "dead_nodes": "dead_nodes",
             "sink_disconnect_s": "sink_disconnect"}
    for col, key in names.items():
        m = agg[key]["mean"]
        row[col] = _fmt(None if m is None else float(m))
    row["discovery_found"] = _fmt(float(agg["discovery_probability"]))
    failed = len(outputs) - len(recs)
    row["error"] = f"{failed} run(s) failed" if failed else ""
    return row


def rows_to_csv(rows):
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow(r)
    return buf.getvalue()


def run_experiment(cfg, out=None, core=None, progress=None):
    """Run ``cfg.runs`` seeded simulations (seed, seed+1, ...).

    Returns (rows, outputs); rows end with the aggregate row. When ``out`` is a
    CSV path the CSV, ``<stem>_power.dat``, ``<stem>_latency.dat`` and
    ``<stem>_config.txt`` are written next to it.
    """
    outputs = []
    rows = []
    for i in range(cfg.runs):
        o = simulate(cfg, cfg.seed + i, core)
        outputs.append(o)
        rows.append(run_row(cfg, i, o))
        if progress is not None:
            progress(i, o)
    rows.append(aggregate_row(cfg, outputs))
    if out is not None:
        write_outputs(cfg, rows, outputs, out)
    return rows, outputs


def write_outputs(cfg, rows, outputs, path):
    stem, _ = os.path.splitext(path)
    d = os.path.dirname(path)
    if d:
        os.makedirs(d, exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(rows_to_csv(rows))
    with open(stem + "_power.dat", "w") as fh:
        fh.write("# run_id time_s power_W\n")
        for i, o in enumerate(outputs):
            for t, p in o.power_series:
                fh.write(f"{i} {t!r} {p!r}\n")
            fh.write("\n\n")
    with open(stem + "_latency.dat", "w") as fh:
        fh.write("# run_id time_s kind latency_s\n")
        for i, o in enumerate(outputs):
            for t, kind, lat in o.latency_series:
                fh.write(f"{i} {t!r} {kind} {lat!r}\n")
            fh.write("\n\n")
    with open(stem + "_config.txt", "w") as fh:
        fh.write("\n".join(config_lines(cfg)) + "\n")


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def _run_rows(rows):
    out = []
    for r in rows:
        if str(r.get("run_id")) == "aggregate" or r.get("error"):
            continue
        if r.get("total_energy_J") in (None, ""):
            continue
        out.append(r)
    return out


def compare_power(baseline_rows, candidate_rows):
    """Percentage energy reduction of the candidate relative to the baseline."""
    base = _run_rows(baseline_rows)
    cand = _run_rows(candidate_rows)
    if not base or not cand:
        raise ConfigError("rows", "both row sets need at least one successful run")
    for key in ("n_nodes", "placement"):
        bk = {str(r[key]) for r in base}
        ck = {str(r[key]) for r in cand}
        if bk != ck or len(bk) != 1:
            raise ConfigError(key, f"scenario mismatch: baseline {sorted(bk)} vs candidate {sorted(ck)}")
    mb = math.fsum(float(r["total_energy_J"]) for r in base) / len(base)
    mc = math.fsum(float(r["total_energy_J"]) for r in cand) / len(cand)
    reduction = 100.0 * (1.0 - mc / mb)
    return {"baseline_mean_J": mb, "candidate_mean_J": mc, "reduction_pct": reduction,
            "in_target_band": TARGET_BAND[0] <= reduction <= TARGET_BAND[1]}


def reference_configs(runs=10, seed=42, **kw):
    """Baseline (flooding, always on, 250 kbps) and candidate (full stack, 1000 kbps)."""
    common = dict(nodes=100, placement="uniform", seed=seed, runs=runs, duration=60.0)
    common.update(kw)
    baseline = ExperimentConfig(protocol="flood", duty_cycle="off", data_rate=250_000, **common)
    candidate = ExperimentConfig(protocol="zigbee-irs-esrt-flood", duty_cycle="on",
                                 data_rate=1_000_000, **common)
    return baseline, candidate


__all__ = ["CSV_COLUMNS", "ExperimentConfig", "parse_config", "parse_stack", "run_experiment",
           "compare_power", "simulate", "reference_configs"]
