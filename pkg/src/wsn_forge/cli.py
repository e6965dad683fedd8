"""Command-line entry point: ``wsn-forge run`` and ``wsn-forge compare``."""
from __future__ import annotations

import argparse
import sys

from .domain import ConfigError, WsnError


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _add_run_flags(p):
    p.add_argument("--config", help="flat 'key = value' file; flags override it")
    p.add_argument("--nodes", type=int)
    p.add_argument("--placement", choices=["grid", "uniform", "diffusion", "biased"])
    p.add_argument("--sigma", help="Gaussian spread for diffusion/biased placements (m)")
    p.add_argument("--bias", type=float, help="probability of the Gaussian draw in biased placement")
    p.add_argument("--area-width", dest="area_width", type=float)
    p.add_argument("--area-height", dest="area_height", type=float)
    p.add_argument("--range", dest="radio_range", type=float, help="radio range (m)")
    p.add_argument("--energy", dest="initial_energy", type=float, help="initial energy per node (J)")
    p.add_argument("--stack-size", dest="stack_size", help="buffer capacity in packets, or 'none'")
    p.add_argument("--protocol", help="dash-joined subset of zigbee, irs, esrt, flood")
    p.add_argument("--duty-cycle", dest="duty_cycle", choices=["on", "off", "auto"])
    p.add_argument("--data-rate", dest="data_rate", help="250k or 1000k")
    p.add_argument("--frame-length", dest="frame_length", type=int)
    p.add_argument("--miss-limit", dest="miss_limit", type=int)
    p.add_argument("--rays", type=int, help="initial ray count")
    p.add_argument("--kmax", type=int, help="ray cap before the flood fallback")
    p.add_argument("--corridor", help="ray corridor width (m); default is the radio range")
    p.add_argument("--sources", type=int, help="number of report sources")
    p.add_argument("--f0", type=float, help="initial report frequency (1/s)")
    p.add_argument("--desired-reports", dest="desired_reports", type=float)
    p.add_argument("--epoch", type=float)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--duration", type=float)
    p.add_argument("--runs", type=int)
    p.add_argument("--out", default="results.csv")
    p.add_argument("--backend", choices=["auto", "python", "compiled"], default=None)
    p.add_argument("--quiet", action="store_true")


def build_parser():
    parser = _Parser(prog="wsn-forge", description="Duty-cycled sensor network simulator")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    run = sub.add_parser("run", help="run seeded simulations and write CSV/.dat output")
    _add_run_flags(run)
    cmp_ = sub.add_parser("compare", help="energy reduction of a candidate CSV over a baseline CSV")
    cmp_.add_argument("baseline")
    cmp_.add_argument("candidate")
    return parser


def run_arguments(argv):
    p = _Parser(prog="wsn-forge run")
    _add_run_flags(p)
    return p.parse_args(argv)


def _cmd_run(argv, stdout):
    from . import kernels
    from .harness import config_lines, parse_config, run_experiment

    ns = run_arguments(argv)
    cfg = parse_config(argv)
    core = kernels.select(None if ns.backend in (None, "auto") else ns.backend)
    if not ns.quiet:
        print(f"# backend = {core.BACKEND}", file=stdout)
        for line in config_lines(cfg):
            print(f"# {line}", file=stdout)
    rows, _ = run_experiment(cfg, out=ns.out, core=core)
    failed = [r for r in rows[:-1] if r["error"]]
    agg = rows[-1]
    if not ns.quiet:
        print(f"wrote {ns.out} ({len(rows) - 1} runs, {len(failed)} failed); "
              f"mean energy {agg['total_energy_J'] or 'n/a'} J, "
              f"discovery probability {agg['discovery_found'] or 'n/a'}", file=stdout)
    return 2 if len(failed) == len(rows) - 1 else 0


def _cmd_compare(ns, stdout):
    from .harness import compare_power, read_rows

    res = compare_power(read_rows(ns.baseline), read_rows(ns.candidate))
    print(f"baseline_mean_J = {res['baseline_mean_J']:.6f}", file=stdout)
    print(f"candidate_mean_J = {res['candidate_mean_J']:.6f}", file=stdout)
    print(f"reduction_pct = {res['reduction_pct']:.3f}", file=stdout)
    print(f"in_target_band = {'yes' if res['in_target_band'] else 'no'} (10-19%)", file=stdout)
    return 0


def main(argv=None, stdout=None, stderr=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
        if ns.command == "run":
            return _cmd_run(argv[1:], stdout)
        return _cmd_compare(ns, stdout)
    except _UsageError as exc:
        print(f"wsn-forge: usage error: {exc}", file=stderr)
        return 2
    except ConfigError as exc:
        print(f"wsn-forge: config error: {exc}", file=stderr)
        return 2
    except (WsnError, OSError) as exc:
        print(f"wsn-forge: error: {exc}", file=stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
