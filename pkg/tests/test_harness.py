import csv
import io

import pytest

from wsn_forge.domain import ConfigError
from wsn_forge.harness import (CSV_COLUMNS, ExperimentConfig, compare_power, parse_config, parse_rate,
                               parse_stack, read_rows, reference_configs, rows_to_csv, run_experiment,
                               run_row, simulate, stack_name)

from conftest import CORES

SMALL = dict(nodes=30, area_width=60.0, area_height=60.0, duration=4.0, sources=3)


def test_flag_parse_gives_combined_stack():
    cfg = parse_config(["--nodes", "100", "--placement", "uniform", "--seed", "42",
                        "--protocol", "zigbee-irs-esrt-flood"])
    assert cfg.components == {"zigbee", "irs", "esrt", "flood"}
    assert cfg.protocol == "zigbee-irs-esrt-flood"
    assert cfg.duty and cfg.nodes == 100 and cfg.seed == 42


def test_too_few_nodes():
    with pytest.raises(ConfigError) as err:
        parse_config(["--nodes", "1"])
    assert err.value.key == "nodes"


def test_flags_override_file():
    cfg = parse_config(["--data-rate", "1000k"], file_text="data_rate = 250k\nnodes = 12\n")
    assert cfg.data_rate == 1_000_000 and cfg.nodes == 12


def test_config_errors_name_the_key():
    for text, key in [("frobnicate = 1", "frobnicate"), ("nodes = many", "nodes"),
                      ("protocol = zigbee-tcp", "protocol"), ("duty_cycle = on\nprotocol = flood", "duty_cycle"),
                      ("p_sleep = 1", "p_sleep"), ("data_rate = fast", "data_rate")]:
        with pytest.raises(ConfigError) as err:
            parse_config(file_text=text)
        assert err.value.key == key, text
    with pytest.raises(ConfigError):
        parse_config(file_text="no equals sign here")


def test_stack_and_rate_names():
    assert stack_name(parse_stack("flood-zigbee")) == "zigbee-flood"
    assert parse_rate("250k") == 250_000 and parse_rate("1000kbps") == 1_000_000
    assert parse_rate("1M") == 1_000_000


def test_compare_arithmetic():
    base = [{"run_id": "0", "n_nodes": "10", "placement": "uniform", "total_energy_J": "100", "error": ""}]
    cand = [{"run_id": "0", "n_nodes": "10", "placement": "uniform", "total_energy_J": "85", "error": ""}]
    res = compare_power(base, cand)
    assert res["reduction_pct"] == pytest.approx(15.0) and res["in_target_band"]
    assert compare_power(base, base)["reduction_pct"] == 0.0
    with pytest.raises(ConfigError):
        compare_power(base, [dict(cand[0], n_nodes="11")])
    with pytest.raises(ConfigError):
        compare_power([], cand)


def test_ten_runs_give_eleven_rows():
    rows, outs = run_experiment(ExperimentConfig(runs=10, protocol="flood", **SMALL))
    assert len(rows) == 11 and rows[-1]["run_id"] == "aggregate"
    assert [r["seed"] for r in rows[:-1]] == [str(42 + k) for k in range(10)]
    assert list(rows[0]) == CSV_COLUMNS


def test_identical_runs_write_identical_files(tmp_path):
    cfg = ExperimentConfig(runs=1, **SMALL)
    blobs = []
    for name in ("a", "b"):
        out = tmp_path / name / "res.csv"
        run_experiment(cfg, out=str(out))
        blobs.append([(out.parent / f).read_bytes()
                      for f in ("res.csv", "res_power.dat", "res_latency.dat", "res_config.txt")])
    assert blobs[0] == blobs[1]
    rows = read_rows(str(tmp_path / "a" / "res.csv"))
    assert len(rows) == 2


def test_run_order_does_not_matter():
    cfg = ExperimentConfig(runs=3, **SMALL)
    fwd = [run_row(cfg, k, simulate(cfg, cfg.seed + k)) for k in range(3)]
    back = [run_row(cfg, k, simulate(cfg, cfg.seed + k)) for k in reversed(range(3))]
    key = lambda r: r["run_id"]
    assert rows_to_csv(sorted(fwd, key=key)) == rows_to_csv(sorted(back, key=key))


def test_disconnected_draw_is_an_error_row():
    cfg = ExperimentConfig(nodes=5, area_width=500.0, area_height=500.0, radio_range=10.0,
                           duration=1.0, sources=2)
    rows, outs = run_experiment(cfg)
    assert "DisconnectedTopologyError" in rows[0]["error"]
    assert rows[-1]["error"] == "all runs failed"


def test_combined_stack_run_is_sane():
    cfg = ExperimentConfig(duration=20.0, data_rate=1_000_000)
    out = simulate(cfg, 42)
    rec = out.record
    assert out.error is None and rec.discovery_found
    assert 0 < rec.latency_target <= rec.latency
    assert out.reports_delivered >= 0.9 * out.reports_generated
    # ESRT settles into its band once the first estimate is in
    assert any(region == "OOR" for _, _, region, _ in out.esrt_history)
    assert all(e <= cfg.initial_energy for e in rec.per_node_energy)


def test_reference_configs():
    base, cand = reference_configs()
    assert (base.protocol, base.duty, base.data_rate) == ("flood", False, 250_000)
    assert (cand.protocol, cand.duty, cand.data_rate) == ("zigbee-irs-esrt-flood", True, 1_000_000)
    assert base.runs == cand.runs == 10 and base.seed == 42


@pytest.mark.xfail(strict=True, reason="drops under the combined stack come from setup contention, "
                                       "which grows with density; see the decisions ledger")
def test_diffusion_drops_no_more_than_uniform():
    means = {}
    for pl in ("uniform", "diffusion", "biased"):
        rows, _ = run_experiment(ExperimentConfig(placement=pl, runs=5, duration=5.0))
        means[pl] = float(rows[-1]["drops"])
    assert means["diffusion"] <= means["uniform"]


@pytest.mark.skipif(len(CORES) < 2, reason="compiled core not built")
@pytest.mark.parametrize("protocol", ["flood", "zigbee-irs-esrt-flood"])
def test_backends_produce_identical_rows(protocol):
    cfg = ExperimentConfig(protocol=protocol, duration=10.0, data_rate=1_000_000)
    rows = [run_row(cfg, 0, simulate(cfg, 42, core)) for core in CORES]
    assert rows[0] == rows[1]


def test_backend_env_var(monkeypatch):
    from wsn_forge import kernels
    monkeypatch.setenv("WSN_FORGE_BACKEND", "python")
    assert kernels.select().BACKEND == "python"
    if kernels.compiled_core is None:
        monkeypatch.setenv("WSN_FORGE_BACKEND", "compiled")
        with pytest.raises(ImportError):
            kernels.select()


def test_stack_needs_a_routing_protocol():
    with pytest.raises(ConfigError):
        parse_stack("zigbee")
    with pytest.raises(ConfigError):
        parse_stack("")
    # ESRT alone rides on flooding
    assert parse_stack("esrt") == {"esrt", "flood"}
    assert parse_stack("irs") == {"irs"}


@pytest.mark.parametrize("protocol", ["irs", "flood", "esrt", "irs-esrt", "zigbee-irs", "zigbee-flood",
                                      "zigbee-esrt-flood", "zigbee-irs-esrt"])
def test_every_stack_runs(protocol):
    cfg = ExperimentConfig(protocol=protocol, **SMALL)
    out = simulate(cfg, 42)
    assert out.error is None, out.error
    rec = out.record
    assert rec.total_energy > 0 and rec.sent_bytes <= rec.sending_bytes
    assert 0 < out.reports_delivered <= out.reports_generated
