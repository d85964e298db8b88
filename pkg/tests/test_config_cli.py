import json

import numpy as np
import pytest

from dyknet import cli
from dyknet import config as cfg
from dyknet import solve_centralized
from dyknet.config import ParseError, ValidationError, emit_config, parse_config

MINIMAL = """
{
  "dimension": 1,
  "nodes": [{"id": 1, "treatment": "prox",
             "function": {"type": "zero"}, "xbar": [0.5]}],
  "edges": [],
  "schedule": {"policy": "round_robin"},
  "rounds": 3
}
"""


def test_parse_minimal_config_runs(tmp_path):
    config = parse_config(MINIMAL)
    assert config.dimension == 1
    assert config.schedule.p_deliver == 1.0  # default
    assert config.cadence == "round"         # default
    out = tmp_path / "m.csv"
    assert cli.run_experiment(config, out_path=str(out)) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == cli.CSV_HEADER
    assert len(lines) == 4


def test_parse_error_carries_position():
    with pytest.raises(ParseError, match="line"):
        parse_config("{ not json }")


def test_validation_errors_name_field():
    bad = json.loads(MINIMAL)
    bad["dimension"] = 0
    with pytest.raises(ValidationError, match="dimension"):
        parse_config(json.dumps(bad))

    bad = json.loads(MINIMAL)
    bad["nodes"][0]["treatment"] = "maybe"
    with pytest.raises(ValidationError, match="treatment"):
        parse_config(json.dumps(bad))

    bad = json.loads(MINIMAL)
    bad["schedule"]["p_deliver"] = 0.0
    with pytest.raises(ValidationError, match="p_deliver"):
        parse_config(json.dumps(bad))


def test_invalid_endpoint_flagged_at_parse_time():
    config = cfg.two_cycle_preset(0, "prox")
    doc = json.loads(emit_config(config))
    doc["edges"].append([1, 7])
    with pytest.raises(ValidationError, match="InvalidEndpoint"):
        parse_config(json.dumps(doc))


def test_roundtrip_parse_emit():
    for seed, mode in ((0, "prox"), (3, "subdiff")):
        config = cfg.two_cycle_preset(seed, mode)
        assert parse_config(emit_config(config)) == config
    minimal = parse_config(MINIMAL)
    assert parse_config(emit_config(minimal)) == minimal


def test_preset_shape_and_modes():
    config = cfg.two_cycle_preset(11, "prox")
    assert config.dimension == 6
    assert len(config.nodes) == 6
    assert len(config.edges) == 7
    assert config.rounds == 1000
    assert all(ns.treatment == "prox" for ns in config.nodes)
    sub = cfg.two_cycle_preset(11, "subdiff")
    assert all(ns.treatment == "subdiff" for ns in sub.nodes)
    # same seed, both modes: identical functions and anchors
    for a, b in zip(config.nodes, sub.nodes):
        assert a.function == b.function
        assert a.xbar == b.xbar


def test_preset_anchor_identity():
    # sum of target gradients + n*(ones - xbar) = 0 by construction
    config = cfg.two_cycle_preset(29, "prox")
    targets = np.array([ns.function.target_gradient for ns in config.nodes])
    xbar = np.array(config.nodes[0].xbar)
    resid = targets.sum(axis=0) + 6.0 * (np.ones(6) - xbar)
    assert np.max(np.abs(resid)) < 1e-12


def test_preset_reference_solution_is_ones():
    config = cfg.two_cycle_preset(31, "subdiff")
    _, objectives, xbar = cfg.build_problem(config)
    ref = solve_centralized(objectives, xbar)
    assert np.max(np.abs(ref.x_star - 1.0)) < 1e-9


def _write_preset(tmp_path, seed=0, mode="prox"):
    path = tmp_path / f"{mode}{seed}.json"
    assert cli.main(["preset", "paper-sec4", "--mode", mode,
                     "--seed", str(seed), "--out", str(path)]) == 0
    return path


def test_cli_preset_check_solve(tmp_path, capsys):
    path = _write_preset(tmp_path)
    assert cli.main(["check", "--config", str(path)]) == 0
    out = capsys.readouterr().out
    assert "6 nodes" in out and "strongly connected" in out
    assert cli.main(["solve", "--config", str(path)]) == 0
    out = capsys.readouterr().out
    assert "x_star" in out


def test_cli_run_writes_csv_with_summary(tmp_path, capsys):
    path = _write_preset(tmp_path)
    out = tmp_path / "run.csv"
    code = cli.main(["run", "--config", str(path), "--out", str(out),
                     "--rounds", "50"])
    assert code == 0
    stdout = capsys.readouterr().out
    assert "invariants=ok" in stdout and "empirical_K=19" in stdout
    lines = out.read_text().splitlines()
    assert lines[0] == cli.CSV_HEADER
    assert len(lines) == 51
    gaps = [float(line.split(",")[3]) for line in lines[1:]]
    assert gaps[-1] < gaps[0]


def test_cli_run_deterministic_bytes(tmp_path):
    path = _write_preset(tmp_path, seed=5, mode="subdiff")
    out1, out2 = tmp_path / "a.csv", tmp_path / "b.csv"
    assert cli.main(["run", "--config", str(path), "--out", str(out1),
                     "--rounds", "80", "--p-deliver", "0.8"]) == 0
    assert cli.main(["run", "--config", str(path), "--out", str(out2),
                     "--rounds", "80", "--p-deliver", "0.8"]) == 0
    assert out1.read_bytes() == out2.read_bytes()


def test_cli_trace_replay_reproduces_csv(tmp_path):
    from dyknet import SchedulePolicy, save_trace, scheduler

    preset_path = _write_preset(tmp_path, seed=2)
    config = parse_config(preset_path.read_text())
    top, _, _ = cfg.build_problem(config)
    source = scheduler.EventSource(SchedulePolicy(kind="round_robin", seed=2), top)
    events = []
    for _ in range(30):
        events.extend(source.generate_round(None))
    trace_path = tmp_path / "run.trace"
    save_trace(trace_path, events)

    doc = json.loads(emit_config(config))
    doc["schedule"] = {"policy": "trace", "trace": str(trace_path)}
    doc["rounds"] = len(events)
    doc["cadence"] = "event"
    cfg_path = tmp_path / "replay.json"
    cfg_path.write_text(json.dumps(doc))

    out1, out2 = tmp_path / "r1.csv", tmp_path / "r2.csv"
    assert cli.main(["run", "--config", str(cfg_path), "--out", str(out1)]) == 0
    assert cli.main(["run", "--config", str(cfg_path), "--out", str(out2)]) == 0
    assert out1.read_bytes() == out2.read_bytes()
    assert len(out1.read_text().splitlines()) == len(events) + 1


def test_cli_exit_codes(tmp_path, capsys):
    missing = tmp_path / "nope.json"
    assert cli.main(["run", "--config", str(missing)]) == cli.EXIT_IO

    bad = tmp_path / "bad.json"
    bad.write_text("{")
    assert cli.main(["check", "--config", str(bad)]) == cli.EXIT_CONFIG

    # valid JSON but not strongly connected
    doc = {
        "dimension": 1,
        "nodes": [
            {"id": 1, "treatment": "prox", "function": {"type": "zero"}, "xbar": [0.0]},
            {"id": 2, "treatment": "prox", "function": {"type": "zero"}, "xbar": [1.0]},
        ],
        "edges": [[1, 2]],
        "rounds": 1,
    }
    notsc = tmp_path / "notsc.json"
    notsc.write_text(json.dumps(doc))
    assert cli.main(["check", "--config", str(notsc)]) == cli.EXIT_CONFIG
    capsys.readouterr()


def test_cli_consensus_only_config(tmp_path):
    doc = {
        "dimension": 2,
        "nodes": [{"id": i, "treatment": "prox", "function": {"type": "zero"},
                   "xbar": [float(i), float(-i)]} for i in range(1, 7)],
        "edges": [list(e) for e in cfg.BENCHMARK_EDGES],
        "schedule": {"policy": "round_robin", "seed": 4},
        "rounds": 150,
    }
    path = tmp_path / "consensus.json"
    path.write_text(json.dumps(doc))
    out = tmp_path / "consensus.csv"
    assert cli.main(["run", "--config", str(path), "--out", str(out)]) == 0
    last = out.read_text().splitlines()[-1].split(",")
    assert float(last[5]) <= 1e-8  # consensus_residual column


def test_cli_starving_trace_exits_with_invariant_code(tmp_path):
    # a node that only ever broadcasts loses its weight; the local-min guard
    # must trip and surface as exit code 3
    from dyknet import broadcast, local_min, save_trace

    events = [broadcast(1)] * 45 + [local_min(1)]
    trace_path = tmp_path / "starve.trace"
    save_trace(trace_path, events)
    doc = {
        "dimension": 1,
        "nodes": [
            {"id": 1, "treatment": "prox", "function": {"type": "zero"}, "xbar": [0.0]},
            {"id": 2, "treatment": "prox", "function": {"type": "zero"}, "xbar": [1.0]},
        ],
        "edges": [[1, 2], [2, 1]],
        "schedule": {"policy": "trace", "trace": str(trace_path)},
        "rounds": len(events),
        "cadence": "event",
    }
    path = tmp_path / "starve.json"
    path.write_text(json.dumps(doc))
    assert cli.main(["run", "--config", str(path),
                     "--out", str(tmp_path / "s.csv")]) == cli.EXIT_INVARIANT


def test_cli_unwritable_output_is_io_error(tmp_path):
    path = _write_preset(tmp_path)
    assert cli.main(["run", "--config", str(path), "--rounds", "2",
                     "--out", str(tmp_path / "no" / "dir" / "x.csv")]) == cli.EXIT_IO


def test_csv_floats_have_17_significant_digits():
    from dyknet.cli import _fmt
    assert _fmt(1.0 / 3.0) == "0.33333333333333331"
    assert float(_fmt(np.pi)) == np.pi
