"""The numba-compiled kernels and the pure-Python fallback must agree bit
for bit: both execute the same loop source, so CSVs from the two backends
are byte-identical."""

import os
import subprocess
import sys

import pytest

from dyknet import cli


def _run_cli(args, env_flag, cwd):
    env = dict(os.environ)
    env["DYKNET_NUMBA"] = env_flag
    proc = subprocess.run([sys.executable, "-m", "dyknet.cli", *args],
                          capture_output=True, text=True, env=env, cwd=cwd)
    assert proc.returncode == 0, proc.stderr
    return proc


def test_backend_flag_selects_path(tmp_path):
    code = ("import dyknet.kernels as k; print(k.backend_name())")
    env = dict(os.environ, DYKNET_NUMBA="0")
    out = subprocess.run([sys.executable, "-c", code], capture_output=True,
                         text=True, env=env)
    assert out.stdout.strip() == "python"
    env["DYKNET_NUMBA"] = "1"
    out = subprocess.run([sys.executable, "-c", code], capture_output=True,
                         text=True, env=env)
    assert out.stdout.strip() == "numba"


@pytest.mark.parametrize("mode,p", [("prox", "1.0"), ("subdiff", "0.8")])
def test_backends_produce_identical_csv(tmp_path, mode, p):
    cfg_path = tmp_path / "bench.json"
    assert cli.main(["preset", "paper-sec4", "--mode", mode, "--seed", "9",
                     "--out", str(cfg_path)]) == 0
    outs = {}
    for flag in ("1", "0"):
        out = tmp_path / f"run_{mode}_{flag}.csv"
        _run_cli(["run", "--config", str(cfg_path), "--out", str(out),
                  "--rounds", "40", "--p-deliver", p], flag, tmp_path)
        outs[flag] = out.read_bytes()
    assert outs["1"] == outs["0"]
