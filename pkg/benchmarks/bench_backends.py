#!/usr/bin/env python3
"""Benchmark the compiled kernels against the pure-Python fallback.

Each backend runs in its own interpreter (the backend is chosen at import
time from DYKNET_NUMBA).  The first numba figure includes JIT compilation
on a cold cache; the steady-state figure reuses the compiled kernels.

Usage: python3 benchmarks/bench_backends.py [--rounds 300] [--repeats 3]
"""

import argparse
import os
import subprocess
import sys

SNIPPET = r"""
import time
import dyknet.kernels as kernels
from dyknet import config as cfg
from dyknet import scheduler

rounds = {rounds}
repeats = {repeats}
config = cfg.two_cycle_preset(0, "subdiff")
policy = cfg.build_policy(config)

timings = []
for _ in range(repeats):
    state = cfg.build_state(config)
    t0 = time.perf_counter()
    scheduler.run(state, policy, rounds, cadence="event")
    timings.append(time.perf_counter() - t0)
print(f"{{kernels.backend_name()}} first={{timings[0]:.3f}}s "
      f"best={{min(timings):.3f}}s rounds={{rounds}} "
      f"events_per_s={{rounds * 19 / min(timings):,.0f}}")
"""


def run_backend(flag: str, rounds: int, repeats: int) -> str:
    env = dict(os.environ, DYKNET_NUMBA=flag)
    code = SNIPPET.format(rounds=rounds, repeats=repeats)
    proc = subprocess.run([sys.executable, "-c", code], env=env,
                          capture_output=True, text=True)
    if proc.returncode != 0:
        raise SystemExit(proc.stderr)
    return proc.stdout.strip()


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--rounds", type=int, default=300)
    parser.add_argument("--repeats", type=int, default=3)
    args = parser.parse_args()
    print(f"benchmark: two-cycle preset, subdiff mode, per-event metrics, "
          f"{args.rounds} rounds x {args.repeats} repeats")
    for flag, label in (("1", "numba kernels"), ("0", "python fallback")):
        print(f"{label:>16}: {run_backend(flag, args.rounds, args.repeats)}")


if __name__ == "__main__":
    main()
