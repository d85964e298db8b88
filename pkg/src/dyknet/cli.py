"""Command-line driver: run experiments, emit presets, check and solve configs.

Exit codes: 0 success, 2 config error, 3 invariant violation, 4 IO error.
"""

import argparse
import dataclasses
import sys

from . import config as cfg
from . import metrics, scheduler
from .graph import GraphError, build_topology
from .objectives import ObjectiveError, OutsideConjugateDomainError
from .protocol import NumericalInstabilityError
from .scheduler import InvariantViolationError, ScheduleError

CSV_HEADER = ("round,event_count,dual_surrogate,duality_gap,s_weighted_error,"
              "consensus_residual,weight_residual,mass_residual")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INVARIANT = 3
EXIT_IO = 4


def _fmt(v: float) -> str:
    return f"{v:.17g}"


def format_csv(log: scheduler.MetricsLog) -> str:
    lines = [CSV_HEADER]
    for r in log.records:
        lines.append(",".join([
            str(r.round_index), str(r.event_count), _fmt(r.dual_surrogate),
            _fmt(r.duality_gap), _fmt(r.s_weighted_error),
            _fmt(r.consensus_residual), _fmt(r.weight_residual),
            _fmt(r.mass_residual)]))
    return "\n".join(lines) + "\n"


def _load_config(path: str) -> cfg.ExperimentConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise _IOFailure(str(exc)) from exc
    return cfg.parse_config(text)


class _IOFailure(RuntimeError):
    pass


def run_experiment(config: cfg.ExperimentConfig, out_path=None) -> int:
    """Build, run, write the CSV and print a one-line summary."""
    state = cfg.build_state(config)
    policy = cfg.build_policy(config)
    log = scheduler.run(state, policy, config.rounds, cadence=config.cadence)
    text = format_csv(log)
    out_path = out_path or config.out or "metrics.csv"
    try:
        with open(out_path, "w", encoding="ascii", newline="\n") as fh:
            fh.write(text)
    except OSError as exc:
        raise _IOFailure(str(exc)) from exc
    final_gap = log.records[-1].duality_gap if log.records else float("nan")
    report = scheduler.check_delivery_window(log.events, state.topology)
    window = report.window if report.bounded else "unbounded"
    print(f"rows={len(log.records)} events={state.event_count} "
          f"final_gap={_fmt(final_gap)} empirical_K={window} invariants=ok "
          f"out={out_path}")
    return EXIT_OK


def _cmd_run(args) -> int:
    config = _load_config(args.config)
    updates = {}
    if args.seed is not None or args.p_deliver is not None:
        sched = config.schedule
        if args.seed is not None:
            sched = dataclasses.replace(sched, seed=args.seed)
        if args.p_deliver is not None:
            if not (0.0 < args.p_deliver <= 1.0):
                raise cfg.ValidationError("p_deliver",
                                          f"must be in (0, 1], got {args.p_deliver}")
            sched = dataclasses.replace(sched, p_deliver=args.p_deliver)
        updates["schedule"] = sched
    if args.rounds is not None:
        if args.rounds < 1:
            raise cfg.ValidationError("rounds", f"must be >= 1, got {args.rounds}")
        updates["rounds"] = args.rounds
    if updates:
        config = dataclasses.replace(config, **updates)
    return run_experiment(config, out_path=args.out)


def _cmd_preset(args) -> int:
    builder = cfg.PRESETS.get(args.name)
    if builder is None:
        raise cfg.ValidationError("preset", f"unknown preset {args.name!r}; "
                                  f"available: {sorted(cfg.PRESETS)}")
    config = builder(args.seed, args.mode)
    text = cfg.emit_config(config)
    if args.out:
        try:
            with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
                fh.write(text)
        except OSError as exc:
            raise _IOFailure(str(exc)) from exc
        print(f"wrote {args.out}")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _cmd_check(args) -> int:
    config = _load_config(args.config)
    build_topology(len(config.nodes), config.edges)
    cfg.build_problem(config)
    print(f"ok: {len(config.nodes)} nodes, {len(config.edges)} edges, "
          f"dimension {config.dimension}, strongly connected")
    return EXIT_OK


def _cmd_solve(args) -> int:
    config = _load_config(args.config)
    _, objectives, xbar = cfg.build_problem(config)
    ref = metrics.solve_centralized(objectives, xbar)
    print("x_star = [" + ", ".join(_fmt(v) for v in ref.x_star) + "]")
    print(f"primal_value = {_fmt(ref.primal_value)}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dyknet",
        description="Simulator for dual block-coordinate optimization over "
                    "directed networks with unreliable links.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run an experiment and write a metrics CSV")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--out", default=None)
    p_run.add_argument("--seed", type=int, default=None)
    p_run.add_argument("--rounds", type=int, default=None)
    p_run.add_argument("--p-deliver", dest="p_deliver", type=float, default=None)
    p_run.set_defaults(func=_cmd_run)

    p_preset = sub.add_parser("preset", help="write a built-in experiment config")
    p_preset.add_argument("name", choices=sorted(cfg.PRESETS))
    p_preset.add_argument("--mode", choices=("prox", "subdiff"), required=True)
    p_preset.add_argument("--seed", type=int, default=0)
    p_preset.add_argument("--out", default=None)
    p_preset.set_defaults(func=_cmd_preset)

    p_check = sub.add_parser("check", help="validate a config file")
    p_check.add_argument("--config", required=True)
    p_check.set_defaults(func=_cmd_check)

    p_solve = sub.add_parser("solve", help="print the centralized reference solution")
    p_solve.add_argument("--config", required=True)
    p_solve.set_defaults(func=_cmd_solve)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (cfg.ParseError, cfg.ValidationError, GraphError, ObjectiveError,
            ScheduleError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (InvariantViolationError, NumericalInstabilityError,
            OutsideConjugateDomainError) as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except _IOFailure as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_IO


def entry():
    sys.exit(main())


if __name__ == "__main__":
    entry()
