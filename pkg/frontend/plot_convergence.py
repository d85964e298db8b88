#!/usr/bin/env python3
"""Render convergence plots from dyknet metrics CSV files.

Reads one or more CSVs produced by ``dyknet run`` and draws the duality
gap and the s-weighted squared error of every run on a shared log-scale
axis, one labeled curve per series.

Usage::

    plot_convergence.py --out fig.png run_prox.csv run_subdiff.csv
"""

import argparse
import csv
import sys
from dataclasses import dataclass
from pathlib import Path

import matplotlib
import numpy as np

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

EXPECTED_HEADER = ["round", "event_count", "dual_surrogate", "duality_gap",
                   "s_weighted_error", "consensus_residual", "weight_residual",
                   "mass_residual"]

PLOT_FLOOR = 1e-16


class SchemaMismatchError(ValueError):
    pass


class EmptyInputError(ValueError):
    pass


@dataclass(frozen=True)
class SeriesBundle:
    """One run's plotted series: nonpositive values are floored and counted."""

    label: str
    rounds: np.ndarray
    gap: np.ndarray
    s_weighted_error: np.ndarray
    clipped: int

    def __post_init__(self):
        assert len(self.rounds) == len(self.gap) == len(self.s_weighted_error)


def load_series(path) -> SeriesBundle:
    path = Path(path)
    with open(path, "r", encoding="ascii", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise EmptyInputError(f"{path}: file is empty") from None
        if header != EXPECTED_HEADER:
            raise SchemaMismatchError(
                f"{path}: header {header!r} does not match the metrics schema")
        rounds, gaps, errs = [], [], []
        for row in reader:
            if len(row) != len(EXPECTED_HEADER):
                raise SchemaMismatchError(f"{path}: row with {len(row)} fields")
            rounds.append(int(row[0]))
            gaps.append(float(row[3]))
            errs.append(float(row[4]))
    if not rounds:
        raise EmptyInputError(f"{path}: no data rows")
    gap = np.asarray(gaps)
    err = np.asarray(errs)
    clipped = int(np.sum(gap <= 0.0) + np.sum(err <= 0.0))
    if clipped:
        print(f"warning: {path.name}: {clipped} nonpositive values floored "
              f"at {PLOT_FLOOR:g} for the log plot", file=sys.stderr)
    return SeriesBundle(label=path.stem, rounds=np.asarray(rounds, dtype=np.int64),
                        gap=np.maximum(gap, PLOT_FLOOR),
                        s_weighted_error=np.maximum(err, PLOT_FLOOR),
                        clipped=clipped)


def plot_convergence(csv_paths, out):
    """Plot every run's gap and s-weighted error; write ``out`` (png/svg).

    Returns the figure and the loaded series bundles.
    """
    if not csv_paths:
        raise EmptyInputError("no input files")
    bundles = [load_series(p) for p in csv_paths]
    fig, ax = plt.subplots(figsize=(8.0, 5.0))
    marker = "o" if max(len(b.rounds) for b in bundles) == 1 else None
    for bundle in bundles:
        ax.plot(bundle.rounds, bundle.gap, marker=marker,
                label=f"{bundle.label} duality gap")
        ax.plot(bundle.rounds, bundle.s_weighted_error, marker=marker,
                linestyle="--", label=f"{bundle.label} s-weighted error")
    ax.set_yscale("log")
    ax.set_xlabel("round")
    ax.set_ylabel("value (log scale)")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(out)
    return fig, bundles


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", required=True, help="output image (png or svg)")
    parser.add_argument("csvs", nargs="+", help="metrics CSV files")
    args = parser.parse_args(argv)
    try:
        _, bundles = plot_convergence(args.csvs, args.out)
    except (SchemaMismatchError, EmptyInputError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {args.out} with {2 * len(bundles)} series")
    return 0


if __name__ == "__main__":
    sys.exit(main())
