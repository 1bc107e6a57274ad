"""Sweep aggregation: curve tables, reward histograms, and SVG plots.

Aggregates the per-cell metrics of a pipeline run into per-target curves
(mean with an error bar of twice the standard deviation over seeds) for the
average reward, the distribution-shift surrogate, and the off-support
deviation, plus pooled reward histograms per target value (shared uniform
bins over the pooled sweep range).
"""

from __future__ import annotations

import csv
from collections import defaultdict
from pathlib import Path

import numpy as np

from . import io
from .errors import RcdiffError
from .pipeline import _a_tag, read_metrics_csv
from .svgplot import Series, render_line_plot
from .world import true_reward

ERRORBAR_STD_MULTIPLIER = 2.0

CURVES = [
    ("avg_reward", "average reward"),
    ("shift", "distribution shift (surrogate)"),
    ("offsupport", "off-support deviation"),
]


def aggregate_curves(rows: list) -> dict:
    """Per-target mean and ``2 * std`` over seeds for each curve column."""
    by_a = defaultdict(list)
    for row in rows:
        by_a[row["a"]].append(row)
    out = {}
    for column, _ in CURVES:
        table = []
        for a in sorted(by_a):
            vals = np.array([r[column] for r in by_a[a]])
            err = ERRORBAR_STD_MULTIPLIER * vals.std(ddof=1) if vals.size > 1 else 0.0
            table.append((a, float(vals.mean()), float(err)))
        out[column] = table
    return out


def emit_figures(run_dir, out_dir=None, log=lambda msg: None) -> Path:
    """Write curve CSVs, histogram CSVs, and SVG plots for a finished run."""
    run_dir = Path(run_dir)
    csv_path = run_dir / "metrics.csv"
    if not csv_path.exists():
        raise RcdiffError(
            f"{csv_path} not found: run the 'pipeline' command for this config first"
        )
    out = Path(out_dir) if out_dir is not None else run_dir / "figures"
    out.mkdir(parents=True, exist_ok=True)

    rows = read_metrics_csv(csv_path)
    curves = aggregate_curves(rows)
    for column, label in CURVES:
        table = curves[column]
        path = out / f"curve_{column}.csv"
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["a", "mean", "err"])
            for a, mean, err in table:
                w.writerow([repr(a), repr(mean), repr(err)])
        render_line_plot(
            out / f"curve_{column}.svg",
            [Series(name=label, x=[r[0] for r in table], y=[r[1] for r in table],
                    err=[r[2] for r in table])],
            title=f"{label} vs target value",
            xlabel="target value a",
            ylabel=label,
        )
        log(f"wrote curve_{column}.csv/.svg")

    _emit_histograms(run_dir, out, rows, log)
    return out


def _emit_histograms(run_dir, out, rows, log) -> None:
    a_values = sorted({row["a"] for row in rows})
    seeds = sorted({row["seed"] for row in rows})
    rewards = {}
    for a in a_values:
        pooled = []
        for seed in seeds:
            sdir = run_dir / f"seed_{seed}"
            world = io.load_world(sdir / "world.rctb")
            batch = io.load_samples(sdir / f"samples_a{_a_tag(a)}")
            pooled.append(true_reward(world, batch.X))
        rewards[a] = np.concatenate(pooled)
    lo = min(float(v.min()) for v in rewards.values())
    hi = max(float(v.max()) for v in rewards.values())
    series = []
    for a in a_values:
        counts, edges = np.histogram(rewards[a], bins=50, range=(lo, hi))
        path = out / f"hist_a{_a_tag(a)}.csv"
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["bin_lo", "bin_hi", "count"])
            for i, c in enumerate(counts):
                w.writerow([repr(float(edges[i])), repr(float(edges[i + 1])), int(c)])
        centers = 0.5 * (edges[:-1] + edges[1:])
        series.append(Series(name=f"a={a:g}", x=list(centers), y=list(counts.astype(float))))
    render_line_plot(
        out / "hist_rewards.svg", series,
        title="reward distribution of generated samples",
        xlabel="reward", ylabel="count",
    )
    log(f"wrote {len(a_values)} histogram tables and hist_rewards.svg")
