"""CSV emission and figure rendering for experiment runs.

The CSV is the machine-readable contract: a comment header records the
exact configuration and seed (so any run can be replayed byte-for-byte),
one header row names the columns, data rows carry per-round or
per-iteration observables, and summary rows compare observables against
the guarantee each one must satisfy.  Floats are printed with 17
significant digits so replays compare equal.

Alongside each CSV the report path renders a companion figure (same stem,
``.png``) with the trajectories and bound lines.
"""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Mapping, Optional, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

__all__ = ["format_value", "write_csv", "figure_path", "render_avg_figure", "render_learn_figure"]


def format_value(x) -> str:
    if isinstance(x, bool):
        return "1" if x else "0"
    if isinstance(x, float) or isinstance(x, np.floating):
        return f"{float(x):.17g}"
    return str(x)


def write_csv(path, meta: Mapping[str, object], columns: Sequence[str], rows: Sequence[Mapping[str, object]]):
    """Write rows with a replayable comment header.

    ``meta`` lines come first as ``# key = value`` comments; every row dict
    is projected onto ``columns`` (missing cells stay empty).
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        for key, value in meta.items():
            fh.write(f"# {key} = {format_value(value)}\n")
        writer = csv.writer(fh)
        writer.writerow(columns)
        for row in rows:
            writer.writerow([format_value(row[c]) if c in row and row[c] is not None else "" for c in columns])


def figure_path(csv_path) -> Path:
    return Path(csv_path).with_suffix(".png")


def render_avg_figure(csv_path, trial_traces, halving_rhs: Optional[float], dev_rhs: Optional[float], title: str):
    """Diameter and mean-deviation trajectories with their bound lines.

    ``trial_traces`` is a list of per-trial dicts with ``delta2`` and
    ``mean_deviation`` arrays indexed by round (round 0 = input family).
    """
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(10, 4))
    for trace in trial_traces:
        rounds = np.arange(len(trace["delta2"]))
        ax1.plot(rounds, np.maximum(trace["delta2"], 1e-300), alpha=0.35, lw=0.9)
        ax2.plot(rounds, trace["mean_deviation"], alpha=0.35, lw=0.9)
    if halving_rhs is not None and halving_rhs > 0:
        ax1.axhline(halving_rhs, color="k", ls="--", lw=1.2, label="required final diameter")
        ax1.legend(loc="best", fontsize=8)
    if dev_rhs is not None:
        ax2.axhline(dev_rhs, color="k", ls="--", lw=1.2, label="averaging bound")
        ax2.legend(loc="best", fontsize=8)
    ax1.set_yscale("log")
    ax1.set_xlabel("round")
    ax1.set_ylabel("diameter")
    ax2.set_xlabel("round")
    ax2.set_ylabel("|mean - initial mean|")
    fig.suptitle(title)
    fig.tight_layout()
    out = figure_path(csv_path)
    fig.savefig(out, dpi=130)
    plt.close(fig)
    return out


def render_learn_figure(csv_path, trial_traces, delta: float, title: str):
    """Learning trajectories: parameter spread, gradient norm, mean loss."""
    fig, axes = plt.subplots(1, 3, figsize=(13, 4))
    for trace in trial_traces:
        t = np.arange(1, len(trace["delta2_theta"]) + 1)
        axes[0].plot(t, np.maximum(trace["delta2_theta"], 1e-300), alpha=0.35, lw=0.9)
        axes[1].plot(t, np.maximum(trace["grad_norm_at_mean"], 1e-300), alpha=0.35, lw=0.9)
        axes[2].plot(t, trace["loss_at_mean"], alpha=0.35, lw=0.9)
    axes[0].axhline(delta, color="k", ls="--", lw=1.2, label="target spread")
    axes[0].legend(loc="best", fontsize=8)
    axes[0].set_yscale("log")
    axes[1].set_yscale("log")
    for ax, name in zip(axes, ("parameter diameter", "gradient norm at mean", "mean loss")):
        ax.set_xlabel("iteration")
        ax.set_ylabel(name)
    fig.suptitle(title)
    fig.tight_layout()
    out = figure_path(csv_path)
    fig.savefig(out, dpi=130)
    plt.close(fig)
    return out
