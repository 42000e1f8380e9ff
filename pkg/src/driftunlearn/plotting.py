"""SVG line charts from run-log, metrics and compare CSVs.

Output bytes are deterministic for identical input: the SVG id salt is fixed
and the date metadata is dropped.
"""
from __future__ import annotations

from collections import defaultdict
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

RC = {
    "svg.hashsalt": "driftunlearn",
    "svg.fonttype": "path",
    "font.size": 10,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "legend.frameon": False,
    "figure.figsize": (6.4, 3.6),
}

class ChartError(ValueError):
    pass

def _save(fig, path) -> Path:
    path = Path(path)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return path

def _group(rows, key="run_id"):
    groups = defaultdict(list)
    for row in rows:
        groups[row[key]].append(row)
    return dict(sorted(groups.items()))

def accuracy_chart(rows, path, drift_chunk: int | None = None, title: str = "Prequential accuracy") -> Path:
    """Accuracy vs chunk index, one line per run, optional drift marker."""
    if not rows:
        raise ChartError("empty series: no run-log rows to plot")
    with plt.rc_context(RC):
        fig, ax = plt.subplots()
        for run_id, group in _group(rows).items():
            group = sorted(group, key=lambda r: int(r["chunk"]))
            ax.plot([int(r["chunk"]) for r in group], [float(r["accuracy"]) for r in group],
                    marker=".", lw=1.2, label=run_id)
        if drift_chunk is not None:
            ax.axvline(drift_chunk, color="k", ls="--", lw=0.8, label=f"drift @ {drift_chunk}")
        ax.set_xlabel("chunk")
        ax.set_ylabel("accuracy")
        ax.set_title(title)
        ax.legend(loc="lower right")
        return _save(fig, path)

def distance_chart(rows, path, title: str = "Distance to retrained model") -> Path:
    """``||theta_t - theta*_t||`` per chunk for runs that logged it."""
    rows = [r for r in rows if r.get("param_dist") not in ("", None)]
    if not rows:
        raise ChartError("empty series: no param_dist values to plot")
    with plt.rc_context(RC):
        fig, ax = plt.subplots()
        for run_id, group in _group(rows).items():
            group = sorted(group, key=lambda r: int(r["chunk"]))
            ax.plot([int(r["chunk"]) for r in group], [float(r["param_dist"]) for r in group],
                    marker=".", lw=1.2, label=run_id)
        ax.set_xlabel("chunk")
        ax.set_ylabel("parameter distance")
        ax.set_title(title)
        ax.legend()
        return _save(fig, path)

def cost_chart(rows, path, column: str = "grad_evals") -> Path:
    """A cost column vs window length L, one line per algorithm (mean over seeds)."""
    if not rows:
        raise ChartError("empty series: no metrics rows to plot")
    with plt.rc_context(RC):
        fig, ax = plt.subplots()
        for algo, group in _group(rows, "algo").items():
            by_L = defaultdict(list)
            for r in group:
                by_L[int(r["L"])].append(float(r[column]))
            Ls = sorted(by_L)
            ax.plot(Ls, [sum(by_L[L]) / len(by_L[L]) for L in Ls], marker="o", lw=1.2, label=algo)
        ax.set_xlabel("window length L [chunks]")
        ax.set_ylabel(column)
        ax.set_title(f"{column} vs window length")
        ax.legend()
        return _save(fig, path)

def compare_chart(rows, path) -> Path:
    """One panel per compare-table metric, one line over the run columns."""
    if not rows:
        raise ChartError("empty series: no compare rows to plot")
    runs = [c for c in rows[0] if c != "metric"]
    numeric = [r for r in rows if all(_is_number(r[c]) for c in runs)]
    if not numeric:
        raise ChartError("compare table has no numeric metric rows")
    with plt.rc_context(RC):
        fig, axes = plt.subplots(1, len(numeric), figsize=(2.4 * len(numeric), 3.0), squeeze=False)
        for ax, row in zip(axes[0], numeric):
            ax.plot(range(len(runs)), [float(row[c]) for c in runs], marker="o", lw=1.2)
            ax.set_xticks(range(len(runs)))
            ax.set_xticklabels(runs, rotation=45, ha="right", fontsize=7)
            ax.set_title(row["metric"], fontsize=9)
        return _save(fig, path)

def _is_number(text) -> bool:
    try:
        float(text)
    except (TypeError, ValueError):
        return False
    return True
