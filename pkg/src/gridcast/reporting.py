"""Report rendering: JSON, CSV curves, text tables and recall plots."""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .metrics import MetricReport  # noqa: E402

# Per-step recall curves plotted for the agent-agnostic comparison: the
# dynamic occupancy channel against the warped dynamic grids, per class.
_CURVE_PAIRS = [
    ("dyn_recall_ped", "warped_dyn_recall_ped", "pedestrians"),
    ("dyn_recall_cyc", "warped_dyn_recall_cyc", "cyclists"),
    ("dyn_recall_veh", "warped_dyn_recall_veh", "vehicles"),
]


def render_table(report: MetricReport) -> str:
    width = max(len(k) for k in report.horizon) + 2
    lines = [f"{'metric'.ljust(width)}  horizon-avg   defined",
             "-" * (width + 24)]
    for name in sorted(report.horizon):
        value = report.horizon[name]
        text = "   nan" if not math.isfinite(value) else f"{value:8.4f}"
        lines.append(f"{name.ljust(width)}  {text}      {report.defined.get(name, 0)}")
    return "\n".join(lines)


def write_report(report: MetricReport, out_dir: str | Path) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "report.json", "w") as fh:
        json.dump(report.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    names = sorted(report.per_step)
    steps = len(next(iter(report.per_step.values()))) if names else 0
    with open(out / "per_step.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step"] + names)
        for tau in range(steps):
            writer.writerow([tau + 1] + [f"{report.per_step[n][tau]:.6f}" for n in names])
    (out / "table.txt").write_text(render_table(report) + "\n")
    plot_recall_curves(report, out / "recall_curves.png")
    return out


def plot_recall_curves(report: MetricReport, path: str | Path) -> None:
    """Per-step dynamic recall plots comparing direct and warped predictions."""
    pairs = [(a, b, label) for a, b, label in _CURVE_PAIRS
             if a in report.per_step and b in report.per_step]
    if not pairs:
        return
    fig, axes = plt.subplots(1, len(pairs), figsize=(4 * len(pairs), 3.2),
                             squeeze=False)
    for ax, (direct, warped, label) in zip(axes[0], pairs):
        steps = range(1, len(report.per_step[direct]) + 1)
        ax.plot(steps, report.per_step[direct], "o-", label="occupancy")
        ax.plot(steps, report.per_step[warped], "s-", label="warped")
        ax.set_title(f"dynamic {label}")
        ax.set_xlabel("future step")
        ax.set_ylabel("recall")
        ax.set_ylim(-0.05, 1.05)
        ax.grid(alpha=0.3)
        ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


def render_comparison(comparison: dict) -> str:
    """Text table for an ablation comparison dict."""
    rows = comparison["rows"]
    rankings = comparison["rankings"]
    metrics = sorted(rankings)
    name_w = max(len(n) for n in rows) + 2
    header = "metric".ljust(28) + "".join(n.ljust(name_w) for n in rows)
    lines = [header, "-" * len(header)]
    for metric in metrics:
        cells = []
        for name in rows:
            value = rows[name]["horizon"].get(metric)
            if value is None or value != value:
                cells.append("-".ljust(name_w))
                continue
            mark = ""
            if rankings[metric]["best"] == name:
                mark = "*"
            elif rankings[metric]["second"] == name:
                mark = "+"
            cells.append(f"{value:.4f}{mark}".ljust(name_w))
        lines.append(metric.ljust(28) + "".join(cells))
    lines.append("legend: * best, + second best")
    return "\n".join(lines)
