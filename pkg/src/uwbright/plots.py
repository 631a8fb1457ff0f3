"""PNG plots from training logs and metric reports."""

from __future__ import annotations

import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


def plot_loss_curve(log_path: str | Path, out_png: str | Path) -> Path:
    """Epoch-mean total and per-term curves from a JSON-lines training log."""
    records = [json.loads(line) for line in Path(log_path).read_text().splitlines() if line.strip()]
    if not records:
        raise ValueError(f"empty training log: {log_path}")
    epochs = [r["epoch"] for r in records]
    fig, ax = plt.subplots(figsize=(7, 4.5))
    ax.plot(epochs, [r["total"] for r in records], label="total", linewidth=2, color="black")
    term_names = sorted({name for r in records for name in r["terms"]})
    for name in term_names:
        ax.plot(
            epochs,
            [r["terms"].get(name, float("nan")) for r in records],
            label=name,
            alpha=0.7,
        )
    ax.set_xlabel("epoch")
    ax.set_ylabel("loss")
    ax.set_yscale("log")
    ax.legend(fontsize=8)
    ax.set_title("training loss")
    fig.tight_layout()
    out_png = Path(out_png)
    out_png.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(out_png, dpi=120)
    plt.close(fig)
    return out_png


def plot_metric_bars(report_path: str | Path, out_png: str | Path) -> Path:
    """Bar chart of the aggregate metric values in a JSON report."""
    payload = json.loads(Path(report_path).read_text())
    aggregate = payload.get("aggregate", {})
    if not aggregate:
        raise ValueError(f"report has no aggregate metrics: {report_path}")
    names = sorted(aggregate)
    values = [aggregate[name] for name in names]
    fig, ax = plt.subplots(figsize=(6, 4))
    bars = ax.bar(names, values, color="steelblue")
    ax.bar_label(bars, fmt="%.3f", fontsize=8)
    ax.set_ylabel("aggregate value")
    ax.set_title("image-quality metrics")
    fig.tight_layout()
    out_png = Path(out_png)
    out_png.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(out_png, dpi=120)
    plt.close(fig)
    return out_png
