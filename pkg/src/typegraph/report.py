"""Report rendering: delimited outputs plus matplotlib figures.

Every CSV/JSON artifact written here is paired with a figure rendered next
to it, so a run directory is self-describing.
"""

from __future__ import annotations

import json

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt


def write_pr_csv(rows, path):
    """50-row PR table: threshold,precision,recall,f1 at 6 decimal places."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("threshold,precision,recall,f1\n")
        for t, p, r, f1 in rows:
            fh.write(f"{t:.6f},{p:.6f},{r:.6f},{f1:.6f}\n")


def plot_pr_curve(rows, path, title="Precision-recall over decision thresholds"):
    recalls = [r for _, _, r, _ in rows]
    precisions = [p for _, p, _, _ in rows]
    fig, ax = plt.subplots(figsize=(5, 4))
    ax.plot(recalls, precisions, marker="o", markersize=3, linewidth=1)
    ax.set_xlabel("Recall")
    ax.set_ylabel("Precision")
    ax.set_title(title)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_training_log(history, path):
    epochs = [h["epoch"] for h in history]
    losses = [h["loss"] for h in history]
    fig, ax = plt.subplots(figsize=(5, 4))
    ax.plot(epochs, losses, label="train loss")
    if any("dev_f1" in h for h in history):
        ax2 = ax.twinx()
        ax2.plot(
            epochs, [h.get("dev_f1") for h in history], color="tab:orange",
            label="dev F1",
        )
        ax2.set_ylabel("dev F1")
    ax.set_xlabel("Epoch")
    ax.set_ylabel("Loss")
    ax.set_title("Training progress")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def write_eval_report(report, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report.to_dict(), fh, indent=2)


def plot_degree_histogram(adjacency, path):
    degrees = adjacency.degrees
    fig, ax = plt.subplots(figsize=(5, 4))
    ax.hist(degrees, bins=min(30, max(5, len(degrees) // 2)))
    ax.set_xlabel("Node degree (with self-loops)")
    ax.set_ylabel("Count")
    ax.set_title("Co-occurrence graph degrees")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
