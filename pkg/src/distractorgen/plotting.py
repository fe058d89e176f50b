"""Figures written next to the text/JSONL outputs of the CLI."""

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .metrics import AVG_ROW, COLUMNS  # noqa: E402

_RC = {
    "font.size": 9,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "savefig.dpi": 150,
    "savefig.bbox": "tight",
}


def plot_metric_reports(reports, path, row=AVG_ROW):
    """Grouped bars of one report row, one group per metric column."""
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(7, 3))
        n = len(reports)
        width = 0.8 / max(n, 1)
        x = np.arange(len(COLUMNS))
        for i, (system, rep) in enumerate(reports.items()):
            vals = [rep.rows[row][c] for c in COLUMNS]
            ax.bar(x + (i - (n - 1) / 2) * width, vals, width, label=system)
        ax.set_xticks(x)
        ax.set_xticklabels(COLUMNS)
        ax.set_ylabel("score")
        ax.set_title(row)
        if n > 1:
            ax.legend(frameon=False)
        fig.savefig(path)
        plt.close(fig)


def plot_training_curve(history, validations, path):
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(6, 3))
        steps = [h["step"] for h in history]
        ax.plot(steps, [h["loss"] for h in history], lw=0.8, label="train loss")
        ax.set_xlabel("step")
        ax.set_ylabel("NLL per sequence")
        if validations:
            ax2 = ax.twinx()
            ax2.plot([v["step"] for v in validations], [v["perplexity"] for v in validations],
                     "o-", color="C1", ms=3, label="dev perplexity")
            ax2.set_ylabel("dev perplexity")
            ax2.set_yscale("log")
        fig.savefig(path)
        plt.close(fig)


def plot_static_attention(records, path, max_panels=6):
    """One bar panel of sentence weights per dumped question."""
    records = [r for r in records if r.get("gamma") is not None][:max_panels]
    if not records:
        return False
    with plt.rc_context(_RC):
        fig, axes = plt.subplots(len(records), 1, figsize=(6, 1.6 * len(records)),
                                 squeeze=False)
        for ax, rec in zip(axes[:, 0], records):
            g = rec["gamma"]
            ax.bar(np.arange(1, len(g) + 1), g, color="C2")
            ax.set_ylim(0, 1)
            ax.set_xticks(np.arange(1, len(g) + 1))
            ax.set_title(f"{rec['id']}  (tau={rec['tau']:.3f})", fontsize=8)
            ax.set_ylabel("weight")
        axes[-1, 0].set_xlabel("sentence")
        fig.tight_layout()
        fig.savefig(path)
        plt.close(fig)
    return True
