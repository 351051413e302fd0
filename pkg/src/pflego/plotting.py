"""Loss and accuracy curves rendered from ``rounds.csv`` files."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .reporting import read_rounds_csv  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.labelsize": 9,
    "axes.titlesize": 10,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "figure.dpi": 120,
}


def plot_curves(run_dirs: Sequence, labels: Sequence[str] | None = None, out=None, title: str | None = None):
    """Training loss (left) and mean test accuracy (right) against round for each run.

    Returns the figure; also saves it when ``out`` is given.
    """
    labels = list(labels) if labels else [Path(d).name for d in run_dirs]
    with plt.rc_context(STYLE):
        fig, (ax_loss, ax_acc) = plt.subplots(1, 2, figsize=(7.0, 2.8), constrained_layout=True)
        for run_dir, label in zip(run_dirs, labels):
            table = read_rounds_csv(Path(run_dir) / "rounds.csv")
            ax_loss.plot(table.rounds, table.loss, label=label, lw=1.2)
            ax_acc.plot(table.rounds, table.accuracy, label=label, lw=1.2)
        ax_loss.set_xlabel("round")
        ax_loss.set_ylabel("global training loss")
        ax_acc.set_xlabel("round")
        ax_acc.set_ylabel("mean test accuracy")
        ax_acc.set_ylim(0.0, 1.0)
        ax_loss.legend(frameon=False)
        if title:
            fig.suptitle(title)
        if out is not None:
            fig.savefig(out)
            plt.close(fig)
    return fig
