"""Run-directory files: ``manifest.json``, ``rounds.csv`` and ``summary.json``."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from .errors import UsageError
from .orchestrator import RoundReport, final_window

ROUNDS_HEADER = [
    "round",
    "global_train_loss",
    "mean_test_accuracy",
    "participants",
    "forward_passes_total",
    "wall_time_s",
]


def fmt(x: float) -> str:
    """17 significant digits: parsing the text back gives the identical double."""
    return format(float(x), ".17g")


def prepare_run_dir(path) -> Path:
    path = Path(path)
    if path.exists() and (not path.is_dir() or any(path.iterdir())):
        raise UsageError(f"run directory {path} already exists and is not empty; runs never reuse a directory")
    path.mkdir(parents=True, exist_ok=True)
    return path


def write_manifest(run_dir: Path, resolved: dict, outputs: dict) -> Path:
    manifest = {
        "version": __version__,
        "seed": resolved["seed"],
        "started": datetime.now(timezone.utc).isoformat(timespec="seconds"),
        "config": resolved,
        "outputs": outputs,
    }
    path = run_dir / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def write_rounds_csv(path, reports: Sequence[RoundReport], wall_time: bool = False) -> None:
    """One row per evaluated round. ``wall_time_s`` is left empty unless requested,
    which keeps the file a pure function of config and seed."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(ROUNDS_HEADER)
        for r in reports:
            writer.writerow(
                [
                    r.round,
                    fmt(r.global_train_loss),
                    fmt(r.mean_test_accuracy),
                    " ".join(str(p) for p in r.participants),
                    sum(r.forward_passes.values()),
                    fmt(r.wall_time) if wall_time else "",
                ]
            )


@dataclass
class RoundsTable:
    rounds: np.ndarray
    loss: np.ndarray
    accuracy: np.ndarray

    def restrict(self, keep) -> "RoundsTable":
        mask = np.isin(self.rounds, list(keep))
        return RoundsTable(self.rounds[mask], self.loss[mask], self.accuracy[mask])


def read_rounds_csv(path) -> RoundsTable:
    path = Path(path)
    if not path.is_file():
        raise UsageError(f"{path} not found")
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if rows and set(ROUNDS_HEADER) - set(rows[0]):
        raise UsageError(f"{path}: unexpected header")
    return RoundsTable(
        np.array([int(r["round"]) for r in rows], dtype=np.int64),
        np.array([float(r["global_train_loss"]) for r in rows]),
        np.array([float(r["mean_test_accuracy"]) for r in rows]),
    )


def summarize(reports: Sequence[RoundReport], window: int, extra: dict | None = None) -> dict:
    """Final-window mean and standard deviation (population), in the style of a results table."""
    out = dict(extra or {})
    out["final_round"] = reports[-1].round if reports else None
    out["final_window"] = final_window(reports, window)
    out["final_window"]["spread"] = "standard deviation over the window"
    if reports:
        out["final"] = {
            "global_train_loss": reports[-1].global_train_loss,
            "mean_test_accuracy": reports[-1].mean_test_accuracy,
        }
    return out


def write_summary(path, summary: dict) -> None:
    Path(path).write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")


def _window_stats(values: np.ndarray, window: int) -> tuple[float, float]:
    tail = values[-window:]
    return float(tail.mean()), float(tail.std())


def compare_runs(dir_a, dir_b, window: int = 10) -> tuple[str, dict]:
    """Align two runs on their common evaluated rounds and tabulate final-window stats.

    ``delta`` is A minus B.
    """
    a = read_rounds_csv(Path(dir_a) / "rounds.csv")
    b = read_rounds_csv(Path(dir_b) / "rounds.csv")
    common = sorted(set(a.rounds.tolist()) & set(b.rounds.tolist()))
    lines = [f"A: {dir_a}", f"B: {dir_b}"]
    note = f"aligned on {len(common)} common rounds (A has {len(a.rounds)}, B has {len(b.rounds)})"
    lines.append(note)
    result = {"common_rounds": len(common), "metrics": {}}
    if not common:
        lines.append("no rounds in common; nothing to compare")
        return "\n".join(lines), result
    a, b = a.restrict(common), b.restrict(common)
    lines.append(f"final window: last {min(window, len(common))} common rounds")
    lines.append(f"{'metric':<22}{'A mean':>14}{'A std':>12}{'B mean':>14}{'B std':>12}{'delta':>14}")
    for name, va, vb in (
        ("global_train_loss", a.loss, b.loss),
        ("mean_test_accuracy", a.accuracy, b.accuracy),
    ):
        ma, sa = _window_stats(va, window)
        mb, sb = _window_stats(vb, window)
        result["metrics"][name] = {"a_mean": ma, "a_std": sa, "b_mean": mb, "b_std": sb, "delta": ma - mb}
        lines.append(f"{name:<22}{ma:>14.6f}{sa:>12.6f}{mb:>14.6f}{sb:>12.6f}{ma - mb:>+14.6f}")
    return "\n".join(lines), result
