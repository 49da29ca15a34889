"""Leaderboard figures written next to the tabular output."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .pipeline import LeaderboardRow  # noqa: E402

# PNG metadata carries no timestamp, so identical rows give identical files.
_META = {"Software": None}


def _height(n: int) -> float:
    return max(2.5, 0.45 * n + 1.2)


def plot_final_scores(rows: Sequence[LeaderboardRow], path: Path) -> Path:
    """Horizontal bars of final score with ±2σ error bars over replicates."""
    names = [r.model_id for r in rows][::-1]
    vals = [100 * r.final for r in rows][::-1]
    errs = [200 * r.std_final for r in rows][::-1]
    fig, ax = plt.subplots(figsize=(6.5, _height(len(rows))))
    ax.barh(names, vals, xerr=errs, color="#4c72b0", capsize=3, error_kw={"elinewidth": 1})
    for y, v in enumerate(vals):
        ax.text(v + 0.5, y, f"{v:.1f}", va="center", fontsize=8)
    ax.set_xlim(0, 100)
    ax.set_xlabel("Final score (%)   error bars: ±2σ over replicates")
    ax.spines[["top", "right"]].set_visible(False)
    fig.tight_layout()
    fig.savefig(path, dpi=120, metadata=_META)
    plt.close(fig)
    return path


def plot_reasoning_evidence(rows: Sequence[LeaderboardRow], path: Path) -> Path:
    """Grouped bars of the two factors the final score multiplies."""
    n = len(rows)
    xs = range(n)
    w = 0.38
    fig, ax = plt.subplots(figsize=(max(4.5, 1.1 * n + 2), 3.6))
    ax.bar([x - w / 2 for x in xs], [100 * r.reasoning for r in rows], w, label="Reasoning", color="#55a868")
    ax.bar([x + w / 2 for x in xs], [100 * r.evidence for r in rows], w, label="Evidence", color="#c44e52")
    ax.set_xticks(list(xs))
    ax.set_xticklabels([r.model_id for r in rows], rotation=30, ha="right", fontsize=8)
    ax.set_ylim(0, 100)
    ax.set_ylabel("Score (%)")
    ax.legend(frameon=False, fontsize=8)
    ax.spines[["top", "right"]].set_visible(False)
    fig.tight_layout()
    fig.savefig(path, dpi=120, metadata=_META)
    plt.close(fig)
    return path


def plot_leaderboard(rows: Sequence[LeaderboardRow], out_dir: str | Path) -> list[Path]:
    out = Path(out_dir)
    return [
        plot_final_scores(rows, out / "final_scores.png"),
        plot_reasoning_evidence(rows, out / "reasoning_evidence.png"),
    ]
