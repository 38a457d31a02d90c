"""Report figures rendered to files with the non-interactive Agg backend."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .evaluation import IoUReport  # noqa: E402
from .inference import InferenceTrace  # noqa: E402


def _save(fig, path) -> None:
    fig.tight_layout()
    fig.savefig(path, dpi=100, metadata={"Software": None})
    plt.close(fig)


def plot_iou(report: IoUReport, path, title: str = "Per-label IoU") -> None:
    iou = np.nan_to_num(report.iou, nan=0.0)
    fig, ax = plt.subplots(figsize=(max(4.0, 0.5 * len(iou) + 2), 3.2))
    bars = ax.bar(range(len(iou)), iou, color="#4c72b0")
    for b, counted in zip(bars, report.counted):
        if not counted:
            b.set_color("#cccccc")
    ax.axhline(report.mean_iou, color="#c44e52", lw=1, ls="--", label=f"mean {report.mean_iou:.3f}")
    ax.set_xticks(range(len(iou)), report.labels.names, rotation=45, ha="right")
    ax.set_ylim(0, 1)
    ax.set_ylabel("IoU")
    ax.set_title(title)
    ax.legend(loc="lower right", frameon=False)
    _save(fig, path)


def plot_sweep(result, path) -> None:
    scores = [p.mean_iou for p in result.points]
    fig, ax = plt.subplots(figsize=(max(4.0, 0.3 * len(scores) + 2), 3.2))
    ax.plot(range(len(scores)), scores, "o-", color="#4c72b0", ms=4)
    ax.plot([result.best_index], [scores[result.best_index]], "*", color="#c44e52", ms=12, label="selected")
    ax.set_xlabel("grid point")
    ax.set_ylabel("mean IoU")
    ax.set_title("Weight grid search")
    ax.legend(loc="best", frameon=False)
    _save(fig, path)


def plot_trace(trace: InferenceTrace, path) -> None:
    it = [r.iteration for r in trace]
    fig, (a1, a2) = plt.subplots(1, 2, figsize=(7, 3))
    a1.semilogy(it, [max(r.max_delta, 1e-300) for r in trace], "o-", ms=3)
    a1.set_xlabel("iteration")
    a1.set_ylabel("max |dQ|")
    a2.plot(it, [r.energy for r in trace], "o-", ms=3, color="#55a868")
    a2.set_xlabel("iteration")
    a2.set_ylabel("energy of argmax")
    _save(fig, path)
