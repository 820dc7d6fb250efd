"""Report figures written next to the CSV/TSV outputs."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

# PNG metadata carries no timestamp; dropping the version string keeps
# figures byte-identical across matplotlib releases.
_SAVE_KW = {"dpi": 100, "metadata": {"Software": None}}


def _figure(width=6.4, height=None):
    height = height or width * 0.618
    fig, ax = plt.subplots(figsize=(width, height))
    ax.spines["top"].set_visible(False)
    ax.spines["right"].set_visible(False)
    return fig, ax


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, format="png", **_SAVE_KW)
    plt.close(fig)


def plot_difficulty(hist, path, title="Image difficulty"):
    fig, ax = _figure()
    ax.bar(np.arange(len(hist)), hist, width=1.0, color="#4878a8", edgecolor="white", linewidth=0.3)
    ax.set_xlabel("patches predicting the correct class")
    ax.set_ylabel("images")
    ax.set_title(title)
    ax.set_xlim(-0.5, len(hist) - 0.5)
    _save(fig, path)


def plot_beam(steps, path, labels=("objective split", "report split")):
    sizes = [s.size for s in steps]
    fig, ax = _figure()
    ax.plot(sizes, [100 * s.accuracy for s in steps], marker="o", ms=3, label=labels[0])
    if any(s.report_accuracy is not None for s in steps):
        ax.plot(sizes, [np.nan if s.report_accuracy is None else 100 * s.report_accuracy for s in steps],
                marker="s", ms=3, label=labels[1])
    ax.set_xlabel("number of patches")
    ax.set_ylabel("accuracy (%)")
    ax.set_title("Beam search")
    ax.legend(frameon=False)
    _save(fig, path)


def plot_patch_accuracy(acc, path, names=None, annotate=3):
    """Sorted per-patch accuracy; the best and worst ``annotate`` patches are labelled."""
    acc = np.asarray(acc, dtype=float)
    order = np.argsort(-acc, kind="stable")
    fig, ax = _figure(8)
    ax.bar(np.arange(len(acc)), 100 * acc[order], width=1.0, color="#6a9f58")
    ax.set_xlabel("patch (sorted)")
    ax.set_ylabel("accuracy (%)")
    ax.set_title("Per-patch classification accuracy")
    if names is not None and len(acc):
        picks = list(order[:annotate]) + list(order[-annotate:])
        for rank, p in enumerate(order):
            if p in picks:
                ax.annotate(names[p], (rank, 100 * acc[p]), fontsize=6, rotation=90,
                            ha="center", va="bottom")
    _save(fig, path)
