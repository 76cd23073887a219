"""Benchmark figures."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

_STYLE = {
    "font.size": 10,
    "axes.labelsize": 10,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "svg.hashsalt": "motion-lingua",
}


_METADATA = {".png": {"Software": None}, ".svg": {"Date": None}, ".pdf": {"CreationDate": None}}


def _save(fig, path) -> None:
    # dropping timestamps keeps reruns byte-identical
    suffix = str(path)[str(path).rfind("."):].lower()
    fig.savefig(path, bbox_inches="tight", metadata=_METADATA.get(suffix))
    plt.close(fig)


def plot_jitter_sweep(rows, path) -> None:
    """Accuracy of both methods against jitter amplitude."""
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots(figsize=(4.5, 3.0))
        x = [r["jitter_multiple"] for r in rows]
        ax.plot(x, [r["adaptive"] for r in rows], "o-", label="adaptive")
        ax.plot(x, [r["fixed"] for r in rows], "s--", label="fixed (best swept)")
        ax.set_xlabel(r"jitter amplitude / $T_{base}$")
        ax.set_ylabel("per-step accuracy")
        ax.set_ylim(0, 1.02)
        ax.legend(frameon=False)
        _save(fig, path)


def plot_fixed_sweep(result, path) -> None:
    """Baseline accuracy per swept threshold, with the adaptive score for reference."""
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots(figsize=(4.5, 3.0))
        ts = list(result.fixed_sweep)
        ax.plot(ts, [result.fixed_sweep[t] for t in ts], "s-", label=f"fixed, window {result.window}")
        ax.axhline(result.adaptive.mean_accuracy, color="C0", lw=1, label="adaptive")
        ax.axvline(result.fixed_T, color="0.6", lw=0.8, ls=":")
        ax.set_xlabel("fixed threshold")
        ax.set_ylabel("per-step accuracy")
        ax.set_ylim(0, 1.02)
        ax.legend(frameon=False)
        _save(fig, path)
