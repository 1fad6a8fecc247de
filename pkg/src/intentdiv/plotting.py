"""Deterministic PNG figures for sweep, calibration and slicing outputs.

Figures use the Agg backend, a fixed size and DPI, and PNG metadata is
stripped so that repeated runs write byte-identical files.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

FIGSIZE = (6.4, 4.0)
DPI = 100
# no Software/creation-time chunks in the PNG
_METADATA = {"Software": None}


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, format="png", dpi=DPI, metadata=_METADATA)
    plt.close(fig)


def plot_sweep(rows, path):
    """Relative change of each sweep column against control, one line per column."""
    gammas = [r["gamma"] for r in rows]
    fig, ax = plt.subplots(figsize=FIGSIZE)
    for col, marker in (("diversity", "o"), ("novelty", "s"), ("relevance", "^"), ("dau", "D")):
        ys = [r[f"{col}_delta"] for r in rows]
        ax.plot(gammas, [100.0 * y if y is not None else float("nan") for y in ys],
                marker=marker, label=col)
    ax.set_xscale("log")
    ax.set_xticks(gammas, [f"{g:g}" for g in gammas])
    ax.axhline(0.0, color="0.6", linewidth=0.8)
    ax.set_xlabel("gamma")
    ax.set_ylabel("change vs control (%)")
    ax.legend()
    _save(fig, path)


def plot_reliability(reliability, path):
    """Reliability diagram: mean prediction against label rate per bin and intent."""
    fig, ax = plt.subplots(figsize=FIGSIZE)
    ax.plot([0, 1], [0, 1], color="0.6", linewidth=0.8, linestyle="--")
    for intent, bins in reliability.items():
        pts = [(b[3], b[4]) for b in bins if b[2] > 0]
        if pts:
            xs, ys = zip(*pts)
            ax.plot(xs, ys, marker="o", label=str(intent))
    ax.set_xlim(0, 1)
    ax.set_ylim(0, 1)
    ax.set_xlabel("mean predicted probability")
    ax.set_ylabel("observed label rate")
    ax.legend()
    _save(fig, path)


def plot_slices(rows, path):
    """Per-bucket treatment-vs-control deltas by predicted exploration percentile."""
    fig, ax = plt.subplots(figsize=FIGSIZE)
    buckets = [r["bucket"] for r in rows]
    for name, marker in (("novel_impressions", "o"), ("novel_consumptions", "s"),
                         ("novel_ctr", "^")):
        ys = [100.0 * r[name] if r[name] is not None else float("nan") for r in rows]
        ax.plot(buckets, ys, marker=marker, label=name)
    ax.axhline(0.0, color="0.6", linewidth=0.8)
    ax.set_xticks(buckets)
    ax.set_xlabel("predicted exploration bucket (low to high)")
    ax.set_ylabel("change vs control (%)")
    ax.legend()
    _save(fig, path)
