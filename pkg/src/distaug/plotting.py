"""Report figures. Uses the Agg canvas through ``matplotlib.figure`` so no
display or global pyplot state is involved."""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np
from matplotlib.figure import Figure


def _save(fig: Figure, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    # fixed metadata keeps PNG bytes stable across runs
    fig.savefig(path, dpi=100, metadata={"Software": None})
    return path


def loss_history(history, path) -> Path:
    fig = Figure(figsize=(6, 3.5))
    ax = fig.add_subplot()
    steps = [h["step"] for h in history]
    for key in ("adv_G", "adv_F", "cyc", "total"):
        ax.plot(steps, [h[key] for h in history], label=key, lw=1)
    ax.set_xlabel("step")
    ax.set_ylabel("loss")
    ax.set_title("Cycle-GAN training")
    ax.legend(fontsize=8)
    fig.tight_layout()
    return _save(fig, path)


def threshold_sweep(rows, path) -> Path:
    """Kept hours against the CER threshold; the unbounded row plots last."""
    fig = Figure(figsize=(5, 3.5))
    ax = fig.add_subplot()
    labels = ["inf" if math.isinf(r.delta) else f"{r.delta:g}" for r in rows]
    x = np.arange(len(rows))
    ax.bar(x, [r.kept_hours for r in rows], color="tab:blue")
    ax.set_xticks(x, labels)
    ax.set_xlabel("CER threshold (%)")
    ax.set_ylabel("kept hours")
    ax.set_title("Pseudo-label filtering")
    fig.tight_layout()
    return _save(fig, path)


def hours_by_source(hours: dict, path) -> Path:
    fig = Figure(figsize=(5, 3.5))
    ax = fig.add_subplot()
    keys = list(hours)
    ax.bar(keys, [hours[k] for k in keys], color="tab:green")
    ax.set_ylabel("hours")
    ax.set_title("Combined training set")
    fig.tight_layout()
    return _save(fig, path)


def band_profiles(profiles: dict, path) -> Path:
    """Per-subband mean energy, one line per named profile."""
    fig = Figure(figsize=(5, 3.5))
    ax = fig.add_subplot()
    for name, p in profiles.items():
        p = np.asarray(p)
        ax.plot(np.arange(1, len(p) + 1), p, marker="o", label=name)
    ax.set_xlabel("subband")
    ax.set_ylabel("mean energy (dB)")
    ax.legend(fontsize=8)
    fig.tight_layout()
    return _save(fig, path)
