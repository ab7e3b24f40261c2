"""Optional PNG renderings of simulation and sweep CSV rows (needs matplotlib)."""

from __future__ import annotations

from collections import defaultdict

import numpy as np


def _pyplot():
    try:
        import matplotlib
    except ImportError as exc:  # pragma: no cover - depends on the environment
        raise RuntimeError("figures need matplotlib: pip install 'dtfl[plot]'") from exc
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def simulation_figure(rows, path):
    """Accuracy and round cost against the round index."""
    plt = _pyplot()
    rounds = [r.round for r in rows]
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.5))
    ax1.plot(rounds, [r.accuracy for r in rows])
    ax1.set_xlabel("round")
    ax1.set_ylabel("test accuracy")
    ax2.plot(rounds, [r.T for r in rows], label="latency (s)")
    ax2.plot(rounds, [r.E for r in rows], label="energy (J)")
    ax2.set_xlabel("round")
    ax2.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def sweep_figure(rows, path):
    """Median total cost per scheme against the swept value."""
    plt = _pyplot()
    groups = defaultdict(lambda: defaultdict(list))
    axis = None
    for r in rows:
        if r["status"] != "ok":
            continue
        axis = r["axis"]
        groups[r["scheme"]][r["value"]].append(r["total"])
    fig, ax = plt.subplots(figsize=(5, 3.5))
    for scheme, by_value in groups.items():
        xs = sorted(by_value)
        ax.plot(xs, [np.median(by_value[x]) for x in xs], marker="o", label=scheme)
    ax.set_xlabel({"dn": "model size (Mbit)", "n": "selected clients", "b": "bandwidth (MHz)"}
                  .get(axis, axis or ""))
    ax.set_ylabel("median total cost")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
