"""SVG charts of a ledger time series and of interface snapshots (matplotlib, Agg backend)."""

from __future__ import annotations

from pathlib import Path
from typing import Dict, List, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .energy import CHANNELS  # noqa: E402

# fixed metadata keeps the SVG output byte-stable between runs
_SVG_META = {"Date": None, "Creator": "triline"}


def _save(fig, path) -> Path:
    path = Path(path)
    fig.savefig(path, format="svg", metadata=_SVG_META)
    plt.close(fig)
    return path


def plot_energy(rows: Sequence[Dict[str, float]], path) -> Path:
    t = np.array([r["t"] for r in rows])
    fig, ax = plt.subplots(figsize=(6, 3.5))
    for key in ("E_total", "E_bulk", "E_interface", "E_line"):
        if key in rows[0]:
            e = np.array([r[key] for r in rows])
            ax.plot(t, e - e[0], label=f"{key} - {key}(0)")
    ax.set_xlabel("t [s]")
    ax.set_ylabel("energy change")
    ax.legend(fontsize=8)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    return _save(fig, path)


def plot_channels(rows: Sequence[Dict[str, float]], path) -> Path:
    t = np.array([r["t"] for r in rows])
    fig, ax = plt.subplots(figsize=(6, 3.5))
    drawn = False
    for key in CHANNELS:
        d = np.array([r[key] for r in rows])
        if np.any(d > 0):
            ax.semilogy(t, np.where(d > 0, d, np.nan), label=key)
            drawn = True
    if not drawn:
        ax.text(0.5, 0.5, "all dissipation channels are zero", transform=ax.transAxes, ha="center")
    ax.set_xlabel("t [s]")
    ax.set_ylabel("dissipation rate")
    if drawn:
        ax.legend(fontsize=8)
    ax.grid(alpha=0.3, which="both")
    fig.tight_layout()
    return _save(fig, path)


def plot_snapshot(curves: Dict[str, Dict[str, np.ndarray]], path, title: str = "") -> Path:
    fig, ax = plt.subplots(figsize=(5, 5))
    for cid, d in curves.items():
        m = d["markers"]
        ax.plot(m[:, 0], m[:, 1], ".-", ms=2, lw=1, label=cid)
    ax.set_aspect("equal")
    ax.legend(fontsize=8)
    if title:
        ax.set_title(title)
    fig.tight_layout()
    return _save(fig, path)


def render_report(rows: List[Dict[str, float]], out_prefix) -> List[Path]:
    prefix = Path(out_prefix)
    return [
        plot_energy(rows, prefix.with_name(prefix.name + "_energy.svg")),
        plot_channels(rows, prefix.with_name(prefix.name + "_dissipation.svg")),
    ]
