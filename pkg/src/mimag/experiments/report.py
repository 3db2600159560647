"""CSV emission and matplotlib report figures for the experiment runners.

Every CSV starts with '#' comment lines documenting columns and units; the
figure helpers render PNGs next to the delimited files.
"""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Optional, Sequence

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np


def write_csv(path, comments: Sequence[str], columns: Sequence[str],
              rows: Sequence[Sequence]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        for line in comments:
            fh.write(f"# {line}\n")
        writer = csv.writer(fh)
        writer.writerow(columns)
        for row in rows:
            writer.writerow([repr(v) if isinstance(v, float) else v for v in row])
    return path


def convergence_figure(path, results: dict, title: str) -> Path:
    """Log-log error plots per mesh family; one panel per norm."""
    norms = ["linf", "q", "f"]
    labels = {"linf": r"$L^\infty$ error", "q": "Q-norm error", "f": "F-norm error"}
    fig, axes = plt.subplots(1, 3, figsize=(13, 4))
    for ax, norm in zip(axes, norms):
        for family, rows in results.items():
            h = np.array([r["h_nominal"] for r in rows])
            e = np.array([r[norm] for r in rows])
            ax.loglog(h, e, "o-", label=family)
        h_ref = np.array(sorted({r["h_nominal"] for rows in results.values()
                                 for r in rows}))
        if h_ref.size:
            anchor = min(min(r[norm] for r in rows) for rows in results.values())
            for slope, style in ((1, ":"), (2, "--")):
                ax.loglog(h_ref, anchor * (h_ref / h_ref.min()) ** slope,
                          "k" + style, lw=0.8,
                          label=f"slope {slope}" if norm == "linf" else None)
        ax.set_xlabel("h")
        ax.set_ylabel(labels[norm])
        ax.grid(True, which="both", alpha=0.3)
    axes[0].legend(fontsize=8)
    fig.suptitle(title)
    fig.tight_layout()
    fig.savefig(path, dpi=140)
    plt.close(fig)
    return Path(path)


def timeseries_figure(path, t_ns: np.ndarray, avg_m: np.ndarray, title: str,
                      reference: Optional[dict] = None) -> Path:
    fig, ax = plt.subplots(figsize=(6.5, 4))
    for c, name in enumerate(("$<m_x>$", "$<m_y>$", "$<m_z>$")):
        ax.plot(t_ns, avg_m[:, c], label=name)
    if reference:
        for name, (t, v) in reference.items():
            ax.plot(t, v, "--", lw=0.8, label=name)
    ax.set_xlabel("t [ns]")
    ax.set_ylabel("average magnetization")
    ax.grid(alpha=0.3)
    ax.legend(fontsize=8)
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=140)
    plt.close(fig)
    return Path(path)


def energy_figure(path, traces: dict, title: str, xlabel: str = "t") -> Path:
    """traces: name -> (t array, energy array)."""
    fig, ax = plt.subplots(figsize=(6.5, 4))
    for name, (t, e) in traces.items():
        ax.plot(t, e, label=name)
    ax.set_xlabel(xlabel)
    ax.set_ylabel("energy")
    ax.grid(alpha=0.3)
    ax.legend(fontsize=8)
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=140)
    plt.close(fig)
    return Path(path)


def snapshot_figure(path, mesh, m: np.ndarray, title: str,
                    max_arrows: int = 4000) -> Path:
    """In-plane quiver colored by m_z at cell centroids."""
    x, y = mesh.cell_centroid[:, 0], mesh.cell_centroid[:, 1]
    stride = max(1, int(np.ceil(np.sqrt(mesh.n_cells / max_arrows))))
    if mesh.uniform is not None:
        idx = mesh.uniform.cell_index[::stride, ::stride].ravel()
    else:
        idx = np.arange(0, mesh.n_cells, stride ** 2)
    fig, ax = plt.subplots(figsize=(7, 7 * (y.ptp() / max(x.ptp(), 1e-30))
                                    if x.ptp() > 0 else 7))
    sc = ax.quiver(x[idx], y[idx], m[idx, 0], m[idx, 1], m[idx, 2],
                   cmap="coolwarm", clim=(-1, 1), pivot="mid",
                   scale_units="xy")
    fig.colorbar(sc, ax=ax, label="$m_z$", shrink=0.8)
    ax.set_aspect("equal")
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=140)
    plt.close(fig)
    return Path(path)
