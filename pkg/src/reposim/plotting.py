"""Figure rendering for the report paths (PNG files next to the TSVs)."""

from __future__ import annotations

from collections.abc import Mapping, Sequence
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .cluster import Dendrogram
from .evaluate import CATEGORY_NAMES

# Fixed PNG metadata keeps byte-identical output across runs.
_PNG_METADATA = {"Software": "reposim"}


def _save(fig, out_path: Path) -> None:
    fig.savefig(out_path, dpi=120, metadata=_PNG_METADATA)
    plt.close(fig)


def plot_dendrogram(d: Dendrogram, out_path: Path, labels: Sequence[str] | None = None) -> None:
    """Draw the merge tree with heights on the y axis."""
    n = d.n_points
    children = {n + t: (m.left, m.right) for t, m in enumerate(d.merges)}

    def leaves(cid: int) -> list[int]:
        if cid < n:
            return [cid]
        left, right = children[cid]
        return leaves(left) + leaves(right)

    order = leaves(n + len(d.merges) - 1) if d.merges else list(range(n))
    x_pos: dict[int, float] = {leaf: float(i) for i, leaf in enumerate(order)}
    height: dict[int, float] = {leaf: 0.0 for leaf in order}

    fig, ax = plt.subplots(figsize=(max(6.0, 0.3 * n), 4.0))
    for t, m in enumerate(d.merges):
        xl, xr = x_pos[m.left], x_pos[m.right]
        hl, hr = height[m.left], height[m.right]
        ax.plot([xl, xl, xr, xr], [hl, m.height, m.height, hr], color="tab:blue", lw=1.0)
        x_pos[n + t] = (xl + xr) / 2.0
        height[n + t] = m.height
    ax.set_xticks(range(n))
    ax.set_xticklabels(
        [labels[i] if labels else str(i) for i in order], rotation=90, fontsize=6
    )
    ax.set_ylabel("merge height")
    ax.set_title("agglomerative clustering")
    fig.tight_layout()
    _save(fig, out_path)


def plot_sse_curve(curve: Mapping[int, float], k_star: int | None, out_path: Path) -> None:
    """SSE against cluster count, elbow marked when given."""
    ks = sorted(curve)
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    ax.plot(ks, [curve[k] for k in ks], marker="o", color="tab:blue")
    if k_star is not None:
        ax.axvline(k_star, color="tab:red", ls="--", label=f"elbow k={k_star}")
        ax.legend()
    ax.set_xlabel("clusters")
    ax.set_ylabel("sum of squared error")
    ax.set_title("cluster count selection")
    fig.tight_layout()
    _save(fig, out_path)


def plot_category_histogram(counts: Mapping[int, int], out_path: Path) -> None:
    """Bar chart of pooled ground-truth categories for returned results."""
    cats = [4, 3, 2, 1]
    fig, ax = plt.subplots(figsize=(5.0, 4.0))
    ax.bar(
        range(len(cats)),
        [counts.get(c, 0) for c in cats],
        color=["tab:green", "tab:olive", "tab:orange", "tab:red"],
    )
    ax.set_xticks(range(len(cats)))
    ax.set_xticklabels([CATEGORY_NAMES[c] for c in cats])
    ax.set_ylabel("returned repositories")
    ax.set_title("similarity categories of returned results")
    fig.tight_layout()
    _save(fig, out_path)
