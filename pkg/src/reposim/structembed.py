"""Directory-structure embedding: biased random walks + skip-gram.

The tree's nodes are walked with second-order biased transitions (return
parameter ``p``, in-out parameter ``q``), the walks are fed to the shared
skip-gram trainer with node ids as tokens, and the node vectors are
collapsed column-wise into a single structure vector.

Walk RNG streams are derived from (seed, start node, walk index) only, so
structurally identical trees always produce identical walks and therefore
identical structure vectors, whichever repository they came from.
"""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .corpus import DirTree
from .seeding import make_rng
from .textembed import EmbedConfig, Vocabulary, train_skipgram

AGGREGATORS = ("mean", "mode", "max", "min", "sum", "std")


@dataclass
class WalkConfig:
    p: float = 1.0
    q: float = 1.0
    walks_per_node: int = 10
    walk_length: int = 40
    seed: int = 0

    def __post_init__(self) -> None:
        if self.p <= 0 or self.q <= 0:
            raise ValueError("p and q must be > 0")
        if self.walks_per_node < 1:
            raise ValueError("walks_per_node must be >= 1")
        if self.walk_length < 2:
            raise ValueError("walk_length must be >= 2")


def transition_probs(
    adjacency: Sequence[Sequence[int]], prev: int, cur: int, p: float, q: float
) -> tuple[list[int], np.ndarray]:
    """Second-order transition distribution over ``cur``'s neighbors.

    Weight 1/p to return to ``prev``, 1 to a neighbor at distance 1 from
    ``prev``, 1/q to a neighbor at distance 2 (in a tree every non-return
    neighbor is at distance 2), normalized over the neighbors of ``cur``.
    """
    neighbors = list(adjacency[cur])
    prev_adj = set(adjacency[prev])
    weights = np.empty(len(neighbors))
    for i, nxt in enumerate(neighbors):
        if nxt == prev:
            weights[i] = 1.0 / p
        elif nxt in prev_adj:
            weights[i] = 1.0
        else:
            weights[i] = 1.0 / q
    return neighbors, weights / weights.sum()


def generate_walks(tree: DirTree, config: WalkConfig) -> list[list[int]]:
    """``walks_per_node`` biased walks from every node of the tree.

    A walk stops early only when the current node has no neighbors
    (single-node tree). The first step is uniform over neighbors.
    """
    adjacency = tree.adjacency()
    walks: list[list[int]] = []
    for start in range(tree.node_count):
        for w in range(config.walks_per_node):
            rng = make_rng(config.seed, "walk", start, w)
            walk = [start]
            while len(walk) < config.walk_length:
                cur = walk[-1]
                neighbors = adjacency[cur]
                if not neighbors:
                    break
                if len(walk) == 1:
                    nxt = neighbors[rng.integers(len(neighbors))]
                else:
                    nbrs, probs = transition_probs(adjacency, walk[-2], cur, config.p, config.q)
                    nxt = nbrs[int(np.searchsorted(np.cumsum(probs), rng.random(), side="right"))]
                walk.append(nxt)
            walks.append(walk)
    return walks


def dump_walks(walks: Sequence[Sequence[int]], path: Path) -> None:
    """Debug dump: one walk per line, space-separated node indices."""
    with open(path, "w", encoding="utf-8") as fh:
        for walk in walks:
            fh.write(" ".join(str(n) for n in walk) + "\n")


def train_node_vectors(walks: Sequence[Sequence[int]], config: EmbedConfig) -> dict[int, np.ndarray]:
    """Skip-gram over walk sequences, node ids as tokens."""
    sequences = [[str(n) for n in walk] for walk in walks]
    vocab = Vocabulary.build(sequences, config.min_count)
    w_in, _ = train_skipgram(sequences, config, vocab)
    return {int(token): w_in[i] for i, token in enumerate(vocab.tokens)}


def aggregate(vectors: Sequence[np.ndarray], agg: str) -> np.ndarray:
    """Column-wise aggregation of equal-length vectors.

    ``mode`` is the most frequent value after rounding each column to 3
    decimal places, ties resolved by the mean of the tied values; ``std``
    is the population standard deviation.
    """
    if agg not in AGGREGATORS:
        raise ValueError(f"unknown aggregator {agg!r}; expected one of {AGGREGATORS}")
    if len(vectors) == 0:
        raise ValueError("cannot aggregate an empty list of vectors")
    matrix = np.stack([np.asarray(v, dtype=np.float64) for v in vectors])
    if agg == "mean":
        return matrix.mean(axis=0)
    if agg == "max":
        return matrix.max(axis=0)
    if agg == "min":
        return matrix.min(axis=0)
    if agg == "sum":
        return matrix.sum(axis=0)
    if agg == "std":
        return matrix.std(axis=0)
    rounded = np.round(matrix, 3)
    out = np.empty(matrix.shape[1])
    for j in range(matrix.shape[1]):
        values, counts = np.unique(rounded[:, j], return_counts=True)
        tied = values[counts == counts.max()]
        out[j] = tied[0] if len(tied) == 1 else tied.mean()
    return out


def structure_vector(
    tree: DirTree,
    walk_config: WalkConfig,
    embed_config: EmbedConfig,
    agg: str = "mean",
) -> np.ndarray:
    """Single structure vector for a directory tree.

    Walks are generated, node vectors trained, and the node vectors
    aggregated column-wise. A single-node tree has no walkable pairs and
    maps to the zero vector.
    """
    if tree.node_count == 1:
        return np.zeros(embed_config.dim)
    walks = generate_walks(tree, walk_config)
    node_vectors = train_node_vectors(walks, embed_config)
    ordered = [node_vectors[n] for n in sorted(node_vectors)]
    return aggregate(ordered, agg)
