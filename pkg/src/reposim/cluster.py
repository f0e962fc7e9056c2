"""Agglomerative clustering, dendrogram cuts, elbow detection, profiling.

``agnes`` runs bottom-up agglomeration with Lance-Williams distance
updates. Cluster ids follow the usual convention: 0..n-1 are the original
points, n+t is the cluster created by merge t. Heights:

* ward: the increase in within-cluster sum of squares caused by the
  merge (singleton pairs start at half their squared Euclidean distance);
  intended for L2-normalized vectors when cosine geometry is wanted
* average: mean pairwise Euclidean distance between the clusters
* complete: maximum pairwise Euclidean distance

Ties are broken deterministically by the smallest (min id, max id) pair.
The exported dendrogram encodes original points as negative indices
(point i -> -(i+1)) and prior merges as positive 1-based indices.

Cluster topics come from a collapsed Gibbs LDA over sampled member
metadata; a cluster's profile is the modal topic of its sampled
repositories together with the fraction that share it.
"""

from __future__ import annotations

import math
from collections.abc import Mapping, Sequence
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .seeding import make_rng

LINKAGES = ("ward", "average", "complete")


@dataclass(frozen=True)
class Merge:
    left: int
    right: int
    height: float
    size: int


@dataclass(frozen=True)
class Dendrogram:
    n_points: int
    merges: tuple[Merge, ...]

    def __post_init__(self) -> None:
        if len(self.merges) != self.n_points - 1:
            raise ValueError("a dendrogram over n points needs exactly n-1 merges")


def _initial_distances(x: np.ndarray, linkage: str) -> np.ndarray:
    diff = x[:, None, :] - x[None, :, :]
    sq = np.einsum("ijk,ijk->ij", diff, diff)
    if linkage == "ward":
        d = 0.5 * sq
    else:
        d = np.sqrt(sq)
    np.fill_diagonal(d, np.inf)
    return d


def _argmin_pair(d: np.ndarray, ids: np.ndarray) -> tuple[int, int]:
    """Positions (a, b), a < b, of the minimal distance; ties resolve to
    the pair with the smallest (min cluster id, max cluster id)."""
    best = None
    best_key = None
    minval = d.min()
    rows, cols = np.nonzero(d == minval)
    for a, b in zip(rows, cols):
        if a >= b:
            continue
        key = (min(ids[a], ids[b]), max(ids[a], ids[b]))
        if best_key is None or key < best_key:
            best_key = key
            best = (int(a), int(b))
    assert best is not None, "no finite pair found"
    return best


def agnes(vectors: Sequence[np.ndarray], linkage: str = "ward") -> Dendrogram:
    """Full agglomeration of the vectors under the given linkage."""
    if linkage not in LINKAGES:
        raise ValueError(f"unknown linkage {linkage!r}; expected one of {LINKAGES}")
    x = np.asarray(vectors, dtype=np.float64)
    n = len(x)
    if n < 2:
        raise ValueError("agnes needs at least 2 vectors")

    # Merged-away slots stay in the matrix at +inf, which keeps the scan
    # and the Lance-Williams update fully vectorized.
    d = _initial_distances(x, linkage)
    ids = np.arange(n)
    sizes = np.ones(n)
    alive = np.ones(n, dtype=bool)
    merges: list[Merge] = []

    for step in range(n - 1):
        a, b = _argmin_pair(d, ids)
        height = float(d[a, b])
        sa, sb = sizes[a], sizes[b]

        if linkage == "ward":
            new = ((sa + sizes) * d[a] + (sb + sizes) * d[b] - sizes * height) / (sa + sb + sizes)
        elif linkage == "average":
            new = (sa * d[a] + sb * d[b]) / (sa + sb)
        else:
            new = np.maximum(d[a], d[b])
        mask = alive.copy()
        mask[a] = mask[b] = False
        d[a, mask] = new[mask]
        d[mask, a] = new[mask]
        d[b, :] = np.inf
        d[:, b] = np.inf
        alive[b] = False

        merges.append(
            Merge(left=min(ids[a], ids[b]), right=max(ids[a], ids[b]), height=height, size=int(sa + sb))
        )
        ids[a] = n + step
        sizes[a] = sa + sb

    return Dendrogram(n_points=n, merges=tuple(merges))


def _members(d: Dendrogram, n_applied: int) -> list[list[int]]:
    """Point memberships after applying the first ``n_applied`` merges."""
    clusters: dict[int, list[int]] = {i: [i] for i in range(d.n_points)}
    for t, merge in enumerate(d.merges[:n_applied]):
        merged = clusters.pop(merge.left) + clusters.pop(merge.right)
        clusters[d.n_points + t] = merged
    return sorted(clusters.values(), key=min)


def cut(d: Dendrogram, k: int) -> np.ndarray:
    """Labels in [0, k) after undoing the last k-1 merges.

    Cluster labels are assigned by ascending minimum point index.
    """
    if not 1 <= k <= d.n_points:
        raise ValueError(f"k={k} out of range [1, {d.n_points}]")
    labels = np.empty(d.n_points, dtype=np.int64)
    for label, members in enumerate(_members(d, d.n_points - k)):
        labels[members] = label
    return labels


def sse_curve(vectors: Sequence[np.ndarray], d: Dendrogram, k_range: Sequence[int]) -> dict[int, float]:
    """Sum of squared distances to cluster centroids, per cut size."""
    x = np.asarray(vectors, dtype=np.float64)
    curve: dict[int, float] = {}
    for k in k_range:
        labels = cut(d, k)
        sse = 0.0
        for label in range(k):
            pts = x[labels == label]
            sse += float(((pts - pts.mean(axis=0)) ** 2).sum())
        curve[k] = sse
    return curve


def elbow(curve: Mapping[int, float]) -> int:
    """Cluster count at the knee of an SSE curve.

    Both axes are min-max normalized to [0, 1]; the result is the interior
    k with the largest perpendicular distance to the chord joining the
    curve's endpoints, smallest k on ties.
    """
    if len(curve) < 3:
        raise ValueError("elbow needs at least 3 curve points")
    ks = sorted(curve)
    sse = np.array([curve[k] for k in ks], dtype=np.float64)
    xs = np.array(ks, dtype=np.float64)
    xs = (xs - xs.min()) / (xs.max() - xs.min())
    span = sse.max() - sse.min()
    ys = (sse - sse.min()) / span if span > 0 else np.zeros_like(sse)

    x0, y0 = xs[0], ys[0]
    x1, y1 = xs[-1], ys[-1]
    chord = math.hypot(x1 - x0, y1 - y0)
    best_k = ks[1]
    best_dist = -1.0
    for i in range(1, len(ks) - 1):
        dist = abs((x1 - x0) * (y0 - ys[i]) - (x0 - xs[i]) * (y1 - y0)) / chord
        if dist > best_dist:
            best_dist = dist
            best_k = ks[i]
    return best_k


def export_dendrogram(d: Dendrogram, path: Path) -> None:
    """One merge per line: ``left \\t right \\t height \\t size``.

    Negative indices are original points (point i is -(i+1)); positive
    indices refer to prior merges, 1-based.
    """

    def ref(cluster_id: int) -> int:
        if cluster_id < d.n_points:
            return -(cluster_id + 1)
        return cluster_id - d.n_points + 1

    with open(path, "w", encoding="utf-8") as fh:
        for m in d.merges:
            fh.write(f"{ref(m.left)}\t{ref(m.right)}\t{format(m.height, '.9g')}\t{m.size}\n")


class GibbsLDA:
    """Latent Dirichlet allocation via collapsed Gibbs sampling.

    Documents are token-id sequences over a dense vocabulary. Count
    matrices are kept consistent with the assignment vector after every
    sweep; ``check_counts`` verifies this invariant.
    """

    def __init__(
        self,
        docs: Sequence[Sequence[int]],
        vocab_size: int,
        num_topics: int,
        alpha: float | None = None,
        beta: float = 0.01,
        seed: int = 0,
    ) -> None:
        if num_topics < 1:
            raise ValueError("num_topics must be >= 1")
        self.docs = [np.asarray(doc, dtype=np.int64) for doc in docs]
        self.vocab_size = vocab_size
        self.num_topics = num_topics
        self.alpha = alpha if alpha is not None else 50.0 / num_topics
        self.beta = beta
        self.rng = np.random.default_rng(seed)

        self.doc_topic = np.zeros((len(self.docs), num_topics), dtype=np.int64)
        self.topic_word = np.zeros((num_topics, vocab_size), dtype=np.int64)
        self.topic_total = np.zeros(num_topics, dtype=np.int64)
        self.assignments: list[np.ndarray] = []
        for m, doc in enumerate(self.docs):
            z = self.rng.integers(num_topics, size=len(doc))
            self.assignments.append(z)
            for w, k in zip(doc, z):
                self.doc_topic[m, k] += 1
                self.topic_word[k, w] += 1
                self.topic_total[k] += 1

    def sweep(self) -> None:
        """One full Gibbs pass over every token."""
        vbeta = self.vocab_size * self.beta
        for m, doc in enumerate(self.docs):
            z = self.assignments[m]
            for n, w in enumerate(doc):
                k = z[n]
                self.doc_topic[m, k] -= 1
                self.topic_word[k, w] -= 1
                self.topic_total[k] -= 1

                probs = (self.doc_topic[m] + self.alpha) * (
                    (self.topic_word[:, w] + self.beta) / (self.topic_total + vbeta)
                )
                probs /= probs.sum()
                k = int(np.searchsorted(np.cumsum(probs), self.rng.random(), side="right"))
                k = min(k, self.num_topics - 1)

                z[n] = k
                self.doc_topic[m, k] += 1
                self.topic_word[k, w] += 1
                self.topic_total[k] += 1

    def run(self, iterations: int = 500) -> None:
        for _ in range(iterations):
            self.sweep()

    def check_counts(self) -> None:
        """Raise if the count matrices disagree with the assignments."""
        doc_lengths = np.array([len(d) for d in self.docs])
        if not np.array_equal(self.doc_topic.sum(axis=1), doc_lengths):
            raise AssertionError("doc-topic row sums diverge from document lengths")
        if not np.array_equal(self.topic_word.sum(axis=1), self.topic_total):
            raise AssertionError("topic-word row sums diverge from topic totals")
        if self.topic_total.sum() != doc_lengths.sum():
            raise AssertionError("total topic mass diverges from total token count")
        if (self.doc_topic < 0).any() or (self.topic_word < 0).any():
            raise AssertionError("negative counts")

    def topic_word_probs(self) -> np.ndarray:
        """Per-topic word distributions; each row sums to 1."""
        return (self.topic_word + self.beta) / (
            self.topic_total[:, None] + self.vocab_size * self.beta
        )

    def doc_topic_probs(self) -> np.ndarray:
        lengths = np.array([len(d) for d in self.docs])[:, None]
        return (self.doc_topic + self.alpha) / (lengths + self.num_topics * self.alpha)


@dataclass(frozen=True)
class ClusterProfile:
    cluster_id: int
    size: int
    profiled: bool
    top_terms: tuple[str, ...] = ()
    dominance: float = 0.0


def lda_profile(
    assignment: Mapping[str, int],
    docs: Mapping[str, Sequence[str]],
    num_topics: int,
    sample_fraction: float = 0.5,
    seed: int = 0,
    iterations: int = 500,
) -> list[ClusterProfile]:
    """Profile each cluster by its dominant LDA topic.

    For every cluster, ceil(fraction * size) members are sampled with a
    seeded RNG and an LDA runs over their preprocessed metadata. Every
    sampled document gets its highest-probability topic; the dominant
    topic is the modal assignment and the dominance fraction its share.
    Clusters whose sampled metadata is entirely empty come back
    unprofiled.
    """
    clusters: dict[int, list[str]] = {}
    for repo_id in sorted(assignment):
        clusters.setdefault(assignment[repo_id], []).append(repo_id)

    profiles: list[ClusterProfile] = []
    for cluster_id in sorted(clusters):
        members = clusters[cluster_id]
        n_sample = math.ceil(sample_fraction * len(members))
        rng = make_rng(seed, "lda-sample", cluster_id)
        picked = sorted(rng.choice(len(members), size=n_sample, replace=False))
        sampled = [members[i] for i in picked]
        token_docs = [list(docs.get(r, [])) for r in sampled]
        token_docs = [t for t in token_docs if t]
        if not token_docs:
            profiles.append(ClusterProfile(cluster_id=cluster_id, size=len(members), profiled=False))
            continue

        vocab = sorted({t for doc in token_docs for t in doc})
        index = {t: i for i, t in enumerate(vocab)}
        encoded = [[index[t] for t in doc] for doc in token_docs]
        lda = GibbsLDA(
            encoded,
            vocab_size=len(vocab),
            num_topics=num_topics,
            seed=make_rng(seed, "lda-gibbs", cluster_id).integers(2**63),
        )
        lda.run(iterations)

        theta = lda.doc_topic_probs()
        doc_topics = theta.argmax(axis=1)
        counts = np.bincount(doc_topics, minlength=num_topics)
        dominant = int(counts.argmax())
        dominance = counts[dominant] / len(token_docs)

        phi = lda.topic_word_probs()[dominant]
        order = sorted(range(len(vocab)), key=lambda i: (-phi[i], vocab[i]))
        top_terms = tuple(vocab[i] for i in order[:10])
        profiles.append(
            ClusterProfile(
                cluster_id=cluster_id,
                size=len(members),
                profiled=True,
                top_terms=top_terms,
                dominance=float(dominance),
            )
        )
    return profiles


def export_cluster_report(profiles: Sequence[ClusterProfile], path: Path) -> None:
    """Per cluster: ``cluster_id \\t size \\t terms (comma-joined) \\t dominance``."""
    with open(path, "w", encoding="utf-8") as fh:
        for p in profiles:
            if p.profiled:
                fh.write(f"{p.cluster_id}\t{p.size}\t{','.join(p.top_terms)}\t{format(p.dominance, '.9g')}\n")
            else:
                fh.write(f"{p.cluster_id}\t{p.size}\tunprofiled\t\n")
