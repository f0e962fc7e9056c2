"""Query-based evaluation against human similarity categories.

Ground truth labels each (query, result) pair with a category: 4 strongly
similar, 3 weakly similar, 2 weakly dissimilar, 1 strongly dissimilar.
A returned repository counts as a true positive when its category is 3 or
4. The report carries the success rate (queries with at least one true
positive), pooled precision (true positives / all returned), the mean
rank correlation between the algorithm's ordering and the
category-induced ordering, and pooled category counts.
"""

from __future__ import annotations

import csv
import json
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .fusion import QueryResult

CATEGORY_NAMES = {4: "SS", 3: "WS", 2: "WD", 1: "SD"}
SIMILAR_THRESHOLD = 3


@dataclass(frozen=True)
class GroundTruth:
    categories: Mapping[tuple[str, str], int]

    def __post_init__(self) -> None:
        bad = {c for c in self.categories.values() if c not in CATEGORY_NAMES}
        if bad:
            raise ValueError(f"categories outside 1..4: {sorted(bad)}")

    @classmethod
    def from_csv(cls, path: Path) -> "GroundTruth":
        """Read ``query_id,result_id,category`` rows (header optional)."""
        categories: dict[tuple[str, str], int] = {}
        with open(path, newline="", encoding="utf-8") as fh:
            for row in csv.reader(fh):
                if not row or (row[0] == "query_id" and not categories):
                    continue
                if len(row) != 3:
                    raise ValueError(f"{path}: expected 3 columns, found {len(row)}: {row}")
                key = (row[0], row[1])
                if key in categories:
                    raise ValueError(f"{path}: duplicate pair {key}")
                categories[key] = int(row[2])
        return cls(categories=categories)


def _pair_categories(results: Mapping[str, QueryResult], gt: GroundTruth) -> list[list[int]]:
    """Categories per query in rank order; missing pairs are an error."""
    missing = []
    out: list[list[int]] = []
    for query_id in sorted(results):
        cats = []
        for repo_id, _score in results[query_id].ranked:
            key = (query_id, repo_id)
            if key not in gt.categories:
                missing.append(key)
            else:
                cats.append(gt.categories[key])
        out.append(cats)
    if missing:
        raise ValueError("ground truth missing pairs: " + ", ".join(map(str, missing)))
    return out


def success_rate(results: Mapping[str, QueryResult], gt: GroundTruth) -> float:
    """Fraction of queries returning at least one category >= 3 repository."""
    per_query = _pair_categories(results, gt)
    if not per_query:
        return 0.0
    hits = sum(1 for cats in per_query if any(c >= SIMILAR_THRESHOLD for c in cats))
    return hits / len(per_query)


def precision(results: Mapping[str, QueryResult], gt: GroundTruth) -> float:
    """(SS + WS) / (SS + WS + WD + SD) over all returned pairs pooled."""
    pooled = [c for cats in _pair_categories(results, gt) for c in cats]
    if not pooled:
        return 0.0
    similar = sum(1 for c in pooled if c >= SIMILAR_THRESHOLD)
    return similar / len(pooled)


def category_histogram(results: Mapping[str, QueryResult], gt: GroundTruth) -> dict[int, int]:
    """Pooled category counts over all returned pairs."""
    counts = {c: 0 for c in sorted(CATEGORY_NAMES)}
    for cats in _pair_categories(results, gt):
        for c in cats:
            counts[c] += 1
    return counts


def _average_ranks_desc(values: Sequence[float]) -> np.ndarray:
    """Rank 1 for the largest value; ties share the average rank."""
    values = np.asarray(values, dtype=np.float64)
    order = np.argsort(-values, kind="stable")
    ranks = np.empty(len(values))
    i = 0
    while i < len(values):
        j = i
        while j + 1 < len(values) and values[order[j + 1]] == values[order[i]]:
            j += 1
        avg = (i + j) / 2.0 + 1.0
        for p in range(i, j + 1):
            ranks[order[p]] = avg
        i = j + 1
    return ranks


def spearman(algorithm_ranking: Sequence[int], reference: Sequence[float]) -> float:
    """Rank correlation between the output order and reference scores.

    The reference values (higher is better) are converted to ranks with
    average-rank tie handling. Without ties the classic formula
    ``1 - 6*sum(d^2) / (n(n^2-1))`` applies; with ties this falls back to
    the Pearson correlation of the two rank vectors. Degenerate all-tied
    references give 0.
    """
    algo = np.asarray(algorithm_ranking, dtype=np.float64)
    ref = np.asarray(reference, dtype=np.float64)
    if algo.shape != ref.shape:
        raise ValueError(f"length mismatch: {algo.shape} vs {ref.shape}")
    n = len(algo)
    if n < 2:
        raise ValueError("need at least 2 ranked items")
    ref_ranks = _average_ranks_desc(ref)
    if len(np.unique(ref_ranks)) == n:
        d = algo - ref_ranks
        return float(1.0 - 6.0 * (d**2).sum() / (n * (n**2 - 1)))
    a = algo - algo.mean()
    b = ref_ranks - ref_ranks.mean()
    denom = float(np.sqrt((a**2).sum() * (b**2).sum()))
    if denom == 0.0:
        return 0.0
    return float((a * b).sum() / denom)


@dataclass
class EvalReport:
    success_rate: float
    precision: float
    spearman_mean: float
    category_counts: dict[int, int]
    num_queries: int
    k: int
    per_query_spearman: dict[str, float] = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {
            "success_rate": self.success_rate,
            "precision": self.precision,
            "spearman_mean": self.spearman_mean,
            "category_counts": {CATEGORY_NAMES[c]: n for c, n in sorted(self.category_counts.items(), reverse=True)},
            "num_queries": self.num_queries,
            "k": self.k,
            "per_query_spearman": self.per_query_spearman,
        }


def evaluate_queries(results: Mapping[str, QueryResult], gt: GroundTruth) -> EvalReport:
    """Full evaluation over a set of query results."""
    per_query = _pair_categories(results, gt)
    ordered_ids = sorted(results)
    spearman_by_query: dict[str, float] = {}
    for query_id, cats in zip(ordered_ids, per_query):
        if len(cats) >= 2:
            spearman_by_query[query_id] = spearman(list(range(1, len(cats) + 1)), cats)
    k = max((len(r.ranked) for r in results.values()), default=0)
    return EvalReport(
        success_rate=success_rate(results, gt),
        precision=precision(results, gt),
        spearman_mean=float(np.mean(list(spearman_by_query.values()))) if spearman_by_query else 0.0,
        category_counts=category_histogram(results, gt),
        num_queries=len(results),
        k=k,
        per_query_spearman=spearman_by_query,
    )


def write_report(report: EvalReport, path: Path) -> None:
    Path(path).write_text(json.dumps(report.as_dict(), sort_keys=True, indent=2) + "\n", encoding="utf-8")


def format_table(report: EvalReport) -> str:
    """Human-readable summary table."""
    lines = [
        f"{'queries':<14}{report.num_queries}",
        f"{'k':<14}{report.k}",
        f"{'success rate':<14}{report.success_rate:.2%}",
        f"{'precision':<14}{report.precision:.2%}",
        f"{'spearman mean':<14}{report.spearman_mean:.3f}",
        "categories    "
        + "  ".join(f"{CATEGORY_NAMES[c]}={report.category_counts.get(c, 0)}" for c in (4, 3, 2, 1)),
    ]
    return "\n".join(lines) + "\n"
