"""Fusing part vectors into repository embeddings and querying them.

The metadata (M), structure (S), and code (C) vectors are each
L2-normalized, scaled by their weight, and concatenated in that order
into one 384-dim vector. Normalizing before weighting keeps the weights
acting on comparable magnitudes; zero parts stay zero segments. Cosine
similarity answers top-k queries over an immutable in-memory store.

Store files: TSV ``repo_id \\t 384 floats`` (9 significant digits) plus a
``<store>.meta.json`` sidecar recording weights, seed, and config hash.
"""

from __future__ import annotations

import json
from collections.abc import Sequence
from dataclasses import dataclass
from pathlib import Path

import numpy as np

PART_DIM = 128
FUSED_DIM = 3 * PART_DIM

WEIGHT_PRESETS = {
    "M": (1.0, 0.0, 0.0),
    "MS": (1.0, 1.0, 0.0),
    "All": (1.0, 1.0, 1.0),
}


@dataclass(frozen=True)
class FusionWeights:
    meta: float
    struct: float
    code: float

    def __post_init__(self) -> None:
        for name, w in (("meta", self.meta), ("struct", self.struct), ("code", self.code)):
            if not 0.0 <= w <= 1.0:
                raise ValueError(f"weight {name}={w} outside [0, 1]")

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.meta, self.struct, self.code)


def variant_weights(name: str) -> FusionWeights:
    """Named weight presets: M=(1,0,0), MS=(1,1,0), All=(1,1,1)."""
    if name not in WEIGHT_PRESETS:
        raise ValueError(f"unknown weight preset {name!r}; expected one of {sorted(WEIGHT_PRESETS)}")
    return FusionWeights(*WEIGHT_PRESETS[name])


def _normalized(part: np.ndarray) -> np.ndarray:
    norm = float(np.linalg.norm(part))
    return part / norm if norm > 0 else part


def fuse(m: np.ndarray, s: np.ndarray, c: np.ndarray, weights: FusionWeights) -> np.ndarray:
    """Weighted concatenation of the three part vectors."""
    parts = []
    for part, w in zip((m, s, c), weights.as_tuple()):
        part = np.asarray(part, dtype=np.float64)
        if part.shape != (PART_DIM,):
            raise ValueError(f"part vector has shape {part.shape}, expected ({PART_DIM},)")
        parts.append(w * _normalized(part))
    return np.concatenate(parts)


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    """Cosine similarity in [-1, 1]; zero-norm inputs compare as 0."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(np.clip(np.dot(a, b) / (na * nb), -1.0, 1.0))


@dataclass(frozen=True)
class RepoEmbedding:
    repo_id: str
    meta_vec: np.ndarray
    struct_vec: np.ndarray
    code_vec: np.ndarray
    fused: np.ndarray


@dataclass(frozen=True)
class QueryResult:
    query_id: str
    ranked: tuple[tuple[str, float], ...]  # (repo_id, cosine), scores non-increasing


def top_k(query_id: str, store: Sequence[RepoEmbedding], k: int = 5) -> QueryResult:
    """The k most similar repositories to ``query_id`` by fused cosine.

    The query itself is excluded; ties break by ascending repo_id. Raises
    KeyError for an unknown query id.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    by_id = {e.repo_id: e for e in store}
    if query_id not in by_id:
        raise KeyError(f"unknown query repo_id {query_id!r}")
    query_vec = by_id[query_id].fused
    scored = [
        (e.repo_id, cosine(query_vec, e.fused))
        for e in store
        if e.repo_id != query_id
    ]
    scored.sort(key=lambda t: (-t[1], t[0]))
    return QueryResult(query_id=query_id, ranked=tuple(scored[:k]))


def _split_parts(fused: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    return fused[:PART_DIM], fused[PART_DIM : 2 * PART_DIM], fused[2 * PART_DIM :]


def save_store(store: Sequence[RepoEmbedding], path: Path, header: dict) -> None:
    """Write the embedding TSV and its JSON header sidecar."""
    path = Path(path)
    with open(path, "w", encoding="utf-8") as fh:
        for e in store:
            values = "\t".join(format(x, ".9g") for x in e.fused)
            fh.write(f"{e.repo_id}\t{values}\n")
    sidecar = path.with_suffix(path.suffix + ".meta.json")
    sidecar.write_text(json.dumps(header, sort_keys=True, indent=2) + "\n", encoding="utf-8")


def load_store(path: Path) -> tuple[list[RepoEmbedding], dict]:
    """Read a store TSV (+ header sidecar when present).

    Part vectors are recovered from the fused segments; for any weight
    w > 0 a stored segment is w times a unit vector, so re-fusing the
    recovered parts with the stored weights reproduces the fused vector.
    """
    path = Path(path)
    store: list[RepoEmbedding] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != FUSED_DIM + 1:
                raise ValueError(f"{path}:{lineno}: expected {FUSED_DIM} components, found {len(parts) - 1}")
            fused = np.array([float(x) for x in parts[1:]])
            m, s, c = _split_parts(fused)
            store.append(RepoEmbedding(parts[0], m.copy(), s.copy(), c.copy(), fused))
    sidecar = path.with_suffix(path.suffix + ".meta.json")
    header = json.loads(sidecar.read_text(encoding="utf-8")) if sidecar.is_file() else {}
    return store, header


def write_query_tsv(result: QueryResult, path: Path) -> None:
    """Query output: ``rank \\t repo_id \\t score`` per line."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(format_query(result))


def format_query(result: QueryResult) -> str:
    lines = [
        f"{rank}\t{repo_id}\t{format(score, '.9g')}"
        for rank, (repo_id, score) in enumerate(result.ranked, 1)
    ]
    return "".join(line + "\n" for line in lines)
