"""Shared embedding trainer: preprocessing, skip-gram, and document vectors.

This module owns the negative-sampling machinery used across the pipeline:

* :func:`preprocess` turns raw metadata text into normalized tokens.
* :func:`train_skipgram` learns word vectors from token sequences; walk
  sequences over tree nodes reuse it with node ids as tokens.
* :func:`train_pvdbow` learns one vector per document by making the
  document vector predict sampled words of its own document (distributed
  bag-of-words objective), co-training word vectors with skip-gram.

Training is mini-batched but strictly deterministic for a fixed seed:
pairs are enumerated in a fixed order, negatives are drawn from a single
seeded generator, and updates are applied with scatter-adds whose result
does not depend on thread count (there is exactly one thread).

Model file layout (little-endian), also exported as TSV:

    magic    4 bytes  b"RSDM"
    version  u32      1
    dim      u32
    V        u32      vocabulary size
    D        u32      document count
    config   u32 length + UTF-8 JSON blob
    vocab    V entries: u32 token length + UTF-8 token + u64 count
    doc ids  D entries: u32 id length + UTF-8 id
    word_in  V*dim float64 row-major
    word_out V*dim float64 row-major
    doc_vecs D*dim float64 row-major
"""

from __future__ import annotations

import json
import re
import struct
from collections import Counter
from collections.abc import Mapping, Sequence
from dataclasses import asdict, dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from .seeding import make_rng

MODEL_MAGIC = b"RSDM"
MODEL_VERSION = 1

_URL_RE = re.compile(r"^(https?://|www\.)|://")
_EMAIL_RE = re.compile(r"^[^@\s]+@[^@\s]+\.[^@\s]+$")

_BATCH_SIZE = 4096


def _normalize_token(token: str) -> str:
    return "".join(ch for ch in token if ch.isalnum())


def _load_stopwords() -> frozenset[str]:
    text = resources.files("reposim.data").joinpath("stopwords.txt").read_text("utf-8")
    words = set()
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        normalized = _normalize_token(line.lower())
        if normalized:
            words.add(normalized)
    return frozenset(words)


STOPWORDS = _load_stopwords()


def preprocess(raw: str) -> list[str]:
    """Normalize raw text into tokens.

    Pipeline: lowercase, split on whitespace, drop URL- and email-shaped
    tokens, strip every non-alphanumeric character, drop empty and
    pure-number tokens, drop stopwords (bundled list). Idempotent: feeding
    the joined output back in returns the same tokens.
    """
    out: list[str] = []
    for token in raw.lower().split():
        if _URL_RE.search(token) or _EMAIL_RE.match(token):
            continue
        stripped = _normalize_token(token)
        if not stripped or stripped.isdigit() or stripped in STOPWORDS:
            continue
        out.append(stripped)
    return out


@dataclass
class EmbedConfig:
    """Hyperparameters for skip-gram / document-vector training."""

    dim: int = 128
    window: int = 5
    negatives: int = 5
    epochs: int = 20
    initial_lr: float = 0.025
    min_count: int = 1
    seed: int = 0

    def __post_init__(self) -> None:
        if self.dim < 1:
            raise ValueError("dim must be >= 1")
        if self.negatives < 1:
            raise ValueError("negatives must be >= 1")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.initial_lr <= 0:
            raise ValueError("initial_lr must be > 0")


@dataclass
class Vocabulary:
    """Token index with counts and the negative-sampling distribution.

    Indices are dense in [0, V), ordered by descending count then token.
    Negative samples follow the unigram distribution raised to 0.75.
    """

    tokens: tuple[str, ...]
    index: dict[str, int]
    counts: np.ndarray
    min_count: int
    sampling_cdf: np.ndarray

    @classmethod
    def build(cls, sequences: Sequence[Sequence[str]], min_count: int = 1) -> "Vocabulary":
        counter: Counter[str] = Counter()
        for seq in sequences:
            counter.update(seq)
        kept = sorted(
            (t for t, c in counter.items() if c >= min_count),
            key=lambda t: (-counter[t], t),
        )
        counts = np.array([counter[t] for t in kept], dtype=np.float64)
        if len(kept):
            weights = counts**0.75
            cdf = np.cumsum(weights / weights.sum())
            cdf[-1] = 1.0
        else:
            cdf = np.zeros(0)
        return cls(
            tokens=tuple(kept),
            index={t: i for i, t in enumerate(kept)},
            counts=counts,
            min_count=min_count,
            sampling_cdf=cdf,
        )

    def __len__(self) -> int:
        return len(self.tokens)

    def encode(self, tokens: Sequence[str]) -> np.ndarray:
        """Vocabulary indices of the retained tokens, pruned ones dropped."""
        return np.array([self.index[t] for t in tokens if t in self.index], dtype=np.int64)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    return np.where(
        x >= 0,
        1.0 / (1.0 + np.exp(-np.clip(x, 0.0, None))),
        np.exp(np.clip(x, None, 0.0)) / (1.0 + np.exp(np.clip(x, None, 0.0))),
    )


def _log_sigmoid(x: np.ndarray) -> np.ndarray:
    return -np.logaddexp(0.0, -np.asarray(x, dtype=np.float64))


def negative_sampling_loss(center: np.ndarray, pos_out: np.ndarray, neg_outs: np.ndarray) -> float:
    """Logistic loss of one (input, target) pair with sampled negatives.

    ``loss = -log s(v.u) - sum_i log s(-v.n_i)`` where ``s`` is the logistic
    function, ``v`` the input (word, node, or document) vector, ``u`` the
    positive output vector and ``n_i`` the negative output vectors.
    """
    pos_term = _log_sigmoid(float(np.dot(center, pos_out)))
    neg_term = _log_sigmoid(-(neg_outs @ center)).sum()
    return float(-pos_term - neg_term)


def negative_sampling_gradients(
    center: np.ndarray, pos_out: np.ndarray, neg_outs: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Analytic gradients of :func:`negative_sampling_loss`.

    Returns (d/d center, d/d pos_out, d/d neg_outs); the last has one row
    per negative sample.
    """
    s_pos = float(_sigmoid(np.dot(center, pos_out)))
    s_neg = _sigmoid(neg_outs @ center)
    g_center = (s_pos - 1.0) * pos_out + s_neg @ neg_outs
    g_pos = (s_pos - 1.0) * center
    g_negs = s_neg[:, None] * center[None, :]
    return g_center, g_pos, g_negs


def _sample_negatives(rng: np.random.Generator, cdf: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    return np.searchsorted(cdf, rng.random(shape), side="right")


def _sgd_epochs(
    x_in: np.ndarray,
    w_out: np.ndarray,
    in_rows: np.ndarray,
    out_rows: np.ndarray,
    config: EmbedConfig,
    cdf: np.ndarray,
    rng: np.random.Generator,
    update_outputs: bool = True,
    batch_size: int = _BATCH_SIZE,
) -> None:
    """Run ``config.epochs`` passes of pair updates in place.

    Every pair gets one positive update and ``config.negatives`` sampled
    negative updates. The learning rate decays linearly per pair from
    ``initial_lr`` down to ``initial_lr / 10_000``. Batches apply their
    updates via scatter-add against the pre-batch parameters.
    """
    n_pairs = len(in_rows)
    total = n_pairs * config.epochs
    if total == 0 or len(cdf) == 0:
        return
    lr0 = config.initial_lr
    lr_floor = lr0 / 10_000.0
    k = config.negatives
    t = 0
    for _ in range(config.epochs):
        for start in range(0, n_pairs, batch_size):
            in_b = in_rows[start : start + batch_size]
            out_b = out_rows[start : start + batch_size]
            b = len(in_b)
            neg = _sample_negatives(rng, cdf, (b, k))
            lr = np.maximum(lr0 * (1.0 - (t + np.arange(b)) / total), lr_floor)

            v = x_in[in_b]
            u_pos = w_out[out_b]
            u_neg = w_out[neg]
            g_pos = (_sigmoid(np.einsum("bd,bd->b", v, u_pos)) - 1.0) * lr
            g_neg = _sigmoid(np.einsum("bd,bkd->bk", v, u_neg)) * lr[:, None]

            grad_v = g_pos[:, None] * u_pos + np.einsum("bk,bkd->bd", g_neg, u_neg)
            np.subtract.at(x_in, in_b, grad_v)
            if update_outputs:
                np.subtract.at(w_out, out_b, g_pos[:, None] * v)
                dim = v.shape[1]
                np.subtract.at(
                    w_out,
                    neg.reshape(-1),
                    (g_neg[..., None] * v[:, None, :]).reshape(-1, dim),
                )
            t += b


def _skipgram_pairs(encoded: Sequence[np.ndarray], window: int, row_offset: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """(center row, context index) pairs for every context within ``window``."""
    centers: list[np.ndarray] = []
    contexts: list[np.ndarray] = []
    for seq in encoded:
        n = len(seq)
        for off in range(1, window + 1):
            if off >= n:
                break
            left = seq[:-off]
            right = seq[off:]
            centers.append(left + row_offset)
            contexts.append(right)
            centers.append(right + row_offset)
            contexts.append(left)
    if not centers:
        empty = np.zeros(0, dtype=np.int64)
        return empty, empty.copy()
    return np.concatenate(centers), np.concatenate(contexts)


def _init_inputs(rng: np.random.Generator, rows: int, dim: int) -> np.ndarray:
    return (rng.random((rows, dim)) - 0.5) / dim


def train_skipgram(
    sequences: Sequence[Sequence[str]],
    config: EmbedConfig,
    vocab: Vocabulary | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Train word vectors; returns (input vectors, output vectors).

    Rows follow ``vocab`` indices (built from ``sequences`` when not
    given). Raises ValueError when pruning leaves the vocabulary empty.
    """
    if vocab is None:
        vocab = Vocabulary.build(sequences, config.min_count)
    if len(vocab) == 0:
        raise ValueError("vocabulary is empty after min_count pruning")
    rng = np.random.default_rng(config.seed)
    w_in = _init_inputs(rng, len(vocab), config.dim)
    w_out = np.zeros((len(vocab), config.dim))
    encoded = [vocab.encode(seq) for seq in sequences]
    in_rows, out_rows = _skipgram_pairs(encoded, config.window)
    _sgd_epochs(w_in, w_out, in_rows, out_rows, config, vocab.sampling_cdf, rng)
    return w_in, w_out


@dataclass
class DocModel:
    """Trained document-vector model (document and word vectors)."""

    dim: int
    vocab: Vocabulary
    doc_ids: tuple[str, ...]
    doc_vectors: np.ndarray
    word_in: np.ndarray
    word_out: np.ndarray
    config: EmbedConfig

    def __post_init__(self) -> None:
        self._doc_index = {d: i for i, d in enumerate(self.doc_ids)}

    def __contains__(self, doc_id: str) -> bool:
        return doc_id in self._doc_index

    def vector(self, doc_id: str) -> np.ndarray:
        return self.doc_vectors[self._doc_index[doc_id]].copy()

    def save(self, path: Path) -> None:
        """Write the binary model file (layout in the module docstring)."""
        with open(path, "wb") as fh:
            fh.write(MODEL_MAGIC)
            fh.write(struct.pack("<IIII", MODEL_VERSION, self.dim, len(self.vocab), len(self.doc_ids)))
            blob = json.dumps(asdict(self.config), sort_keys=True).encode("utf-8")
            fh.write(struct.pack("<I", len(blob)))
            fh.write(blob)
            for token, count in zip(self.vocab.tokens, self.vocab.counts):
                raw = token.encode("utf-8")
                fh.write(struct.pack("<I", len(raw)))
                fh.write(raw)
                fh.write(struct.pack("<Q", int(count)))
            for doc_id in self.doc_ids:
                raw = doc_id.encode("utf-8")
                fh.write(struct.pack("<I", len(raw)))
                fh.write(raw)
            fh.write(np.ascontiguousarray(self.word_in, dtype="<f8").tobytes())
            fh.write(np.ascontiguousarray(self.word_out, dtype="<f8").tobytes())
            fh.write(np.ascontiguousarray(self.doc_vectors, dtype="<f8").tobytes())

    @classmethod
    def load(cls, path: Path) -> "DocModel":
        with open(path, "rb") as fh:
            magic = fh.read(4)
            if magic != MODEL_MAGIC:
                raise ValueError(f"not a model file: bad magic {magic!r}")
            version, dim, n_vocab, n_docs = struct.unpack("<IIII", fh.read(16))
            if version != MODEL_VERSION:
                raise ValueError(f"unsupported model version {version}")
            (blob_len,) = struct.unpack("<I", fh.read(4))
            config = EmbedConfig(**json.loads(fh.read(blob_len).decode("utf-8")))
            tokens: list[str] = []
            counts: list[int] = []
            for _ in range(n_vocab):
                (tlen,) = struct.unpack("<I", fh.read(4))
                tokens.append(fh.read(tlen).decode("utf-8"))
                (count,) = struct.unpack("<Q", fh.read(8))
                counts.append(count)
            doc_ids: list[str] = []
            for _ in range(n_docs):
                (dlen,) = struct.unpack("<I", fh.read(4))
                doc_ids.append(fh.read(dlen).decode("utf-8"))

            def read_matrix(rows: int) -> np.ndarray:
                data = np.frombuffer(fh.read(rows * dim * 8), dtype="<f8")
                return data.reshape(rows, dim).copy()

            word_in = read_matrix(n_vocab)
            word_out = read_matrix(n_vocab)
            doc_vectors = read_matrix(n_docs)

        counts_arr = np.array(counts, dtype=np.float64)
        if n_vocab:
            weights = counts_arr**0.75
            cdf = np.cumsum(weights / weights.sum())
            cdf[-1] = 1.0
        else:
            cdf = np.zeros(0)
        vocab = Vocabulary(
            tokens=tuple(tokens),
            index={t: i for i, t in enumerate(tokens)},
            counts=counts_arr,
            min_count=config.min_count,
            sampling_cdf=cdf,
        )
        return cls(
            dim=dim,
            vocab=vocab,
            doc_ids=tuple(doc_ids),
            doc_vectors=doc_vectors,
            word_in=word_in,
            word_out=word_out,
            config=config,
        )

    def export_tsv(self, path: Path) -> None:
        """Doc vectors as ``id \\t v1 ... \\t v<dim>`` with 9 significant digits."""
        with open(path, "w", encoding="utf-8") as fh:
            for doc_id, row in zip(self.doc_ids, self.doc_vectors):
                values = "\t".join(format(x, ".9g") for x in row)
                fh.write(f"{doc_id}\t{values}\n")


def train_pvdbow(docs: Mapping[str, Sequence[str]], config: EmbedConfig) -> DocModel:
    """Train document vectors with the bag-of-words objective.

    Each document vector is the input for (doc, word) pairs over every
    retained token position of that document; word vectors are co-trained
    with skip-gram pairs from the same stream. Documents whose tokens are
    all pruned receive the zero vector. Raises ValueError when every
    document is empty.
    """
    doc_ids = tuple(docs.keys())
    vocab = Vocabulary.build(list(docs.values()), config.min_count)
    encoded = [vocab.encode(docs[d]) for d in doc_ids]
    if all(len(e) == 0 for e in encoded):
        raise ValueError("no document has retained tokens; nothing to train")

    n_docs = len(doc_ids)
    n_vocab = len(vocab)
    rng = np.random.default_rng(config.seed)
    x_in = np.vstack([
        _init_inputs(rng, n_docs, config.dim),
        _init_inputs(rng, n_vocab, config.dim),
    ])
    for i, seq in enumerate(encoded):
        if len(seq) == 0:
            x_in[i] = 0.0
    w_out = np.zeros((n_vocab, config.dim))

    in_parts: list[np.ndarray] = []
    out_parts: list[np.ndarray] = []
    for i, seq in enumerate(encoded):
        if len(seq) == 0:
            continue
        in_parts.append(np.full(len(seq), i, dtype=np.int64))
        out_parts.append(seq)
        sg_in, sg_out = _skipgram_pairs([seq], config.window, row_offset=n_docs)
        if len(sg_in):
            in_parts.append(sg_in)
            out_parts.append(sg_out)
    in_rows = np.concatenate(in_parts)
    out_rows = np.concatenate(out_parts)
    _sgd_epochs(x_in, w_out, in_rows, out_rows, config, vocab.sampling_cdf, rng)

    return DocModel(
        dim=config.dim,
        vocab=vocab,
        doc_ids=doc_ids,
        doc_vectors=x_in[:n_docs].copy(),
        word_in=x_in[n_docs:].copy(),
        word_out=w_out,
        config=config,
    )


def infer_doc_vector(model: DocModel, tokens: Sequence[str], epochs: int | None = None) -> np.ndarray:
    """Document vector for an unseen document.

    Word output vectors stay frozen; only the new document vector takes
    gradient steps. Deterministic for a given model and token sequence.
    Tokens outside the vocabulary are ignored; a fully-unknown or empty
    document maps to the zero vector.
    """
    seq = model.vocab.encode(tokens)
    if len(seq) == 0:
        return np.zeros(model.dim)
    config = EmbedConfig(**{**asdict(model.config), "epochs": epochs or model.config.epochs})
    rng = make_rng(model.config.seed, "infer", " ".join(tokens))
    x_in = _init_inputs(rng, 1, model.dim)
    in_rows = np.zeros(len(seq), dtype=np.int64)
    _sgd_epochs(
        x_in,
        model.word_out,
        in_rows,
        seq,
        config,
        model.vocab.sampling_cdf,
        rng,
        update_outputs=False,
    )
    return x_in[0]


def metadata_vector(record, model: DocModel) -> np.ndarray:
    """Embedding of a repository's metadata document.

    Looks up the trained vector when the repo was part of the training
    corpus, otherwise infers one on frozen word vectors. Empty metadata
    maps to the zero vector.
    """
    if record.repo_id in model:
        return model.vector(record.repo_id)
    return infer_doc_vector(model, preprocess(record.meta.document()))
