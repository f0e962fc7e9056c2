"""End-to-end orchestration: ingest artifacts and corpus embedding.

The ingest step persists everything the later stages need (metadata,
anonymous trees, source refs, path contexts) so every command can re-run
from disk without hidden state. Method ids are made corpus-unique by
prefixing the repo id: ``<repo_id>/<file path>:<ordinal>``.
"""

from __future__ import annotations

import json
from collections.abc import Mapping, Sequence
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import codeembed
from .codeembed import ParsedMethod, PathContext
from .config import RunConfig
from .corpus import DirTree, IngestConfig, MetaDocument, RepoRecord, SourceFileRef, scan_corpus, write_manifest
from .fusion import RepoEmbedding, fuse
from .seeding import derive_seed
from .structembed import generate_walks, structure_vector
from .textembed import DocModel, metadata_vector, preprocess, train_pvdbow

MethodsByFile = dict[str, list[ParsedMethod]]


def parse_repo_methods(records: Sequence[RepoRecord], root: Path, seed: int) -> dict[str, MethodsByFile]:
    """Path contexts for every source file of every repository."""
    ctx_seed = derive_seed(seed, "contexts")
    out: dict[str, MethodsByFile] = {}
    for record in records:
        per_file: MethodsByFile = {}
        for ref in record.sources:
            methods = codeembed.parse_file(Path(root) / record.repo_id, ref, ctx_seed)
            per_file[ref.path] = [
                replace(m, method_id=f"{record.repo_id}/{m.method_id}") for m in methods
            ]
        out[record.repo_id] = per_file
    return out


def run_ingest(root: Path, out_dir: Path, config: RunConfig) -> list[RepoRecord]:
    """Scan the corpus and persist all intermediate artifacts."""
    records = scan_corpus(root, IngestConfig())
    methods = parse_repo_methods(records, root, config.seed)

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_manifest(records, out_dir / "manifest.tsv")
    repos_dir = out_dir / "repos"
    for record in records:
        repo_dir = repos_dir / record.repo_id
        repo_dir.mkdir(parents=True, exist_ok=True)
        payload = {
            "repo_id": record.repo_id,
            "meta": {
                "title": record.meta.title,
                "description": record.meta.description,
                "topics": list(record.meta.topics),
                "readme": record.meta.readme,
            },
            "tree": {"children": [list(c) for c in record.tree.children]},
            "sources": [[s.path, s.language_tag] for s in record.sources],
        }
        (repo_dir / "record.json").write_text(
            json.dumps(payload, sort_keys=True) + "\n", encoding="utf-8"
        )
        with open(repo_dir / "contexts.jsonl", "w", encoding="utf-8") as fh:
            for path in sorted(methods[record.repo_id]):
                for m in methods[record.repo_id][path]:
                    line = {
                        "file": path,
                        "method_id": m.method_id,
                        "contexts": [[c.left, c.path, c.right] for c in m.contexts],
                    }
                    fh.write(json.dumps(line, sort_keys=True) + "\n")
    return records


def load_ingest(out_dir: Path) -> tuple[list[RepoRecord], dict[str, MethodsByFile]]:
    """Rebuild records and parsed methods from ingest artifacts."""
    repos_dir = Path(out_dir) / "repos"
    if not repos_dir.is_dir():
        raise FileNotFoundError(f"no ingest artifacts under {out_dir} (missing {repos_dir})")
    records: list[RepoRecord] = []
    methods: dict[str, MethodsByFile] = {}
    for repo_dir in sorted(repos_dir.iterdir()):
        if not repo_dir.is_dir():
            continue
        payload = json.loads((repo_dir / "record.json").read_text(encoding="utf-8"))
        record = RepoRecord(
            repo_id=payload["repo_id"],
            meta=MetaDocument(
                title=payload["meta"]["title"],
                description=payload["meta"]["description"],
                topics=tuple(payload["meta"]["topics"]),
                readme=payload["meta"]["readme"],
            ),
            tree=DirTree(children=tuple(tuple(c) for c in payload["tree"]["children"])),
            sources=tuple(SourceFileRef(path=p, language_tag=t) for p, t in payload["sources"]),
        )
        records.append(record)
        per_file: MethodsByFile = {s.path: [] for s in record.sources}
        with open(repo_dir / "contexts.jsonl", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                obj = json.loads(line)
                per_file.setdefault(obj["file"], []).append(
                    ParsedMethod(
                        method_id=obj["method_id"],
                        contexts=tuple(PathContext(l, p, r) for l, p, r in obj["contexts"]),
                    )
                )
        methods[record.repo_id] = per_file
    return records, methods


def embed_corpus(
    records: Sequence[RepoRecord],
    methods: Mapping[str, MethodsByFile],
    config: RunConfig,
    method_vector_overrides: Mapping[str, np.ndarray] | None = None,
) -> tuple[list[RepoEmbedding], dict[str, DocModel]]:
    """Train the part models and fuse one embedding per repository.

    Parts with zero weight are skipped (their segment is zero either
    way). ``method_vector_overrides`` supplies externally computed method
    vectors that take precedence over the trained code model.
    """
    zeros = np.zeros(config.dim)
    models: dict[str, DocModel] = {}

    meta_model = None
    if config.weights.meta > 0:
        docs = {r.repo_id: preprocess(r.meta.document()) for r in records}
        if any(docs.values()):
            meta_config = replace(config.meta_embed, dim=config.dim, seed=derive_seed(config.seed, "meta"))
            meta_model = train_pvdbow(docs, meta_config)
            models["meta"] = meta_model

    code_model = None
    all_methods = [
        m
        for repo_id in sorted(methods)
        for path in sorted(methods[repo_id])
        for m in methods[repo_id][path]
    ]
    if config.weights.code > 0 and any(m.contexts for m in all_methods):
        code_config = replace(config.code_embed, dim=config.dim, seed=derive_seed(config.seed, "code"))
        code_model = codeembed.train_code_model(all_methods, code_config)
        models["code"] = code_model

    struct_embed = replace(config.struct_embed, dim=config.dim, seed=derive_seed(config.seed, "struct"))
    struct_walk = replace(config.struct_walk, seed=derive_seed(config.seed, "walks"))

    embeddings: list[RepoEmbedding] = []
    for record in records:
        m_vec = metadata_vector(record, meta_model) if meta_model is not None else zeros
        if config.weights.struct > 0:
            s_vec = structure_vector(record.tree, struct_walk, struct_embed, config.agg)
        else:
            s_vec = zeros
        if config.weights.code > 0 and (code_model is not None or method_vector_overrides):
            per_file = methods.get(record.repo_id, {})
            vectors: dict[str, np.ndarray] = {}
            for path in per_file:
                for m in per_file[path]:
                    if method_vector_overrides and m.method_id in method_vector_overrides:
                        vectors[m.method_id] = method_vector_overrides[m.method_id]
                    elif code_model is not None:
                        vectors[m.method_id] = codeembed.method_vector(m, code_model)
                    else:
                        vectors[m.method_id] = zeros
            c_vec = codeembed.code_vector(per_file, vectors, config.dim, config.agg)
        else:
            c_vec = zeros
        embeddings.append(
            RepoEmbedding(
                repo_id=record.repo_id,
                meta_vec=m_vec,
                struct_vec=s_vec,
                code_vec=c_vec,
                fused=fuse(m_vec, s_vec, c_vec, config.weights),
            )
        )
    return embeddings, models


def dump_all_walks(records: Sequence[RepoRecord], config: RunConfig, out_dir: Path) -> None:
    """Debug export of the walk sequences per repository."""
    from .structembed import dump_walks

    walk_config = replace(config.struct_walk, seed=derive_seed(config.seed, "walks"))
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for record in records:
        walks = generate_walks(record.tree, walk_config)
        dump_walks(walks, out_dir / f"{record.repo_id}.walks.txt")
