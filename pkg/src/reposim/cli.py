"""Command-line surface: ingest -> embed -> query/cluster/classify/eval.

Exit codes: 0 success, 1 usage error, 2 data error. Every command is
re-runnable from the artifacts a previous command persisted.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .classify import LabeledEmbedding, cross_validate, load_labels
from .cluster import agnes, cut, elbow, export_cluster_report, export_dendrogram, lda_profile, sse_curve
from .codeembed import import_method_vectors
from .config import RunConfig, load_config
from .evaluate import GroundTruth, evaluate_queries, format_table, write_report
from .fusion import format_query, load_store, save_store, top_k, write_query_tsv
from .pipeline import dump_all_walks, embed_corpus, load_ingest, run_ingest
from .seeding import derive_seed
from .textembed import preprocess


class DataError(Exception):
    """Bad or missing input data (exit code 2)."""


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # usage errors exit with 1
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _run_config(args: argparse.Namespace) -> RunConfig:
    overrides: dict[str, str] = {}
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = str(args.seed)
    if getattr(args, "weights", None) is not None:
        overrides["weights"] = args.weights
    if getattr(args, "preset", None) is not None:
        overrides["weights"] = args.preset
    if getattr(args, "agg", None) is not None:
        overrides["agg"] = args.agg
    config_path = getattr(args, "config", None)
    try:
        return load_config(config_path, overrides)
    except (OSError, ValueError) as exc:
        raise DataError(str(exc)) from exc


def cmd_ingest(args: argparse.Namespace) -> int:
    config = _run_config(args)
    root = Path(args.root)
    if not root.is_dir():
        raise DataError(f"corpus root is not a readable directory: {root}")
    records = run_ingest(root, Path(args.out), config)
    print(f"ingested {len(records)} repositories -> {args.out}")
    return 0


def cmd_embed(args: argparse.Namespace) -> int:
    config = _run_config(args)
    try:
        records, methods = load_ingest(Path(args.ingest))
    except FileNotFoundError as exc:
        raise DataError(str(exc)) from exc
    overrides = None
    if args.method_vectors:
        overrides = import_method_vectors(Path(args.method_vectors), config.dim)

    embeddings, models = embed_corpus(records, methods, config, overrides)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    header = {
        "weights": list(config.weights.as_tuple()),
        "seed": config.seed,
        "dim": config.dim,
        "agg": config.agg,
        "config_sha256": config.config_hash(),
        "repositories": len(embeddings),
    }
    store_path = out / "embeddings.tsv"
    save_store(embeddings, store_path, header)

    models_dir = out / "models"
    for name, model in models.items():
        models_dir.mkdir(parents=True, exist_ok=True)
        model.save(models_dir / f"{name}_model.bin")
        model.export_tsv(models_dir / f"{name}_vectors.tsv")
    if args.dump_walks:
        dump_all_walks(records, config, out / "walks")

    print(f"embedded {len(embeddings)} repositories -> {store_path}")
    return 0


def _load_store(path: str):
    store_path = Path(path)
    if not store_path.is_file():
        raise DataError(f"no embedding store at {store_path}")
    return load_store(store_path)


def cmd_query(args: argparse.Namespace) -> int:
    store, _ = _load_store(args.store)
    try:
        result = top_k(args.id, store, args.k)
    except KeyError as exc:
        raise DataError(f"query repo not in store: {exc}") from exc
    sys.stdout.write(format_query(result))
    if args.out:
        write_query_tsv(result, Path(args.out))
    return 0


def cmd_cluster(args: argparse.Namespace) -> int:
    config = _run_config(args)
    store, _ = _load_store(args.store)
    if len(store) < 2:
        raise DataError("clustering needs at least 2 embedded repositories")
    ids = [e.repo_id for e in store]
    vectors = np.stack([e.fused for e in store])
    norms = np.linalg.norm(vectors, axis=1, keepdims=True)
    norms[norms == 0] = 1.0
    vectors = vectors / norms  # ward on normalized vectors tracks cosine

    d = agnes(list(vectors), linkage=args.linkage)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    export_dendrogram(d, out / "dendrogram.tsv")

    k = args.k
    curve = None
    if args.elbow:
        k_max = min(len(store), args.max_k)
        curve = sse_curve(list(vectors), d, range(1, k_max + 1))
        with open(out / "sse.tsv", "w", encoding="utf-8") as fh:
            for kk in sorted(curve):
                fh.write(f"{kk}\t{format(curve[kk], '.9g')}\n")
        k = elbow(curve)
        print(f"elbow at k={k}")
    if k is None:
        raise DataError("either --k or --elbow is required")
    if not 1 <= k <= len(store):
        raise DataError(f"k={k} out of range [1, {len(store)}]")

    labels = cut(d, k)
    with open(out / "assignments.tsv", "w", encoding="utf-8") as fh:
        for repo_id, label in zip(ids, labels):
            fh.write(f"{repo_id}\t{label}\n")

    if args.profile:
        if not args.ingest:
            raise DataError("--profile needs --ingest for the metadata documents")
        records, _ = load_ingest(Path(args.ingest))
        docs = {r.repo_id: preprocess(r.meta.document()) for r in records}
        assignment = {repo_id: int(label) for repo_id, label in zip(ids, labels)}
        profiles = lda_profile(
            assignment,
            docs,
            num_topics=args.topics,
            sample_fraction=args.sample_fraction,
            seed=derive_seed(config.seed, "profile"),
            iterations=args.lda_iterations,
        )
        export_cluster_report(profiles, out / "clusters.tsv")

    if not args.no_figures:
        from .plotting import plot_dendrogram, plot_sse_curve

        plot_dendrogram(d, out / "dendrogram.png", labels=ids)
        if curve is not None:
            plot_sse_curve(curve, k, out / "sse.png")

    print(f"wrote {k}-cluster assignment -> {out / 'assignments.tsv'}")
    return 0


def cmd_classify(args: argparse.Namespace) -> int:
    config = _run_config(args)
    store, _ = _load_store(args.store)
    labels = load_labels(Path(args.labels))
    missing = [e.repo_id for e in store if e.repo_id not in labels]
    if missing:
        raise DataError(f"labels file lacks entries for: {', '.join(missing)}")
    data = [LabeledEmbedding(e.repo_id, e.fused, labels[e.repo_id]) for e in store]
    try:
        result = cross_validate(data, folds=args.folds, seed=derive_seed(config.seed, "cv"))
    except ValueError as exc:
        raise DataError(str(exc)) from exc
    blob = json.dumps(result.as_dict(), sort_keys=True, indent=2)
    print(blob)
    if args.out:
        Path(args.out).write_text(blob + "\n", encoding="utf-8")
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    store, _ = _load_store(args.store)
    queries = [
        line.strip()
        for line in Path(args.queries).read_text(encoding="utf-8").splitlines()
        if line.strip()
    ]
    if not queries:
        raise DataError(f"no query ids in {args.queries}")
    gt = GroundTruth.from_csv(Path(args.groundtruth))
    try:
        results = {q: top_k(q, store, args.k) for q in queries}
    except KeyError as exc:
        raise DataError(f"query repo not in store: {exc}") from exc
    try:
        report = evaluate_queries(results, gt)
    except ValueError as exc:
        raise DataError(str(exc)) from exc

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_report(report, out / "report.json")
    sys.stdout.write(format_table(report))
    if not args.no_figures:
        from .plotting import plot_category_histogram

        plot_category_histogram(report.category_counts, out / "categories.png")
    return 0


def _add_common(p: argparse.ArgumentParser, *, seed: bool = True, config: bool = True) -> None:
    if seed:
        p.add_argument("--seed", type=int, default=None, help="root random seed")
    if config:
        p.add_argument("--config", type=Path, default=None, help="key=value config file")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="reposim", description="repository similarity embeddings")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="scan a corpus into artifacts")
    p.add_argument("--root", required=True, help="corpus root (one subdirectory per repo)")
    p.add_argument("--out", required=True, help="artifact output directory")
    _add_common(p)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("embed", help="train part models and write the store")
    p.add_argument("--ingest", required=True, help="directory written by ingest")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--weights", default=None, help="explicit weights wM,wS,wC")
    p.add_argument("--preset", choices=["M", "MS", "All"], default=None)
    p.add_argument("--agg", choices=["mean", "mode", "max", "min", "sum", "std"], default=None)
    p.add_argument("--method-vectors", default=None, help="TSV of externally computed method vectors")
    p.add_argument("--dump-walks", action="store_true", help="write walk sequences per repo")
    _add_common(p)
    p.set_defaults(func=cmd_embed)

    p = sub.add_parser("query", help="top-k most similar repositories")
    p.add_argument("--store", required=True, help="embeddings.tsv path")
    p.add_argument("--id", required=True, help="query repo id")
    p.add_argument("-k", type=int, default=5)
    p.add_argument("--out", default=None, help="also write the TSV here")
    _add_common(p, seed=False, config=False)
    p.set_defaults(func=cmd_query)

    p = sub.add_parser("cluster", help="hierarchical clustering of the store")
    p.add_argument("--store", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--k", type=int, default=None)
    p.add_argument("--elbow", action="store_true", help="pick k from the SSE elbow")
    p.add_argument("--max-k", type=int, default=15)
    p.add_argument("--linkage", choices=["ward", "average", "complete"], default="ward")
    p.add_argument("--profile", action="store_true", help="LDA topic profile per cluster")
    p.add_argument("--ingest", default=None, help="ingest dir (metadata for --profile)")
    p.add_argument("--topics", type=int, default=5)
    p.add_argument("--sample-fraction", type=float, default=0.5)
    p.add_argument("--lda-iterations", type=int, default=500)
    p.add_argument("--no-figures", action="store_true")
    _add_common(p)
    p.set_defaults(func=cmd_cluster)

    p = sub.add_parser("classify", help="cross-validated malware/benign metrics")
    p.add_argument("--store", required=True)
    p.add_argument("--labels", required=True, help="CSV repo_id,label")
    p.add_argument("--folds", type=int, default=10)
    p.add_argument("--out", default=None, help="write metrics JSON here")
    _add_common(p)
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("eval", help="query evaluation against ground truth")
    p.add_argument("--store", required=True)
    p.add_argument("--queries", required=True, help="file with one query repo id per line")
    p.add_argument("--groundtruth", required=True, help="CSV query_id,result_id,category")
    p.add_argument("-k", type=int, default=5)
    p.add_argument("--out", required=True)
    p.add_argument("--no-figures", action="store_true")
    _add_common(p, seed=False, config=False)
    p.set_defaults(func=cmd_eval)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
