"""reposim: repository similarity via fused metadata/structure/code embeddings."""

from .config import RunConfig, load_config
from .corpus import DirTree, MetaDocument, RepoRecord, SourceFileRef, scan_corpus
from .fusion import FusionWeights, RepoEmbedding, cosine, fuse, top_k, variant_weights
from .pipeline import embed_corpus, load_ingest, run_ingest

__version__ = "0.1.0"

__all__ = [
    "DirTree",
    "FusionWeights",
    "MetaDocument",
    "RepoEmbedding",
    "RepoRecord",
    "RunConfig",
    "SourceFileRef",
    "cosine",
    "embed_corpus",
    "fuse",
    "load_config",
    "load_ingest",
    "run_ingest",
    "scan_corpus",
    "top_k",
    "variant_weights",
    "__version__",
]
