"""Source-code embedding: AST path contexts, method vectors, aggregation.

Each source file is decomposed into its methods; every method becomes a
bag of path contexts (left terminal token, path of AST node-type names,
right terminal token). Contexts are serialized to tokens and fed to the
shared document-vector trainer, so a method is a document and its vector
comes from the same machinery as the metadata vectors. Method vectors are
aggregated into file vectors and file vectors into one repository vector.

One frontend ships built in (Python, via the stdlib ``ast`` module).
Any other language enters through a pre-parsed sidecar
``<file>.astctx.jsonl`` with one JSON object per method:
``{"method_id": str, "contexts": [[left, path, right], ...]}``.
Externally computed method vectors can be imported from TSV instead of
training a model.
"""

from __future__ import annotations

import ast
import json
import logging
from collections.abc import Mapping, Sequence
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .corpus import CONTEXT_SIDECAR_SUFFIX, SourceFileRef
from .seeding import make_rng
from .structembed import aggregate
from .textembed import DocModel, EmbedConfig, infer_doc_vector, train_pvdbow

logger = logging.getLogger(__name__)

MAX_PATH_NODES = 8
MAX_PATH_WIDTH = 2
MAX_CONTEXTS_PER_METHOD = 200
_MAX_TERMINALS = 200
_MAX_TOKEN_CHARS = 50


@dataclass(frozen=True)
class PathContext:
    left: str
    path: str
    right: str


@dataclass(frozen=True)
class ParsedMethod:
    method_id: str  # "<file path>:<ordinal>"
    contexts: tuple[PathContext, ...]


def serialize_context(ctx: PathContext) -> str:
    """One token per context; ``\\`` and ``|`` are escaped so the mapping
    from (left, path, right) triples to tokens is injective."""

    def esc(s: str) -> str:
        return s.replace("\\", "\\\\").replace("|", "\\|")

    return f"{esc(ctx.left)}|{esc(ctx.path)}|{esc(ctx.right)}"


def context_tokens(method: ParsedMethod) -> list[str]:
    return [serialize_context(c) for c in method.contexts]


def _token_of(node: ast.AST) -> str | None:
    if isinstance(node, ast.Name):
        return node.id
    if isinstance(node, ast.arg):
        return node.arg
    if isinstance(node, ast.Constant):
        return repr(node.value)[:_MAX_TOKEN_CHARS]
    if isinstance(node, (ast.operator, ast.cmpop, ast.boolop, ast.unaryop)):
        return type(node).__name__
    return None


def _collect_terminals(root: ast.AST) -> tuple[list[list[ast.AST]], list[str], dict[int, int]]:
    """Terminal chains (root..holder), tokens, and child positions.

    Terminals are Name/arg/Constant nodes, operator nodes, and attribute
    names (virtual leaves of their Attribute node), in depth-first order.
    """
    chains: list[list[ast.AST]] = []
    tokens: list[str] = []
    child_pos: dict[int, int] = {}

    def visit(node: ast.AST, chain: list[ast.AST]) -> None:
        chain = chain + [node]
        token = _token_of(node)
        if token is not None:
            chains.append(chain)
            tokens.append(token)
        elif isinstance(node, ast.Attribute):
            chains.append(chain)
            tokens.append(node.attr[:_MAX_TOKEN_CHARS])
        for pos, child in enumerate(ast.iter_child_nodes(node)):
            child_pos[id(child)] = pos
            visit(child, chain)

    visit(root, [])
    return chains, tokens, child_pos


def _path_string(up: list[ast.AST], down: list[ast.AST]) -> str:
    up_part = "^".join(type(n).__name__ for n in up)
    if not down:
        return up_part
    return up_part + "_" + "_".join(type(n).__name__ for n in down)


def extract_path_contexts(method_node: ast.AST) -> list[PathContext]:
    """All path contexts of one method subtree.

    For each ordered pair of terminals, the path climbs from the left
    terminal to the lowest common ancestor and descends to the right one.
    Paths longer than ``MAX_PATH_NODES`` AST nodes are dropped, as are
    pairs whose branches sit more than ``MAX_PATH_WIDTH`` siblings apart
    at the top of the path. Methods keep at most ``_MAX_TERMINALS`` leaves
    (depth-first order) to bound the quadratic pair enumeration.
    """
    chains, tokens, child_pos = _collect_terminals(method_node)
    if len(chains) > _MAX_TERMINALS:
        chains = chains[:_MAX_TERMINALS]
        tokens = tokens[:_MAX_TERMINALS]

    contexts: list[PathContext] = []
    for i in range(len(chains)):
        ci = chains[i]
        for j in range(i + 1, len(chains)):
            cj = chains[j]
            depth = 0
            limit = min(len(ci), len(cj))
            while depth < limit and ci[depth] is cj[depth]:
                depth += 1
            up = ci[depth - 1 :][::-1]  # holder_i .. LCA
            down = cj[depth:]  # first branch node .. holder_j
            if len(up) + len(down) > MAX_PATH_NODES:
                continue
            if len(ci) > depth and len(cj) > depth:
                width = abs(child_pos[id(cj[depth])] - child_pos[id(ci[depth])])
                if width > MAX_PATH_WIDTH:
                    continue
            contexts.append(PathContext(tokens[i], _path_string(up, down), tokens[j]))
    return contexts


def _cap_contexts(contexts: Sequence[PathContext], method_id: str, seed: int) -> tuple[PathContext, ...]:
    if len(contexts) <= MAX_CONTEXTS_PER_METHOD:
        return tuple(contexts)
    rng = make_rng(seed, "pathctx", method_id)
    keep = np.sort(rng.choice(len(contexts), MAX_CONTEXTS_PER_METHOD, replace=False))
    return tuple(contexts[i] for i in keep)


def parse_python_source(text: str, file_path: str, seed: int = 0) -> list[ParsedMethod]:
    """Methods of a Python source file, in source order.

    Nested function definitions count as methods of their own and also
    contribute contexts to the enclosing method. Raises SyntaxError for
    unparsable input.
    """
    module = ast.parse(text)
    defs: list[ast.AST] = []

    def visit(node: ast.AST) -> None:
        for child in ast.iter_child_nodes(node):
            if isinstance(child, (ast.FunctionDef, ast.AsyncFunctionDef)):
                defs.append(child)
            visit(child)

    visit(module)
    methods = []
    for k, fn in enumerate(defs):
        method_id = f"{file_path}:{k}"
        contexts = _cap_contexts(extract_path_contexts(fn), method_id, seed)
        methods.append(ParsedMethod(method_id=method_id, contexts=contexts))
    return methods


def load_context_sidecar(path: Path, seed: int = 0) -> list[ParsedMethod]:
    """Read pre-parsed methods from a ``.astctx.jsonl`` sidecar."""
    methods: list[ParsedMethod] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                method_id = obj["method_id"]
                triples = [PathContext(str(l), str(p), str(r)) for l, p, r in obj["contexts"]]
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise ValueError(f"{path}:{lineno}: malformed context sidecar line: {exc}") from exc
            methods.append(ParsedMethod(method_id=method_id, contexts=_cap_contexts(triples, method_id, seed)))
    return methods


def parse_file(repo_path: Path, ref: SourceFileRef, seed: int = 0) -> list[ParsedMethod]:
    """Parse one source file into methods.

    A pre-parsed sidecar wins over the built-in frontend. Files that are
    unparsable or have no available frontend yield an empty method list
    with a warning; the repository stays embeddable.
    """
    repo_path = Path(repo_path)
    sidecar = repo_path / (ref.path + CONTEXT_SIDECAR_SUFFIX)
    if sidecar.is_file():
        return load_context_sidecar(sidecar, seed)
    if ref.language_tag == "python":
        try:
            text = (repo_path / ref.path).read_text(encoding="utf-8", errors="replace")
            return parse_python_source(text, ref.path, seed)
        except (OSError, SyntaxError, ValueError) as exc:
            logger.warning("skipping unparsable file %s: %s", ref.path, exc)
            return []
    logger.warning("no frontend for %s (%s) and no sidecar; skipping", ref.path, ref.language_tag)
    return []


def train_code_model(methods: Sequence[ParsedMethod], config: EmbedConfig) -> DocModel:
    """Document-vector model over serialized context tokens."""
    if not any(m.contexts for m in methods):
        raise ValueError("no path contexts anywhere in the corpus; cannot train a code model")
    docs = {m.method_id: context_tokens(m) for m in methods}
    return train_pvdbow(docs, config)


def method_vector(method: ParsedMethod, model: DocModel) -> np.ndarray:
    """The method's document vector; empty-context methods map to zero."""
    if not method.contexts:
        return np.zeros(model.dim)
    if method.method_id in model:
        return model.vector(method.method_id)
    return infer_doc_vector(model, context_tokens(method))


def import_method_vectors(path: Path, dim: int = 128) -> dict[str, np.ndarray]:
    """Load externally computed method vectors from TSV.

    Each line is ``method_id \\t <dim> floats``. A row with the wrong
    number of components is a dimension mismatch and raises ValueError.
    """
    vectors: dict[str, np.ndarray] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != dim + 1:
                raise ValueError(
                    f"{path}:{lineno}: expected {dim} components, found {len(parts) - 1}"
                )
            vectors[parts[0]] = np.array([float(x) for x in parts[1:]])
    return vectors


def code_vector(
    methods_by_file: Mapping[str, Sequence[ParsedMethod]],
    method_vectors: Mapping[str, np.ndarray],
    dim: int,
    agg: str = "mean",
) -> np.ndarray:
    """Two-level aggregation: methods to file vectors, files to one vector.

    Files without methods contribute nothing; a repository with no
    parsable methods at all maps to the zero vector.
    """
    file_vectors = []
    for path in sorted(methods_by_file):
        methods = methods_by_file[path]
        if not methods:
            continue
        file_vectors.append(aggregate([method_vectors[m.method_id] for m in methods], agg))
    if not file_vectors:
        return np.zeros(dim)
    return aggregate(file_vectors, agg)
