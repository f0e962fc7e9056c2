"""Corpus ingestion: local repository clones to normalized records.

A corpus is a directory whose immediate subdirectories are repositories.
Each repository yields a :class:`RepoRecord` holding its metadata document,
an anonymous directory tree (shape only, no names), and references to its
source files. Optional per-repo sidecar ``repo-meta.json`` supplies
description/topics; the readme is read from the first ``README*`` match.
"""

from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path

logger = logging.getLogger(__name__)

META_SIDECAR = "repo-meta.json"

# Version-control state directories never contribute to the tree.
VCS_DIRS = frozenset({".git", ".hg", ".svn", ".bzr"})

# Extensions the ingester recognizes as source code, mapped to the
# frontend selector tag. Only "python" has a built-in parser; every other
# tag is parseable solely through a .astctx.jsonl sidecar.
DEFAULT_LANGUAGE_TAGS: dict[str, str] = {
    ".py": "python",
    ".java": "java",
    ".js": "javascript",
    ".ts": "typescript",
    ".c": "c",
    ".h": "c",
    ".cpp": "cpp",
    ".cc": "cpp",
    ".hpp": "cpp",
    ".go": "go",
    ".rs": "rust",
    ".rb": "ruby",
    ".cs": "csharp",
    ".kt": "kotlin",
    ".scala": "scala",
    ".php": "php",
    ".swift": "swift",
}

CONTEXT_SIDECAR_SUFFIX = ".astctx.jsonl"


@dataclass(frozen=True)
class MetaDocument:
    """Textual metadata of one repository.

    Concatenation order is fixed: title, description, topics, readme.
    """

    title: str = ""
    description: str = ""
    topics: tuple[str, ...] = ()
    readme: str = ""

    def document(self) -> str:
        """The metadata fields joined into a single document string."""
        return " ".join([self.title, self.description, " ".join(self.topics), self.readme])

    def is_empty(self) -> bool:
        return not self.document().strip()


@dataclass(frozen=True)
class DirTree:
    """Anonymous directory tree: node indices and child lists, no names.

    Node 0 is the repository root. ``children[i]`` holds the child indices
    of node ``i`` in the (discarded) lexicographic entry order.
    """

    children: tuple[tuple[int, ...], ...]

    def __post_init__(self) -> None:
        if not self.children:
            raise ValueError("DirTree requires at least the root node")

    @property
    def node_count(self) -> int:
        return len(self.children)

    def parents(self) -> list[int]:
        """Parent index per node; the root maps to -1."""
        parent = [-1] * self.node_count
        for i, kids in enumerate(self.children):
            for c in kids:
                parent[c] = i
        return parent

    def adjacency(self) -> list[list[int]]:
        """Undirected neighbor lists (parent first, then children)."""
        parent = self.parents()
        adj: list[list[int]] = []
        for i, kids in enumerate(self.children):
            nbrs = [parent[i]] if parent[i] >= 0 else []
            nbrs.extend(kids)
            adj.append(nbrs)
        return adj


@dataclass(frozen=True)
class SourceFileRef:
    path: str  # relative to the repo root, POSIX separators
    language_tag: str


@dataclass(frozen=True)
class RepoRecord:
    repo_id: str
    meta: MetaDocument
    tree: DirTree
    sources: tuple[SourceFileRef, ...]


@dataclass(frozen=True)
class IngestConfig:
    language_tags: dict[str, str] = field(default_factory=lambda: dict(DEFAULT_LANGUAGE_TAGS))


def _sorted_entries(path: Path) -> list[os.DirEntry]:
    with os.scandir(path) as it:
        return sorted(it, key=lambda e: e.name)


def extract_metadata(repo_path: Path) -> MetaDocument:
    """Build the metadata document for one repository directory.

    Title is the directory name. Description and topics come from the
    optional ``repo-meta.json`` sidecar (unknown keys ignored). The readme
    is the content of the lexicographically first file whose name matches
    ``README*`` case-insensitively. Missing pieces become empty fields.
    """
    repo_path = Path(repo_path)
    title = repo_path.name
    description = ""
    topics: tuple[str, ...] = ()

    sidecar = repo_path / META_SIDECAR
    if sidecar.is_file():
        try:
            raw = json.loads(sidecar.read_text(encoding="utf-8"))
            if isinstance(raw, dict):
                if isinstance(raw.get("description"), str):
                    description = raw["description"]
                if isinstance(raw.get("topics"), list):
                    topics = tuple(str(t) for t in raw["topics"])
        except (OSError, json.JSONDecodeError) as exc:
            logger.warning("unreadable sidecar %s: %s", sidecar, exc)

    readme = ""
    candidates = sorted(
        e.name
        for e in _sorted_entries(repo_path)
        if e.is_file(follow_symlinks=False) and e.name.lower().startswith("readme")
    )
    if candidates:
        try:
            readme = (repo_path / candidates[0]).read_text(encoding="utf-8", errors="replace")
        except OSError as exc:
            logger.warning("unreadable readme in %s: %s", repo_path, exc)

    return MetaDocument(title=title, description=description, topics=topics, readme=readme)


def extract_tree(repo_path: Path) -> DirTree:
    """Anonymous tree of the repository: one node per directory and file.

    Children are ordered lexicographically by entry name at scan time and
    the names are then discarded, so renaming any entry leaves the output
    unchanged as long as the relative order survives. VCS directories are
    excluded; symlinks become leaf nodes and are never followed.
    """
    children: list[list[int]] = [[]]

    def visit(dir_path: Path, node: int) -> None:
        for entry in _sorted_entries(dir_path):
            if entry.name in VCS_DIRS and entry.is_dir(follow_symlinks=False):
                continue
            idx = len(children)
            children.append([])
            children[node].append(idx)
            if entry.is_dir(follow_symlinks=False):
                visit(Path(entry.path), idx)

    visit(Path(repo_path), 0)
    return DirTree(children=tuple(tuple(c) for c in children))


def find_sources(repo_path: Path, config: IngestConfig | None = None) -> tuple[SourceFileRef, ...]:
    """Source-file references under the repo root, lexicographic by path.

    A file is a source file if its extension has a language tag or if a
    pre-parsed ``.astctx.jsonl`` sidecar sits next to it (tag falls back
    to "external" for unknown extensions).
    """
    config = config or IngestConfig()
    repo_path = Path(repo_path)
    refs: list[SourceFileRef] = []

    def visit(dir_path: Path) -> None:
        for entry in _sorted_entries(dir_path):
            if entry.name in VCS_DIRS and entry.is_dir(follow_symlinks=False):
                continue
            if entry.is_dir(follow_symlinks=False):
                visit(Path(dir_path / entry.name))
                continue
            if not entry.is_file(follow_symlinks=False):
                continue
            if entry.name.endswith(CONTEXT_SIDECAR_SUFFIX):
                continue
            rel = (Path(dir_path) / entry.name).relative_to(repo_path).as_posix()
            ext = os.path.splitext(entry.name)[1].lower()
            tag = config.language_tags.get(ext)
            if tag is None and (repo_path / (rel + CONTEXT_SIDECAR_SUFFIX)).is_file():
                tag = "external"
            if tag is not None:
                refs.append(SourceFileRef(path=rel, language_tag=tag))

    visit(repo_path)
    return tuple(refs)


def scan_corpus(root_path: Path, config: IngestConfig | None = None) -> list[RepoRecord]:
    """Ingest every immediate subdirectory of ``root_path`` as a repository.

    Records come back in lexicographic repo_id order. An unreadable root is
    fatal; unreadable individual files inside a repo are skipped with a
    warning and the record is still produced.
    """
    root = Path(root_path)
    if not root.is_dir():
        raise FileNotFoundError(f"corpus root is not a readable directory: {root}")
    config = config or IngestConfig()

    records: list[RepoRecord] = []
    for entry in _sorted_entries(root):
        if not entry.is_dir(follow_symlinks=False):
            continue
        repo_path = root / entry.name
        records.append(
            RepoRecord(
                repo_id=entry.name,
                meta=extract_metadata(repo_path),
                tree=extract_tree(repo_path),
                sources=find_sources(repo_path, config),
            )
        )
    return records


def write_manifest(records: list[RepoRecord], path: Path) -> None:
    """Tab-separated manifest: repo_id, node_count, source_file_count."""
    lines = [
        f"{r.repo_id}\t{r.tree.node_count}\t{len(r.sources)}"
        for r in records
    ]
    Path(path).write_text("".join(line + "\n" for line in lines), encoding="utf-8")
