"""Repository ingestion: file scanning, line-window chunking, and project selection."""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

log = logging.getLogger(__name__)

DEFAULT_IGNORE_DIRS = frozenset({".git", ".hg", ".svn", "__pycache__", "node_modules"})
DEFAULT_MAX_CHUNK_LINES = 60
DEFAULT_OVERLAP_LINES = 10

_BINARY_SNIFF_BYTES = 8192


@dataclass(frozen=True)
class SourceFile:
    """One text source file, stored as decoded UTF-8."""

    path: str
    extension: str
    content: str
    line_count: int


@dataclass(frozen=True)
class CodeChunk:
    """A contiguous line window of one source file; the unit of retrieval."""

    chunk_id: str
    file_path: str
    start_line: int
    end_line: int
    text: str


@dataclass(frozen=True)
class ProjectCorpus:
    project_id: str
    files: tuple[SourceFile, ...] = ()
    chunks: tuple[CodeChunk, ...] = ()

    @property
    def total_loc(self) -> int:
        return sum(f.line_count for f in self.files)

    def chunk_texts(self) -> dict[str, str]:
        """chunk_id -> chunk text lookup."""
        return {c.chunk_id: c.text for c in self.chunks}


@dataclass(frozen=True)
class SelectionMetrics:
    """Size and activity numbers used to decide whether a project is analyzed."""

    project_id: str
    tloc: int
    commit_count: int

    def __post_init__(self) -> None:
        if self.tloc < 0 or self.commit_count < 0:
            raise ValueError("tloc and commit_count must be non-negative")


def normalize_extension(ext: str) -> str:
    return ext.lower().lstrip(".")


def _looks_binary(raw: bytes) -> bool:
    return b"\x00" in raw[:_BINARY_SNIFF_BYTES]


def scan_repository(
    root_dir: str | Path,
    extension_allowlist: Iterable[str],
    project_id: str | None = None,
    ignore_dirs: frozenset[str] = DEFAULT_IGNORE_DIRS,
) -> ProjectCorpus:
    """Collect all allowlisted text files under root_dir into a corpus.

    Files with a NUL byte in the first 8 KiB or that fail UTF-8 decoding are
    skipped with a warning. Files are ordered lexicographically by
    repo-relative path so repeated scans are byte-identical.
    """
    root = Path(root_dir)
    if not root.is_dir():
        raise FileNotFoundError(f"repository root does not exist: {root}")
    allow = {normalize_extension(e) for e in extension_allowlist}
    if not allow:
        raise ValueError("extension allowlist must not be empty")
    pid = project_id if project_id is not None else root.name

    files: list[SourceFile] = []
    for path in root.rglob("*"):
        if not path.is_file():
            continue
        rel = path.relative_to(root)
        if any(part in ignore_dirs for part in rel.parts[:-1]):
            continue
        ext = normalize_extension(path.suffix)
        if ext not in allow:
            continue
        try:
            raw = path.read_bytes()
        except OSError as exc:
            log.warning("skipping unreadable file %s: %s", rel, exc)
            continue
        if _looks_binary(raw):
            log.warning("skipping binary file %s (NUL byte found)", rel)
            continue
        try:
            content = raw.decode("utf-8")
        except UnicodeDecodeError as exc:
            log.warning("skipping non-UTF-8 file %s: %s", rel, exc)
            continue
        files.append(
            SourceFile(
                path=rel.as_posix(),
                extension=ext,
                content=content,
                line_count=len(content.splitlines()),
            )
        )

    files.sort(key=lambda f: f.path)
    return ProjectCorpus(project_id=pid, files=tuple(files))


def chunk_corpus(
    corpus: ProjectCorpus,
    max_lines_per_chunk: int = DEFAULT_MAX_CHUNK_LINES,
    overlap_lines: int = DEFAULT_OVERLAP_LINES,
) -> ProjectCorpus:
    """Cover every file with sliding line windows of at most max_lines_per_chunk.

    Consecutive windows share overlap_lines lines. A file shorter than the
    window yields exactly one chunk; empty files yield none.
    """
    if max_lines_per_chunk <= 0:
        raise ValueError("max_lines_per_chunk must be positive")
    if not 0 <= overlap_lines < max_lines_per_chunk:
        raise ValueError("overlap_lines must satisfy 0 <= overlap < max_lines_per_chunk")

    chunks: list[CodeChunk] = []
    for f in corpus.files:
        lines = f.content.splitlines()
        n = len(lines)
        if n == 0:
            continue
        start = 1
        while True:
            end = min(start + max_lines_per_chunk - 1, n)
            chunks.append(
                CodeChunk(
                    chunk_id=f"{corpus.project_id}:{f.path}:{start}-{end}",
                    file_path=f.path,
                    start_line=start,
                    end_line=end,
                    text="\n".join(lines[start - 1 : end]),
                )
            )
            if end == n:
                break
            start = end - overlap_lines + 1
    return ProjectCorpus(corpus.project_id, corpus.files, tuple(chunks))


def select_projects(metrics: Sequence[SelectionMetrics]) -> list[str]:
    """Retain projects above the TLoC third quartile, then above the commit
    first quartile of that subset.

    Quartiles use linear interpolation between closest ranks; both filters are
    strict, so degenerate distributions can legitimately empty the result.
    """
    if not metrics:
        raise ValueError("selection metrics must not be empty")

    tloc_q3 = float(np.quantile([m.tloc for m in metrics], 0.75))
    kept = [m for m in metrics if m.tloc > tloc_q3]
    if not kept:
        log.warning("strict TLoC > Q3 (%.2f) filter retained no projects", tloc_q3)
        return []

    commit_q1 = float(np.quantile([m.commit_count for m in kept], 0.25))
    kept = [m for m in kept if m.commit_count > commit_q1]
    if not kept:
        log.warning("strict commits > Q1 (%.2f) filter retained no projects", commit_q1)
    return [m.project_id for m in kept]


# --- serialization -----------------------------------------------------------

def corpus_to_dict(corpus: ProjectCorpus) -> dict:
    return {
        "project_id": corpus.project_id,
        "total_loc": corpus.total_loc,
        "files": [
            {
                "path": f.path,
                "extension": f.extension,
                "line_count": f.line_count,
                "content": f.content,
            }
            for f in corpus.files
        ],
        "chunks": [
            {
                "chunk_id": c.chunk_id,
                "file_path": c.file_path,
                "start_line": c.start_line,
                "end_line": c.end_line,
                "text": c.text,
            }
            for c in corpus.chunks
        ],
    }


def corpus_from_dict(data: dict) -> ProjectCorpus:
    files = tuple(
        SourceFile(d["path"], d["extension"], d["content"], d["line_count"])
        for d in data["files"]
    )
    chunks = tuple(
        CodeChunk(d["chunk_id"], d["file_path"], d["start_line"], d["end_line"], d["text"])
        for d in data["chunks"]
    )
    return ProjectCorpus(data["project_id"], files, chunks)


def write_corpus(corpus: ProjectCorpus, path: str | Path) -> None:
    Path(path).write_text(
        json.dumps(corpus_to_dict(corpus), ensure_ascii=False, indent=2) + "\n",
        encoding="utf-8",
    )


def read_corpus(path: str | Path) -> ProjectCorpus:
    return corpus_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def read_selection_metrics(path: str | Path) -> list[SelectionMetrics]:
    """Load the project_id,tloc,commit_count CSV."""
    out: list[SelectionMetrics] = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        required = {"project_id", "tloc", "commit_count"}
        if reader.fieldnames is None or not required.issubset(reader.fieldnames):
            raise ValueError(f"metrics CSV must have header {sorted(required)}")
        for row in reader:
            out.append(
                SelectionMetrics(
                    project_id=row["project_id"],
                    tloc=int(row["tloc"]),
                    commit_count=int(row["commit_count"]),
                )
            )
    return out
