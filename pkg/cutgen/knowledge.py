"""
Knowledge bases for intention-context retrieval.

Documentation is chunked by heading, embedded and searched by cosine similarity.  Source code is
chunked per method definition and standalone comment block, stored as plain text, and searched by
exact call-site matching against a focal method's signature.
"""

from dataclasses import dataclass
import hashlib
import json
import logging
import os
from pathlib import Path
import re
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .api import EmbeddingProvider, SyntaxBackend
from .lexical import mask, split_arguments
from .repo import FocalMethod, RepoIndex


LOG = logging.getLogger(__name__)


INDEX_FORMAT = "cutgen-kb"
INDEX_VERSION = 1

MARKDOWN_SUFFIXES = (".md", ".markdown")

_HEADING = re.compile(r"^(#{1,6})[ \t]+(.+?)[ \t#]*$")
_FENCE_LINE = re.compile(r"^\s*(```|~~~)")
_PARAGRAPH_BREAK = re.compile(r"\n[ \t]*\n+")
_INT_LITERAL = re.compile(r"^[+-]?(0[xX][0-9a-fA-F']+|0[bB][01']+|\d[\d']*)([uU]?[lL]{0,2}|[lL]{0,2}[uU]?)$")
_STRING_LITERAL = re.compile(r'^(u8|u|U|L)?R?"')
_ARITHMETIC = re.compile(
    r"^(unsigned |signed )?(char|short|int|long|long long|long int|short int|long long int|float|double"
    r"|long double|bool|(std::)?size_t|(std::)?ptrdiff_t|(std::)?u?int(8|16|32|64)_t)( int)?$"
)
_COMMENT_MARKER = re.compile(r"//+|/\*+|\*+/")


@dataclass
class DocChunk:
    id: str
    source: str
    """Document path relative to the project root."""
    heading_path: List[str]
    text: str
    vector: Optional[List[float]] = None


@dataclass
class CodeChunk:
    id: str
    source: str
    kind: str
    """`method` or `comment`."""
    name: str
    param_types: Tuple[str, ...]
    text: str
    line_span: Tuple[int, int]
    class_name: str = ""


@dataclass(frozen=True)
class RetrievalResult:
    chunk_id: str
    score: float
    snippet: str


def _paragraphs(text: str, floor: int) -> List[str]:
    chunks: List[str] = []
    pending = ""
    for para in _PARAGRAPH_BREAK.split(text):
        para = para.strip()
        if not para:
            continue
        pending = "{}\n\n{}".format(pending, para) if pending else para
        if len(pending) >= floor:
            chunks.append(pending)
            pending = ""
    if pending:
        if chunks:
            chunks[-1] = "{}\n\n{}".format(chunks[-1], pending)
        else:
            chunks.append(pending)
    return chunks


def _markdown_sections(text: str) -> List[Tuple[List[str], str]]:
    sections: List[Tuple[List[str], str]] = []
    stack: List[Tuple[int, str]] = []
    body: List[str] = []
    path: List[str] = []
    fenced = False

    def flush():
        content = "\n".join(body).strip()
        if content:
            sections.append((list(path), content))
        body.clear()

    for line in text.splitlines():
        if _FENCE_LINE.match(line):
            fenced = not fenced
        match = None if fenced else _HEADING.match(line)
        if match:
            flush()
            level = len(match.group(1))
            while stack and stack[-1][0] >= level:
                stack.pop()
            stack.append((level, match.group(2).strip()))
            path = [title for _, title in stack]
        else:
            body.append(line)
    flush()
    return sections


def chunk_documents(doc_files: Iterable[Path], root: Path, floor: int = 200) -> List[DocChunk]:
    """
    Split documents into text chunks.

    Markdown with headings is split at each heading, recording the chain of titles above it.
    Anything else is split into blank-line paragraphs, merging paragraphs shorter than `floor`
    characters into the next one.
    """
    chunks: List[DocChunk] = []
    for path in doc_files:
        rel = Path(os.path.relpath(path, root)).as_posix()
        try:
            text = Path(path).read_bytes().decode("utf-8")
        except (OSError, UnicodeDecodeError) as ex:
            LOG.warning("Skipping document %s: %s", rel, ex)
            continue
        sections: List[Tuple[List[str], str]] = []
        if Path(path).suffix.lower() in MARKDOWN_SUFFIXES:
            sections = _markdown_sections(text)
            if sections and not any(heading for heading, _ in sections):
                sections = []
        if not sections:
            sections = [([], para) for para in _paragraphs(text, floor)]
        for n, (heading, content) in enumerate(sections):
            chunks.append(DocChunk("doc:{}:{:04d}".format(rel, n), rel, heading, content))
    LOG.debug("Chunked documents into %d chunks", len(chunks))
    return chunks


def chunk_source(
    source_files: Iterable[Path], header_files: Iterable[Path], backend: SyntaxBackend, root: Path,
) -> List[CodeChunk]:
    """
    One chunk per method definition and per standalone comment block, each a byte-exact slice.
    """
    chunks: List[CodeChunk] = []
    for path in [*source_files, *header_files]:
        rel = Path(os.path.relpath(path, root)).as_posix()
        tree = backend.parse(path)
        if not tree.parsed:
            LOG.warning("Skipping %s for the code knowledge base: %s", rel, "; ".join(map(str, tree.errors)))
            continue
        items: List[Tuple[int, CodeChunk]] = []
        for definition in tree.definitions:
            span = definition.span
            items.append((span.start_offset, CodeChunk(
                "", rel, "method", definition.name, definition.param_types, tree.slice(span),
                (span.start_line, span.end_line), definition.class_name,
            )))
        for span in tree.comments:
            items.append((span.start_offset, CodeChunk(
                "", rel, "comment", "", (), tree.slice(span), (span.start_line, span.end_line),
            )))
        for n, (_, chunk) in enumerate(sorted(items, key=lambda item: item[0])):
            chunk.id = "code:{}:{:04d}".format(rel, n)
            chunks.append(chunk)
    return chunks


def _normalise(matrix: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(matrix, axis=1, keepdims=True)
    norms[norms == 0] = 1.0
    return matrix / norms


def embed_chunks(chunks: Sequence[DocChunk], provider: EmbeddingProvider) -> List[DocChunk]:
    """
    Attach unit-length vectors from `provider` to each chunk.
    """
    if not chunks:
        return []
    vectors = np.asarray(provider.embed([chunk.text for chunk in chunks]), dtype=float)
    dimension = provider.dimension()
    if vectors.shape != (len(chunks), dimension):
        raise ValueError("Embedding provider returned shape {}, expected ({}, {})".format(
            vectors.shape, len(chunks), dimension,
        ))
    vectors = _normalise(vectors)
    return [
        DocChunk(chunk.id, chunk.source, list(chunk.heading_path), chunk.text, vector.tolist())
        for chunk, vector in zip(chunks, vectors)
    ]


def fingerprint(paths: Iterable[Path]) -> str:
    """
    Digest of file names, sizes and modification times, used to spot a stale index.
    """
    digest = hashlib.sha1()
    for path in sorted(paths):
        stat = Path(path).stat()
        digest.update("{}:{}:{}\n".format(path, stat.st_size, stat.st_mtime_ns).encode("utf-8"))
    return digest.hexdigest()


class KnowledgeBase:
    """
    The documentation store (vectorised) and the code store (plain text), kept apart.
    """

    def __init__(
        self, docs: Sequence[DocChunk], code: Sequence[CodeChunk], provider: EmbeddingProvider,
        root: Optional[Path] = None, fingerprint: str = "",
    ):
        self.docs = list(docs)
        self.code = list(code)
        self.provider = provider
        self.root = root
        self.fingerprint = fingerprint
        if self.docs:
            self.matrix = np.asarray([chunk.vector for chunk in self.docs], dtype=float)
        else:
            self.matrix = np.zeros((0, provider.dimension()))

    def __repr__(self):
        return "<{}: {} docs, {} code>".format(self.__class__.__name__, len(self.docs), len(self.code))

    @classmethod
    def build(cls, index: RepoIndex, backend: SyntaxBackend, provider: EmbeddingProvider, floor: int = 200):
        docs = embed_chunks(chunk_documents(index.doc_files, index.root, floor), provider)
        code = chunk_source(index.source_files, index.header_files, backend, index.root)
        LOG.info("Built knowledge base: %d doc chunks, %d code chunks", len(docs), len(code))
        return cls(docs, code, provider, index.root, fingerprint(index.doc_files + index.source_files + index.header_files))

    def save(self, path: Path):
        data: Dict[str, Any] = {
            "format": INDEX_FORMAT,
            "version": INDEX_VERSION,
            "provider": self.provider.name,
            "dimension": self.provider.dimension(),
            "fingerprint": self.fingerprint,
            "docs": [vars(chunk) for chunk in self.docs],
            "code": [dict(vars(chunk), param_types=list(chunk.param_types), line_span=list(chunk.line_span)) for chunk in self.code],
        }
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w") as f:
            json.dump(data, f, sort_keys=True)

    @classmethod
    def load(cls, path: Path, provider: EmbeddingProvider, root: Optional[Path] = None, expect: str = ""):
        """
        Load a saved index, or return `None` when it's missing, stale or built by another provider.
        """
        try:
            with open(path) as f:
                data = json.load(f)
        except (OSError, ValueError) as ex:
            LOG.debug("No usable index at %s: %s", path, ex)
            return None
        header = (data.get("format"), data.get("version"), data.get("provider"), data.get("dimension"))
        if header != (INDEX_FORMAT, INDEX_VERSION, provider.name, provider.dimension()):
            LOG.info("Index %s doesn't match the current provider, rebuilding", path)
            return None
        if expect and data.get("fingerprint") != expect:
            LOG.info("Index %s is out of date, rebuilding", path)
            return None
        docs = [DocChunk(**item) for item in data["docs"]]
        code = [
            CodeChunk(**dict(item, param_types=tuple(item["param_types"]), line_span=tuple(item["line_span"])))
            for item in data["code"]
        ]
        return cls(docs, code, provider, root, data.get("fingerprint", ""))


def retrieve_docs(query: str, kb: KnowledgeBase, k: int = 2) -> List[RetrievalResult]:
    """
    The `k` documentation chunks most similar to `query`, best first, ties broken by chunk id.
    """
    if k < 1:
        raise ValueError("k must be at least 1")
    if not kb.docs:
        return []
    vector = _normalise(np.asarray(kb.provider.embed([query]), dtype=float))[0]
    scores = np.clip(kb.matrix @ vector, -1.0, 1.0)
    ranked = sorted(zip(scores.tolist(), kb.docs), key=lambda item: (-item[0], item[1].id))
    return [RetrievalResult(chunk.id, score, chunk.text) for score, chunk in ranked[:k]]


def _arithmetic(type_text: str) -> bool:
    if "*" in type_text or "[" in type_text:
        return False
    base = re.sub(r"\b(const|volatile|constexpr)\b|&", " ", type_text)
    return bool(_ARITHMETIC.match(" ".join(base.split())))


def _floating(type_text: str) -> bool:
    return _arithmetic(type_text) and bool(re.search(r"\b(float|double)\b", type_text))


def _contradicts(arg: str, param: str) -> bool:
    if _INT_LITERAL.match(arg) and _floating(param):
        return True
    if _STRING_LITERAL.match(arg) and _arithmetic(param):
        return True
    return False


def _verified_calls(focal: FocalMethod, chunk: CodeChunk) -> bool:
    text = chunk.text
    if chunk.kind == "comment":
        text = _COMMENT_MARKER.sub(lambda match: " " * len(match.group()), text)
    masked = mask(text)
    start = 0
    if chunk.kind == "method":
        # Skip the chunk's own declarator.
        start = max(masked.find("{"), 0)
    pattern = re.compile(r"\b{}\s*\(".format(re.escape(focal.name)))
    for match in pattern.finditer(masked, start):
        split = split_arguments(text, masked, match.end() - 1)
        if split is None:
            continue
        args, _ = split
        if len(args) != len(focal.param_types):
            continue
        if not any(_contradicts(arg, param) for arg, param in zip(args, focal.param_types)):
            return True
    return False


def retrieve_code_examples(
    focal: FocalMethod, kb: KnowledgeBase, limit: int = 3,
) -> List[RetrievalResult]:
    """
    Code chunks that call the focal method with a compatible argument list.

    Candidates come from a name-and-parenthesis scan; they survive only if some call site has the
    focal method's arity and no literal argument contradicts its parameter type.  The chunk holding
    the focal definition is never returned.
    """
    own = focal.file
    if kb.root is not None:
        own = Path(os.path.relpath(focal.file, kb.root))
    own_source = Path(own).as_posix()
    results: List[RetrievalResult] = []
    for chunk in sorted(kb.code, key=lambda item: item.id):
        if chunk.source == own_source and tuple(chunk.line_span) == tuple(focal.line_span):
            continue
        if _verified_calls(focal, chunk):
            results.append(RetrievalResult(chunk.id, 1.0, chunk.text))
            if len(results) >= limit:
                break
    return results


def build_query_statement(focal: FocalMethod) -> str:
    if focal.class_name:
        return "What is the functionality and intended behavior of method {} in class {}?".format(
            focal.name, focal.class_name,
        )
    return "What is the functionality and intended behavior of method {}?".format(focal.name)
