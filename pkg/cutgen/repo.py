"""
Repository model: file inventory, focal method enumeration and structured focal context.
"""

from dataclasses import dataclass, field
from fnmatch import fnmatch
import hashlib
import logging
import os
from pathlib import Path
import re
from typing import Any, Dict, List, Optional, Sequence, Tuple

from .api import SyntaxBackend
from .config import FilterConfig, RunConfig
from .errors import ConfigError, ContextExtractionError
from .lexical import Include, find_includes, line_slice, read_source
from .syntax import Definition, SyntaxTree


LOG = logging.getLogger(__name__)


SOURCE_SUFFIXES = (".cpp", ".cc", ".cxx")
HEADER_SUFFIXES = (".h", ".hpp", ".hh", ".hxx")
DOC_SUFFIXES = (".md", ".markdown", ".txt", ".rst")

GENERATED_PREFIX = "cutgen_test_"

STD_HEADERS = frozenset((
    # C++17 library headers
    "algorithm", "any", "array", "atomic", "bitset", "cfenv", "charconv", "chrono", "codecvt",
    "complex", "condition_variable", "deque", "exception", "execution", "filesystem",
    "forward_list", "fstream", "functional", "future", "initializer_list", "iomanip", "ios",
    "iosfwd", "iostream", "istream", "iterator", "limits", "list", "locale", "map", "memory",
    "memory_resource", "mutex", "new", "numeric", "optional", "ostream", "queue", "random",
    "ratio", "regex", "scoped_allocator", "set", "shared_mutex", "sstream", "stack", "stdexcept",
    "streambuf", "string", "string_view", "strstream", "system_error", "thread", "tuple",
    "type_traits", "typeindex", "typeinfo", "unordered_map", "unordered_set", "utility",
    "valarray", "variant", "vector",
    # C compatibility headers
    "cassert", "cctype", "cerrno", "cfloat", "cinttypes", "ciso646", "climits", "clocale",
    "cmath", "csetjmp", "csignal", "cstdarg", "cstddef", "cstdint", "cstdio", "cstdlib",
    "cstring", "ctime", "cuchar", "cwchar", "cwctype", "ccomplex", "cstdalign", "cstdbool",
    "ctgmath",
    "assert.h", "ctype.h", "errno.h", "fenv.h", "float.h", "inttypes.h", "iso646.h", "limits.h",
    "locale.h", "math.h", "setjmp.h", "signal.h", "stdarg.h", "stddef.h", "stdint.h", "stdio.h",
    "stdlib.h", "string.h", "time.h", "uchar.h", "wchar.h", "wctype.h",
))


@dataclass
class RepoIndex:
    """
    Inventory of a project's files, classified by role.

    All paths are absolute.  Configuration files never appear in the document or code lists.
    """

    root: Path
    test_dir: Path
    source_files: List[Path] = field(default_factory=list)
    header_files: List[Path] = field(default_factory=list)
    config_files: List[Path] = field(default_factory=list)
    doc_files: List[Path] = field(default_factory=list)
    include_roots: List[Path] = field(default_factory=list)
    warnings: List[str] = field(default_factory=list)

    def relative(self, path: Path) -> str:
        try:
            return Path(path).relative_to(self.root).as_posix()
        except ValueError:
            return str(path)

    def in_test_dir(self, path: Path) -> bool:
        try:
            Path(path).relative_to(self.test_dir)
        except ValueError:
            return False
        return True

    def warn(self, message: str, *args: Any):
        text = message % args if args else message
        LOG.warning(text)
        self.warnings.append(text)

    def resolve_include(self, include: str, from_file: Path) -> Optional[Path]:
        """
        Resolve a quote include: the including file's directory, then include roots, then the root.

        Only headers known to the index resolve.
        """
        known = set(self.header_files)
        for base in [Path(from_file).parent, *self.include_roots, self.root]:
            candidate = Path(os.path.normpath(base / include))
            if candidate in known:
                return candidate
        return None

    def paired_header(self, source: Path) -> Optional[Path]:
        """
        Header with the same stem as `source`, in its directory or under an include root.
        """
        source = Path(source)
        same_dir: List[Path] = []
        under_root: List[Path] = []
        for header in self.header_files:
            if header.stem != source.stem:
                continue
            if header.parent == source.parent:
                same_dir.append(header)
            elif any(root in header.parents for root in self.include_roots):
                under_root.append(header)
        found = same_dir or under_root
        return found[0] if found else None


def _excluded(name: str, rel: str, patterns: Sequence[str]) -> bool:
    return any(fnmatch(name, pattern) or fnmatch(rel, pattern) for pattern in patterns)


def scan_repository(root: Path, config: RunConfig) -> RepoIndex:
    """
    Walk the project tree and classify every file by suffix.

    Directories matching `config.exclude_dirs` and the pipeline's own output directory are pruned;
    generated test files are skipped so reruns see the same project.
    """
    root = Path(os.path.abspath(root))
    if not root.is_dir():
        raise ConfigError("Project root {} doesn't exist or isn't a directory".format(root))
    index = RepoIndex(
        root=root, test_dir=Path(os.path.normpath(root / config.test_dir)),
        include_roots=[Path(os.path.normpath(root / path)) for path in config.include_roots],
    )
    output = Path(os.path.abspath(config.output_path))
    for dirpath, dirnames, filenames in os.walk(root):
        current = Path(dirpath)
        kept: List[str] = []
        for name in sorted(dirnames):
            path = current / name
            rel = path.relative_to(root).as_posix()
            if path == output or _excluded(name, rel, config.exclude_dirs):
                LOG.debug("Excluding directory %s", rel)
            else:
                kept.append(name)
        dirnames[:] = kept
        for name in sorted(filenames):
            path = current / name
            if name.startswith(GENERATED_PREFIX):
                continue
            suffix = path.suffix.lower()
            if name == "CMakeLists.txt" or suffix == ".cmake":
                target = index.config_files
            elif suffix in SOURCE_SUFFIXES:
                target = index.source_files
            elif suffix in HEADER_SUFFIXES:
                target = index.header_files
            elif suffix in DOC_SUFFIXES:
                target = index.doc_files
            else:
                continue
            if not os.access(path, os.R_OK):
                index.warn("Skipping unreadable file %s", index.relative(path))
                continue
            target.append(path)
    for files in (index.source_files, index.header_files, index.config_files, index.doc_files):
        files.sort()
    LOG.info(
        "Scanned %s: %d sources, %d headers, %d config, %d docs", root, len(index.source_files),
        len(index.header_files), len(index.config_files), len(index.doc_files),
    )
    return index


@dataclass(frozen=True)
class FocalMethod:
    """
    A function definition selected for test generation.
    """

    id: str
    name: str
    class_name: str
    signature: Tuple[str, Tuple[str, ...]]
    """Return type text and ordered parameter type texts."""
    file: Path
    line_span: Tuple[int, int]
    body: str
    """Source lines `line_span` of `file`, byte for byte."""
    cyclomatic_complexity: int
    kind: str = "function"
    access: str = ""
    scope: str = ""

    @property
    def return_type(self) -> str:
        return self.signature[0]

    @property
    def param_types(self) -> Tuple[str, ...]:
        return self.signature[1]

    @property
    def qualified_name(self) -> str:
        return "::".join(part for part in (self.class_name, self.name) if part)

    def to_dict(self, root: Optional[Path] = None) -> Dict[str, Any]:
        file = self.file
        if root is not None:
            try:
                file = file.relative_to(root)
            except ValueError:
                pass
        return {
            "id": self.id,
            "name": self.name,
            "class_name": self.class_name,
            "signature": {"return_type": self.return_type, "param_types": list(self.param_types)},
            "file": Path(file).as_posix(),
            "line_span": list(self.line_span),
            "body": self.body,
            "cyclomatic_complexity": self.cyclomatic_complexity,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any], root: Optional[Path] = None) -> "FocalMethod":
        file = Path(data["file"])
        if root is not None and not file.is_absolute():
            file = root / file
        signature = data["signature"]
        return cls(
            id=data["id"], name=data["name"], class_name=data["class_name"],
            signature=(signature["return_type"], tuple(signature["param_types"])), file=file,
            line_span=(data["line_span"][0], data["line_span"][1]), body=data["body"],
            cyclomatic_complexity=data["cyclomatic_complexity"],
        )


def focal_id(rel: str, definition: Definition) -> str:
    """
    Stable identifier: a readable slug plus a short digest of the location and signature.
    """
    key = "{}:{}:{}({})".format(
        rel, definition.span.start_offset, definition.qualified_name, ",".join(definition.param_types),
    )
    digest = hashlib.sha1(key.encode("utf-8")).hexdigest()[:8]
    slug = re.sub(r"\W+", "_", definition.qualified_name).strip("_") or "anon"
    return "{}_{}".format(slug, digest)


def _passes(definition: Definition, text: str, filters: FilterConfig) -> bool:
    body_start = text.count("\n", 0, definition.body_offset) + 1
    if definition.span.end_line - body_start + 1 < filters.min_body_lines:
        return False
    if definition.kind.special and not filters.include_special_members:
        return False
    if definition.access and definition.access not in filters.visibility:
        return False
    names = (definition.name, definition.qualified_name)
    return not any(fnmatch(name, pattern) for name in names for pattern in filters.exclude_names)


def enumerate_focal_methods(
    index: RepoIndex, backend: SyntaxBackend, filters: FilterConfig = FilterConfig(),
) -> List[FocalMethod]:
    """
    Every definition in a non-test source file that passes `filters`, ordered by file and line.
    """
    methods: List[FocalMethod] = []
    for path in index.source_files:
        if index.in_test_dir(path):
            continue
        tree = backend.parse(path)
        if not tree.parsed:
            index.warn("Skipping unparsable file %s: %s", index.relative(path), "; ".join(map(str, tree.errors)))
            continue
        if tree.syntax_errors:
            LOG.debug("%s has %d parse errors", index.relative(path), len(tree.syntax_errors))
        rel = index.relative(path)
        for definition in sorted(tree.definitions, key=lambda item: item.span.start_offset):
            if not _passes(definition, tree.text, filters):
                continue
            span = definition.span
            methods.append(FocalMethod(
                id=focal_id(rel, definition), name=definition.name, class_name=definition.class_name,
                signature=(definition.return_type, definition.param_types), file=path,
                line_span=(span.start_line, span.end_line),
                body=line_slice(tree.text, span.start_line, span.end_line),
                cyclomatic_complexity=1 + definition.decisions, kind=definition.kind.value,
                access=definition.access, scope=definition.scope,
            ))
    methods.sort(key=lambda item: (str(item.file), item.line_span[0]))
    LOG.info("Enumerated %d focal methods", len(methods))
    return methods


def cyclomatic_complexity(m: FocalMethod, backend: SyntaxBackend) -> int:
    """
    1 plus the decision points in the focal method's body, recomputed from a fresh parse.
    """
    tree = backend.parse(m.file)
    definition = tree.definition_at(m.line_span[0])
    if definition is None or definition.name != m.name:
        return m.cyclomatic_complexity
    return 1 + definition.decisions


@dataclass
class StructuredFocalContext:
    """
    The focal method with the context a test author would look at first.
    """

    focal: FocalMethod
    file: str
    """Focal file, relative to the project root."""
    std_imports: List[str] = field(default_factory=list)
    third_party_imports: List[str] = field(default_factory=list)
    user_imports: List[str] = field(default_factory=list)
    namespaces: List[str] = field(default_factory=list)
    sibling_signatures: List[str] = field(default_factory=list)
    class_fields: List[str] = field(default_factory=list)
    paired_header: Optional[str] = None

    @property
    def imports(self) -> List[str]:
        return self.std_imports + self.third_party_imports + self.user_imports

    def render(self) -> str:
        lines = ["// File: {}".format(self.file)]
        lines.extend(self.imports)
        if self.namespaces:
            lines.append("")
            lines.extend(self.namespaces)
        if self.focal.class_name:
            lines.append("")
            lines.append("// Class: {}".format(self.focal.class_name))
            if self.class_fields:
                lines.append("// Fields:")
                lines.extend(self.class_fields)
            if self.sibling_signatures:
                lines.append("// Other methods:")
                lines.extend(signature + ";" for signature in self.sibling_signatures)
        lines.append("")
        lines.append("// Focal method:")
        return "\n".join(lines) + "\n" + self.focal.body


def categorize_includes(includes: Sequence[Include]) -> Tuple[List[str], List[str], List[str]]:
    """
    Split include directives into standard, third-party and user lists.
    """
    std: List[str] = []
    third: List[str] = []
    user: List[str] = []
    for include in includes:
        if include.form == "quote":
            user.append(include.directive)
        elif include.path in STD_HEADERS:
            std.append(include.directive)
        else:
            third.append(include.directive)
    return std, third, user


def _key(name: str, params: Sequence[str]) -> Tuple[str, Tuple[str, ...]]:
    return name, tuple("".join(param.split()) for param in params)


def _siblings(m: FocalMethod, trees: Sequence[SyntaxTree]) -> List[str]:
    own = _key(m.name, m.param_types)
    seen = {own}
    found: List[str] = []
    for tree in trees:
        for definition in tree.definitions:
            key = _key(definition.name, definition.param_types)
            if definition.class_name == m.class_name and key not in seen:
                seen.add(key)
                found.append(definition.signature)
        for declaration in tree.declarations:
            key = _key(declaration.name, declaration.param_types)
            if declaration.kind == "method" and declaration.class_name == m.class_name and key not in seen:
                seen.add(key)
                found.append(declaration.signature)
    return found


def extract_focal_context(m: FocalMethod, index: RepoIndex, backend: SyntaxBackend) -> StructuredFocalContext:
    """
    Gather imports, namespaces, sibling signatures and fields around a focal method.

    Siblings come from the focal file and its paired header.
    """
    tree = backend.parse(m.file)
    if not tree.parsed:
        raise ContextExtractionError(m.id, "; ".join(map(str, tree.diagnostics)) or "unparsable file")
    std, third, user = categorize_includes(find_includes(tree.text))
    namespaces = ["namespace {}".format(name) for name in tree.namespaces] + tree.using_directives
    trees = [tree]
    header = index.paired_header(m.file)
    if header is not None:
        header_tree = backend.parse(header)
        if header_tree.parsed:
            trees.append(header_tree)
    context = StructuredFocalContext(
        focal=m, file=index.relative(m.file), std_imports=std, third_party_imports=third, user_imports=user,
        namespaces=namespaces, paired_header=index.relative(header) if header else None,
    )
    if m.class_name:
        context.sibling_signatures = _siblings(m, trees)
        for item in trees:
            for text in item.class_fields.get(m.class_name, []):
                if text not in context.class_fields:
                    context.class_fields.append(text)
    return context


def read_slice(path: Path, line_span: Tuple[int, int]) -> str:
    return line_slice(read_source(path), *line_span)
