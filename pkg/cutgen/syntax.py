"""
Syntax trees for C++ files, and the libclang backend that produces them.

The rest of the package never touches a parser directly: it consumes the plain-data
`SyntaxTree` returned by a `cutgen.api.SyntaxBackend`.  `ClangBackend` is the shipped
implementation, built on the `clang.cindex` bindings; tests may substitute any object with a
compatible `parse` method.
"""

from bisect import bisect_left
from dataclasses import dataclass, field
from enum import Enum
from itertools import accumulate
import logging
import os
from pathlib import Path
import re
import threading
from typing import Dict, Iterable, List, Optional, Sequence, Set, Tuple

from .errors import EnvironmentFault
from .lexical import find_comments, mask, read_source


LOG = logging.getLogger(__name__)


class DefinitionKind(Enum):
    """
    Flavours of function definition, used by the focal method filters.
    """

    FUNCTION = "function"
    METHOD = "method"
    CONSTRUCTOR = "constructor"
    DESTRUCTOR = "destructor"
    OPERATOR = "operator"
    CONVERSION = "conversion"

    @property
    def special(self) -> bool:
        """
        Whether this is a constructor, destructor, operator or conversion function.
        """
        return self not in (DefinitionKind.FUNCTION, DefinitionKind.METHOD)


@dataclass(frozen=True)
class Span:
    """
    Region of a file, as 1-based inclusive lines and 0-based half-open character offsets.
    """

    start_line: int
    end_line: int
    start_offset: int
    end_offset: int


@dataclass(frozen=True)
class Definition:
    """
    A function or method definition (one with a body).
    """

    name: str
    class_name: str
    """Innermost enclosing class, or empty for free functions."""
    scope: str
    """Enclosing namespaces joined with `::`."""
    kind: DefinitionKind
    access: str
    """`public`, `protected`, `private`, or empty for free functions."""
    return_type: str
    param_types: Tuple[str, ...]
    signature: str
    """Source text of the declarator up to the body, whitespace collapsed."""
    span: Span
    body_offset: int
    """Offset of the opening brace of the body."""
    decisions: int
    """Decision points: branches, loops, cases, handlers, `?:`, `&&` and `||`."""
    invocations: Tuple[str, ...]
    """Names of functions, types and static members used by the body."""

    @property
    def qualified_name(self) -> str:
        return "::".join(part for part in (self.class_name, self.name) if part)


@dataclass(frozen=True)
class Declaration:
    """
    A named declaration that other files may depend on.
    """

    name: str
    kind: str
    """One of `function`, `method`, `class`, `enum`, `constant`, `variable`, `typedef`, `field`."""
    class_name: str
    signature: str
    span: Span
    param_types: Tuple[str, ...] = ()


@dataclass(frozen=True)
class Diagnostic:
    """
    A parser diagnostic, located in the parsed file or one of its includes.
    """

    severity: str
    category: str
    path: str
    line: int
    message: str

    def __str__(self):
        return "{}:{}: {}: {}".format(self.path, self.line, self.severity, self.message)


@dataclass
class SyntaxTree:
    """
    Everything the pipeline needs to know about one parsed file.
    """

    path: Path
    text: str
    parsed: bool = True
    """`False` when the backend couldn't produce a tree at all."""
    definitions: List[Definition] = field(default_factory=list)
    declarations: List[Declaration] = field(default_factory=list)
    comments: List[Span] = field(default_factory=list)
    namespaces: List[str] = field(default_factory=list)
    """Qualified names of namespaces declared in this file, in order of appearance."""
    using_directives: List[str] = field(default_factory=list)
    class_fields: Dict[str, List[str]] = field(default_factory=dict)
    diagnostics: List[Diagnostic] = field(default_factory=list)

    def slice(self, span: Span) -> str:
        return self.text[span.start_offset:span.end_offset]

    @property
    def errors(self) -> List[Diagnostic]:
        return [diag for diag in self.diagnostics if diag.severity in ("error", "fatal")]

    @property
    def syntax_errors(self) -> List[Diagnostic]:
        """
        Errors raised by the parser proper, ignoring unresolved includes and semantic checks.
        """
        return [diag for diag in self.errors if diag.category == "Parse Issue"]

    def definition_at(self, start_line: int) -> Optional[Definition]:
        return next((item for item in self.definitions if item.span.start_line == start_line), None)


def offset_to_line(text: str, offset: int) -> int:
    return text.count("\n", 0, offset) + 1


class ByteOffsets:
    """
    Maps UTF-8 byte offsets, as reported by libclang, onto character offsets of the decoded text.
    """

    def __init__(self, text: str):
        self.starts: Optional[List[int]] = None
        if len(text.encode("utf-8", errors="surrogateescape")) != len(text):
            sizes = (len(char.encode("utf-8", errors="surrogateescape")) for char in text)
            self.starts = [0, *accumulate(sizes)]

    def __call__(self, offset: int) -> int:
        if self.starts is None:
            return offset
        return bisect_left(self.starts, offset)


def comment_blocks(text: str, exclude: Sequence[Span] = ()) -> List[Span]:
    """
    Group comments into standalone blocks.

    A comment is standalone when nothing but whitespace precedes it on its line.  Consecutive
    standalone comments on adjacent lines form one block.  Comments inside `exclude` spans are
    dropped.
    """
    blocks: List[Span] = []
    for start, end in find_comments(text):
        if any(span.start_offset <= start < span.end_offset for span in exclude):
            continue
        line_start = text.rfind("\n", 0, start) + 1
        if text[line_start:start].strip():
            continue
        start_line = offset_to_line(text, start)
        end_line = offset_to_line(text, end)
        if blocks and blocks[-1].end_line + 1 == start_line:
            prev = blocks.pop()
            blocks.append(Span(prev.start_line, end_line, prev.start_offset, end))
        else:
            blocks.append(Span(start_line, end_line, start, end))
    return blocks


_KEYWORDS = frozenset((
    "alignas", "alignof", "and", "assert", "auto", "bool", "case", "catch", "char", "co_return",
    "const_cast", "decltype", "defined", "delete", "do", "double", "dynamic_cast", "else", "float",
    "for", "if", "int", "long", "new", "noexcept", "not", "or", "reinterpret_cast", "return",
    "short", "signed", "sizeof", "static_assert", "static_cast", "switch", "throw", "typeid",
    "unsigned", "void", "while",
))
_DECL_PREFIX = frozenset(("return", "case", "else", "throw", "new", "delete", "co_return", "do"))
_CALL = re.compile(r"\b([A-Za-z_]\w*)\s*(?:<[^<>;(){}]*>\s*)?\(")
_QUALIFIER = re.compile(r"\b([A-Za-z_]\w*)\s*::\s*[A-Za-z_]")


def lexical_invocations(body: str) -> List[str]:
    """
    Names that look invoked or qualified in a function body, found without a parser.

    `Type name(args)` declarations are skipped, since `name` is a variable.
    """
    masked = mask(body)
    names: List[str] = []
    for match in _CALL.finditer(masked):
        name = match.group(1)
        if name in _KEYWORDS:
            continue
        before = masked[max(0, match.start() - 80):match.start()].rstrip()
        prev = re.search(r"([A-Za-z_]\w*|->|.)$", before)
        token = prev.group(1) if prev else ""
        if token == ">" or (re.match(r"[A-Za-z_]", token) and token not in _DECL_PREFIX):
            continue
        names.append(name)
    for match in _QUALIFIER.finditer(masked):
        if match.group(1) not in ("std", "this"):
            names.append(match.group(1))
    return names


class ClangBackend:
    """
    Syntax backend built on libclang via `clang.cindex`.

    Parsing is serialised through a lock and results are cached per file, keyed by path and
    modification time.
    """

    KEEP_GOING = 0x200
    """`CXTranslationUnit_KeepGoing`: don't stop at the first fatal error (e.g. a missing header)."""

    def __init__(
        self, include_roots: Iterable[Path] = (), std: str = "17", library_file: Optional[str] = None,
        extra_args: Sequence[str] = (),
    ):
        from clang import cindex
        if library_file and not cindex.Config.loaded:
            cindex.Config.set_library_file(library_file)
        self.cindex = cindex
        self.include_roots = [Path(root) for root in include_roots]
        self.std = std
        self.extra_args = list(extra_args)
        try:
            self.index = cindex.Index.create()
        except cindex.LibclangError as ex:
            raise EnvironmentFault("libclang can't be loaded: {}".format(ex))
        self.lock = threading.Lock()
        self.cache: Dict[Tuple[str, float], SyntaxTree] = {}

    def __repr__(self):
        return "<{}: c++{}>".format(self.__class__.__name__, self.std)

    def args(self) -> List[str]:
        args = ["-x", "c++", "-std=c++{}".format(self.std)]
        args.extend("-I{}".format(root) for root in self.include_roots)
        return args + self.extra_args

    def parse(self, path: Path, text: Optional[str] = None) -> SyntaxTree:
        """
        Parse a file from disk, or `text` standing in for the contents of `path`.
        """
        path = Path(os.path.abspath(path))
        key: Optional[Tuple[str, float]] = None
        if text is None:
            key = (str(path), path.stat().st_mtime)
            cached = self.cache.get(key)
            if cached is not None:
                return cached
            text = read_source(path)
        with self.lock:
            tree = self._parse(path, text)
        if key:
            self.cache[key] = tree
        return tree

    def _parse(self, path: Path, text: str) -> SyntaxTree:
        cindex = self.cindex
        unsaved = [(str(path), text.encode("utf-8", errors="surrogateescape"))]
        try:
            tu = self.index.parse(str(path), args=self.args(), unsaved_files=unsaved, options=self.KEEP_GOING)
        except cindex.TranslationUnitLoadError as ex:
            LOG.warning("Failed to parse %s: %s", path, ex)
            diag = Diagnostic("fatal", "Parse Issue", str(path), 0, str(ex))
            return SyntaxTree(path, text, parsed=False, diagnostics=[diag])
        tree = SyntaxTree(path, text)
        for diag in tu.diagnostics:
            location = diag.location
            tree.diagnostics.append(Diagnostic(
                self._severity(diag.severity), diag.category_name or "",
                location.file.name if location.file else "", location.line, diag.spelling,
            ))
        _Visitor(cindex, tree).visit_children(tu.cursor, (), "")
        tree.comments = comment_blocks(text, [item.span for item in tree.definitions])
        LOG.debug("Parsed %s: %d definitions, %d errors", path, len(tree.definitions), len(tree.errors))
        return tree

    def _severity(self, value: int) -> str:
        return {0: "ignored", 1: "note", 2: "warning", 3: "error", 4: "fatal"}.get(value, "error")


class _Visitor:

    def __init__(self, cindex, tree: SyntaxTree):
        self.cindex = cindex
        self.kinds = cindex.CursorKind
        self.tree = tree
        self.path = str(tree.path)
        self.char = ByteOffsets(tree.text)
        self.seen_namespaces: Set[str] = set()

    def _ours(self, cursor) -> bool:
        location = cursor.location
        return location.file is not None and os.path.abspath(location.file.name) == self.path

    def _span(self, cursor) -> Span:
        start, end = self._offsets(cursor)
        extent = cursor.extent
        return Span(extent.start.line, extent.end.line, start, end)

    def _text(self, start: int, end: int) -> str:
        return " ".join(self.tree.text[start:end].split())

    def visit_children(self, cursor, scope: Tuple[str, ...], klass: str):
        for child in cursor.get_children():
            if self._ours(child):
                self.visit(child, scope, klass)

    def visit(self, cursor, scope: Tuple[str, ...], klass: str):
        kinds = self.kinds
        kind = cursor.kind
        if kind == kinds.NAMESPACE:
            inner = scope + (cursor.spelling,) if cursor.spelling else scope
            name = "::".join(inner)
            if cursor.spelling and name not in self.seen_namespaces:
                self.seen_namespaces.add(name)
                self.tree.namespaces.append(name)
            self.visit_children(cursor, inner, klass)
        elif kind in (kinds.LINKAGE_SPEC, kinds.UNEXPOSED_DECL):
            self.visit_children(cursor, scope, klass)
        elif kind in (
            kinds.CLASS_DECL, kinds.STRUCT_DECL, kinds.UNION_DECL, kinds.CLASS_TEMPLATE,
            kinds.CLASS_TEMPLATE_PARTIAL_SPECIALIZATION,
        ):
            if cursor.spelling:
                self._declare(cursor, "class", klass, self._head(cursor))
            self.visit_children(cursor, scope, cursor.spelling or klass)
        elif kind in (
            kinds.FUNCTION_DECL, kinds.CXX_METHOD, kinds.CONSTRUCTOR, kinds.DESTRUCTOR,
            kinds.CONVERSION_FUNCTION, kinds.FUNCTION_TEMPLATE,
        ):
            self._function(cursor, scope, klass)
        elif kind == kinds.ENUM_DECL:
            if cursor.spelling:
                self._declare(cursor, "enum", klass, self._head(cursor))
            for child in cursor.get_children():
                if child.kind == kinds.ENUM_CONSTANT_DECL:
                    self._declare(child, "constant", klass, self._text(*self._offsets(child)))
        elif kind == kinds.FIELD_DECL:
            text = self._text(*self._offsets(cursor)) + ";"
            self.tree.class_fields.setdefault(klass, []).append(text)
            self._declare(cursor, "field", klass, text)
        elif kind == kinds.VAR_DECL:
            text = self._text(*self._offsets(cursor))
            if klass:
                self.tree.class_fields.setdefault(klass, []).append(text + ";")
            const = cursor.type.is_const_qualified() or text.startswith(("constexpr", "static constexpr"))
            self._declare(cursor, "constant" if const else "variable", klass, text)
        elif kind in (kinds.TYPEDEF_DECL, kinds.TYPE_ALIAS_DECL):
            self._declare(cursor, "typedef", klass, self._text(*self._offsets(cursor)))
        elif kind == kinds.USING_DIRECTIVE:
            self.tree.using_directives.append(self._text(*self._offsets(cursor)) + ";")

    def _offsets(self, cursor) -> Tuple[int, int]:
        extent = cursor.extent
        return self.char(extent.start.offset), self.char(extent.end.offset)

    def _head(self, cursor) -> str:
        start, end = self._offsets(cursor)
        brace = self.tree.text.find("{", start, end)
        return self._text(start, brace if brace >= 0 else end)

    def _declare(self, cursor, kind: str, klass: str, signature: str, params: Tuple[str, ...] = ()):
        self.tree.declarations.append(Declaration(cursor.spelling, kind, klass, signature, self._span(cursor), params))

    def _body(self, cursor):
        return next((child for child in cursor.get_children() if child.kind == self.kinds.COMPOUND_STMT), None)

    def _function(self, cursor, scope: Tuple[str, ...], klass: str):
        kinds = self.kinds
        parent = cursor.semantic_parent
        if parent is not None and parent.kind in (
            kinds.CLASS_DECL, kinds.STRUCT_DECL, kinds.UNION_DECL, kinds.CLASS_TEMPLATE,
            kinds.CLASS_TEMPLATE_PARTIAL_SPECIALIZATION,
        ):
            klass = parent.spelling
        body = self._body(cursor) if cursor.is_definition() else None
        start, end = self._offsets(cursor)
        head_end = self.char(body.extent.start.offset) if body is not None else end
        signature = self._text(start, head_end)
        params = tuple(self._param_type(child) for child in cursor.get_children() if child.kind == kinds.PARM_DECL)
        self._declare(cursor, "method" if klass else "function", klass, signature, params)
        if body is None:
            return
        name = cursor.spelling
        if cursor.kind == kinds.CONSTRUCTOR:
            kind = DefinitionKind.CONSTRUCTOR
        elif cursor.kind == kinds.DESTRUCTOR:
            kind = DefinitionKind.DESTRUCTOR
        elif cursor.kind == kinds.CONVERSION_FUNCTION:
            kind = DefinitionKind.CONVERSION
        elif name.startswith("operator") and not re.match(r"operator\w", name):
            kind = DefinitionKind.OPERATOR
        else:
            kind = DefinitionKind.METHOD if klass else DefinitionKind.FUNCTION
        if kind in (DefinitionKind.CONSTRUCTOR, DefinitionKind.DESTRUCTOR):
            return_type = ""
        else:
            return_type = cursor.result_type.spelling
        body_text = self.tree.text[slice(*self._offsets(body))]
        invocations = self._invocations(body) + lexical_invocations(body_text)
        unique = tuple(sorted(set(item for item in invocations if item and item != name)))
        self.tree.definitions.append(Definition(
            name=name, class_name=klass, scope="::".join(scope), kind=kind,
            access=self._access(cursor) if klass else "",
            return_type=return_type, param_types=params, signature=signature, span=self._span(cursor),
            body_offset=self.char(body.extent.start.offset), decisions=self._decisions(cursor), invocations=unique,
        ))

    def _access(self, cursor) -> str:
        access = self.cindex.AccessSpecifier
        value = cursor.canonical.access_specifier
        return {access.PUBLIC: "public", access.PROTECTED: "protected", access.PRIVATE: "private"}.get(value, "public")

    def _param_type(self, cursor) -> str:
        start, end = self._offsets(cursor)
        text = self.tree.text[start:end]
        masked = mask(text)
        default = masked.find("=")
        if default >= 0:
            text, masked = text[:default], masked[:default]
        name = cursor.spelling
        if name:
            found = [match.start() for match in re.finditer(r"\b{}\b".format(re.escape(name)), masked)]
            if found:
                text = text[:found[-1]] + text[found[-1] + len(name):]
        text = " ".join(text.split())
        return text or cursor.type.spelling

    def _binary_operator(self, cursor) -> str:
        children = list(cursor.get_children())
        if not children:
            return ""
        lhs_end = children[0].extent.end.offset
        for token in cursor.get_tokens():
            if token.extent.start.offset >= lhs_end:
                return token.spelling
        return ""

    def _decisions(self, cursor) -> int:
        kinds = self.kinds
        branching = (
            kinds.IF_STMT, kinds.FOR_STMT, kinds.CXX_FOR_RANGE_STMT, kinds.WHILE_STMT, kinds.DO_STMT,
            kinds.CASE_STMT, kinds.CXX_CATCH_STMT, kinds.CONDITIONAL_OPERATOR,
        )
        count = 0
        for node in cursor.walk_preorder():
            if node.kind in branching:
                count += 1
            elif node.kind == kinds.BINARY_OPERATOR and self._binary_operator(node) in ("&&", "||", "and", "or"):
                count += 1
        return count

    def _invocations(self, body) -> List[str]:
        kinds = self.kinds
        class_kinds = (kinds.CLASS_DECL, kinds.STRUCT_DECL, kinds.CLASS_TEMPLATE)
        names: List[str] = []
        for node in body.walk_preorder():
            if node.kind == kinds.CALL_EXPR and node.spelling and not node.spelling.startswith("operator"):
                names.append(node.spelling)
            elif node.kind in (kinds.TYPE_REF, kinds.TEMPLATE_REF):
                target = node.referenced
                names.append(target.spelling if target is not None else node.spelling.split("::")[-1])
            elif node.kind == kinds.DECL_REF_EXPR:
                target = node.referenced
                if target is None:
                    continue
                if target.kind == kinds.ENUM_CONSTANT_DECL:
                    names.append(target.spelling)
                elif target.kind == kinds.VAR_DECL and target.semantic_parent is not None \
                        and target.semantic_parent.kind in class_kinds:
                    names.append(target.spelling)
        return names
