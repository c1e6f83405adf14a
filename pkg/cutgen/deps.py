"""
Project dependencies of a focal method.

Configuration dependencies (third-party libraries, language standard) are read lexically from
the project's CMake files: commands are matched by keyword and variables are never expanded.
Cross-file data dependencies are the declarations, in headers reached through at most two
layers of quote includes, of the names the focal method invokes.
"""

from dataclasses import dataclass, field
import logging
import os
from pathlib import Path
import re
from typing import Any, Dict, List, Optional, Sequence, Set, Tuple

from .api import SyntaxBackend
from .lexical import find_includes, read_source
from .repo import FocalMethod, RepoIndex
from .syntax import Declaration, lexical_invocations


LOG = logging.getLogger(__name__)


Provenance = Tuple[str, int, str]

LIBRARY_ALIASES = {
    "gtest": "gtest",
    "gtest_main": "gtest",
    "googletest": "gtest",
    "gtest::gtest": "gtest",
    "gtest::main": "gtest",
    "gtest::gtest_main": "gtest",
    "gmock": "gmock",
    "gmock_main": "gmock",
    "gtest::gmock": "gmock",
    "gtest::gmock_main": "gmock",
}
FRAMEWORK_MAINS = frozenset(("gtest_main", "gtest::main", "gtest::gtest_main", "gmock_main", "gtest::gmock_main"))
MOCK_LIBRARIES = frozenset(("gmock", "trompeloeil", "fakeit"))

_SKIP_ARGS = frozenset((
    "public", "private", "interface", "link_public", "link_private", "link_interface_libraries",
    "debug", "optimized", "general", "required", "quiet", "config", "module", "components",
    "optional_components", "exact", "no_module", "global", "imported",
))
_COMMAND = re.compile(r"\b([A-Za-z_][A-Za-z0-9_]*)[ \t]*\(")
_ARG = re.compile(r'"((?:[^"\\]|\\.)*)"|\[(=*)\[(.*?)\]\2\]|([^\s()"]+)', re.DOTALL)
_VERSIONED = re.compile(
    r"(?P<name>[A-Za-z][A-Za-z0-9+]*?)[-_](?:release[-_])?v?(?P<version>\d+(?:\.\d+)+)"
)
_VERSION = re.compile(r"^v?(\d+(?:\.\d+)*)$")
_STD_FLAG = re.compile(r"-std=(?:c|gnu)\+\+(\w+)")
_CXX_STD_FEATURE = re.compile(r"^cxx_std_(\w+)$")
_TAG_VERSION = re.compile(r"v(?P<version>\d+(?:\.\d+)+)")


@dataclass
class Library:
    name: str
    version: Optional[str] = None
    provenance: List[Provenance] = field(default_factory=list)


@dataclass
class ConfigDependencies:
    libraries: List[Library] = field(default_factory=list)
    cxx_standard: Optional[str] = None
    provenance: List[Provenance] = field(default_factory=list)
    framework_main: bool = False
    """Whether the test framework's own `main` is linked (e.g. `gtest_main`)."""

    @property
    def gtest_available(self) -> bool:
        return any(lib.name.lower() in ("gtest", "googletest") for lib in self.libraries)

    @property
    def mock_libraries(self) -> List[str]:
        return [lib.name for lib in self.libraries if lib.name.lower() in MOCK_LIBRARIES]

    def library(self, name: str) -> Optional[Library]:
        return next((lib for lib in self.libraries if lib.name == name), None)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "libraries": [{"name": lib.name, "version": lib.version} for lib in self.libraries],
            "cxx_standard": self.cxx_standard,
            "gtest_available": self.gtest_available,
            "framework_main": self.framework_main,
            "provenance": [list(item) for item in self.provenance],
        }

    def render(self) -> str:
        lines: List[str] = []
        for lib in self.libraries:
            lines.append("- library: {}{}".format(lib.name, " {}".format(lib.version) if lib.version else ""))
        if self.cxx_standard:
            lines.append("- C++ standard: C++{}".format(self.cxx_standard))
        lines.append("- gtest available: {}".format("yes" if self.gtest_available else "no"))
        if self.framework_main:
            lines.append("- gtest_main is linked: the test file must not define main")
        return "\n".join(lines)


@dataclass(frozen=True)
class CMakeCommand:
    name: str
    args: Tuple[str, ...]
    file: str
    line: int
    raw: str


def _strip_comments(text: str) -> str:
    chars = list(text)
    pos, size = 0, len(text)
    quoted = False
    while pos < size:
        char = text[pos]
        if char == "\\" and quoted:
            pos += 2
            continue
        if char == '"':
            quoted = not quoted
        elif char == "#" and not quoted:
            bracket = re.match(r"#\[(=*)\[", text[pos:])
            if bracket:
                close = text.find("]{}]".format(bracket.group(1)), pos)
                end = size if close < 0 else close + len(bracket.group(1)) + 2
            else:
                end = text.find("\n", pos)
                end = size if end < 0 else end
            for i in range(pos, end):
                if chars[i] != "\n":
                    chars[i] = " "
            pos = end
            continue
        pos += 1
    return "".join(chars)


def parse_cmake(text: str, file: str = "") -> List[CMakeCommand]:
    """
    Split CMake source into commands with their unquoted argument tokens.
    """
    clean = _strip_comments(text)
    commands: List[CMakeCommand] = []
    pos = 0
    while True:
        match = _COMMAND.search(clean, pos)
        if not match:
            break
        depth, end = 0, match.end() - 1
        while end < len(clean):
            if clean[end] == "(":
                depth += 1
            elif clean[end] == ")":
                depth -= 1
                if depth == 0:
                    break
            end += 1
        inner = clean[match.end():end]
        args = tuple(
            next(group for group in (item.group(1), item.group(3), item.group(4)) if group is not None)
            for item in _ARG.finditer(inner)
        )
        line = clean.count("\n", 0, match.start()) + 1
        commands.append(CMakeCommand(match.group(1).lower(), args, file, line, text[match.start():end + 1]))
        pos = end + 1
    return commands


def _canonical(name: str) -> str:
    return LIBRARY_ALIASES.get(name.lower(), name)


def _versions(commands: Sequence[CMakeCommand]) -> Dict[str, str]:
    versions: Dict[str, str] = {}
    for command in commands:
        if command.name == "add_subdirectory" and command.args:
            found = _VERSIONED.search(Path(command.args[0]).name)
            if found:
                versions.setdefault(_canonical(found.group("name")), found.group("version"))
        elif command.name == "fetchcontent_declare" and command.args:
            name = _canonical(command.args[0])
            for key, value in zip(command.args[1:], command.args[2:]):
                if key in ("GIT_TAG", "URL"):
                    found = _VERSIONED.search(value) or _TAG_VERSION.search(value)
                    if found:
                        versions.setdefault(name, found.group("version"))
    return versions


def _standard(command: CMakeCommand) -> Optional[str]:
    args = command.args
    if command.name == "set_target_properties" and "CXX_STANDARD" in args:
        index = args.index("CXX_STANDARD")
        return args[index + 1] if index + 1 < len(args) else None
    if command.name == "set" and args and args[0] == "CMAKE_CXX_STANDARD" and len(args) > 1:
        return args[1]
    if command.name == "target_compile_features":
        for arg in args:
            found = _CXX_STD_FEATURE.match(arg)
            if found:
                return found.group(1)
    if command.name in ("set", "add_compile_options", "target_compile_options", "add_definitions", "string"):
        for arg in args:
            found = _STD_FLAG.search(arg)
            if found:
                return found.group(1)
    return None


def _config_files(index: RepoIndex) -> List[Path]:
    candidates = [index.root / "CMakeLists.txt", index.test_dir / "CMakeLists.txt"]
    known = set(index.config_files)
    return [path for path in candidates if path in known]


def extract_config_dependencies(index: RepoIndex) -> ConfigDependencies:
    """
    Libraries and language standard declared by the root and test-directory CMake files.
    """
    commands: List[CMakeCommand] = []
    for path in _config_files(index):
        try:
            text = read_source(path)
        except OSError as ex:
            index.warn("Skipping unreadable CMake file %s: %s", index.relative(path), ex)
            continue
        commands.extend(parse_cmake(text, index.relative(path)))
    deps = ConfigDependencies()
    targets: Set[str] = {
        command.args[0] for command in commands
        if command.name in ("add_library", "add_executable") and command.args
    }
    versions = _versions(commands)

    def add(name: str, version: Optional[str], command: CMakeCommand):
        where = (command.file, command.line, command.raw)
        lib = deps.library(name)
        if lib is None:
            lib = Library(name, version or versions.get(name))
            deps.libraries.append(lib)
        elif lib.version is None and version:
            lib.version = version
        if where not in lib.provenance:
            lib.provenance.append(where)
        if where not in deps.provenance:
            deps.provenance.append(where)

    for command in commands:
        if command.name == "target_link_libraries":
            for arg in command.args[1:]:
                if arg.lower() in _SKIP_ARGS or arg.startswith(("$", "-")) or arg in targets:
                    continue
                if arg.lower() in FRAMEWORK_MAINS:
                    deps.framework_main = True
                add(_canonical(arg), None, command)
        elif command.name == "find_package" and command.args:
            version = None
            rest = command.args[1:]
            if rest and _VERSION.match(rest[0]):
                version = _VERSION.match(rest[0]).group(1)
            elif "VERSION" in rest and rest.index("VERSION") + 1 < len(rest):
                version = rest[rest.index("VERSION") + 1]
            add(_canonical(command.args[0]), version, command)
        standard = _standard(command)
        if standard and deps.cxx_standard is None:
            deps.cxx_standard = standard
            where = (command.file, command.line, command.raw)
            if where not in deps.provenance:
                deps.provenance.append(where)
    LOG.info(
        "Config dependencies: %s, C++%s", ", ".join(lib.name for lib in deps.libraries) or "no libraries",
        deps.cxx_standard or "?",
    )
    return deps


@dataclass(frozen=True)
class IncludeEdge:
    source: Path
    """The including file."""
    target: Path
    layer: int


def build_include_graph(
    focal_file: Path, index: RepoIndex, max_depth: int = 2, warnings: Optional[List[str]] = None,
) -> List[IncludeEdge]:
    """
    Quote-include edges reachable from `focal_file`, breadth first, at most `max_depth` layers deep.

    The focal file's paired header counts as a layer-1 include.  Angle-bracket includes are
    ignored and each file is visited once.
    """
    focal_file = Path(os.path.normpath(focal_file))
    edges: List[IncludeEdge] = []
    visited = {focal_file}
    frontier = [focal_file]
    for layer in range(1, max_depth + 1):
        following: List[Path] = []
        for current in frontier:
            targets: List[Path] = []
            for include in find_includes(read_source(current)):
                if include.form != "quote":
                    continue
                resolved = index.resolve_include(include.path, current)
                if resolved is None:
                    message = "Dangling include {} in {}".format(include.directive, index.relative(current))
                    LOG.warning("%s", message)
                    if warnings is not None:
                        warnings.append(message)
                    continue
                targets.append(resolved)
            if layer == 1:
                paired = index.paired_header(current)
                if paired is not None:
                    targets.append(paired)
            for target in targets:
                if target in visited:
                    continue
                visited.add(target)
                edges.append(IncludeEdge(current, target, layer))
                following.append(target)
        frontier = following
    return edges


@dataclass(frozen=True)
class DependencyEntry:
    symbol: str
    declaring_file: Path
    declaration_text: str
    layer: int
    line_span: Tuple[int, int] = (0, 0)


@dataclass
class CrossFileDependencies:
    entries: List[DependencyEntry] = field(default_factory=list)
    chain: List[Path] = field(default_factory=list)
    unresolved: List[str] = field(default_factory=list)

    def to_dict(self, root: Optional[Path] = None) -> Dict[str, Any]:
        def rel(path: Path) -> str:
            return Path(os.path.relpath(path, root)).as_posix() if root else str(path)
        return {
            "entries": [{
                "symbol": entry.symbol,
                "declaring_file": rel(entry.declaring_file),
                "declaration_text": entry.declaration_text,
                "layer": entry.layer,
                "line_span": list(entry.line_span),
            } for entry in self.entries],
            "chain": [rel(path) for path in self.chain],
            "unresolved": list(self.unresolved),
        }

    def render(self, root: Optional[Path] = None) -> str:
        blocks: List[str] = []
        for entry in self.entries:
            name = Path(os.path.relpath(entry.declaring_file, root)).as_posix() if root else entry.declaring_file.name
            blocks.append("// {} (from {})\n{}".format(entry.symbol, name, entry.declaration_text))
        return "\n\n".join(blocks)


_DEPENDENCY_KINDS = ("function", "method", "class", "enum", "constant", "typedef", "variable")


def _pick(declarations: Sequence[Declaration], symbol: str) -> Optional[Declaration]:
    found = [item for item in declarations if item.name == symbol and item.kind in _DEPENDENCY_KINDS]
    if not found:
        return None
    classes = [item for item in found if item.kind == "class"]
    if classes:
        return max(classes, key=lambda item: item.span.end_offset - item.span.start_offset)
    return found[0]


def invoked_names(focal: FocalMethod, backend: SyntaxBackend) -> List[str]:
    """
    Names invoked, instantiated or statically accessed by the focal method, sorted.
    """
    tree = backend.parse(focal.file)
    definition = tree.definition_at(focal.line_span[0])
    if definition is not None and definition.name == focal.name:
        return sorted(definition.invocations)
    return sorted(set(name for name in lexical_invocations(focal.body) if name != focal.name))


def extract_cross_file_dependencies(
    focal: FocalMethod, edges: Sequence[IncludeEdge], index: RepoIndex, backend: SyntaxBackend,
) -> CrossFileDependencies:
    """
    Declarations, from files in the include chain, of each name the focal method invokes.

    Layer-1 files are searched before layer-2 files; the first declaring file wins.
    """
    deps = CrossFileDependencies(chain=[focal.file] + [edge.target for edge in edges])
    layered = sorted(edges, key=lambda edge: edge.layer)
    for symbol in invoked_names(focal, backend):
        for edge in layered:
            tree = backend.parse(edge.target)
            declaration = _pick(tree.declarations, symbol)
            if declaration is None:
                continue
            span = declaration.span
            deps.entries.append(DependencyEntry(
                symbol, edge.target, tree.slice(span), edge.layer, (span.start_line, span.end_line),
            ))
            break
        else:
            deps.unresolved.append(symbol)
    LOG.debug("%s: %d cross-file dependencies, %d unresolved", focal.id, len(deps.entries), len(deps.unresolved))
    return deps
