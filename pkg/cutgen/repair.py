"""
Post-processing of generated test files.

Repair runs in three phases, each at most once per file and always in this order:

1. Syntax rules, before the first compile: balance brackets, consolidate includes, keep exactly
   one suitable `main`.
2. Compile rules, after a failed compile: fix namespace usage and delete includes that don't
   resolve.
3. One round of LLM fixing, with the file and its compiler diagnostics as the only input.

Execution output is never fed back into any phase.
"""

from dataclasses import dataclass
import logging
from pathlib import Path
import re
from typing import List, Optional, Sequence, Set, Tuple

from .api import LLMProvider, SyntaxBackend
from .config import ProviderConfig
from .deps import ConfigDependencies
from .errors import PromptBudgetError, ProviderError, RepairOrderError
from .generation import FileStage, GeneratedTestFile
from .guidance import classify_error
from .lexical import (
    Include, find_includes, fenced_blocks, mask, matching_close, missing_closers, split_lines,
)
from .llm import Transcript, complete, make_request
from .prompts import assemble_prompt
from .repo import STD_HEADERS, RepoIndex, StructuredFocalContext
from .syntax import Diagnostic
from .toolchains import CompileResult


LOG = logging.getLogger(__name__)


@dataclass(frozen=True)
class FixRule:
    id: str
    phase: int
    description: str


BALANCE_BRACKETS = FixRule("balance-brackets", 1, "Append closers for unbalanced brackets at end of file")
CONSOLIDATE_INCLUDES = FixRule("consolidate-includes", 1, "Replace includes with the focal context's plus permitted framework headers")
SINGLE_MAIN = FixRule("single-main", 1, "Keep one main, drop it under a framework main, or synthesize one")
USING_NAMESPACE = FixRule("using-namespace", 2, "Insert or correct using-directives for the focal namespaces")
DROP_MISSING_INCLUDE = FixRule("drop-missing-include", 2, "Delete includes that don't resolve in the project")

FIX_RULES = (BALANCE_BRACKETS, CONSOLIDATE_INCLUDES, SINGLE_MAIN, USING_NAMESPACE, DROP_MISSING_INCLUDE)


GTEST_HEADER = "gtest/gtest.h"
GMOCK_HEADER = "gmock/gmock.h"

GTEST_MAIN = """
int main(int argc, char **argv) {
    ::testing::InitGoogleTest(&argc, argv);
    return RUN_ALL_TESTS();
}
"""

_MAIN = re.compile(r"^[ \t]*(?:int|auto)[ \t]+main[ \t]*\(", re.MULTILINE)
_TEST_MACRO = re.compile(r"\b(?:TEST|TEST_F|TEST_P|TYPED_TEST)\s*\(")
_GTEST_USE = re.compile(r"\b(?:TEST|TEST_F|TEST_P|TYPED_TEST|EXPECT_\w+|ASSERT_\w+)\s*\(|\btesting::")
_GMOCK_USE = re.compile(r"\bMOCK_(?:CONST_)?METHOD\w*\s*\(|\bEXPECT_CALL\s*\(|\bON_CALL\s*\(")
_TEST_FUNCTION = re.compile(r"^[ \t]*(?:static[ \t]+)?void[ \t]+(\w*[Tt]est\w*)[ \t]*\([ \t]*(?:void)?[ \t]*\)[ \t]*\{", re.MULTILINE)
_RETURN = re.compile(r"\breturn\b[^;]*;")
_USING_NAMESPACE = re.compile(r"^[ \t]*using[ \t]+namespace[ \t]+([\w:]+)[ \t]*;[ \t]*$", re.MULTILINE)
_LOCATION = re.compile(r"^(?P<file>[^:\s][^:]*):(?P<line>\d+):(?:\d+:)?\s*(?:fatal )?error:")
_NOT_FOUND = (
    re.compile(r"'([^']+)' file not found"),
    re.compile(r"error:\s*([^\s:]+):\s*No such file or directory"),
)
_BAD_NAMESPACE = re.compile(r"expected namespace name|is not a namespace|no namespace named|not a namespace-name")


def _lines(source: str) -> List[str]:
    return split_lines(source)


def _ensure_newline(source: str) -> str:
    return source if not source or source.endswith("\n") else source + "\n"


def balance_brackets(source: str) -> str:
    closers = missing_closers(mask(source))
    if not closers:
        return source
    return _ensure_newline(source) + "\n".join(closers) + "\n"


def _paired_directive(ctx: StructuredFocalContext, index: RepoIndex) -> Optional[str]:
    if ctx.paired_header is None:
        return None
    header = index.root / ctx.paired_header
    if header.parent == ctx.focal.file.parent:
        return '#include "{}"'.format(header.name)
    for base in [*index.include_roots, index.root]:
        try:
            return '#include "{}"'.format(header.relative_to(base).as_posix())
        except ValueError:
            continue
    return '#include "{}"'.format(header.name)


def _wanted_includes(
    source: str, includes: Sequence[Include], ctx: StructuredFocalContext, config_deps: ConfigDependencies,
    index: Optional[RepoIndex],
) -> List[str]:
    wanted: List[str] = list(ctx.std_imports)
    wanted.extend(item.directive for item in includes if item.form == "angle" and item.path in STD_HEADERS)
    wanted.extend(ctx.third_party_imports)
    masked = mask(source)
    present = {item.path for item in includes}
    if config_deps.gtest_available and (GTEST_HEADER in present or _GTEST_USE.search(masked)):
        wanted.append("#include <{}>".format(GTEST_HEADER))
    if config_deps.library("gmock") and (GMOCK_HEADER in present or _GMOCK_USE.search(masked)):
        wanted.append("#include <{}>".format(GMOCK_HEADER))
    wanted.extend(ctx.user_imports)
    paired = _paired_directive(ctx, index) if index is not None else None
    if paired:
        wanted.append(paired)
    unique: List[str] = []
    for directive in wanted:
        if directive not in unique:
            unique.append(directive)
    return unique


def consolidate_includes(
    source: str, ctx: StructuredFocalContext, config_deps: ConfigDependencies, index: Optional[RepoIndex] = None,
) -> str:
    """
    Replace the file's includes with the focal context's, the standard headers it already uses,
    the framework headers the configuration permits, and the focal file's paired header.

    The consolidated block goes where the first include was, or at the top of the file.
    """
    includes = find_includes(source)
    wanted = _wanted_includes(source, includes, ctx, config_deps, index)
    lines = _lines(source)
    drop = {item.line - 1 for item in includes}
    at = min(drop) if drop else 0
    kept = [line for number, line in enumerate(lines) if number not in drop]
    block = [directive + "\n" for directive in wanted]
    if not drop and block:
        block.append("\n")
    at -= sum(1 for number in drop if number < at)
    return "".join(kept[:at] + block + kept[at:])


def _mains(source: str) -> List[Tuple[int, int]]:
    """
    `(start, end)` offsets of each `main` definition, from its line start past its closing brace.
    """
    masked = mask(source)
    found: List[Tuple[int, int]] = []
    for match in _MAIN.finditer(masked):
        paren = masked.find("(", match.start())
        close = matching_close(masked, paren)
        if close is None:
            continue
        brace = masked.find("{", close)
        if brace < 0 or masked[close + 1:brace].strip(" \t\n") not in ("", "noexcept"):
            continue
        end = matching_close(masked, brace)
        if end is None:
            continue
        end += 1
        if source[end:end + 1] == "\n":
            end += 1
        found.append((match.start(), end))
    return found


def _cut(source: str, spans: Sequence[Tuple[int, int]]) -> str:
    for start, end in sorted(spans, reverse=True):
        source = source[:start] + source[end:]
    return source


def find_test_functions(source: str) -> List[str]:
    """
    Names of parameterless `void` test functions, in definition order.
    """
    names: List[str] = []
    for match in _TEST_FUNCTION.finditer(mask(source)):
        if match.group(1) not in names:
            names.append(match.group(1))
    return names


def _called(body: str, name: str) -> bool:
    return re.search(r"\b{}\s*\(\s*\)".format(re.escape(name)), body) is not None


def fix_main(source: str, config_deps: ConfigDependencies) -> str:
    """
    Under gtest, keep the first `main` (none at all when the framework links its own, and add
    one when there is none).  Without gtest, make sure `main` calls every test function.
    """
    mains = _mains(source)
    if config_deps.gtest_available:
        if config_deps.framework_main:
            return _cut(source, mains)
        if mains:
            return _cut(source, mains[1:])
        if _TEST_MACRO.search(mask(source)):
            return _ensure_newline(source) + GTEST_MAIN
        return source
    source = _cut(source, mains[1:])
    names = find_test_functions(source)
    if not mains:
        if not names:
            return source
        calls = "".join("    {}();\n".format(name) for name in names)
        return _ensure_newline(source) + "\nint main() {{\n{}    return 0;\n}}\n".format(calls)
    start, end = mains[0]
    masked = mask(source)
    brace = masked.find("{", start)
    close = matching_close(masked, brace)
    body = masked[brace:close]
    missing = [name for name in names if not _called(body, name)]
    if not missing:
        return source
    calls = "".join("    {}();\n".format(name) for name in missing)
    returns = list(_RETURN.finditer(masked, brace, close))
    ret = returns[-1] if returns else None
    at = source.rfind("\n", 0, ret.start()) + 1 if ret else close
    if ret is None and source[at - 1:at] != "\n":
        calls = "\n" + calls
    return source[:at] + calls + source[at:]


def apply_syntax_rules(
    tc: GeneratedTestFile, ctx: StructuredFocalContext, config_deps: ConfigDependencies,
    index: Optional[RepoIndex] = None,
) -> GeneratedTestFile:
    """
    Phase 1.  Applying it to its own output changes nothing.
    """
    if tc.stage not in (FileStage.INITIAL, FileStage.REFINED):
        raise RepairOrderError(tc.focal_id, "syntax rules need an initial or refined file, got {}".format(tc.stage.value))
    source = tc.source
    applied: List[str] = []
    for rule, step in (
        (BALANCE_BRACKETS, balance_brackets),
        (CONSOLIDATE_INCLUDES, lambda text: consolidate_includes(text, ctx, config_deps, index)),
        (SINGLE_MAIN, lambda text: fix_main(text, config_deps)),
    ):
        fixed = step(source)
        if fixed != source:
            applied.append(rule.id)
            source = fixed
    LOG.debug("%s: phase 1 applied %s", tc.focal_id, ", ".join(applied) or "nothing")
    return tc.advance(
        "phase1", source, FileStage.RULE_FIXED, note="phase1: {}".format(", ".join(applied)) if applied else None,
    )


def missing_headers(diagnostics: Sequence[str]) -> List[str]:
    found: List[str] = []
    for line in diagnostics:
        for pattern in _NOT_FOUND:
            match = pattern.search(line)
            if match and match.group(1) not in found:
                found.append(match.group(1))
    return found


def _focal_namespaces(ctx: StructuredFocalContext) -> List[str]:
    scope = ctx.focal.scope
    if scope:
        parts = scope.split("::")
        return ["::".join(parts[:n]) for n in range(1, len(parts) + 1)]
    return [item[len("namespace "):] for item in ctx.namespaces if item.startswith("namespace ")]


def _diagnostic_lines(diagnostics: Sequence[str], path: Path) -> List[int]:
    lines: List[int] = []
    for text in diagnostics:
        match = _LOCATION.match(text)
        if match and Path(match.group("file")).name == path.name and _BAD_NAMESPACE.search(text):
            lines.append(int(match.group("line")))
    return lines


def _insert_after_includes(source: str, text: str) -> str:
    includes = find_includes(source)
    lines = _lines(source)
    at = includes[-1].line if includes else 0
    return "".join(lines[:at] + [text] + lines[at:])


def apply_compile_rules(
    tc: GeneratedTestFile, compile: CompileResult, index: RepoIndex, ctx: Optional[StructuredFocalContext] = None,
    path: Optional[Path] = None,
) -> GeneratedTestFile:
    """
    Phase 2: namespace and include fixes driven by the diagnostics of a failed compile.

    `path` is where the file was compiled, used to match diagnostic locations.
    """
    if compile.ok:
        raise RepairOrderError(tc.focal_id, "compile rules need a failed compile")
    if "phase2" in tc.lineage or tc.stage is FileStage.LLM_FIXED:
        raise RepairOrderError(tc.focal_id, "compile rules run once, before LLM fixing")
    errors = [line for line in compile.diagnostics if line.strip()]
    lines = _lines(tc.source)
    drop: Set[int] = set()
    applied: List[str] = []

    missing = missing_headers(errors)
    if missing:
        test_file = path or index.test_dir / "test.cpp"
        for item in find_includes(tc.source):
            if item.path not in missing:
                continue
            if item.form == "angle" or index.resolve_include(item.path, test_file) is None:
                drop.add(item.line - 1)
        if drop:
            applied.append(DROP_MISSING_INCLUDE.id)

    namespace = [line for line in errors if "error" in line and classify_error(line).pattern.name == "Namespace"]
    insert = ""
    if namespace and ctx is not None:
        names = _focal_namespaces(ctx)
        spelled = {name.lower(): name for name in names}
        bad = set(_diagnostic_lines(namespace, path)) if path is not None else set()
        present: Set[str] = set()
        for number, line in enumerate(lines):
            found = _USING_NAMESPACE.match(line)
            if not found:
                continue
            name = found.group(1).lstrip(":")
            if number + 1 in bad or (name not in names and name.lower() in spelled):
                drop.add(number)
            else:
                present.add(name)
        insert = "".join("using namespace {};\n".format(name) for name in names if name not in present)
        if insert or any(_USING_NAMESPACE.match(lines[number]) for number in drop):
            applied.append(USING_NAMESPACE.id)

    if not applied:
        LOG.debug("%s: phase 2 found nothing to fix", tc.focal_id)
        return tc.advance("phase2", note="phase2: no applicable rule")
    source = "".join(line for number, line in enumerate(lines) if number not in drop)
    if insert:
        source = _insert_after_includes(source, insert)
    return tc.advance("phase2", source, note="phase2: {}".format(", ".join(applied)))


def llm_fix(
    tc: GeneratedTestFile, compile: CompileResult, provider: LLMProvider, config: ProviderConfig, budget: int,
    transcript: Optional[Transcript] = None,
) -> GeneratedTestFile:
    """
    Phase 3: one round of fixing by the model.  Only the test file and its compiler diagnostics
    go into the prompt.
    """
    if compile.ok:
        raise RepairOrderError(tc.focal_id, "LLM fixing needs a failed compile")
    if "phase3" in tc.lineage or tc.stage is FileStage.LLM_FIXED:
        raise RepairOrderError(tc.focal_id, "LLM fixing already ran for this file")
    try:
        bundle = assemble_prompt("fix", budget, tc.focal_id, test_source=tc.source, diagnostics=compile.diagnostics)
        response = complete(provider, make_request("fix", bundle.rendered, provider, config, tc.focal_id), transcript)
    except (PromptBudgetError, ProviderError) as ex:
        LOG.warning("%s: LLM fixing failed, keeping the file: %s", tc.focal_id, ex)
        return tc.advance("phase3", stage=FileStage.LLM_FIXED, note="phase3 failed: {}".format(ex))
    blocks = fenced_blocks(response.text)
    if not blocks:
        return tc.advance("phase3", stage=FileStage.LLM_FIXED, note="phase3 returned no code block")
    return tc.advance("phase3", blocks[0], FileStage.LLM_FIXED)


def check_syntax(source: str, backend: SyntaxBackend, path: Path) -> List[Diagnostic]:
    """
    Parse errors the syntax backend reports in the test file itself.
    """
    tree = backend.parse(path, text=source)
    return [item for item in tree.syntax_errors if not item.path or Path(item.path).name == path.name]


def count_test_cases(source: str, gtest: bool) -> int:
    """
    Test cases in a file: framework test macros under gtest, otherwise test functions called
    from `main`.  A file always counts as at least one.
    """
    masked = mask(source)
    if gtest:
        count = len(_TEST_MACRO.findall(masked))
    else:
        mains = _mains(source)
        if mains:
            body = masked[mains[0][0]:mains[0][1]]
            count = sum(1 for name in find_test_functions(source) if _called(body, name))
        else:
            count = 0
    return max(count, 1)
