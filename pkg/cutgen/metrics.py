"""
Correctness and coverage metrics, and the per-project report.

Project-level coverage is aggregated as a ratio of sums: covered lines (or branches) summed over
all focal methods, divided by total lines (or branches) summed the same way.  Percentages are
kept unrounded and rounded to two decimals only when the report is rendered.
"""

from collections import Counter
from dataclasses import dataclass, field
import json
import logging
import os
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple

from typing_extensions import Literal

from .errors import CoverageError
from .guidance import ErrorClassification, error_patterns
from .lexical import split_lines
from .repo import FocalMethod


LOG = logging.getLogger(__name__)


SCHEMA_VERSION = 1
COVERAGE_AGGREGATION = "ratio-of-sums"

CaseStatus = Literal["removed", "compiled", "passed"]
"""How far one generated test case got: pruned after failing to compile, compiled, or passed."""

EXEC_STATUSES = ("pass", "assertion_failure", "crash", "timeout")


@dataclass(frozen=True)
class Correctness:
    csr: float
    epr: float
    empty: bool = False


def compute_correctness(statuses: Sequence[CaseStatus]) -> Correctness:
    """
    Compilation success rate and execution pass rate, as percentages of the generated cases.
    """
    if not statuses:
        return Correctness(0.0, 0.0, empty=True)
    compiled = sum(1 for status in statuses if status in ("compiled", "passed"))
    passed = sum(1 for status in statuses if status == "passed")
    return Correctness(100.0 * compiled / len(statuses), 100.0 * passed / len(statuses))


@dataclass(frozen=True)
class CoverageRecord:
    focal_id: str
    lines_covered: int
    lines_total: int
    branches_covered: int
    branches_total: int

    def __post_init__(self):
        if not 0 <= self.lines_covered <= self.lines_total:
            raise ValueError("lines covered {} out of range 0..{}".format(self.lines_covered, self.lines_total))
        if not 0 <= self.branches_covered <= self.branches_total:
            raise ValueError("branches covered {} out of range 0..{}".format(self.branches_covered, self.branches_total))

    def to_dict(self) -> Dict[str, int]:
        return {
            "lines_covered": self.lines_covered,
            "lines_total": self.lines_total,
            "branches_covered": self.branches_covered,
            "branches_total": self.branches_total,
        }


def _same_file(filename: str, focal: Path, root: Optional[Path]) -> bool:
    path = Path(filename)
    if not path.is_absolute() and root is not None:
        path = root / path
    try:
        return os.path.normpath(str(path)) == os.path.normpath(str(focal)) or path.resolve() == focal.resolve()
    except OSError:
        return False


def _segment(item: Sequence[Any]) -> Tuple[int, int, int, bool, bool, bool]:
    # Older exports have no gap flag.
    line, col, count, has_count, entry = item[:5]
    gap = bool(item[5]) if len(item) > 5 else False
    return int(line), int(col), int(count), bool(has_count), bool(entry), gap


def _line_counts(segments: Sequence[Sequence[Any]], first: int, last: int) -> Dict[int, int]:
    """
    Execution count of every mapped line in `first..last`, following `llvm-cov`'s line rules.
    """
    parsed = sorted((_segment(item) for item in segments), key=lambda item: (item[0], item[1]))
    counts: Dict[int, int] = {}
    wrapped = None
    pos = 0
    for line in range(first, last + 1):
        while pos < len(parsed) and parsed[pos][0] < line:
            wrapped = parsed[pos]
            pos += 1
        on_line = []
        while pos + len(on_line) < len(parsed) and parsed[pos + len(on_line)][0] == line:
            on_line.append(parsed[pos + len(on_line)])
        starts = [item for item in on_line if item[3] and item[4] and not item[5]]
        skipped = bool(on_line) and not on_line[0][3] and on_line[0][4]
        mapped = not skipped and ((wrapped is not None and wrapped[3]) or bool(starts))
        if mapped:
            count = wrapped[2] if wrapped is not None else 0
            if starts:
                count = max([count] + [item[2] for item in starts])
            counts[line] = count
    return counts


def _branch_counts(branches: Sequence[Sequence[Any]], first: int, last: int) -> Tuple[int, int]:
    merged: Dict[Tuple[int, int, int, int], List[int]] = {}
    for item in branches:
        line = int(item[0])
        if not first <= line <= last:
            continue
        key = (line, int(item[1]), int(item[2]), int(item[3]))
        counts = merged.setdefault(key, [0, 0])
        counts[0] += int(item[4])
        counts[1] += int(item[5])
    covered = sum((true > 0) + (false > 0) for true, false in merged.values())
    return covered, 2 * len(merged)


def parse_coverage(export: Dict[str, Any], focal: FocalMethod, root: Optional[Path] = None) -> CoverageRecord:
    """
    Line and branch coverage of the focal method's span from an `llvm-cov export` JSON document.

    A file missing from the export counts every line of the span as uncovered.
    """
    try:
        files = [item for data in export["data"] for item in data["files"]]
        first, last = focal.line_span
        for item in files:
            if not _same_file(item["filename"], focal.file, root):
                continue
            lines = _line_counts(item.get("segments", []), first, last)
            branches_covered, branches_total = _branch_counts(item.get("branches", []), first, last)
            return CoverageRecord(
                focal.id, sum(1 for count in lines.values() if count > 0), len(lines),
                branches_covered, branches_total,
            )
    except (KeyError, TypeError, ValueError, IndexError) as ex:
        raise CoverageError(focal.id, "malformed coverage export: {!r}".format(ex))
    LOG.debug("%s: focal file absent from coverage export", focal.id)
    total = sum(1 for line in split_lines(focal.body) if line.strip())
    return CoverageRecord(focal.id, 0, total, 0, 0)


@dataclass
class MethodRecord:
    """
    Everything measured for one focal method.
    """

    focal_id: str
    file: str
    name: str
    test_cases: int = 0
    """Test cases in the generated file; 0 when generation failed outright."""
    compiled: bool = False
    cases_passed: int = 0
    exec_status: Optional[str] = None
    coverage: Optional[CoverageRecord] = None
    errors: List[str] = field(default_factory=list)
    diagnostics: List[str] = field(default_factory=list)
    """First error line of each failed compile, in order."""
    lineage: List[str] = field(default_factory=list)

    @property
    def removed(self) -> bool:
        return self.test_cases > 0 and not self.compiled

    def statuses(self) -> List[CaseStatus]:
        if not self.compiled:
            return ["removed"] * self.test_cases
        passed = min(self.cases_passed, self.test_cases)
        return ["passed"] * passed + ["compiled"] * (self.test_cases - passed)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "focal_id": self.focal_id,
            "file": self.file,
            "name": self.name,
            "test_cases": self.test_cases,
            "compiled": self.compiled,
            "cases_passed": self.cases_passed,
            "exec_status": self.exec_status,
            "coverage": self.coverage.to_dict() if self.coverage else None,
            "errors": list(self.errors),
            "diagnostics": list(self.diagnostics),
            "lineage": list(self.lineage),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "MethodRecord":
        coverage = data.get("coverage")
        return cls(
            focal_id=data["focal_id"], file=data.get("file", ""), name=data.get("name", ""),
            test_cases=data.get("test_cases", 0), compiled=data.get("compiled", False),
            cases_passed=data.get("cases_passed", 0), exec_status=data.get("exec_status"),
            coverage=CoverageRecord(data["focal_id"], **coverage) if coverage else None,
            errors=list(data.get("errors", [])), diagnostics=list(data.get("diagnostics", [])),
            lineage=list(data.get("lineage", [])),
        )


def _percent(covered: int, total: int) -> Optional[float]:
    return 100.0 * covered / total if total else None


def _round(value: Optional[float]) -> Optional[float]:
    return None if value is None else round(value, 2)


@dataclass
class MetricsReport:
    project: str
    csr: float
    epr: float
    cov_l: Optional[float]
    cov_b: Optional[float]
    counts: Dict[str, int]
    error_breakdown: Dict[str, int]
    execution_breakdown: Dict[str, int]
    empty_run: bool = False
    removed: List[str] = field(default_factory=list)
    methods: List[MethodRecord] = field(default_factory=list)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "schema_version": SCHEMA_VERSION,
            "metadata": {"coverage_aggregation": COVERAGE_AGGREGATION},
            "project": self.project,
            "csr": _round(self.csr),
            "epr": _round(self.epr),
            "cov_l": _round(self.cov_l),
            "cov_b": _round(self.cov_b),
            "counts": dict(self.counts),
            "error_breakdown": dict(self.error_breakdown),
            "execution_breakdown": dict(self.execution_breakdown),
            "empty_run": self.empty_run,
            "removed": list(self.removed),
            "methods": [record.to_dict() for record in self.methods],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "MetricsReport":
        if data.get("schema_version") != SCHEMA_VERSION:
            raise ValueError("Unsupported report schema version: {!r}".format(data.get("schema_version")))
        return cls(
            project=data["project"], csr=data["csr"], epr=data["epr"], cov_l=data["cov_l"], cov_b=data["cov_b"],
            counts=data["counts"], error_breakdown=data["error_breakdown"],
            execution_breakdown=data["execution_breakdown"], empty_run=data.get("empty_run", False),
            removed=data.get("removed", []), methods=[MethodRecord.from_dict(item) for item in data.get("methods", [])],
        )

    def render_table(self) -> str:
        def cell(value: Optional[float]) -> str:
            return "-" if value is None else "{:.2f}".format(value)

        rows = [("method", "cases", "compiled", "passed", "exec", "cov_l", "cov_b")]
        for record in self.methods:
            cov = record.coverage
            rows.append((
                record.focal_id, str(record.test_cases), "yes" if record.compiled else "no", str(record.cases_passed),
                record.exec_status or "-",
                cell(_percent(cov.lines_covered, cov.lines_total)) if cov else "-",
                cell(_percent(cov.branches_covered, cov.branches_total)) if cov else "-",
            ))
        rows.append((
            "TOTAL", str(self.counts["generated"]), str(self.counts["compiled"]), str(self.counts["passed"]), "",
            cell(self.cov_l), cell(self.cov_b),
        ))
        widths = [max(len(row[n]) for row in rows) for n in range(len(rows[0]))]
        lines = ["  ".join(value.ljust(width) for value, width in zip(row, widths)).rstrip() for row in rows]
        lines.insert(1, "  ".join("-" * width for width in widths))
        lines.insert(-1, lines[1])
        lines.append("")
        lines.append("CSR {}%  EPR {}%  Cov_L {}  Cov_B {}  (coverage: {})".format(
            cell(self.csr), cell(self.epr), cell(self.cov_l), cell(self.cov_b), COVERAGE_AGGREGATION,
        ))
        if self.error_breakdown:
            lines.append("Compilation errors: " + ", ".join(
                "{} {}".format(name, count) for name, count in sorted(self.error_breakdown.items())
            ))
        failures = {name: count for name, count in self.execution_breakdown.items() if name != "pass" and count}
        if failures:
            lines.append("Execution failures: " + ", ".join(
                "{} {}".format(name, count) for name, count in sorted(failures.items())
            ))
        if self.removed:
            lines.append("Removed: " + ", ".join(self.removed))
        return "\n".join(lines) + "\n"


def aggregate_report(
    records: Sequence[MethodRecord], classifications: Iterable[ErrorClassification], project: str = "",
) -> MetricsReport:
    statuses: List[CaseStatus] = [status for record in records for status in record.statuses()]
    correctness = compute_correctness(statuses)
    lines = [record.coverage for record in records if record.coverage is not None]
    known = {pattern.name for pattern in error_patterns()}
    breakdown: Counter = Counter()
    for item in classifications:
        if item.pattern.name not in known:
            LOG.warning("Unknown error pattern %s in classification", item.pattern.name)
        breakdown[item.pattern.name] += 1
    executions = Counter(record.exec_status for record in records if record.exec_status)
    counts = {
        "generated": len(statuses),
        "compiled": sum(1 for status in statuses if status != "removed"),
        "passed": sum(1 for status in statuses if status == "passed"),
        "removed": sum(1 for status in statuses if status == "removed"),
    }
    report = MetricsReport(
        project=project, csr=correctness.csr, epr=correctness.epr,
        cov_l=_percent(sum(item.lines_covered for item in lines), sum(item.lines_total for item in lines)),
        cov_b=_percent(sum(item.branches_covered for item in lines), sum(item.branches_total for item in lines)),
        counts=counts, error_breakdown=dict(sorted(breakdown.items())),
        execution_breakdown={status: executions[status] for status in EXEC_STATUSES if executions[status]},
        empty_run=correctness.empty,
        removed=sorted(record.focal_id for record in records if record.removed),
        methods=sorted(records, key=lambda record: record.focal_id),
    )
    LOG.info("Report: CSR %.2f%%, EPR %.2f%% over %d test cases", report.csr, report.epr, counts["generated"])
    return report
