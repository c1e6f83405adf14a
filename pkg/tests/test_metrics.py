import json
from pathlib import Path
from unittest import TestCase

from cutgen.errors import CoverageError
from cutgen.guidance import classify_error
from cutgen.metrics import (
    CoverageRecord, MethodRecord, MetricsReport, aggregate_report, compute_correctness, parse_coverage,
)

try:
    from .utils import FIXTURES, make_focal
except ImportError:
    from tests.utils import FIXTURES, make_focal


ROOT = Path("/project")


def load_export():
    with open(FIXTURES / "coverage.json") as f:
        return json.load(f)


class TestCorrectness(TestCase):

    def test_rates(self):
        result = compute_correctness(["passed", "passed", "compiled", "removed"])
        self.assertEqual((result.csr, result.epr), (75.0, 50.0))
        self.assertFalse(result.empty)

    def test_empty(self):
        result = compute_correctness([])
        self.assertEqual((result.csr, result.epr), (0.0, 0.0))
        self.assertTrue(result.empty)

    def test_method_statuses(self):
        self.assertEqual(
            MethodRecord("a", "src/a.cpp", "a", test_cases=3, compiled=True, cases_passed=2).statuses(),
            ["passed", "passed", "compiled"],
        )
        removed = MethodRecord("b", "src/b.cpp", "b", test_cases=2)
        self.assertEqual(removed.statuses(), ["removed", "removed"])
        self.assertTrue(removed.removed)
        self.assertFalse(MethodRecord("c", "src/c.cpp", "c").removed)


class TestCoverage(TestCase):

    def test_focal_span(self):
        focal = make_focal(name="Sample", file=ROOT / "src" / "sample.cpp", line_span=(10, 19))
        record = parse_coverage(load_export(), focal, ROOT)
        self.assertEqual((record.lines_covered, record.lines_total), (8, 10))
        self.assertEqual((record.branches_covered, record.branches_total), (3, 4))

    def test_other_span(self):
        focal = make_focal(name="Other", file=ROOT / "src" / "sample.cpp", line_span=(22, 25))
        record = parse_coverage(load_export(), focal, ROOT)
        self.assertEqual(record.lines_covered, 0)
        self.assertEqual((record.branches_covered, record.branches_total), (0, 2))

    def test_file_absent(self):
        focal = make_focal(file=ROOT / "src" / "util.cpp")
        self.assertEqual(parse_coverage(load_export(), focal, ROOT), CoverageRecord(focal.id, 0, 3, 0, 0))

    def test_malformed(self):
        with self.assertRaises(CoverageError):
            parse_coverage({"data": [{"functions": []}]}, make_focal(), ROOT)

    def test_record_bounds(self):
        with self.assertRaises(ValueError):
            CoverageRecord("a", 3, 2, 0, 0)
        with self.assertRaises(ValueError):
            CoverageRecord("a", 0, 0, -1, 2)


class TestReport(TestCase):

    def setUp(self):
        self.records = [
            MethodRecord(
                "Clamp_0000", "src/util.cpp", "Clamp", test_cases=2, compiled=True, cases_passed=2,
                exec_status="pass", coverage=CoverageRecord("Clamp_0000", 1, 2, 1, 2),
            ),
            MethodRecord(
                "ClampPoint_0000", "src/bounds.cpp", "ClampPoint", test_cases=1, compiled=True,
                exec_status="assertion_failure", coverage=CoverageRecord("ClampPoint_0000", 3, 4, 0, 2),
            ),
            MethodRecord(
                "ManhattanDistance_0000", "src/util.cpp", "ManhattanDistance", test_cases=1,
                diagnostics=["test/x.cpp:3:5: error: use of undeclared identifier 'Point'"],
            ),
        ]
        self.classifications = [classify_error(line) for line in self.records[2].diagnostics]

    def test_aggregate(self):
        report = aggregate_report(self.records, self.classifications, "plain")
        self.assertEqual((report.csr, report.epr), (75.0, 50.0))
        self.assertAlmostEqual(report.cov_l, 400.0 / 6)
        self.assertEqual(report.cov_b, 25.0)
        self.assertEqual(report.counts, {"generated": 4, "compiled": 3, "passed": 2, "removed": 1})
        self.assertEqual(report.error_breakdown, {"UndefinedSymbols": 1})
        self.assertEqual(report.execution_breakdown, {"pass": 1, "assertion_failure": 1})
        self.assertEqual(report.removed, ["ManhattanDistance_0000"])
        self.assertEqual([record.focal_id for record in report.methods], [
            "ClampPoint_0000", "Clamp_0000", "ManhattanDistance_0000",
        ])

    def test_json(self):
        data = json.loads(aggregate_report(self.records, self.classifications, "plain").to_json())
        self.assertEqual(data["schema_version"], 1)
        self.assertEqual(data["metadata"], {"coverage_aggregation": "ratio-of-sums"})
        self.assertEqual(data["cov_l"], 66.67)
        self.assertEqual(data["csr"], 75.0)
        restored = MetricsReport.from_dict(data)
        self.assertEqual(restored.removed, ["ManhattanDistance_0000"])
        self.assertEqual(restored.methods[1].coverage, CoverageRecord("Clamp_0000", 1, 2, 1, 2))
        with self.assertRaises(ValueError):
            MetricsReport.from_dict(dict(data, schema_version=99))

    def test_table(self):
        table = aggregate_report(self.records, self.classifications, "plain").render_table()
        self.assertIn("CSR 75.00%  EPR 50.00%  Cov_L 66.67  Cov_B 25.00  (coverage: ratio-of-sums)", table)
        self.assertIn("Compilation errors: UndefinedSymbols 1", table)
        self.assertIn("Execution failures: assertion_failure 1", table)
        self.assertIn("Removed: ManhattanDistance_0000", table)
        self.assertTrue(table.splitlines()[0].startswith("method"))

    def test_empty_run(self):
        report = aggregate_report([], [], "plain")
        self.assertTrue(report.empty_run)
        self.assertIsNone(report.cov_l)
        self.assertEqual(report.counts["generated"], 0)
        self.assertIn("CSR 0.00%  EPR 0.00%  Cov_L -  Cov_B -", report.render_table())
