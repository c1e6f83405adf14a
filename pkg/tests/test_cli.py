from contextlib import redirect_stderr, redirect_stdout
import io
import json
from typing import List, Tuple
from unittest import TestCase

from cutgen.cli import main
from cutgen.metrics import CoverageRecord, MethodRecord, aggregate_report

try:
    from .utils import FIXTURES, clang_backend, copy_fixture
except ImportError:
    from tests.utils import FIXTURES, clang_backend, copy_fixture


def run(*argv: str) -> Tuple[int, str, str]:
    out = io.StringIO()
    err = io.StringIO()
    with redirect_stdout(out), redirect_stderr(err):
        status = main(list(argv))
    return status, out.getvalue(), err.getvalue()


class TestCli(TestCase):

    def setUp(self):
        self.root = copy_fixture(self, "plain")

    def args(self, *extra: str) -> List[str]:
        return ["--root", str(self.root), "--mock-provider", str(FIXTURES / "mock.yaml"), *extra]

    def test_missing_root(self):
        status, _, err = run("--root", str(self.root / "absent"), "scan")
        self.assertEqual(status, 2)
        self.assertIn("doesn't exist", err)

    def test_bad_config_file(self):
        path = self.root / "cutgen.yaml"
        path.write_text("root: .\nworkers: 0\n")
        status, _, err = run("--config", str(path), "scan")
        self.assertEqual(status, 2)
        self.assertIn("workers", err)

    def test_missing_mock_script(self):
        status, _, _ = run("--root", str(self.root), "--mock-provider", str(self.root / "absent.yaml"), "scan")
        self.assertEqual(status, 2)

    def test_missing_compiler(self):
        path = self.root / "cutgen.yaml"
        path.write_text("root: .\ntoolchain:\n  cxx: cutgen-no-such-compiler\n")
        status, _, err = run("--config", str(path), "--mock-provider", str(FIXTURES / "mock.yaml"), "generate")
        self.assertEqual(status, 1)
        self.assertTrue(err.startswith("cutgen: "))

    def test_scan(self):
        clang_backend(self)
        dump = self.root / "focal.json"
        status, out, _ = run(*self.args("--dump-focal", str(dump), "scan"))
        self.assertEqual(status, 0)
        self.assertIn("focal methods: 3 (0 with complexity > 10)", out)
        with open(dump) as f:
            methods = json.load(f)
        self.assertEqual(sorted(item["name"] for item in methods), ["Clamp", "ClampPoint", "ManhattanDistance"])

    def test_dump_deps(self):
        clang_backend(self)
        dump = self.root / "focal.json"
        run(*self.args("--dump-focal", str(dump), "scan"))
        with open(dump) as f:
            point = next(item["id"] for item in json.load(f) if item["name"] == "ClampPoint")
        status, out, err = run(*self.args("--dump-deps", point, "scan"))
        self.assertEqual(status, 0)
        self.assertIn("focal methods: 3", err)
        deps = json.loads(out)
        self.assertEqual(deps["focal_id"], point)
        self.assertEqual(sorted(deps), ["config", "cross_file", "focal_id"])
        self.assertIn("Clamp", [entry["symbol"] for entry in deps["cross_file"]["entries"]])
        status, out, err = run(*self.args("--dump-deps", "Nothing_00000000", "scan"))
        self.assertEqual(status, 2)
        self.assertIn("Unknown focal id", err)
        self.assertEqual(out, "")

    def test_report(self):
        status, _, err = run("--root", str(self.root), "report")
        self.assertEqual(status, 1)
        self.assertIn("No usable report", err)
        record = MethodRecord(
            "Clamp_0000", "src/util.cpp", "Clamp", test_cases=1, compiled=True, cases_passed=1, exec_status="pass",
            coverage=CoverageRecord("Clamp_0000", 2, 3, 1, 2),
        )
        report = aggregate_report([record], [], "plain")
        (self.root / ".cutgen").mkdir()
        (self.root / ".cutgen" / "report.json").write_text(report.to_json())
        status, out, _ = run("--root", str(self.root), "report", "--format", "json")
        self.assertEqual(status, 0)
        self.assertEqual(json.loads(out), report.to_dict())
        status, out, _ = run("--root", str(self.root), "report")
        self.assertIn("CSR 100.00%  EPR 100.00%  Cov_L 66.67  Cov_B 50.00", out)
