"""
C++ compilers differ in their coverage instrumentation and in the tools that export what it
records.  Each `Toolchain` encapsulates this metadata for one compiler family; it can also be
subclassed to support other compilers where the base class is insufficient.

The module also compiles and runs generated test files, each in its own scratch directory.
"""

from dataclasses import dataclass, field
import json
import logging
import os
from pathlib import Path
import re
import shutil
import signal
import subprocess
import time
from typing import Any, Dict, List, Optional, Sequence, Type

from typing_extensions import Literal

from .config import ToolchainConfig
from .deps import ConfigDependencies
from .errors import ConfigError, CoverageError, EnvironmentFault
from .lexical import mask, read_source
from .repo import GENERATED_PREFIX, RepoIndex


LOG = logging.getLogger(__name__)


_MAIN = re.compile(r"\bint\s+main\s*\(")
_ASSERTION = re.compile(r"\bFailure\b|\[  FAILED  \]|Assertion .* failed|\bassert(ion)?\b|\bFAILED\b", re.IGNORECASE)
_ABORTED = (-signal.SIGABRT, 128 + signal.SIGABRT)


class Toolchain:
    """
    Metadata for a C++ compiler family.
    """

    name = "generic"

    cxx = "c++"
    """Default compiler executable."""

    std_flag = "-std=c++{}"

    coverage_flags: Sequence[str] = ()
    """Compile and link flags enabling coverage instrumentation, if supported."""

    framework_flags: Dict[str, Sequence[str]] = {
        "gtest": ("-lgtest",),
        "gtest_main": ("-lgtest_main",),
        "gmock": ("-lgmock",),
        "threads": ("-pthread",),
    }
    """Link flags for libraries the configuration dependencies name."""

    @classmethod
    def executable(cls, config: ToolchainConfig) -> str:
        return config.cxx or cls.cxx

    @classmethod
    def check(cls, config: ToolchainConfig) -> str:
        """
        Locate the compiler, raising `EnvironmentFault` if it isn't installed.
        """
        exe = cls.executable(config)
        found = shutil.which(exe)
        if not found:
            raise EnvironmentFault("C++ compiler {!r} not found on PATH".format(exe))
        return found

    @classmethod
    def supports_coverage(cls) -> bool:
        return bool(cls.coverage_flags)

    @classmethod
    def link_flags(cls, config_deps: ConfigDependencies) -> List[str]:
        flags: List[str] = []
        names = [lib.name.lower() for lib in config_deps.libraries]
        if "gtest" in names and config_deps.framework_main:
            flags.extend(cls.framework_flags["gtest_main"])
        for name in ("gmock", "gtest"):
            if name in names:
                flags.extend(cls.framework_flags[name])
        if "gtest" in names or any(name.split("::")[0] == "threads" for name in names):
            flags.extend(cls.framework_flags["threads"])
        return flags

    @classmethod
    def compile_command(
        cls, config: ToolchainConfig, source: Path, output: Path, include_dirs: Sequence[Path],
        std: str, inputs: Sequence[Path], config_deps: ConfigDependencies,
    ) -> List[str]:
        command = [cls.executable(config), cls.std_flag.format(std)]
        if config.coverage:
            command.extend(cls.coverage_flags)
        command.extend(config.extra_flags)
        command.extend("-I{}".format(path) for path in include_dirs)
        command.append(str(source))
        command.extend(str(path) for path in inputs)
        command.extend(["-o", str(output)])
        command.extend(cls.link_flags(config_deps))
        command.extend(config.link_flags)
        return command

    @classmethod
    def coverage_env(cls, profile: Path) -> Dict[str, str]:
        return {}

    @classmethod
    def export_coverage(cls, binary: Path, workdir: Path, timeout: float) -> Dict[str, Any]:
        raise CoverageError(binary.stem, "{} toolchain can't export coverage".format(cls.name))


class ClangToolchain(Toolchain):
    """
    Clang with LLVM source-based coverage, exported as JSON by `llvm-cov export`.
    """

    name = "clang"

    cxx = "clang++"

    coverage_flags = ("-fprofile-instr-generate", "-fcoverage-mapping")

    profdata = "llvm-profdata"
    cov = "llvm-cov"

    @classmethod
    def coverage_env(cls, profile: Path) -> Dict[str, str]:
        return {"LLVM_PROFILE_FILE": str(profile)}

    @classmethod
    def _tool(cls, name: str) -> str:
        found = shutil.which(name)
        if not found:
            raise EnvironmentFault("Coverage tool {!r} not found on PATH".format(name))
        return found

    @classmethod
    def export_coverage(cls, binary: Path, workdir: Path, timeout: float) -> Dict[str, Any]:
        raw = workdir / "default.profraw"
        merged = workdir / "default.profdata"
        if not raw.exists():
            raise CoverageError(binary.stem, "no profile written by {}".format(binary.name))
        steps = [
            [cls._tool(cls.profdata), "merge", "-sparse", str(raw), "-o", str(merged)],
            [cls._tool(cls.cov), "export", str(binary), "-instr-profile={}".format(merged)],
        ]
        output = ""
        for command in steps:
            try:
                proc = subprocess.run(
                    command, capture_output=True, encoding="utf-8", errors="replace", timeout=timeout,
                )
            except subprocess.TimeoutExpired:
                raise CoverageError(binary.stem, "{} timed out".format(command[0]))
            if proc.returncode:
                raise CoverageError(binary.stem, "{} failed: {}".format(Path(command[0]).name, proc.stderr.strip()))
            output = proc.stdout
        try:
            return json.loads(output)
        except ValueError as ex:
            raise CoverageError(binary.stem, "malformed coverage export: {}".format(ex))


class GCCToolchain(Toolchain):
    """
    GCC, without coverage export.
    """

    name = "gcc"

    cxx = "g++"


TOOLCHAINS: Dict[str, Type[Toolchain]] = {cls.name: cls for cls in (ClangToolchain, GCCToolchain)}


def toolchain_for(config: ToolchainConfig) -> Type[Toolchain]:
    try:
        return TOOLCHAINS[config.compiler]
    except KeyError:
        raise ConfigError("Unknown toolchain {!r}, expected one of: {}".format(config.compiler, ", ".join(TOOLCHAINS)))


@dataclass
class CompileResult:
    status: Literal["success", "failure"]
    diagnostics: List[str]
    command: List[str]
    duration: float
    binary: Optional[Path] = None

    @property
    def ok(self) -> bool:
        return self.status == "success"


@dataclass
class ExecResult:
    status: Literal["pass", "assertion_failure", "crash", "timeout"]
    stdout: str
    stderr: str
    duration: float
    returncode: Optional[int] = None
    cases: Dict[str, int] = field(default_factory=dict)
    """`total` and `passed` test cases, when the framework reported them."""


def generated_file_path(index: RepoIndex, focal_id: str) -> Path:
    return index.test_dir / "{}{}.cpp".format(GENERATED_PREFIX, focal_id)


def project_inputs(index: RepoIndex, config: ToolchainConfig) -> List[Path]:
    """
    What to link a test against: configured build outputs, or else the project's sources minus
    tests and any file defining `main`.
    """
    if config.link_inputs:
        return [index.root / path for path in config.link_inputs]
    inputs: List[Path] = []
    for path in index.source_files:
        if index.in_test_dir(path):
            continue
        if _MAIN.search(mask(read_source(path))):
            LOG.debug("Not linking %s: it defines main", index.relative(path))
            continue
        inputs.append(path)
    return inputs


def build_project(config: ToolchainConfig, root: Path):
    """
    Run the configured project build once, before any test is compiled.
    """
    if not config.build_command:
        return
    LOG.info("Building project: %s", " ".join(config.build_command))
    try:
        proc = subprocess.run(config.build_command, cwd=root, capture_output=True, encoding="utf-8", errors="replace")
    except OSError as ex:
        raise EnvironmentFault("Project build failed to start: {}".format(ex))
    if proc.returncode:
        raise EnvironmentFault("Project build failed with status {}:\n{}".format(proc.returncode, proc.stderr[-4000:]))


def compile_test(
    source: str, focal_id: str, index: RepoIndex, config_deps: ConfigDependencies, config: ToolchainConfig,
    workdir: Path, inputs: Optional[Sequence[Path]] = None, toolchain: Optional[Type[Toolchain]] = None,
    focal_dir: Optional[Path] = None,
) -> CompileResult:
    """
    Write the test file into the project's test directory and compile it into `workdir`.

    Quote includes resolve against the include roots, the project root, the test directory and
    `focal_dir`, so the focal file's own includes work unchanged.
    """
    toolchain = toolchain or toolchain_for(config)
    path = generated_file_path(index, focal_id)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(source.encode("utf-8", errors="surrogateescape"))
    workdir.mkdir(parents=True, exist_ok=True)
    binary = workdir / focal_id
    std = config_deps.cxx_standard or config.default_std
    include_dirs = [*index.include_roots, index.root, path.parent]
    if focal_dir is not None and focal_dir not in include_dirs:
        include_dirs.append(focal_dir)
    if inputs is None:
        inputs = project_inputs(index, config)
    command = toolchain.compile_command(config, path, binary, include_dirs, std, inputs, config_deps)
    LOG.debug("Compiling %s: %s", focal_id, " ".join(command))
    start = time.monotonic()
    try:
        proc = subprocess.run(
            command, cwd=workdir, capture_output=True, encoding="utf-8", errors="replace", timeout=config.compile_timeout,
        )
    except FileNotFoundError as ex:
        raise EnvironmentFault("C++ compiler not found: {}".format(ex))
    except subprocess.TimeoutExpired:
        duration = time.monotonic() - start
        return CompileResult("failure", ["compilation timed out after {}s".format(config.compile_timeout)], command, duration)
    duration = time.monotonic() - start
    output = (proc.stderr + proc.stdout).splitlines()
    if proc.returncode == 0:
        return CompileResult("success", output, command, duration, binary)
    if not output:
        output = ["compiler exited with status {}".format(proc.returncode)]
    return CompileResult("failure", output, command, duration)


def _gtest_cases(report: Path) -> Dict[str, int]:
    try:
        with open(report) as f:
            data = json.load(f)
    except (OSError, ValueError):
        return {}
    total = 0
    passed = 0
    for suite in data.get("testsuites", []):
        for case in suite.get("testsuite", []):
            if case.get("status", "RUN") != "RUN":
                continue
            total += 1
            if not case.get("failures"):
                passed += 1
    return {"total": total, "passed": passed}


def execute_test(
    binary: Path, timeout: float, workdir: Path, env: Optional[Dict[str, str]] = None, gtest: bool = False,
) -> ExecResult:
    """
    Run a test binary in `workdir` with a wall-clock limit, classifying how it ended.
    """
    command = [str(binary)]
    report = workdir / "gtest.json"
    if gtest:
        command.append("--gtest_output=json:{}".format(report))
        if report.exists():
            report.unlink()
    start = time.monotonic()
    try:
        proc = subprocess.run(
            command, cwd=workdir, capture_output=True, encoding="utf-8", errors="replace", timeout=timeout,
            env=dict(os.environ, **(env or {})),
        )
    except subprocess.TimeoutExpired as ex:
        duration = max(time.monotonic() - start, timeout)
        return ExecResult("timeout", _text(ex.stdout), _text(ex.stderr), duration)
    duration = time.monotonic() - start
    cases = _gtest_cases(report) if gtest else {}
    if proc.returncode == 0:
        status = "pass"
    elif proc.returncode in _ABORTED and _ASSERTION.search(proc.stdout + proc.stderr):
        # assert() reports, then aborts.
        status = "assertion_failure"
    elif proc.returncode < 0 or proc.returncode >= 128:
        status = "crash"
    else:
        status = "assertion_failure"
    return ExecResult(status, proc.stdout, proc.stderr, duration, proc.returncode, cases)


def _text(value: Any) -> str:
    if value is None:
        return ""
    return value.decode("utf-8", errors="replace") if isinstance(value, bytes) else value
