"""
Sessions tie the pipeline together for one project.

A `Session` owns the external resources (chat provider, embedding provider, syntax backend and
toolchain) and runs each focal method through understanding, generation, refinement and the
three repair phases.  Methods run in parallel on a bounded thread pool; a failure in one method is
recorded on its outcome and never stops the others.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from fnmatch import fnmatch
import json
import logging
from pathlib import Path
import shutil
from typing import Any, Dict, List, Optional, Sequence, Type

from typing_extensions import Literal

from .api import EmbeddingProvider, LLMProvider, SyntaxBackend
from .config import RunConfig
from .deps import (
    ConfigDependencies, CrossFileDependencies, build_include_graph, extract_config_dependencies,
    extract_cross_file_dependencies,
)
from .embeddings import embedder_for
from .errors import ConfigError, CoverageError, EnvironmentFault, MethodError, ProviderError
from .generation import GeneratedTestFile, run_step1_understanding, run_step2_generate, run_step3_refine
from .guidance import Stage, classify_error, first_error, guidelines_for
from .knowledge import (
    KnowledgeBase, RetrievalResult, build_query_statement, fingerprint, retrieve_code_examples, retrieve_docs,
)
from .llm import HTTPChatProvider, ScriptedProvider, Transcript
from .metrics import MethodRecord, MetricsReport, aggregate_report, parse_coverage
from .repair import apply_compile_rules, apply_syntax_rules, check_syntax, count_test_cases, llm_fix
from .repo import FocalMethod, RepoIndex, enumerate_focal_methods, extract_focal_context, scan_repository
from .syntax import ClangBackend
from .toolchains import (
    CompileResult, Toolchain, build_project, compile_test, execute_test, generated_file_path, project_inputs,
    toolchain_for,
)


LOG = logging.getLogger(__name__)


MANIFEST = "generated.json"
REPORT = "report.json"


@dataclass
class ScanSummary:
    index: RepoIndex
    methods: List[FocalMethod]

    @property
    def complex_methods(self) -> int:
        return sum(1 for m in self.methods if m.cyclomatic_complexity > 10)

    def render(self) -> str:
        index = self.index
        return "\n".join((
            "root: {}".format(index.root),
            "source files: {}".format(len(index.source_files)),
            "header files: {}".format(len(index.header_files)),
            "config files: {}".format(len(index.config_files)),
            "doc files: {}".format(len(index.doc_files)),
            "focal methods: {} ({} with complexity > 10)".format(len(self.methods), self.complex_methods),
            "warnings: {}".format(len(index.warnings)),
        )) + "\n"


@dataclass
class MethodOutcome:
    """
    What generation produced for one focal method.
    """

    focal: FocalMethod
    status: Literal["kept", "removed", "failed"] = "failed"
    test_file: Optional[GeneratedTestFile] = None
    test_cases: int = 0
    errors: List[str] = field(default_factory=list)
    diagnostics: List[str] = field(default_factory=list)
    """First error line of each failed compile."""
    syntax_errors: List[str] = field(default_factory=list)

    def to_dict(self, root: Path) -> Dict[str, Any]:
        tc = self.test_file
        return {
            "focal": self.focal.to_dict(root),
            "status": self.status,
            "test_cases": self.test_cases,
            "stage": tc.stage.value if tc else None,
            "lineage": list(tc.lineage) if tc else [],
            "notes": list(tc.notes) if tc else [],
            "errors": list(self.errors),
            "diagnostics": list(self.diagnostics),
            "syntax_errors": list(self.syntax_errors),
        }


class Session:
    """
    Generation and evaluation for the project described by `config`.
    """

    def __init__(
        self, config: RunConfig, provider: LLMProvider, embedder: EmbeddingProvider, backend: SyntaxBackend,
        toolchain: Optional[Type[Toolchain]] = None,
    ):
        self.config = config
        self.provider = provider
        self.embedder = embedder
        self.backend = backend
        self.toolchain = toolchain or toolchain_for(config.toolchain)
        self.inputs: Optional[List[Path]] = None

    def __repr__(self):
        return "<{}: {} {} {}>".format(self.__class__.__name__, self.config.root, self.provider.name, self.toolchain.name)

    @classmethod
    def from_config(cls, config: RunConfig, offline: bool = False) -> "Session":
        """
        Build a session with the providers `config` names.

        Unless `offline`, the chat provider must be reachable when no mock script is configured.
        """
        if config.mock_provider:
            provider: LLMProvider = ScriptedProvider.from_file(Path(config.mock_provider))
        else:
            http = HTTPChatProvider(config.provider)
            if not offline:
                try:
                    http.check()
                except ProviderError as ex:
                    raise EnvironmentFault(str(ex))
            provider = http
        try:
            backend = ClangBackend(
                config.include_paths, config.toolchain.default_std, config.toolchain.libclang,
            )
        except ImportError as ex:
            raise EnvironmentFault("libclang bindings unavailable: {}".format(ex))
        return cls(config, provider, embedder_for(config.embedding), backend)

    # Scanning

    def scan(self) -> ScanSummary:
        index = scan_repository(self.config.root, self.config)
        methods = enumerate_focal_methods(index, self.backend, self.config.filters)
        return ScanSummary(index, methods)

    def select(self, methods: Sequence[FocalMethod], pattern: Optional[str] = None) -> List[FocalMethod]:
        """
        Methods whose id, name or `Class::name` matches the glob `pattern` (all when unset).
        """
        pattern = pattern or self.config.focal
        if not pattern:
            return list(methods)
        return [m for m in methods if any(fnmatch(name, pattern) for name in (m.id, m.name, m.qualified_name))]

    def knowledge_base(self, index: RepoIndex) -> KnowledgeBase:
        """
        Load the saved knowledge base, rebuilding it when missing, stale or forced.
        """
        path = self.config.output_path / self.config.retrieval.index_file
        current = fingerprint(index.doc_files + index.source_files + index.header_files)
        if not self.config.rebuild_kb:
            kb = KnowledgeBase.load(path, self.embedder, index.root, current)
            if kb is not None:
                LOG.info("Loaded knowledge base from %s", path)
                return kb
        try:
            kb = KnowledgeBase.build(index, self.backend, self.embedder, self.config.retrieval.paragraph_floor)
        except ProviderError as ex:
            raise EnvironmentFault("Embedding provider failed: {}".format(ex))
        kb.save(path)
        return kb

    def find(self, methods: Sequence[FocalMethod], focal_id: str) -> FocalMethod:
        for m in methods:
            if m.id == focal_id:
                return m
        raise ConfigError("Unknown focal id {!r}".format(focal_id))

    def dependencies(self, m: FocalMethod, index: RepoIndex) -> Dict[str, Any]:
        """
        The configuration and cross-file dependencies that would go into `m`'s prompts.
        """
        edges = build_include_graph(m.file, index, warnings=index.warnings)
        return {
            "focal_id": m.id,
            "config": extract_config_dependencies(index).to_dict(),
            "cross_file": extract_cross_file_dependencies(m, edges, index, self.backend).to_dict(index.root),
        }

    # Generation

    def _compile(
        self, tc: GeneratedTestFile, focal: FocalMethod, index: RepoIndex, config_deps: ConfigDependencies,
        coverage: bool = False,
    ) -> CompileResult:
        toolchain_config = self.config.toolchain
        if not coverage and toolchain_config.coverage:
            toolchain_config = replace(toolchain_config, coverage=False)
        return compile_test(
            tc.source, focal.id, index, config_deps, toolchain_config, self.config.output_path / "work" / focal.id,
            inputs=self.inputs, toolchain=self.toolchain, focal_dir=focal.file.parent,
        )

    def _intention(self, m: FocalMethod, kb: KnowledgeBase) -> List[RetrievalResult]:
        retrieval = self.config.retrieval
        docs = retrieve_docs(build_query_statement(m), kb, retrieval.docs_k)
        return docs + retrieve_code_examples(m, kb, retrieval.code_k)

    def generate_one(
        self, m: FocalMethod, index: RepoIndex, kb: KnowledgeBase, config_deps: ConfigDependencies,
    ) -> MethodOutcome:
        """
        Run one focal method through generation and repair, keeping or pruning its test file.
        """
        config = self.config
        ablation = config.ablation
        outcome = MethodOutcome(m)
        transcript = Transcript(m.id)
        budget = config.token_budget
        try:
            ctx = extract_focal_context(m, index, self.backend)
            cross_file: Optional[CrossFileDependencies] = None
            if ablation.cross_file_dependencies:
                edges = build_include_graph(m.file, index, warnings=index.warnings)
                cross_file = extract_cross_file_dependencies(m, edges, index, self.backend)
            intention = self._intention(m, kb) if ablation.intention_context else []
            intent = run_step1_understanding(ctx, self.provider, config.provider, budget, transcript)
            tc = run_step2_generate(
                ctx, intent, self.provider, config.provider, budget,
                config_deps=config_deps if ablation.config_dependencies else None, cross_file=cross_file,
                intention=intention, guidelines=guidelines_for(Stage.GENERATION, config_deps), transcript=transcript,
            )
            if ablation.refinement:
                tc = run_step3_refine(
                    tc, guidelines_for(Stage.REFINEMENT, config_deps), self.provider, config.provider, budget,
                    transcript,
                )
            if ablation.phase1:
                tc = apply_syntax_rules(tc, ctx, config_deps, index)
            path = generated_file_path(index, m.id)
            outcome.syntax_errors = [str(item) for item in check_syntax(tc.source, self.backend, path)]
            result = self._compile(tc, m, index, config_deps)
            if not result.ok:
                outcome.diagnostics.append(_first_error(result))
                if ablation.phase2:
                    fixed = apply_compile_rules(tc, result, index, ctx, path)
                    if fixed.source != tc.source:
                        result = self._compile(fixed, m, index, config_deps)
                        if not result.ok:
                            outcome.diagnostics.append(_first_error(result))
                    tc = fixed
            if not result.ok and ablation.phase3:
                tc = llm_fix(tc, result, self.provider, config.provider, budget, transcript)
                result = self._compile(tc, m, index, config_deps)
                if not result.ok:
                    outcome.diagnostics.append(_first_error(result))
            outcome.test_file = tc
            outcome.test_cases = count_test_cases(tc.source, config_deps.gtest_available)
            if result.ok:
                outcome.status = "kept"
            else:
                outcome.status = "removed"
                if path.exists():
                    path.unlink()
                LOG.info("%s: still fails to compile, removed", m.id)
        except MethodError as ex:
            LOG.error("%s: %s", m.id, ex.message)
            outcome.errors.append("{}: {}".format(type(ex).__name__, ex.message))
        except EnvironmentFault:
            raise
        except Exception as ex:
            LOG.exception("%s: unexpected failure", m.id)
            outcome.errors.append("{}: {}".format(type(ex).__name__, ex))
        finally:
            if config.save_transcripts:
                self._save_transcript(transcript)
        LOG.info("%s: %s", m.id, outcome.status)
        return outcome

    def _save_transcript(self, transcript: Transcript):
        path = self.config.output_path / "transcripts" / "{}.json".format(transcript.focal_id)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w") as f:
            json.dump(transcript.to_dict(), f, indent=2, sort_keys=True)

    def _prepare(self, index: RepoIndex):
        self.toolchain.check(self.config.toolchain)
        build_project(self.config.toolchain, index.root)
        self.inputs = project_inputs(index, self.config.toolchain)

    def generate(self, pattern: Optional[str] = None) -> List[MethodOutcome]:
        """
        Generate, repair and prune a test file for every selected focal method.

        Writes the manifest of outcomes to the output directory, sorted by focal id.
        """
        summary = self.scan()
        index = summary.index
        methods = self.select(summary.methods, pattern)
        if not methods:
            LOG.info("No focal methods match %r", pattern or self.config.focal)
            return []
        self._prepare(index)
        config_deps = extract_config_dependencies(index)
        kb = self.knowledge_base(index)
        with ThreadPoolExecutor(self.config.workers) as pool:
            futures = [pool.submit(self.generate_one, m, index, kb, config_deps) for m in methods]
            outcomes = [future.result() for future in futures]
        outcomes.sort(key=lambda outcome: outcome.focal.id)
        self._write_manifest(index, outcomes)
        return outcomes

    def _write_manifest(self, index: RepoIndex, outcomes: Sequence[MethodOutcome]):
        path = self.config.output_path / MANIFEST
        path.parent.mkdir(parents=True, exist_ok=True)
        data = {"methods": [outcome.to_dict(index.root) for outcome in outcomes]}
        with open(path, "w") as f:
            json.dump(data, f, indent=2, sort_keys=True)

    def read_manifest(self) -> List[Dict[str, Any]]:
        path = self.config.output_path / MANIFEST
        try:
            with open(path) as f:
                return json.load(f)["methods"]
        except FileNotFoundError:
            LOG.warning("No generated tests found at %s", path)
            return []

    # Evaluation

    def evaluate_one(
        self, item: Dict[str, Any], index: RepoIndex, config_deps: ConfigDependencies,
    ) -> MethodRecord:
        focal = FocalMethod.from_dict(item["focal"], index.root)
        record = MethodRecord(
            focal.id, item["focal"]["file"], focal.qualified_name, test_cases=item["test_cases"],
            errors=list(item["errors"]), diagnostics=list(item["diagnostics"]), lineage=list(item["lineage"]),
        )
        if item["status"] != "kept":
            return record
        try:
            self._measure(record, focal, index, config_deps)
        except EnvironmentFault:
            raise
        except Exception as ex:
            LOG.exception("%s: unexpected failure", focal.id)
            record.errors.append("{}: {}".format(type(ex).__name__, ex))
        return record

    def _measure(self, record: MethodRecord, focal: FocalMethod, index: RepoIndex, config_deps: ConfigDependencies):
        path = generated_file_path(index, focal.id)
        try:
            with open(path) as f:
                source = f.read()
        except OSError as ex:
            record.errors.append("missing test file: {}".format(ex))
            return
        tc = GeneratedTestFile(focal.id, source)
        coverage = self.config.toolchain.coverage and self.toolchain.supports_coverage()
        result = self._compile(tc, focal, index, config_deps, coverage=coverage)
        if not result.ok:
            record.diagnostics.append(_first_error(result))
            return
        record.compiled = True
        workdir = self.config.output_path / "work" / focal.id
        profile = workdir / "default.profraw"
        if profile.exists():
            profile.unlink()
        gtest = config_deps.gtest_available
        outcome = execute_test(
            result.binary, self.config.toolchain.exec_timeout, workdir, self.toolchain.coverage_env(profile), gtest,
        )
        record.exec_status = outcome.status
        if outcome.cases:
            record.cases_passed = outcome.cases["passed"]
        elif outcome.status == "pass":
            record.cases_passed = record.test_cases
        if coverage:
            try:
                export = self.toolchain.export_coverage(result.binary, workdir, self.config.toolchain.exec_timeout)
                record.coverage = parse_coverage(export, focal, index.root)
            except CoverageError as ex:
                LOG.warning("%s: %s", focal.id, ex.message)
                record.errors.append("CoverageError: {}".format(ex.message))

    def evaluate(self) -> MetricsReport:
        """
        Compile, run and measure every kept test file, and write the report.
        """
        index = scan_repository(self.config.root, self.config)
        items = self.read_manifest()
        if any(item["status"] == "kept" for item in items):
            self._prepare(index)
        config_deps = extract_config_dependencies(index)
        with ThreadPoolExecutor(self.config.workers) as pool:
            futures = [pool.submit(self.evaluate_one, item, index, config_deps) for item in items]
            records = [future.result() for future in futures]
        classifications = [classify_error(line) for record in records for line in record.diagnostics]
        report = aggregate_report(records, classifications, index.root.name)
        self.write_report(report)
        return report

    def write_report(self, report: MetricsReport):
        path = self.config.output_path / REPORT
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w") as f:
            f.write(report.to_json())
        if self.config.out:
            out = Path(self.config.out)
            if out != path:
                shutil.copyfile(path, out)

    def read_report(self) -> MetricsReport:
        return read_report(self.config)


def read_report(config: RunConfig) -> MetricsReport:
    """
    The report written by the last evaluation, from `config.out` if set.
    """
    path = Path(config.out) if config.out else config.output_path / REPORT
    with open(path) as f:
        return MetricsReport.from_dict(json.load(f))


def _first_error(result: CompileResult) -> str:
    return first_error(result.diagnostics) or result.diagnostics[0]
