"""
Command-line entry point: `cutgen scan | generate | evaluate | report`.

Exit status is 0 on success, 1 for an environment fault (missing toolchain, unreachable
provider) and 2 for a configuration fault.  Failures confined to single methods are reported in
the output, not through the exit status.
"""

import argparse
import json
import logging
from pathlib import Path
import sys
from typing import Any, Dict, List, Optional

from .config import RunConfig, load_config
from .errors import CutgenError
from .session import Session, read_report


LOG = logging.getLogger(__name__)


DEFAULT_CONFIG = "cutgen.yaml"

_LEVELS = (logging.WARNING, logging.INFO, logging.DEBUG)


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cutgen", description="Generate and evaluate C++ unit tests with an LLM.")
    parser.add_argument("-v", "--verbose", action="count", default=0, help="More logging (repeatable).")
    parser.add_argument("--config", type=Path, help="YAML config file (default: ./{} if present).".format(DEFAULT_CONFIG))
    parser.add_argument("--root", help="Project root, overriding the config file.")
    parser.add_argument("--focal", help="Glob selecting focal methods by id, name or Class::name.")
    parser.add_argument("--mock-provider", help="Answer LLM requests from this YAML script.")
    parser.add_argument("--save-transcripts", action="store_true", default=None, help="Keep every LLM exchange.")
    parser.add_argument("--rebuild-kb", action="store_true", default=None, help="Rebuild the knowledge base.")
    parser.add_argument("--dump-focal", help="Write the focal methods as JSON to this path.")
    parser.add_argument("--dump-deps", metavar="FOCAL_ID", help="Print one focal method's dependencies as JSON.")
    parser.add_argument("--out", help="Also write the report JSON to this path.")
    parser.add_argument("--workers", type=int, help="Methods processed in parallel.")
    commands = parser.add_subparsers(dest="command", required=True)
    commands.add_parser("scan", help="Index the project and count focal methods.")
    commands.add_parser("generate", help="Generate, repair and prune test files.")
    commands.add_parser("evaluate", help="Compile, run and measure generated tests.")
    report = commands.add_parser("report", help="Show a saved report.")
    report.add_argument("--format", choices=("table", "json"), default="table")
    return parser


def _config(args: argparse.Namespace) -> RunConfig:
    path: Optional[Path] = args.config
    if path is None and Path(DEFAULT_CONFIG).is_file():
        path = Path(DEFAULT_CONFIG)
    overrides: Dict[str, Any] = {
        "focal": args.focal,
        "mock_provider": str(Path(args.mock_provider).resolve()) if args.mock_provider else None,
        "save_transcripts": args.save_transcripts,
        "rebuild_kb": args.rebuild_kb,
        "dump_focal": args.dump_focal,
        "dump_deps": args.dump_deps,
        "out": args.out,
        "workers": args.workers,
    }
    if args.root is not None:
        overrides["root"] = str(Path(args.root).resolve())
    return load_config(path, **overrides)


def _write_json(path: str, data: Any):
    with open(path, "w") as f:
        json.dump(data, f, indent=2, sort_keys=True)
        f.write("\n")


def cmd_scan(config: RunConfig) -> int:
    session = Session.from_config(config, offline=True)
    summary = session.scan()
    # stdout carries the JSON when dumping dependencies
    (sys.stderr if config.dump_deps else sys.stdout).write(summary.render())
    if config.dump_focal:
        methods = session.select(summary.methods)
        _write_json(config.dump_focal, [m.to_dict(summary.index.root) for m in methods])
    if config.dump_deps:
        m = session.find(summary.methods, config.dump_deps)
        json.dump(session.dependencies(m, summary.index), sys.stdout, indent=2, sort_keys=True)
        sys.stdout.write("\n")
    return 0


def cmd_generate(config: RunConfig) -> int:
    session = Session.from_config(config)
    outcomes = session.generate()
    counts: Dict[str, int] = {"kept": 0, "removed": 0, "failed": 0}
    for outcome in outcomes:
        counts[outcome.status] += 1
    sys.stdout.write("methods: {}  kept: {kept}  removed: {removed}  failed: {failed}\n".format(len(outcomes), **counts))
    for outcome in outcomes:
        for error in outcome.errors:
            sys.stdout.write("  {}: {}\n".format(outcome.focal.id, error))
    return 0


def cmd_evaluate(config: RunConfig) -> int:
    session = Session.from_config(config, offline=True)
    report = session.evaluate()
    sys.stdout.write(report.render_table())
    return 0


def cmd_report(config: RunConfig, form: str) -> int:
    try:
        report = read_report(config)
    except (OSError, ValueError, KeyError) as ex:
        sys.stderr.write("No usable report: {}\n".format(ex))
        return 1
    sys.stdout.write(report.to_json() if form == "json" else report.render_table())
    return 0


def main(argv: Optional[List[str]] = None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(
        level=_LEVELS[min(args.verbose, len(_LEVELS) - 1)],
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    try:
        config = _config(args)
        if args.command == "scan":
            return cmd_scan(config)
        elif args.command == "generate":
            return cmd_generate(config)
        elif args.command == "evaluate":
            return cmd_evaluate(config)
        else:
            return cmd_report(config, args.format)
    except CutgenError as ex:
        LOG.debug("Aborting", exc_info=True)
        sys.stderr.write("cutgen: {}\n".format(ex))
        return ex.exit_code
