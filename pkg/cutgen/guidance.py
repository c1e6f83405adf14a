"""
Guideline catalog and compiler diagnostic classifier.

Both ship as YAML data files under `cutgen/data`, validated on load.
"""

from dataclasses import dataclass, replace
from enum import Enum
from functools import lru_cache
import logging
from pathlib import Path
import re
from typing import Any, Dict, List, Optional, Pattern, Sequence, Tuple

import yaml

from .deps import ConfigDependencies
from .errors import ConfigError


LOG = logging.getLogger(__name__)


DATA_DIR = Path(__file__).parent / "data"

_CATEGORY_PREFIX = {"CompilationError": "A", "ExecutionFailure": "B", "PoorCoverage": "C"}
_MESSAGE = re.compile(r"\b(?:fatal )?error:\s*(.*)$")


class Stage(Enum):
    GENERATION = "generation"
    REFINEMENT = "refinement"


@dataclass(frozen=True)
class Guideline:
    id: str
    category: str
    text: str
    active: bool = False
    """Whether the project's configuration makes this guideline directly applicable."""

    def render(self) -> str:
        return "({}) {}{}".format(self.id, self.text, " [ACTIVE]" if self.active else "")


@dataclass(frozen=True)
class ErrorPattern:
    name: str
    description: str


@dataclass(frozen=True)
class ErrorClassification:
    pattern: ErrorPattern
    matched_rule: str
    """Empty when nothing matched and the pattern is `Other`."""
    message: str


def _load(name: str) -> Dict[str, Any]:
    path = DATA_DIR / name
    try:
        with open(path) as f:
            data = yaml.safe_load(f)
    except (OSError, yaml.YAMLError) as ex:
        raise ConfigError("Can't load {}: {}".format(path, ex))
    if not isinstance(data, dict) or data.get("version") != 1:
        raise ConfigError("{} has no supported version".format(path))
    return data


@lru_cache(maxsize=None)
def guideline_catalog() -> Tuple[Guideline, ...]:
    """
    All guidelines, in catalog order.
    """
    catalog: List[Guideline] = []
    for item in _load("guidelines.yaml").get("guidelines", []):
        guideline = Guideline(str(item["id"]), item["category"], item["text"])
        prefix = _CATEGORY_PREFIX.get(guideline.category)
        if prefix is None or not guideline.id.startswith(prefix + "."):
            raise ConfigError("Guideline {} doesn't match category {}".format(guideline.id, guideline.category))
        if any(existing.id == guideline.id for existing in catalog):
            raise ConfigError("Duplicate guideline {}".format(guideline.id))
        catalog.append(guideline)
    return tuple(catalog)


def guidelines_for(stage: Stage, config_deps: ConfigDependencies) -> List[Guideline]:
    """
    Guidelines for a prompting stage: compilation guidelines when generating, all of them when
    refining.  A.3 is active when gtest isn't available, B.2 when a mocking library is.
    """
    selected: List[Guideline] = []
    for guideline in guideline_catalog():
        if stage is Stage.GENERATION and guideline.category != "CompilationError":
            continue
        if guideline.id == "A.3" and not config_deps.gtest_available:
            guideline = replace(guideline, active=True)
        elif guideline.id == "B.2" and config_deps.mock_libraries:
            guideline = replace(guideline, active=True)
        selected.append(guideline)
    return selected


class Classifier:
    """
    Ordered rule table mapping a diagnostic line onto an error pattern.
    """

    def __init__(self, patterns: Dict[str, ErrorPattern], rules: Sequence[Tuple[str, ErrorPattern, Pattern]]):
        self.patterns = patterns
        self.rules = list(rules)
        self.other = patterns["Other"]

    def __repr__(self):
        return "<{}: {} rules>".format(self.__class__.__name__, len(self.rules))

    @classmethod
    def from_data(cls, data: Dict[str, Any]):
        patterns = {name: ErrorPattern(name, text) for name, text in data.get("patterns", {}).items()}
        if "Other" not in patterns:
            raise ConfigError("Classifier data must define the Other pattern")
        rules: List[Tuple[str, ErrorPattern, Pattern]] = []
        for item in data.get("rules", []):
            try:
                pattern = patterns[item["pattern"]]
                regex = re.compile(item["regex"])
            except KeyError as ex:
                raise ConfigError("Classifier rule {} refers to unknown {}".format(item.get("id"), ex))
            except re.error as ex:
                raise ConfigError("Classifier rule {} has an invalid regex: {}".format(item.get("id"), ex))
            rules.append((str(item["id"]), pattern, regex))
        return cls(patterns, rules)

    def classify(self, diagnostic: str) -> ErrorClassification:
        if not diagnostic.strip():
            raise ValueError("Can't classify an empty diagnostic")
        line = diagnostic.strip()
        found = _MESSAGE.search(line)
        text = found.group(1) if found else line
        for rule_id, pattern, regex in self.rules:
            if regex.search(text):
                return ErrorClassification(pattern, rule_id, line)
        return ErrorClassification(self.other, "", line)


@lru_cache(maxsize=None)
def default_classifier() -> Classifier:
    return Classifier.from_data(_load("error_rules.yaml"))


def classify_error(diagnostic: str) -> ErrorClassification:
    return default_classifier().classify(diagnostic)


def error_patterns() -> List[ErrorPattern]:
    return list(default_classifier().patterns.values())


_ERROR_LINE = re.compile(r"\b(?:fatal )?error\b|undefined reference|multiple definition|Undefined symbols|ld returned")


def first_error(diagnostics: Sequence[str]) -> Optional[str]:
    """
    The first line of compiler output that reports an error.
    """
    return next((line for line in diagnostics if _ERROR_LINE.search(line)), None)
