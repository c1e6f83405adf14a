"""
The three LLM steps of test generation: understanding, generation and refinement.
"""

from dataclasses import dataclass, field, replace
from enum import Enum
import logging
import re
from typing import List, Optional, Sequence

from .api import LLMProvider
from .config import ProviderConfig
from .deps import ConfigDependencies, CrossFileDependencies
from .errors import GenerationError, PromptBudgetError, ProviderError, RepairOrderError
from .guidance import Guideline
from .knowledge import RetrievalResult
from .lexical import fenced_blocks
from .llm import Transcript, complete, make_request
from .prompts import INGREDIENTS_LABEL, INTENT_LABEL, assemble_prompt
from .repo import StructuredFocalContext


LOG = logging.getLogger(__name__)


class FileStage(Enum):
    """
    How far a generated test file has progressed; stages only ever move forward.
    """

    INITIAL = "initial"
    REFINED = "refined"
    RULE_FIXED = "rule_fixed"
    LLM_FIXED = "llm_fixed"

    @property
    def rank(self) -> int:
        return list(FileStage).index(self)


@dataclass(frozen=True)
class IntentSummary:
    intent: str
    ingredients: List[str] = field(default_factory=list)


@dataclass(frozen=True)
class GeneratedTestFile:
    focal_id: str
    source: str
    stage: FileStage = FileStage.INITIAL
    lineage: List[str] = field(default_factory=lambda: ["step2"])
    notes: List[str] = field(default_factory=list)

    def advance(
        self, operation: str, source: Optional[str] = None, stage: Optional[FileStage] = None,
        note: Optional[str] = None,
    ) -> "GeneratedTestFile":
        """
        Derive the file produced by `operation`, appending it to the lineage.
        """
        stage = stage or self.stage
        if stage.rank < self.stage.rank:
            raise RepairOrderError(self.focal_id, "{} would move the file back from {} to {}".format(
                operation, self.stage.value, stage.value,
            ))
        return replace(
            self, source=self.source if source is None else source, stage=stage,
            lineage=self.lineage + [operation], notes=self.notes + ([note] if note else []),
        )


_INTENT = re.compile(r"{}\s*(.*?)\s*(?={}|\Z)".format(re.escape(INTENT_LABEL), re.escape(INGREDIENTS_LABEL)), re.DOTALL)
_INGREDIENTS = re.compile(r"{}\s*(.*)\Z".format(re.escape(INGREDIENTS_LABEL)), re.DOTALL)


def parse_intent(text: str) -> IntentSummary:
    """
    Read the labelled step-1 answer; anything else becomes the intent with no ingredients.
    """
    intent = _INTENT.search(text)
    if intent is None:
        return IntentSummary(text.strip(), [])
    ingredients: List[str] = []
    found = _INGREDIENTS.search(text, intent.end())
    if found:
        for item in re.split(r"[,\n]", found.group(1)):
            item = item.strip().strip("-*` ").strip()
            if item and item not in ingredients:
                ingredients.append(item)
    return IntentSummary(intent.group(1).strip(), ingredients)


def run_step1_understanding(
    ctx: StructuredFocalContext, provider: LLMProvider, config: ProviderConfig, budget: int,
    transcript: Optional[Transcript] = None,
) -> IntentSummary:
    focal_id = ctx.focal.id
    bundle = assemble_prompt("understand", budget, focal_id, focal_context=ctx)
    try:
        response = complete(provider, make_request("understand", bundle.rendered, provider, config, focal_id), transcript)
    except ProviderError as ex:
        raise GenerationError(focal_id, "understanding step failed: {}".format(ex))
    if not response.text.strip():
        raise GenerationError(focal_id, "understanding step returned an empty response")
    return parse_intent(response.text)


def run_step2_generate(
    ctx: StructuredFocalContext, intent: IntentSummary, provider: LLMProvider, config: ProviderConfig,
    budget: int, *, config_deps: Optional[ConfigDependencies] = None,
    cross_file: Optional[CrossFileDependencies] = None, intention: Sequence[RetrievalResult] = (),
    guidelines: Sequence[Guideline] = (), transcript: Optional[Transcript] = None,
) -> GeneratedTestFile:
    focal_id = ctx.focal.id
    bundle = assemble_prompt(
        "generate", budget, focal_id, focal_context=ctx, config_deps=config_deps, cross_file=cross_file,
        intention=intention, intent=intent.intent, ingredients=intent.ingredients, guidelines=guidelines,
    )
    if bundle.dropped:
        LOG.info("%s: dropped %s to fit the prompt budget", focal_id, ", ".join(bundle.dropped))
    try:
        response = complete(provider, make_request("generate", bundle.rendered, provider, config, focal_id), transcript)
    except ProviderError as ex:
        raise GenerationError(focal_id, "generation step failed: {}".format(ex))
    blocks = fenced_blocks(response.text)
    if not blocks:
        raise GenerationError(focal_id, "generation response has no code block")
    if len(blocks) > 1:
        LOG.warning("%s: generation response has %d code blocks, using the first", focal_id, len(blocks))
    notes = ["dropped from prompt: {}".format(", ".join(bundle.dropped))] if bundle.dropped else []
    return GeneratedTestFile(focal_id, blocks[0], notes=notes)


def run_step3_refine(
    tc: GeneratedTestFile, guidelines: Sequence[Guideline], provider: LLMProvider, config: ProviderConfig,
    budget: int, transcript: Optional[Transcript] = None,
) -> GeneratedTestFile:
    """
    Ask the model to revise the test file against the guideline catalog.

    The initial file is kept whenever refinement can't produce a replacement.
    """
    if tc.stage is not FileStage.INITIAL:
        raise RepairOrderError(tc.focal_id, "refinement needs an initial test file, got {}".format(tc.stage.value))
    if not guidelines:
        LOG.warning("%s: no guidelines configured, skipping refinement", tc.focal_id)
        return tc.advance("step3", stage=FileStage.REFINED, note="refinement skipped: no guidelines")
    try:
        bundle = assemble_prompt("refine", budget, tc.focal_id, test_source=tc.source, guidelines=guidelines)
        response = complete(provider, make_request("refine", bundle.rendered, provider, config, tc.focal_id), transcript)
    except (PromptBudgetError, ProviderError) as ex:
        LOG.warning("%s: refinement failed, keeping the initial file: %s", tc.focal_id, ex)
        return tc.advance("step3", stage=FileStage.REFINED, note="refinement failed: {}".format(ex))
    blocks = fenced_blocks(response.text)
    if not blocks:
        return tc.advance("step3", stage=FileStage.REFINED, note="refinement returned no code block")
    return tc.advance("step3", blocks[0], FileStage.REFINED)
