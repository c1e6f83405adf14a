"""
Prompt templates.

Every prompt has four components in fixed order: task definition, step-by-step instructions,
contextual information and output format.  Contextual information is a list of titled sections;
when the prompt would exceed the token budget, whole sections are dropped in a fixed order until
it fits.  The focal context, the test file and compiler diagnostics are never dropped.
"""

from dataclasses import dataclass, field
import math
from typing import List, Optional, Sequence

from typing_extensions import Literal

from .deps import ConfigDependencies, CrossFileDependencies
from .errors import PromptBudgetError
from .guidance import Guideline
from .knowledge import RetrievalResult
from .repo import StructuredFocalContext


Step = Literal["understand", "generate", "refine", "fix"]

FOCAL_CONTEXT = "Focal Context"
CONFIG_DEPS = "Configuration Dependencies"
CROSS_FILE_DEPS = "Cross-File Dependencies"
INTENTION = "Intention Contexts"
INTENT = "Intended Functionality"
INGREDIENTS = "Dependent Ingredients"
TEST_FILE = "Test File"
GUIDELINES = "Guidelines"
DIAGNOSTICS = "Compiler Diagnostics"

DROP_ORDER = (INTENTION, CROSS_FILE_DEPS, CONFIG_DEPS, INGREDIENTS, INTENT)

INTENT_LABEL = "INTENT:"
INGREDIENTS_LABEL = "INGREDIENTS:"


@dataclass(frozen=True)
class Section:
    title: str
    text: str

    def render(self) -> str:
        return "#### {}\n{}".format(self.title, self.text.rstrip("\n"))


@dataclass
class PromptBundle:
    step: str
    task_definition: str
    step_instructions: str
    contextual_information: List[Section]
    output_format: str
    rendered: str = ""
    token_estimate: int = 0
    dropped: List[str] = field(default_factory=list)

    def section(self, title: str) -> Optional[Section]:
        return next((item for item in self.contextual_information if item.title == title), None)

    def render(self) -> str:
        return "\n\n".join((
            "### Task Definition\n" + self.task_definition,
            "### Step-by-Step Instructions\n" + self.step_instructions,
            "### Contextual Information\n" + "\n\n".join(item.render() for item in self.contextual_information),
            "### Output Format\n" + self.output_format,
        )) + "\n"


def estimate_tokens(text: str) -> int:
    return math.ceil(len(text) / 4)


def _fenced(code: str) -> str:
    return "```cpp\n{}{}```".format(code, "" if code.endswith("\n") else "\n")


def _subject(ctx: Optional[StructuredFocalContext]) -> str:
    if ctx is None:
        return "the focal method"
    focal = ctx.focal
    if focal.class_name:
        return "the method `{}` of class `{}`".format(focal.name, focal.class_name)
    return "the function `{}`".format(focal.name)


_CODE_OUTPUT = (
    "Return the complete test file in a single fenced code block tagged `cpp`. Put no other code "
    "blocks in the answer."
)


def _understand(ctx: StructuredFocalContext):
    task = (
        "You are an expert C++ developer. Read {} and work out what it is intended to do and which "
        "project entities it depends on.".format(_subject(ctx))
    )
    steps = "\n".join((
        "1. Read the focal method and the declarations around it.",
        "2. Summarize its intended functionality, including edge cases and error handling.",
        "3. List the classes, functions, types and constants from the project that it relies on.",
    ))
    output = "Answer in exactly this form:\n{} <one paragraph>\n{} <comma-separated identifiers>".format(
        INTENT_LABEL, INGREDIENTS_LABEL,
    )
    return task, steps, output


def _generate(ctx: StructuredFocalContext, guidelines: Sequence[Guideline], config: Optional[ConfigDependencies]):
    task = (
        "You are an expert C++ test engineer. Write a complete, compilable unit test file for {}, in "
        "the project's test directory.".format(_subject(ctx))
    )
    framework = "GoogleTest (`TEST`/`TEST_F`)" if config is None or config.gtest_available else \
        "plain test functions called from `main`"
    lines = [
        "1. Study the focal context and the dependencies it uses.",
        "2. Use the intended functionality and the documentation to decide what correct behaviour is.",
        "3. Plan test scenarios covering normal inputs, boundaries and every branch.",
        "4. Write the tests with {}, asserting intended behaviour rather than observed output.".format(framework),
        "5. Follow these guidelines:",
    ]
    lines.extend("   " + item.render() for item in guidelines)
    return task, "\n".join(lines), _CODE_OUTPUT


def _refine(guidelines: Sequence[Guideline]):
    task = (
        "You are reviewing a generated C++ unit test file. Improve it so it follows the guidelines, "
        "keeping every test that is already correct."
    )
    steps = "\n".join((
        "1. Check the test file against each guideline; guidelines marked [ACTIVE] apply to this project.",
        "2. Fix includes, namespaces, member access and assertions that break a guideline.",
        "3. Add tests for conditional branches that are not yet exercised.",
    ))
    return task, steps, _CODE_OUTPUT


def _fix():
    task = "The C++ unit test file below fails to compile. Fix the compilation errors reported by the compiler."
    steps = "\n".join((
        "1. Read each compiler diagnostic and find the line it refers to.",
        "2. Correct the cause with the smallest change, without deleting passing tests.",
        "3. Keep every include, namespace and helper the remaining tests need.",
    ))
    return task, steps, _CODE_OUTPUT


def _intention(results: Sequence[RetrievalResult]) -> str:
    blocks: List[str] = []
    for item in results:
        if item.chunk_id.startswith("code:"):
            blocks.append("// Example usage ({})\n{}".format(item.chunk_id, _fenced(item.snippet)))
        else:
            blocks.append("Documentation ({}):\n{}".format(item.chunk_id, item.snippet))
    return "\n\n".join(blocks)


def assemble_prompt(
    step: Step, budget: int, focal_id: str = "", *,
    focal_context: Optional[StructuredFocalContext] = None,
    config_deps: Optional[ConfigDependencies] = None,
    cross_file: Optional[CrossFileDependencies] = None,
    intention: Sequence[RetrievalResult] = (),
    intent: Optional[str] = None,
    ingredients: Sequence[str] = (),
    guidelines: Sequence[Guideline] = (),
    test_source: Optional[str] = None,
    diagnostics: Sequence[str] = (),
) -> PromptBundle:
    """
    Render the prompt for one pipeline step, dropping sections as needed to fit `budget` tokens.

    Raises `PromptBudgetError` if the prompt is still too large with every droppable section gone.
    """
    sections: List[Section] = []
    if step == "understand":
        if focal_context is None:
            raise ValueError("understand step needs the focal context")
        task, steps, output = _understand(focal_context)
        sections.append(Section(FOCAL_CONTEXT, _fenced(focal_context.render())))
    elif step == "generate":
        if focal_context is None:
            raise ValueError("generate step needs the focal context")
        task, steps, output = _generate(focal_context, guidelines, config_deps)
        sections.append(Section(FOCAL_CONTEXT, _fenced(focal_context.render())))
        if config_deps is not None:
            sections.append(Section(CONFIG_DEPS, config_deps.render()))
        if cross_file is not None and cross_file.entries:
            sections.append(Section(CROSS_FILE_DEPS, _fenced(cross_file.render())))
        if intention:
            sections.append(Section(INTENTION, _intention(intention)))
        if intent:
            sections.append(Section(INTENT, intent))
        if ingredients:
            sections.append(Section(INGREDIENTS, ", ".join(ingredients)))
    elif step == "refine":
        if test_source is None:
            raise ValueError("refine step needs the test file")
        task, steps, output = _refine(guidelines)
        sections.append(Section(TEST_FILE, _fenced(test_source)))
        sections.append(Section(GUIDELINES, "\n".join(item.render() for item in guidelines)))
    elif step == "fix":
        if test_source is None:
            raise ValueError("fix step needs the test file")
        task, steps, output = _fix()
        sections.append(Section(TEST_FILE, _fenced(test_source)))
        sections.append(Section(DIAGNOSTICS, "\n".join(diagnostics)))
    else:
        raise ValueError("Unknown prompt step: {}".format(step))
    bundle = PromptBundle(step, task, steps, sections, output)
    bundle.rendered = bundle.render()
    bundle.token_estimate = estimate_tokens(bundle.rendered)
    for title in DROP_ORDER:
        if bundle.token_estimate <= budget:
            break
        if bundle.section(title) is None:
            continue
        bundle.contextual_information = [item for item in bundle.contextual_information if item.title != title]
        bundle.dropped.append(title)
        bundle.rendered = bundle.render()
        bundle.token_estimate = estimate_tokens(bundle.rendered)
    if bundle.token_estimate > budget:
        raise PromptBudgetError(focal_id, "{} prompt needs {} tokens, budget is {}".format(
            step, bundle.token_estimate, budget,
        ))
    return bundle
