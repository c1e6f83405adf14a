from pathlib import Path
from unittest import TestCase

from cutgen.deps import ConfigDependencies, CrossFileDependencies, DependencyEntry, Library
from cutgen.errors import PromptBudgetError
from cutgen.guidance import Stage, guidelines_for
from cutgen.knowledge import RetrievalResult
from cutgen.prompts import (
    CONFIG_DEPS, CROSS_FILE_DEPS, DIAGNOSTICS, FOCAL_CONTEXT, GUIDELINES, INGREDIENTS, INTENT, INTENTION, TEST_FILE,
    assemble_prompt, estimate_tokens,
)

try:
    from .utils import make_context, make_focal
except ImportError:
    from tests.utils import make_context, make_focal


GTEST = ConfigDependencies(libraries=[Library("gtest", "1.11.0")], cxx_standard="11", framework_main=True)
HEADINGS = (
    "### Task Definition", "### Step-by-Step Instructions", "### Contextual Information", "### Output Format",
)


def generate_kwargs(**overrides):
    kwargs = dict(
        focal_context=make_context(std_imports=["#include <cstdlib>"], namespaces=["namespace geo"]),
        config_deps=GTEST,
        cross_file=CrossFileDependencies(entries=[
            DependencyEntry("Point", Path("/project/src/util.h"), "struct Point {\n  int x;\n  int y;\n}", 1),
        ]),
        intention=[
            RetrievalResult("doc:docs/usage.md:0001", 0.8, "Clamp limits a value to a range."),
            RetrievalResult("code:src/bounds.cpp:0001", 1.0, "result.x = Clamp(p.x, 0, size);\n"),
        ],
        intent="Limits a value to [low, high].",
        ingredients=["Point"],
        guidelines=guidelines_for(Stage.GENERATION, GTEST),
    )
    kwargs.update(overrides)
    return kwargs


class TestAssemble(TestCase):

    def test_component_order(self):
        bundle = assemble_prompt("generate", 100000, "Clamp_0000", **generate_kwargs())
        positions = [bundle.rendered.index(heading) for heading in HEADINGS]
        self.assertEqual(positions, sorted(positions))
        self.assertEqual(
            [item.title for item in bundle.contextual_information],
            [FOCAL_CONTEXT, CONFIG_DEPS, CROSS_FILE_DEPS, INTENTION, INTENT, INGREDIENTS],
        )
        self.assertEqual(bundle.token_estimate, estimate_tokens(bundle.rendered))
        self.assertEqual(bundle.dropped, [])

    def test_generate_content(self):
        rendered = assemble_prompt("generate", 100000, **generate_kwargs()).rendered
        self.assertIn("the function `Clamp`", rendered)
        self.assertIn("(A.1) Import all necessary dependencies", rendered)
        self.assertNotIn("(B.1)", rendered)
        self.assertIn("GoogleTest", rendered)
        self.assertIn("- library: gtest 1.11.0", rendered)
        self.assertIn("// Point (from util.h)", rendered)
        self.assertIn("Documentation (doc:docs/usage.md:0001)", rendered)
        self.assertIn("// Example usage (code:src/bounds.cpp:0001)", rendered)
        self.assertIn("```cpp\n", rendered)

    def test_no_gtest(self):
        rendered = assemble_prompt(
            "generate", 100000, **generate_kwargs(config_deps=ConfigDependencies()),
        ).rendered
        self.assertIn("plain test functions called from `main`", rendered)

    def test_method_subject(self):
        ctx = make_context(make_focal(name="Decode", class_name="Converter"))
        rendered = assemble_prompt("understand", 100000, focal_context=ctx).rendered
        self.assertIn("the method `Decode` of class `Converter`", rendered)
        self.assertIn("INTENT:", rendered)
        self.assertIn("INGREDIENTS:", rendered)

    def test_drop_order(self):
        full = assemble_prompt("generate", 100000, **generate_kwargs())
        without = assemble_prompt("generate", 100000, **generate_kwargs(intention=()))
        bundle = assemble_prompt("generate", without.token_estimate, **generate_kwargs())
        self.assertEqual(bundle.dropped, [INTENTION])
        self.assertLessEqual(bundle.token_estimate, without.token_estimate)
        self.assertGreater(full.token_estimate, bundle.token_estimate)
        self.assertIsNone(bundle.section(INTENTION))
        self.assertIsNotNone(bundle.section(CROSS_FILE_DEPS))

    def test_drop_everything_droppable(self):
        minimal = assemble_prompt(
            "generate", 100000,
            **generate_kwargs(config_deps=None, cross_file=None, intention=(), intent=None, ingredients=()),
        )
        bundle = assemble_prompt("generate", minimal.token_estimate, **generate_kwargs())
        self.assertEqual(bundle.dropped, [INTENTION, CROSS_FILE_DEPS, CONFIG_DEPS, INGREDIENTS, INTENT])
        self.assertIsNotNone(bundle.section(FOCAL_CONTEXT))

    def test_budget_error(self):
        with self.assertRaises(PromptBudgetError) as ctx:
            assemble_prompt("generate", 10, "Clamp_0000", **generate_kwargs())
        self.assertEqual(ctx.exception.focal_id, "Clamp_0000")

    def test_refine(self):
        guidelines = guidelines_for(Stage.REFINEMENT, ConfigDependencies())
        bundle = assemble_prompt("refine", 100000, test_source="int main() {}\n", guidelines=guidelines)
        self.assertEqual([item.title for item in bundle.contextual_information], [TEST_FILE, GUIDELINES])
        self.assertIn("(A.3) If gtest is not allowed, directly call test methods from the main function. [ACTIVE]", bundle.rendered)
        self.assertIn("(C.2)", bundle.rendered)

    def test_fix(self):
        diagnostics = ["test/cutgen_test_x.cpp:3:1: error: unknown type name 'Foo'"]
        bundle = assemble_prompt("fix", 100000, test_source="Foo x;\n", diagnostics=diagnostics)
        self.assertEqual([item.title for item in bundle.contextual_information], [TEST_FILE, DIAGNOSTICS])
        self.assertIn(diagnostics[0], bundle.rendered)
        self.assertIn("```cpp\nFoo x;\n```", bundle.rendered)

    def test_fix_never_drops(self):
        with self.assertRaises(PromptBudgetError):
            assemble_prompt("fix", 50, test_source="int x;\n" * 200, diagnostics=["error: x"])

    def test_missing_inputs(self):
        with self.assertRaises(ValueError):
            assemble_prompt("understand", 100000)
        with self.assertRaises(ValueError):
            assemble_prompt("refine", 100000)
        with self.assertRaises(ValueError):
            assemble_prompt("summarise", 100000, test_source="")
