from unittest import TestCase

from cutgen.config import ProviderConfig
from cutgen.deps import ConfigDependencies
from cutgen.errors import GenerationError, ProviderError, RepairOrderError
from cutgen.generation import (
    FileStage, GeneratedTestFile, IntentSummary, parse_intent, run_step1_understanding, run_step2_generate,
    run_step3_refine,
)
from cutgen.guidance import Stage, guidelines_for
from cutgen.llm import ScriptedProvider, Transcript

try:
    from .utils import make_context
except ImportError:
    from tests.utils import make_context


CONFIG = ProviderConfig()
BUDGET = 32000
TEST_SOURCE = '#include "util.h"\n\nvoid testClamp() {\n  Clamp(1, 0, 2);\n}\n'


def scripted(**steps: str) -> ScriptedProvider:
    return ScriptedProvider.from_data({"responses": [{"step": step, "text": text} for step, text in steps.items()]})


class Failing:
    name = "failing"

    def complete(self, request):
        raise ProviderError("connection refused")


class TestParseIntent(TestCase):

    def test_labelled(self):
        summary = parse_intent("INTENT: Limits a value.\nIt never throws.\nINGREDIENTS: Point, `Clamp`\n- Node\n")
        self.assertEqual(summary.intent, "Limits a value.\nIt never throws.")
        self.assertEqual(summary.ingredients, ["Point", "Clamp", "Node"])

    def test_unlabelled(self):
        self.assertEqual(parse_intent("  It clamps.  "), IntentSummary("It clamps.", []))

    def test_no_ingredients(self):
        self.assertEqual(parse_intent("INTENT: x"), IntentSummary("x", []))


class TestSteps(TestCase):

    def setUp(self):
        self.ctx = make_context()

    def test_defaults(self):
        provider = scripted(understand="INTENT: clamps\nINGREDIENTS: Point")
        run_step1_understanding(self.ctx, provider, CONFIG, BUDGET)
        request = provider.requests[0]
        self.assertEqual(request.step, "understand")
        self.assertEqual(request.temperature, 0.0)
        self.assertEqual(request.choice_count, 1)
        self.assertEqual(request.max_output_tokens, 4096)
        self.assertEqual(request.focal_id, self.ctx.focal.id)

    def test_understanding(self):
        provider = scripted(understand="INTENT: clamps\nINGREDIENTS: Point")
        transcript = Transcript(self.ctx.focal.id)
        summary = run_step1_understanding(self.ctx, provider, CONFIG, BUDGET, transcript)
        self.assertEqual(summary, IntentSummary("clamps", ["Point"]))
        self.assertEqual(transcript.steps(), ["understand"])

    def test_understanding_empty(self):
        with self.assertRaises(GenerationError):
            run_step1_understanding(self.ctx, scripted(understand="   "), CONFIG, BUDGET)

    def test_understanding_provider_failure(self):
        transcript = Transcript(self.ctx.focal.id)
        with self.assertRaises(GenerationError):
            run_step1_understanding(self.ctx, Failing(), CONFIG, BUDGET, transcript)
        self.assertEqual(transcript.entries[0]["error"], "connection refused")

    def test_generate(self):
        provider = scripted(generate="Sure:\n```cpp\n{}```\nand\n```cpp\nint other;\n```\n".format(TEST_SOURCE))
        tc = run_step2_generate(
            self.ctx, IntentSummary("clamps", ["Point"]), provider, CONFIG, BUDGET,
            config_deps=ConfigDependencies(), guidelines=guidelines_for(Stage.GENERATION, ConfigDependencies()),
        )
        self.assertEqual(tc.source, TEST_SOURCE)
        self.assertEqual(tc.stage, FileStage.INITIAL)
        self.assertEqual(tc.lineage, ["step2"])
        self.assertIn("clamps", provider.requests[0].prompt)
        self.assertIn("[ACTIVE]", provider.requests[0].prompt)

    def test_generate_without_code(self):
        with self.assertRaises(GenerationError):
            run_step2_generate(self.ctx, IntentSummary("x"), scripted(generate="I can't."), CONFIG, BUDGET)

    def test_refine(self):
        provider = scripted(refine="```cpp\n// refined\n{code}```")
        tc = GeneratedTestFile("Clamp_0000", TEST_SOURCE)
        refined = run_step3_refine(tc, guidelines_for(Stage.REFINEMENT, ConfigDependencies()), provider, CONFIG, BUDGET)
        self.assertEqual(refined.source, "// refined\n" + TEST_SOURCE)
        self.assertEqual(refined.stage, FileStage.REFINED)
        self.assertEqual(refined.lineage, ["step2", "step3"])
        self.assertEqual(tc.source, TEST_SOURCE)

    def test_refine_keeps_initial(self):
        tc = GeneratedTestFile("Clamp_0000", TEST_SOURCE)
        guidelines = guidelines_for(Stage.REFINEMENT, ConfigDependencies())
        for provider in (Failing(), scripted(refine="No changes needed.")):
            refined = run_step3_refine(tc, guidelines, provider, CONFIG, BUDGET)
            self.assertEqual(refined.source, TEST_SOURCE)
            self.assertEqual(refined.stage, FileStage.REFINED)
            self.assertEqual(len(refined.notes), 1)
        skipped = run_step3_refine(tc, [], Failing(), CONFIG, BUDGET)
        self.assertEqual(skipped.source, TEST_SOURCE)

    def test_refine_once(self):
        tc = GeneratedTestFile("Clamp_0000", TEST_SOURCE, FileStage.REFINED)
        with self.assertRaises(RepairOrderError):
            run_step3_refine(tc, [], scripted(), CONFIG, BUDGET)


class TestGeneratedTestFile(TestCase):

    def test_forward_only(self):
        tc = GeneratedTestFile("Clamp_0000", "int x;\n", FileStage.RULE_FIXED)
        self.assertEqual(tc.advance("phase2").stage, FileStage.RULE_FIXED)
        with self.assertRaises(RepairOrderError):
            tc.advance("step3", stage=FileStage.REFINED)

    def test_lineage(self):
        tc = GeneratedTestFile("Clamp_0000", "int x;\n").advance("step3", "int y;\n", FileStage.REFINED, note="ok")
        self.assertEqual(tc.lineage, ["step2", "step3"])
        self.assertEqual(tc.notes, ["ok"])
        self.assertEqual(tc.source, "int y;\n")

