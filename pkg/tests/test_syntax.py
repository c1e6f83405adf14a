from unittest import TestCase

from cutgen.syntax import ByteOffsets, DefinitionKind, Span, comment_blocks, lexical_invocations

try:
    from .utils import FIXTURES, clang_backend
except ImportError:
    from tests.utils import FIXTURES, clang_backend


class TestLexicalInvocations(TestCase):

    def test_calls(self):
        body = "{\n  int sum = BValue(x) + CValue(x);\n  return sum + DValue(x);\n}\n"
        self.assertEqual(sorted(set(lexical_invocations(body))), ["BValue", "CValue", "DValue"])

    def test_skips_keywords_and_declarations(self):
        body = "{\n  if (x) { return sizeof(int); }\n  Point p(1, 2);\n  while (go()) {}\n}\n"
        self.assertEqual(lexical_invocations(body), ["go"])

    def test_qualifiers(self):
        body = "{ return Converter::Clamp(v, 0, 1) + std::abs(v) + NodeType::Scalar; }"
        names = lexical_invocations(body)
        self.assertIn("Clamp", names)
        self.assertIn("Converter", names)
        self.assertIn("NodeType", names)
        self.assertIn("abs", names)
        self.assertNotIn("std", names)

    def test_ignores_comments(self):
        self.assertEqual(lexical_invocations("{ // Hidden(1)\n  shown(2); }"), ["shown"])


class TestCommentBlocks(TestCase):

    def test_blocks(self):
        text = "// one\n// two\n\nint a; // trailing\n/* three */\nint f() {\n  // inside\n}\n"
        exclude = [Span(6, 8, text.index("int f"), len(text) - 1)]
        blocks = comment_blocks(text, exclude)
        self.assertEqual([(block.start_line, block.end_line) for block in blocks], [(1, 2), (5, 5)])


class TestByteOffsets(TestCase):

    def test_ascii(self):
        chars = ByteOffsets("int x;")
        self.assertIsNone(chars.starts)
        self.assertEqual(chars(4), 4)

    def test_multibyte(self):
        chars = ByteOffsets("a\u00e9\u20acb")
        self.assertEqual([chars(offset) for offset in (0, 1, 3, 6, 7)], [0, 1, 2, 3, 4])


class TestClangBackend(TestCase):

    def setUp(self):
        self.backend = clang_backend(self, [FIXTURES / "convert" / "src"])

    def test_definitions(self):
        tree = self.backend.parse(FIXTURES / "convert" / "src" / "node.cpp")
        self.assertTrue(tree.parsed)
        kinds = [(item.name, item.kind) for item in tree.definitions]
        self.assertIn(("Node", DefinitionKind.CONSTRUCTOR), kinds)
        self.assertIn(("Type", DefinitionKind.METHOD), kinds)
        self.assertEqual(tree.namespaces, ["YAML"])

    def test_declarations(self):
        tree = self.backend.parse(FIXTURES / "convert" / "src" / "node.h")
        found = {(item.name, item.kind) for item in tree.declarations}
        self.assertIn(("Node", "class"), found)
        self.assertIn(("NodeType", "enum"), found)
        self.assertIn(("Null", "constant"), found)
        self.assertIn(("IsNull", "method"), found)
        self.assertIn(("type_", "field"), found)
        self.assertIn("NodeType type_;", tree.class_fields["Node"])

    def test_unsaved_text(self):
        path = FIXTURES / "convert" / "test" / "cutgen_test_unsaved.cpp"
        tree = self.backend.parse(path, text="TEST(A, B) {\n  int x = ;\n}\n")
        self.assertTrue(tree.syntax_errors)
        self.assertFalse(path.exists())

    def test_cached(self):
        path = FIXTURES / "convert" / "src" / "convert.cpp"
        self.assertIs(self.backend.parse(path), self.backend.parse(path))

    def test_non_ascii_offsets(self):
        tree = self.backend.parse(FIXTURES / "unicode" / "src" / "use.cpp")
        [use] = tree.definitions
        self.assertEqual(
            tree.slice(use.span),
            'int Use(int v) {\n  const char *label = "Größe";\n  return IsScalar(v) + label[0];\n}',
        )
        self.assertEqual(use.signature, "int Use(int v)")
        self.assertEqual(tree.text[use.body_offset], "{")
        self.assertEqual([tree.slice(span) for span in tree.comments], ["// Prüft den Wert: ½ ≤ v"])
        header = self.backend.parse(FIXTURES / "unicode" / "src" / "node.h")
        declaration = next(item for item in header.declarations if item.name == "IsScalar")
        self.assertEqual(header.slice(declaration.span), "int IsScalar(int v)")
