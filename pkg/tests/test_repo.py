from pathlib import Path
from unittest import TestCase

from cutgen.config import FilterConfig
from cutgen.errors import ConfigError, ContextExtractionError
from cutgen.lexical import find_includes, line_slice, read_source
from cutgen.repo import (
    FocalMethod, categorize_includes, cyclomatic_complexity, enumerate_focal_methods, extract_focal_context,
    scan_repository,
)
from cutgen.syntax import SyntaxTree

try:
    from .utils import FIXTURES, clang_backend, copy_fixture, make_config, make_focal
except ImportError:
    from tests.utils import FIXTURES, clang_backend, copy_fixture, make_config, make_focal


CONVERT = FIXTURES / "convert"


class TestScan(TestCase):

    def test_classify(self):
        index = scan_repository(CONVERT, make_config(CONVERT, include_roots=["src"]))
        rel = lambda paths: [index.relative(path) for path in paths]
        self.assertEqual(rel(index.source_files), ["src/convert.cpp", "src/node.cpp", "test/convert_test.cpp"])
        self.assertEqual(rel(index.header_files), ["src/convert.h", "src/node.h"])
        self.assertEqual(rel(index.config_files), ["CMakeLists.txt"])
        self.assertEqual(rel(index.doc_files), ["README.md"])
        self.assertTrue(index.in_test_dir(CONVERT / "test" / "convert_test.cpp"))
        self.assertFalse(index.in_test_dir(CONVERT / "src" / "convert.cpp"))

    def test_skips_generated_and_excluded(self):
        root = copy_fixture(self, "convert")
        (root / "test" / "cutgen_test_Decode_1234.cpp").write_text("int x;\n")
        (root / "build").mkdir()
        (root / "build" / "generated.cpp").write_text("int y;\n")
        (root / ".cutgen").mkdir()
        (root / ".cutgen" / "scratch.cpp").write_text("int z;\n")
        index = scan_repository(root, make_config(root))
        names = [path.name for path in index.source_files]
        self.assertEqual(names, ["convert.cpp", "node.cpp", "convert_test.cpp"])

    def test_missing_root(self):
        with self.assertRaises(ConfigError):
            scan_repository(CONVERT / "nowhere", make_config(CONVERT))

    def test_resolve_include(self):
        index = scan_repository(CONVERT, make_config(CONVERT, include_roots=["src"]))
        test_file = CONVERT / "test" / "convert_test.cpp"
        self.assertEqual(index.resolve_include("convert.h", test_file), CONVERT / "src" / "convert.h")
        self.assertEqual(index.resolve_include("src/node.h", test_file), CONVERT / "src" / "node.h")
        self.assertIsNone(index.resolve_include("gtest/gtest.h", test_file))

    def test_paired_header(self):
        index = scan_repository(CONVERT, make_config(CONVERT))
        self.assertEqual(index.paired_header(CONVERT / "src" / "node.cpp"), CONVERT / "src" / "node.h")
        self.assertIsNone(index.paired_header(CONVERT / "test" / "convert_test.cpp"))


class TestCategorize(TestCase):

    def test_categorize(self):
        text = '#include <vector>\n#include <gtest/gtest.h>\n#include "node.h"\n#include <math.h>\n'
        std, third, user = categorize_includes(find_includes(text))
        self.assertEqual(std, ["#include <vector>", "#include <math.h>"])
        self.assertEqual(third, ["#include <gtest/gtest.h>"])
        self.assertEqual(user, ['#include "node.h"'])


class TestFocalMethod(TestCase):

    def test_dict(self):
        m = make_focal(file=Path("/project/src/util.cpp"))
        data = m.to_dict(Path("/project"))
        self.assertEqual(data["file"], "src/util.cpp")
        self.assertEqual(data["signature"], {"return_type": "int", "param_types": ["int", "int", "int"]})
        back = FocalMethod.from_dict(data, Path("/project"))
        self.assertEqual(back.file, m.file)
        self.assertEqual(back.signature, m.signature)
        self.assertEqual(back.line_span, m.line_span)

    def test_qualified_name(self):
        self.assertEqual(make_focal(name="Decode", class_name="Converter").qualified_name, "Converter::Decode")
        self.assertEqual(make_focal(name="Clamp").qualified_name, "Clamp")


class TestEnumerate(TestCase):

    def setUp(self):
        self.config = make_config(CONVERT, include_roots=["src"])
        self.index = scan_repository(CONVERT, self.config)
        self.backend = clang_backend(self, self.index.include_roots)

    def test_methods(self):
        methods = enumerate_focal_methods(self.index, self.backend, self.config.filters)
        self.assertEqual(
            [m.qualified_name for m in methods],
            ["Converter::Decode", "Converter::Decode", "Converter::Encode", "Converter::Clamp",
             "Node::Type", "Node::IsNull", "Node::Scalar"],
        )
        decode = methods[0]
        self.assertEqual(decode.param_types, ("const Node &", "int &"))
        self.assertEqual(decode.return_type, "bool")
        self.assertEqual(decode.scope, "YAML")
        self.assertEqual(decode.line_span, (10, 21))
        self.assertEqual(decode.cyclomatic_complexity, 5)
        self.assertEqual(methods[3].cyclomatic_complexity, 3)
        self.assertEqual(methods[4].cyclomatic_complexity, 1)

    def test_byte_exact_body(self):
        for m in enumerate_focal_methods(self.index, self.backend, self.config.filters):
            self.assertEqual(m.body, line_slice(read_source(m.file), *m.line_span))

    def test_stable_ids(self):
        first = [m.id for m in enumerate_focal_methods(self.index, self.backend, self.config.filters)]
        second = [m.id for m in enumerate_focal_methods(self.index, self.backend, self.config.filters)]
        self.assertEqual(first, second)
        self.assertEqual(len(set(first)), len(first))

    def test_filters(self):
        short = FilterConfig(min_body_lines=1)
        self.assertEqual(len(enumerate_focal_methods(self.index, self.backend, short)), 9)
        no_special = FilterConfig(min_body_lines=1, include_special_members=False)
        self.assertEqual(len(enumerate_focal_methods(self.index, self.backend, no_special)), 7)
        excluded = FilterConfig(exclude_names=["Converter::Decode", "Is*"])
        names = [m.name for m in enumerate_focal_methods(self.index, self.backend, excluded)]
        self.assertEqual(names, ["Encode", "Clamp", "Type", "Scalar"])

    def test_complexity(self):
        for m in enumerate_focal_methods(self.index, self.backend, self.config.filters):
            self.assertEqual(cyclomatic_complexity(m, self.backend), m.cyclomatic_complexity)

    def test_line_spans_follow_newlines(self):
        root = copy_fixture(self, "unicode")
        (root / "src" / "page.cpp").write_bytes(b"// page one\x0c\nint F(int v) {\n  return v + 1;\n}\n")
        index = scan_repository(root, make_config(root))
        page, use = enumerate_focal_methods(index, clang_backend(self))
        self.assertEqual(page.line_span, (2, 4))
        self.assertEqual(page.body, "int F(int v) {\n  return v + 1;\n}\n")
        self.assertEqual(use.line_span, (4, 7))
        self.assertEqual(
            use.body, 'int Use(int v) {\n  const char *label = "Größe";\n  return IsScalar(v) + label[0];\n}\n',
        )
        self.assertEqual(use.signature, ("int", ("int",)))


class TestContext(TestCase):

    def setUp(self):
        self.config = make_config(CONVERT, include_roots=["src"])
        self.index = scan_repository(CONVERT, self.config)
        self.backend = clang_backend(self, self.index.include_roots)
        self.methods = enumerate_focal_methods(self.index, self.backend, self.config.filters)

    def test_method_context(self):
        ctx = extract_focal_context(self.methods[0], self.index, self.backend)
        self.assertEqual(ctx.file, "src/convert.cpp")
        self.assertEqual(ctx.std_imports, ["#include <cstdlib>", "#include <string>"])
        self.assertEqual(ctx.third_party_imports, [])
        self.assertEqual(ctx.user_imports, ['#include "convert.h"'])
        self.assertIn("namespace YAML", ctx.namespaces)
        self.assertEqual(ctx.paired_header, "src/convert.h")
        self.assertTrue(any("Decode" in item and "double" in item for item in ctx.sibling_signatures))
        self.assertTrue(any("Encode" in item for item in ctx.sibling_signatures))
        self.assertFalse(any("int &rhs" in item for item in ctx.sibling_signatures))
        self.assertTrue(any("limit_" in item for item in ctx.class_fields))
        rendered = ctx.render()
        self.assertIn("// Class: Converter", rendered)
        self.assertTrue(rendered.endswith(self.methods[0].body))

    def test_free_function_context(self):
        index = scan_repository(FIXTURES / "plain", make_config(FIXTURES / "plain"))
        backend = clang_backend(self)
        clamp = next(m for m in enumerate_focal_methods(index, backend) if m.name == "Clamp")
        ctx = extract_focal_context(clamp, index, backend)
        self.assertEqual(ctx.sibling_signatures, [])
        self.assertEqual(ctx.class_fields, [])
        self.assertEqual(ctx.paired_header, "src/util.h")
        self.assertNotIn("// Class:", ctx.render())

    def test_unparsable(self):
        class Broken:
            def parse(self, path, text=None):
                return SyntaxTree(Path(path), "", parsed=False)

        with self.assertRaises(ContextExtractionError) as ctx:
            extract_focal_context(self.methods[0], self.index, Broken())
        self.assertEqual(ctx.exception.focal_id, self.methods[0].id)
