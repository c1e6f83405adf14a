from inspect import isfunction
from pathlib import Path
import shutil
import tempfile
from typing import Any, Callable, Dict, Iterable, List, Optional, Tuple, Type
from unittest import TestCase

try:
    from clang import cindex
except ImportError:
    cindex = None

from cutgen.config import RunConfig, load_config
from cutgen.repo import FocalMethod, StructuredFocalContext
from cutgen.toolchains import TOOLCHAINS, Toolchain


FIXTURES = Path(__file__).parent / "fixtures"

TestMethod = Callable[[TestCase], None]
ToolchainTestMethod = Callable[[TestCase, Type[Toolchain]], None]


# Separate method to avoid variable reassignment in closure
def parametised_method(fn: Callable[..., None], *values: Any) -> TestMethod:
    def run(self: TestCase, *args):
        return fn(self, *args, *values)
    return run


def parametise(*matrix: Iterable[Any]):
    def outer(cls: Type[TestCase]):
        found: Dict[str, List[TestMethod]] = {}
        for name, member in vars(cls).items():
            if isfunction(member):
                found[name] = []
                for values in matrix:
                    found[name].append(parametised_method(member, *values))
        for name, methods in found.items():
            for i, method in enumerate(methods):
                setattr(cls, "{}__{}".format(name, i), method)
            delattr(cls, name)
        return cls
    return outer


_backends: Dict[str, Any] = {}


def clang_backend(case: TestCase, include_roots: Iterable[Path] = ()):
    """
    A shared `ClangBackend`, or skip the test when libclang can't be loaded.
    """
    if cindex is None:
        case.skipTest("No libclang bindings installed (clang.cindex)")
    from cutgen.syntax import ClangBackend
    roots = tuple(str(root) for root in include_roots)
    key = "|".join(roots)
    try:
        backend = _backends[key]
    except KeyError:
        try:
            backend = _backends.setdefault(key, ClangBackend(include_roots))
        except Exception as ex:
            case.skipTest("libclang unusable: {}".format(ex))
    return backend


def toolchain_methods(fn: ToolchainTestMethod) -> Tuple[TestMethod, ...]:
    def make(toolchain: Type[Toolchain]) -> TestMethod:
        def run(self: TestCase):
            if not shutil.which(toolchain.cxx):
                self.skipTest("No {} compiler installed ({})".format(toolchain.name, toolchain.cxx))
            fn(self, toolchain)
        run.__name__ = toolchain.name
        return run
    return tuple(make(toolchain) for toolchain in TOOLCHAINS.values())


def with_toolchains(cls: Type[TestCase]):
    """
    Run every test method once per toolchain, skipping compilers that aren't installed.
    """
    functions: Dict[str, Tuple[TestMethod, ...]] = {}
    for name, member in vars(cls).items():
        if isfunction(member) and name.startswith("test"):
            functions[name] = toolchain_methods(member)
    for name, methods in functions.items():
        for method in methods:
            setattr(cls, "{}__{}".format(name, method.__name__), method)
        delattr(cls, name)
    return cls


def copy_fixture(case: TestCase, name: str) -> Path:
    """
    Copy a fixture project to a temporary directory removed after the test.
    """
    tmp = tempfile.mkdtemp(prefix="cutgen-")
    case.addCleanup(shutil.rmtree, tmp, True)
    target = Path(tmp) / name
    shutil.copytree(FIXTURES / name, target)
    return target


def make_config(root: Path, **overrides: Any) -> RunConfig:
    return load_config(None, root=str(root), **overrides)


def make_focal(
    name: str = "Clamp", class_name: str = "", params: Tuple[str, ...] = ("int", "int", "int"),
    file: Path = Path("/project/src/util.cpp"), line_span: Tuple[int, int] = (7, 15), body: str = "",
    scope: str = "geo", return_type: str = "int", id: Optional[str] = None,
) -> FocalMethod:
    return FocalMethod(
        id=id or "{}_0000".format(name), name=name, class_name=class_name, signature=(return_type, params),
        file=file, line_span=line_span, body=body or "int {}() {{\n  return 0;\n}}\n".format(name),
        cyclomatic_complexity=1, scope=scope,
    )


def make_context(focal: Optional[FocalMethod] = None, **kwargs: Any) -> StructuredFocalContext:
    focal = focal or make_focal()
    kwargs.setdefault("file", "src/util.cpp")
    return StructuredFocalContext(focal=focal, **kwargs)
