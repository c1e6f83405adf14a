"""
Run configuration, loaded from a single YAML file.

Every section maps onto a dataclass; unknown keys are rejected with the full key path.  Secrets
never live in the file: provider sections name the environment variable holding them.

```yaml
root: ../yaml-cpp
test_dir: test
include_roots: [include, src]
provider:
  model: gpt-4o
  api_key_env: OPENAI_API_KEY
toolchain:
  compiler: clang
```
"""

from dataclasses import dataclass, field, fields, is_dataclass, replace
import logging
import os
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Type, TypeVar

import yaml

from .errors import ConfigError


_T = TypeVar("_T")


LOG = logging.getLogger(__name__)


@dataclass
class FilterConfig:
    """
    Which function definitions count as focal methods.
    """

    min_body_lines: int = 2
    exclude_names: List[str] = field(default_factory=list)
    """Globs matched against both the bare and the `Class::name` form."""
    include_special_members: bool = True
    """Constructors, destructors, operators and conversion functions."""
    visibility: List[str] = field(default_factory=lambda: ["public", "protected", "private"])


@dataclass
class ProviderConfig:
    """
    Chat-completions endpoint used for every LLM step.
    """

    endpoint: str = "https://api.openai.com/v1/chat/completions"
    model: str = "gpt-4o"
    api_key_env: str = "OPENAI_API_KEY"
    temperature: float = 0.0
    max_output_tokens: int = 4096
    choice_count: int = 1
    timeout: float = 120.0
    retries: int = 3
    backoff: float = 1.0


@dataclass
class EmbeddingConfig:
    """
    Embedding provider for the documentation knowledge base.
    """

    kind: str = "hashing"
    """`hashing` (local, deterministic) or `http`."""
    endpoint: str = ""
    model: str = "BAAI/bge-base-en-v1.5"
    api_key_env: str = ""
    dimension: int = 256
    timeout: float = 60.0
    retries: int = 3
    backoff: float = 1.0


@dataclass
class RetrievalConfig:
    docs_k: int = 2
    code_k: int = 3
    paragraph_floor: int = 200
    index_file: str = "kb.json"


@dataclass
class ToolchainConfig:
    """
    C++ compiler and coverage tooling.
    """

    compiler: str = "clang"
    """Name of a `cutgen.toolchains.Toolchain`: `clang` or `gcc`."""
    cxx: Optional[str] = None
    """Compiler executable, if not the toolchain's default."""
    default_std: str = "17"
    compile_timeout: float = 120.0
    exec_timeout: float = 10.0
    coverage: bool = True
    extra_flags: List[str] = field(default_factory=list)
    link_flags: List[str] = field(default_factory=list)
    build_command: List[str] = field(default_factory=list)
    """Run once before compiling tests, e.g. `[cmake, --build, build]`."""
    link_inputs: List[str] = field(default_factory=list)
    """Libraries or objects produced by `build_command`, linked instead of project sources."""
    libclang: Optional[str] = None
    """Path to the libclang shared library, if the bundled one isn't wanted."""


@dataclass
class AblationConfig:
    """
    Switches to leave out individual pipeline inputs or repair phases.
    """

    config_dependencies: bool = True
    cross_file_dependencies: bool = True
    intention_context: bool = True
    refinement: bool = True
    phase1: bool = True
    phase2: bool = True
    phase3: bool = True


@dataclass
class RunConfig:
    """
    Complete configuration for a run.
    """

    root: Path = Path(".")
    test_dir: str = "test"
    include_roots: List[str] = field(default_factory=list)
    exclude_dirs: List[str] = field(default_factory=lambda: ["build", ".git", "cmake-build-*"])
    output_dir: str = ".cutgen"
    workers: int = 4
    token_budget: int = 32000
    focal: Optional[str] = None
    mock_provider: Optional[str] = None
    save_transcripts: bool = False
    rebuild_kb: bool = False
    dump_focal: Optional[str] = None
    dump_deps: Optional[str] = None
    """Focal id whose dependencies `scan` prints."""
    out: Optional[str] = None
    filters: FilterConfig = field(default_factory=FilterConfig)
    provider: ProviderConfig = field(default_factory=ProviderConfig)
    embedding: EmbeddingConfig = field(default_factory=EmbeddingConfig)
    retrieval: RetrievalConfig = field(default_factory=RetrievalConfig)
    toolchain: ToolchainConfig = field(default_factory=ToolchainConfig)
    ablation: AblationConfig = field(default_factory=AblationConfig)

    @property
    def test_path(self) -> Path:
        return self.root / self.test_dir

    @property
    def include_paths(self) -> List[Path]:
        return [self.root / path for path in self.include_roots]

    @property
    def output_path(self) -> Path:
        path = Path(self.output_dir)
        return path if path.is_absolute() else self.root / path

    def validate(self) -> "RunConfig":
        """
        Check cross-field constraints, returning `self` for chaining.
        """
        if not self.root.is_dir():
            raise ConfigError("Project root {} doesn't exist or isn't a directory".format(self.root))
        try:
            self.test_path.resolve().relative_to(self.root.resolve())
        except ValueError:
            raise ConfigError("test_dir {} isn't under the project root".format(self.test_dir))
        for name in ("workers", "token_budget"):
            if getattr(self, name) < 1:
                raise ConfigError("{} must be at least 1".format(name))
        if self.filters.min_body_lines < 1:
            raise ConfigError("filters.min_body_lines must be at least 1")
        unknown = set(self.filters.visibility) - {"public", "protected", "private"}
        if unknown:
            raise ConfigError("Unknown visibility in filters.visibility: {}".format(", ".join(sorted(unknown))))
        if self.embedding.kind not in ("hashing", "http"):
            raise ConfigError("embedding.kind must be 'hashing' or 'http'")
        if self.retrieval.docs_k < 1:
            raise ConfigError("retrieval.docs_k must be at least 1")
        return self


def _check_type(value: Any, default: Any, key: str) -> Any:
    if default is None or value is None:
        return value
    if isinstance(default, bool):
        ok = isinstance(value, bool)
    elif isinstance(default, float):
        ok = isinstance(value, (int, float)) and not isinstance(value, bool)
        value = float(value) if ok else value
    elif isinstance(default, int):
        ok = isinstance(value, int) and not isinstance(value, bool)
    elif isinstance(default, list):
        ok = isinstance(value, list)
        value = [str(item) for item in value] if ok else value
    elif isinstance(default, Path):
        ok = isinstance(value, str)
        value = Path(value) if ok else value
    elif isinstance(default, str):
        ok = isinstance(value, (str, int, float)) and not isinstance(value, bool)
        value = str(value) if ok else value
    else:
        ok = True
    if not ok:
        raise ConfigError("{}: expected {}, got {!r}".format(key, type(default).__name__, value))
    return value


def _build(cls: Type[_T], data: Mapping[str, Any], prefix: str = "") -> _T:
    if not isinstance(data, Mapping):
        raise ConfigError("{}: expected a mapping".format(prefix.rstrip(".") or "config"))
    defaults = cls()
    known = {item.name: item for item in fields(cls)}
    unknown = sorted(set(data) - set(known))
    if unknown:
        raise ConfigError("Unknown config key: {}".format(", ".join(prefix + key for key in unknown)))
    values: Dict[str, Any] = {}
    for name, value in data.items():
        default = getattr(defaults, name)
        if is_dataclass(default):
            values[name] = _build(type(default), value or {}, prefix + name + ".")
        else:
            values[name] = _check_type(value, default, prefix + name)
    return replace(defaults, **values)


def _environ(config: RunConfig) -> RunConfig:
    provider = config.provider
    endpoint = os.getenv("CUTGEN_LLM_ENDPOINT")
    model = os.getenv("CUTGEN_LLM_MODEL")
    if endpoint or model:
        provider = replace(provider, endpoint=endpoint or provider.endpoint, model=model or provider.model)
    embedding = config.embedding
    embed_endpoint = os.getenv("CUTGEN_EMBEDDING_ENDPOINT")
    if embed_endpoint:
        embedding = replace(embedding, endpoint=embed_endpoint)
    return replace(config, provider=provider, embedding=embedding)


def load_config(path: Optional[Path] = None, **overrides: Any) -> RunConfig:
    """
    Load and validate a config file, applying environment and keyword overrides.

    Without a file, defaults apply and `root` must come from the overrides.  Relative paths in
    the file are resolved against the file's directory.
    """
    data: Dict[str, Any] = {}
    base = Path.cwd()
    if path is not None:
        try:
            with open(path) as f:
                data = yaml.safe_load(f) or {}
        except OSError as ex:
            raise ConfigError("Can't read config file {}: {}".format(path, ex))
        except yaml.YAMLError as ex:
            raise ConfigError("Invalid YAML in {}: {}".format(path, ex))
        base = Path(path).resolve().parent
    config = _build(RunConfig, data)
    for key, value in overrides.items():
        if value is None:
            continue
        if not hasattr(config, key):
            raise ConfigError("Unknown config key: {}".format(key))
        default = getattr(RunConfig(), key)
        if is_dataclass(default) and isinstance(value, Mapping):
            built = _build(type(default), value, key + ".")
            value = replace(getattr(config, key), **{name: getattr(built, name) for name in value})
        else:
            value = _check_type(value, default, key)
        config = replace(config, **{key: value})
    root = config.root if config.root.is_absolute() else base / config.root
    config = replace(config, root=root.resolve())
    config = _environ(config)
    LOG.debug("Loaded config for %s", config.root)
    return config.validate()


def read_secret(env: str) -> Optional[str]:
    """
    Look up a secret by environment variable name; blank names and values count as unset.
    """
    if not env:
        return None
    return os.getenv(env) or None
