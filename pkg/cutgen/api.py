"""
Typing protocols for the pluggable backends: syntax parsing, chat completion and embedding.
"""

from pathlib import Path
from typing import TYPE_CHECKING, List, Optional, Sequence

from typing_extensions import Protocol

if TYPE_CHECKING:
    from .llm import LLMRequest, LLMResponse
    from .syntax import SyntaxTree


class SyntaxBackend(Protocol):
    def parse(self, path: Path, text: Optional[str] = ...) -> "SyntaxTree": ...


class LLMProvider(Protocol):
    name: str
    def complete(self, request: "LLMRequest") -> "LLMResponse": ...


class EmbeddingProvider(Protocol):
    name: str
    def dimension(self) -> int: ...
    def embed(self, texts: Sequence[str]) -> List[List[float]]: ...
