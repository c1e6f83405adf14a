"""
Lexical helpers for C++ source text.

Everything here works on plain text without a syntax backend: masking comments and literals,
finding include directives, balancing brackets and splitting call arguments.  Masked text always
has the same length as its source, so offsets found in one are valid in the other.
"""

from dataclasses import dataclass
from pathlib import Path
import re
from typing import List, Optional, Tuple

from typing_extensions import Literal


OPENERS = {"(": ")", "[": "]", "{": "}"}
CLOSERS = {v: k for k, v in OPENERS.items()}

_INCLUDE = re.compile(r"^[ \t]*#[ \t]*include\b", re.MULTILINE)
_INCLUDE_TARGET = re.compile(r"#[ \t]*include[ \t]*(<([^>\n]+)>|\"([^\"\n]+)\")")
_FENCE = re.compile(r"```[^\n`]*\n(.*?)```", re.DOTALL)
_LINE_END = re.compile(r"(?<=\n)")


def read_source(path: Path) -> str:
    """
    Read a source file, keeping undecodable bytes intact so slices round-trip to the file.
    """
    return path.read_bytes().decode("utf-8", errors="surrogateescape")


def split_lines(text: str) -> List[str]:
    """
    Lines of `text` with their terminators, breaking only on `\\n` as compilers count lines.
    """
    return [line for line in _LINE_END.split(text) if line]


def line_slice(text: str, start: int, end: int) -> str:
    """
    Lines `start` to `end` (1-based, inclusive) of `text`, line terminators included.
    """
    return "".join(split_lines(text)[start - 1:end])


def _blank(chars: List[str], start: int, end: int):
    for pos in range(start, end):
        if chars[pos] != "\n":
            chars[pos] = " "


def mask(text: str) -> str:
    """
    Replace comments and the contents of string and character literals with spaces.

    Quote characters of literals are kept, newlines are never touched.
    """
    return _scan(text)[0]


def find_comments(text: str) -> List[Tuple[int, int]]:
    """
    Offsets `(start, end)` of every comment, in source order.
    """
    return _scan(text)[1]


def _in_number(text: str, pos: int) -> bool:
    start = pos
    while start and (text[start - 1].isalnum() or text[start - 1] in "_."):
        start -= 1
    return start < pos and text[start].isdigit()


def _scan(text: str) -> Tuple[str, List[Tuple[int, int]]]:
    comments: List[Tuple[int, int]] = []
    chars = list(text)
    pos, size = 0, len(text)
    while pos < size:
        char = text[pos]
        if text.startswith("//", pos):
            end = text.find("\n", pos)
            end = size if end < 0 else end
            comments.append((pos, end))
            _blank(chars, pos, end)
            pos = end
        elif text.startswith("/*", pos):
            end = text.find("*/", pos + 2)
            end = size if end < 0 else end + 2
            comments.append((pos, end))
            _blank(chars, pos, end)
            pos = end
        elif char == '"' and pos and text[pos - 1] == "R":
            paren = text.find("(", pos)
            delim = text[pos + 1:paren] if paren >= 0 else ""
            end = text.find(")" + delim + '"', pos) if paren >= 0 else -1
            end = size if end < 0 else end + len(delim) + 1
            _blank(chars, pos + 1, end)
            pos = end + 1
        elif char == "'" and _in_number(text, pos):
            # Digit separator, as in 1'000'000; u8'a' is still a literal.
            pos += 1
        elif char in "\"'":
            end = pos + 1
            while end < size and text[end] not in (char, "\n"):
                end += 2 if text[end] == "\\" else 1
            end = min(end, size)
            _blank(chars, pos + 1, end)
            pos = end + 1
        else:
            pos += 1
    return "".join(chars), comments


@dataclass(frozen=True)
class Include:
    """
    One `#include` directive.
    """

    line: int
    """1-based line number of the directive."""
    form: Literal["angle", "quote"]
    path: str
    """Path as written between the delimiters."""
    text: str
    """The directive line, without its terminator."""

    @property
    def directive(self) -> str:
        """
        Normalised directive text, e.g. `#include <string>` or `#include "node.h"`.
        """
        if self.form == "angle":
            return "#include <{}>".format(self.path)
        else:
            return '#include "{}"'.format(self.path)


def find_includes(text: str, masked: Optional[str] = None) -> List[Include]:
    """
    Find include directives outside comments, in source order.
    """
    masked = mask(text) if masked is None else masked
    includes: List[Include] = []
    for match in _INCLUDE.finditer(masked):
        line_end = text.find("\n", match.start())
        line_text = text[match.start():line_end if line_end >= 0 else len(text)].rstrip("\r")
        target = _INCLUDE_TARGET.search(line_text)
        if not target:
            continue
        line = text.count("\n", 0, match.start()) + 1
        if target.group(2) is not None:
            includes.append(Include(line, "angle", target.group(2).strip(), line_text))
        else:
            includes.append(Include(line, "quote", target.group(3).strip(), line_text))
    return includes


def missing_closers(masked: str) -> str:
    """
    Closing brackets needed, innermost first, to balance every unmatched opener.

    Stray closers are ignored: appending text can't repair them.
    """
    stack: List[str] = []
    for char in masked:
        if char in OPENERS:
            stack.append(char)
        elif char in CLOSERS and stack and stack[-1] == CLOSERS[char]:
            stack.pop()
    return "".join(OPENERS[char] for char in reversed(stack))


def matching_close(masked: str, open_pos: int) -> Optional[int]:
    """
    Offset of the bracket closing the one at `open_pos`, or `None` if it never closes.
    """
    depth = 0
    for pos in range(open_pos, len(masked)):
        char = masked[pos]
        if char in OPENERS:
            depth += 1
        elif char in CLOSERS:
            depth -= 1
            if depth == 0:
                return pos
    return None


def split_arguments(text: str, masked: str, open_pos: int) -> Optional[Tuple[List[str], int]]:
    """
    Split the parenthesised argument list opening at `open_pos` on its top-level commas.

    Returns the stripped argument texts (empty list for `()`) and the offset of the closing
    parenthesis, or `None` when the list never closes.
    """
    close = matching_close(masked, open_pos)
    if close is None:
        return None
    args: List[str] = []
    depth = 0
    start = open_pos + 1
    for pos in range(open_pos + 1, close):
        char = masked[pos]
        if char in OPENERS:
            depth += 1
        elif char in CLOSERS:
            depth -= 1
        elif char == "," and depth == 0:
            args.append(text[start:pos].strip())
            start = pos + 1
    last = text[start:close].strip()
    if args or last:
        args.append(last)
    return args, close


def fenced_blocks(text: str) -> List[str]:
    """
    Contents of every fenced (triple-backtick) code block, in order.
    """
    return [match.group(1) for match in _FENCE.finditer(text)]
