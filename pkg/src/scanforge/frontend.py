"""Lexical extraction of pragmas, imports and top-level declarations.

Nothing here builds an AST.  Source text is first *scrubbed* (comments and
string-literal contents replaced by blanks, offsets preserved) and the
directives are then matched on the scrubbed text, so an ``import`` inside a
comment or a string never shows up.
"""

from __future__ import annotations

import enum
import hashlib
import posixpath
import re
from dataclasses import dataclass
from typing import NamedTuple

from .errors import LexicalError, ParseError, ScanforgeError
from .versions import VersionConstraint, parse_constraint


class DecodeError(ScanforgeError):
    """A source file that is not valid UTF-8."""


class ImportForm(str, enum.Enum):
    PLAIN = "plain"
    ALIASED = "aliased"
    SYMBOL_LIST = "symbol-list"
    GLOB_ALIASED = "glob-aliased"


class DeclKind(str, enum.Enum):
    CONTRACT = "contract"
    LIBRARY = "library"
    INTERFACE = "interface"
    ABSTRACT = "abstract-contract"


@dataclass(frozen=True)
class ImportDirective:
    raw_path: str
    form: ImportForm
    offset: int

    def __post_init__(self):
        if not self.raw_path:
            raise ValueError("import path must be non-empty")


class Declaration(NamedTuple):
    name: str
    kind: DeclKind


@dataclass(frozen=True)
class SourceFile:
    path: str
    content_hash: str
    pragmas: tuple[VersionConstraint, ...]
    imports: tuple[ImportDirective, ...]
    declarations: tuple[Declaration, ...]
    lines: int = 0

    @property
    def deployable(self) -> bool:
        """True when the file declares at least one concrete contract."""
        return any(d.kind is DeclKind.CONTRACT for d in self.declarations)


def normalize_path(path: str) -> str:
    """Project-relative, forward-slash path without ``.``/``..`` segments."""
    p = path.replace("\\", "/")
    if p.startswith("/"):
        raise ValueError(f"expected a relative path: {path!r}")
    p = posixpath.normpath(p)
    if p == ".." or p.startswith("../"):
        raise ValueError(f"path escapes the project root: {path!r}")
    return p


def scrub(text: str) -> str:
    """Blank out comments and string-literal contents, keeping every offset.

    Newlines inside block comments are kept so line numbers survive too.
    Quote characters stay in place; only what lies between them is blanked.
    """
    out = list(text)
    n = len(text)
    i = 0
    while i < n:
        ch = text[i]
        if ch == "/" and i + 1 < n and text[i + 1] == "/":
            while i < n and text[i] != "\n":
                out[i] = " "
                i += 1
        elif ch == "/" and i + 1 < n and text[i + 1] == "*":
            end = text.find("*/", i + 2)
            if end < 0:
                line = text.count("\n", 0, i) + 1
                raise LexicalError("unterminated block comment", line)
            for j in range(i, end + 2):
                if text[j] != "\n":
                    out[j] = " "
            i = end + 2
        elif ch in "\"'":
            i += 1
            while i < n and text[i] != ch and text[i] != "\n":
                if text[i] == "\\" and i + 1 < n and text[i + 1] != "\n":
                    out[i] = " "
                    i += 1
                out[i] = " "
                i += 1
            i += 1
        else:
            i += 1
    return "".join(out)


_PRAGMA = re.compile(r"(?<![\w$.])pragma\s+solidity(?![\w$])")
_IMPORT = re.compile(r"(?<![\w$.])import(?![\w$])")
_Q = r"""(?:"(?P<{0}>[^"\n]*)"|'(?P<{0}2>[^'\n]*)')"""
_ID = r"[A-Za-z_$][\w$]*"
_IMPORT_FORMS = [
    (ImportForm.PLAIN, re.compile(r"import\s*" + _Q.format("p") + r"\s*\Z")),
    (ImportForm.ALIASED, re.compile(r"import\s*" + _Q.format("p") + rf"\s*as\s+{_ID}\s*\Z")),
    (
        ImportForm.GLOB_ALIASED,
        re.compile(rf"import\s*\*\s*as\s+{_ID}\s+from\s*" + _Q.format("p") + r"\s*\Z"),
    ),
    (
        ImportForm.SYMBOL_LIST,
        re.compile(r"import\s*\{[^{}]*\}\s*from\s*" + _Q.format("p") + r"\s*\Z"),
    ),
]
_DECL = re.compile(
    rf"[{{}}]|(?<![\w$.])(abstract\s+contract|contract|library|interface)\s+({_ID})"
)


def pragma_offsets(text: str) -> list[int]:
    return [m.start() for m in _PRAGMA.finditer(text)]


def extract_pragmas(text: str) -> list[VersionConstraint]:
    """Version constraints of every ``pragma solidity`` directive, in file order."""
    found = []
    for m in _PRAGMA.finditer(text):
        semi = text.find(";", m.end())
        if semi < 0:
            raise ParseError("pragma without terminating ';'", m.start())
        found.append(parse_constraint(text[m.end():semi], offset=m.end()))
    return found


def extract_imports(text: str, original: str | None = None) -> list[ImportDirective]:
    """Import directives found in scrubbed ``text``.

    Paths are read back from ``original`` at the same offsets, since scrubbing
    blanks string contents.  ``original`` defaults to ``text``.
    """
    src = text if original is None else original
    found = []
    for m in _IMPORT.finditer(text):
        start = m.start()
        semi = text.find(";", m.end())
        if semi < 0:
            raise ParseError("import without terminating ';'", start)
        stmt = text[start:semi]
        for form, pattern in _IMPORT_FORMS:
            sm = pattern.match(stmt)
            if sm:
                break
        else:
            raise ParseError(f"unsupported import syntax: {stmt.strip()!r}", start)
        group = "p" if sm.group("p") is not None else "p2"
        a, b = sm.span(group)
        raw = src[start + a:start + b]
        if not raw:
            raise ParseError("empty import path", start)
        found.append(ImportDirective(raw, form, start))
    return found


def extract_declarations(text: str) -> list[Declaration]:
    depth = 0
    found = []
    for m in _DECL.finditer(text):
        tok = m.group(0)
        if tok == "{":
            depth += 1
        elif tok == "}":
            depth = max(0, depth - 1)
        elif depth == 0:
            keyword = m.group(1)
            kind = DeclKind.ABSTRACT if keyword.startswith("abstract") else DeclKind(keyword)
            found.append(Declaration(m.group(2), kind))
    return found


def parse_source(path: str, data: bytes) -> SourceFile:
    """Build a :class:`SourceFile` from raw bytes.

    Raises :class:`DecodeError` for non UTF-8 input and lexical/parse errors
    for malformed directives.
    """
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise DecodeError(f"{path}: not valid UTF-8 ({exc.reason} at byte {exc.start})") from None
    clean = scrub(text)
    return SourceFile(
        path=normalize_path(path),
        content_hash=hashlib.sha256(data).hexdigest(),
        pragmas=tuple(extract_pragmas(clean)),
        imports=tuple(extract_imports(clean, text)),
        declarations=tuple(extract_declarations(clean)),
        lines=len(text.splitlines()),
    )
