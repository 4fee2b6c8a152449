"""Line-oriented tokenizer for workflow source text."""

from __future__ import annotations

import enum
from dataclasses import dataclass

from ..errors import LexError

KEYWORDS = frozenset(
    {
        "description", "service", "port", "schema", "is", "input", "output",
        "any", "int", "double", "float", "decimal", "byte", "boolean",
        "string", "long", "short",
    }
)

BOOLEAN_LITERALS = frozenset({"true", "false"})


class TokenKind(enum.Enum):
    KEYWORD = "keyword"
    IDENT = "identifier"
    SCALAR = "scalar-literal"
    URL = "url"
    ARROW = "arrow"
    DOT = "dot"
    COMMA = "comma"
    COLON = "colon"
    EQUALS = "equals"
    LPAREN = "lparen"
    RPAREN = "rparen"
    NEWLINE = "newline"
    EOF = "eof"


@dataclass(frozen=True)
class Token:
    kind: TokenKind
    lexeme: str
    line: int
    column: int

    def describe(self) -> str:
        if self.kind is TokenKind.EOF:
            return "end of input"
        if self.kind is TokenKind.NEWLINE:
            return "end of line"
        return repr(self.lexeme)


_PUNCT = {
    ".": TokenKind.DOT,
    ",": TokenKind.COMMA,
    ":": TokenKind.COLON,
    "=": TokenKind.EQUALS,
    "(": TokenKind.LPAREN,
    ")": TokenKind.RPAREN,
}

_URL_LEADERS = ("description", "schema")


def _is_ident_start(ch: str) -> bool:
    return ("a" <= ch <= "z") or ("A" <= ch <= "Z")


def _is_ident_char(ch: str) -> bool:
    return _is_ident_start(ch) or ch.isdigit() and ch.isascii() or ch == "_"


def tokenize(source: str) -> list[Token]:
    """Split ``source`` into tokens, ending with an EOF token.

    Blank lines and ``#`` comments produce nothing; runs of line breaks
    collapse into a single NEWLINE token.  Inside ``description`` and
    ``schema`` definitions everything after ``is`` up to the end of the line
    becomes one URL token.
    """
    tokens: list[Token] = []
    line_tokens: list[Token] = []
    i, line, col = 0, 1, 1
    n = len(source)

    def emit(kind: TokenKind, lexeme: str, ln: int, cl: int) -> None:
        tok = Token(kind, lexeme, ln, cl)
        tokens.append(tok)
        line_tokens.append(tok)

    while i < n:
        ch = source[i]
        if ch == "\n":
            if tokens and tokens[-1].kind is not TokenKind.NEWLINE:
                tokens.append(Token(TokenKind.NEWLINE, "\n", line, col))
            line_tokens.clear()
            i += 1
            line += 1
            col = 1
            continue
        if ch in " \t\r\f\v" or ch == "\ufeff":
            i += 1
            col += 1
            continue
        if ch == "#":
            while i < n and source[i] != "\n":
                i += 1
            continue

        if _url_position(line_tokens):
            end = source.find("\n", i)
            end = n if end == -1 else end
            raw = source[i:end].rstrip()
            emit(TokenKind.URL, raw, line, col)
            col += end - i
            i = end
            continue

        start_col = col
        if _is_ident_start(ch):
            j = i + 1
            while j < n and _is_ident_char(source[j]):
                j += 1
            word = source[i:j]
            if word in KEYWORDS:
                kind = TokenKind.KEYWORD
            elif word in BOOLEAN_LITERALS:
                kind = TokenKind.SCALAR
            else:
                kind = TokenKind.IDENT
            emit(kind, word, line, start_col)
            col += j - i
            i = j
            continue

        if ch == "-" and i + 1 < n and source[i + 1] == ">":
            emit(TokenKind.ARROW, "->", line, start_col)
            i += 2
            col += 2
            continue

        if ch.isdigit() and ch.isascii() or (ch == "-" and i + 1 < n and source[i + 1].isdigit()):
            j = i + 1
            while j < n and source[j].isdigit() and source[j].isascii():
                j += 1
            if j + 1 < n and source[j] == "." and source[j + 1].isdigit():
                j += 1
                while j < n and source[j].isdigit() and source[j].isascii():
                    j += 1
            emit(TokenKind.SCALAR, source[i:j], line, start_col)
            col += j - i
            i = j
            continue

        if ch == '"':
            j = i + 1
            while j < n and source[j] != '"':
                if source[j] == "\n":
                    break
                j += 2 if source[j] == "\\" else 1
            if j >= n or source[j] != '"':
                raise LexError(line, start_col, ch)
            emit(TokenKind.SCALAR, source[i : j + 1], line, start_col)
            col += j + 1 - i
            i = j + 1
            continue

        if ch in _PUNCT:
            emit(_PUNCT[ch], ch, line, start_col)
            i += 1
            col += 1
            continue

        raise LexError(line, col, ch)

    tokens.append(Token(TokenKind.EOF, "", line, col))
    return tokens


def _url_position(line_tokens: list[Token]) -> bool:
    return (
        len(line_tokens) == 3
        and line_tokens[0].kind is TokenKind.KEYWORD
        and line_tokens[0].lexeme in _URL_LEADERS
        and line_tokens[2].kind is TokenKind.KEYWORD
        and line_tokens[2].lexeme == "is"
    )


_ESCAPES = {'"': '"', "\\": "\\", "n": "\n", "t": "\t"}


def decode_string(lexeme: str) -> str:
    """Turn a quoted string literal lexeme into its text."""
    body = lexeme[1:-1]
    out: list[str] = []
    i = 0
    while i < len(body):
        ch = body[i]
        if ch == "\\" and i + 1 < len(body):
            out.append(_ESCAPES.get(body[i + 1], body[i + 1]))
            i += 2
        else:
            out.append(ch)
            i += 1
    return "".join(out)


def encode_string(text: str) -> str:
    escaped = text.replace("\\", "\\\\").replace('"', '\\"').replace("\n", "\\n").replace("\t", "\\t")
    return f'"{escaped}"'
