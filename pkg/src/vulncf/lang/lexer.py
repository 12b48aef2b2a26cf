"""Maximal-munch tokenizer for the mini-C subset."""

from __future__ import annotations

from dataclasses import dataclass

KEYWORDS = {"int", "char", "void", "if", "else", "while", "for", "return"}

# Multi-character operators first so maximal munch works by scanning this
# list in order.
_OPERATORS = [
    "==", "!=", "<=", ">=", "&&", "||", "<<", ">>",
    "+", "-", "*", "/", "%", "<", ">", "=", "!", "&", "|", "^", "~",
]
_PUNCT = ["(", ")", "{", "}", "[", "]", ";", ","]


class LexError(ValueError):
    def __init__(self, line: int, offset: int, char: str):
        self.line = line
        self.offset = offset
        self.char = char
        super().__init__(f"line {line}: unexpected character {char!r} at offset {offset}")


@dataclass(frozen=True)
class Token:
    kind: str  # keyword | ident | int | string | char | op | punct
    lexeme: str
    line: int
    start: int  # char offset into the source
    end: int


def tokenize(source: str) -> list[Token]:
    """Tokenize mini-C source; comments and whitespace are dropped.

    Raises LexError for any character outside the token set.
    """
    tokens: list[Token] = []
    i = 0
    line = 1
    n = len(source)
    while i < n:
        c = source[i]
        if c == "\n":
            line += 1
            i += 1
            continue
        if c in " \t\r":
            i += 1
            continue
        if source.startswith("//", i):
            j = source.find("\n", i)
            i = n if j < 0 else j
            continue
        if source.startswith("/*", i):
            j = source.find("*/", i + 2)
            if j < 0:
                raise LexError(line, i, "/*")
            line += source.count("\n", i, j)
            i = j + 2
            continue
        if c.isalpha() or c == "_":
            j = i + 1
            while j < n and (source[j].isalnum() or source[j] == "_"):
                j += 1
            lexeme = source[i:j]
            kind = "keyword" if lexeme in KEYWORDS else "ident"
            tokens.append(Token(kind, lexeme, line, i, j))
            i = j
            continue
        if c.isdigit():
            j = i + 1
            while j < n and source[j].isdigit():
                j += 1
            tokens.append(Token("int", source[i:j], line, i, j))
            i = j
            continue
        if c == '"' or c == "'":
            j = i + 1
            while j < n and source[j] != c:
                if source[j] == "\\":
                    j += 1
                if source[j] == "\n":
                    raise LexError(line, i, c)
                j += 1
            if j >= n:
                raise LexError(line, i, c)
            kind = "string" if c == '"' else "char"
            tokens.append(Token(kind, source[i : j + 1], line, i, j + 1))
            i = j + 1
            continue
        matched = False
        for op in _OPERATORS:
            if source.startswith(op, i):
                tokens.append(Token("op", op, line, i, i + len(op)))
                i += len(op)
                matched = True
                break
        if matched:
            continue
        if c in _PUNCT:
            tokens.append(Token("punct", c, line, i, i + 1))
            i += 1
            continue
        raise LexError(line, i, c)
    return tokens
