from .lexer import LexError, Token, tokenize
from .parser import ParseError, parse, parse_tokens
from .cpg import (
    CodePropertyGraph,
    CpgEdge,
    CpgNode,
    FormatError,
    GraphInvariantError,
    NODE_KINDS,
    STATEMENT_KINDS,
    assemble_cpg,
    build_cfg,
    build_dfg,
    deserialize_cpg,
    serialize_cpg,
)

__all__ = [
    "LexError", "Token", "tokenize",
    "ParseError", "parse", "parse_tokens",
    "CodePropertyGraph", "CpgEdge", "CpgNode",
    "FormatError", "GraphInvariantError",
    "NODE_KINDS", "STATEMENT_KINDS",
    "assemble_cpg", "build_cfg", "build_dfg",
    "deserialize_cpg", "serialize_cpg",
]
