"""Workflow language front end: tokenizer, parser, syntax tree, printer."""

from .lexer import KEYWORDS, Token, TokenKind, tokenize
from .nodes import (
    Assign,
    BareInvocation,
    Compose,
    DataflowStatement,
    Description,
    FeedScalar,
    FeedVariable,
    Interface,
    Invocation,
    Literal,
    PortDef,
    Pos,
    Retrieve,
    SchemaDef,
    ServiceDef,
    TupleExpr,
    VarDecl,
    VarRef,
    WorkflowSpec,
)
from .parser import parse, parse_source
from .render import render

__all__ = [
    "KEYWORDS", "Token", "TokenKind", "tokenize", "parse", "parse_source", "render",
    "Assign", "BareInvocation", "Compose", "DataflowStatement", "Description",
    "FeedScalar", "FeedVariable", "Interface", "Invocation", "Literal", "PortDef",
    "Pos", "Retrieve", "SchemaDef", "ServiceDef", "TupleExpr", "VarDecl", "VarRef",
    "WorkflowSpec",
]
