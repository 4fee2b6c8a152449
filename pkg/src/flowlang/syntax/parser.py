"""Recursive descent parser, one method per grammar production."""

from __future__ import annotations

from ..errors import ParseError
from ..typesys import BASE_TYPES, BaseType, ComplexType
from .lexer import Token, TokenKind, decode_string, tokenize
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

_DEFINITION_KEYWORDS = ("description", "service", "port", "schema")


class Parser:
    def __init__(self, tokens: list[Token]) -> None:
        if not tokens or tokens[-1].kind is not TokenKind.EOF:
            raise ValueError("token stream must end with EOF")
        self.tokens = tokens
        self.pos = 0

    # -- token helpers -------------------------------------------------

    @property
    def tok(self) -> Token:
        return self.tokens[self.pos]

    def peek(self, offset: int = 1) -> Token:
        return self.tokens[min(self.pos + offset, len(self.tokens) - 1)]

    def advance(self) -> Token:
        tok = self.tok
        if tok.kind is not TokenKind.EOF:
            self.pos += 1
        return tok

    def at(self, kind: TokenKind, lexeme: str | None = None) -> bool:
        return self.tok.kind is kind and (lexeme is None or self.tok.lexeme == lexeme)

    def at_keyword(self, *words: str) -> bool:
        return self.tok.kind is TokenKind.KEYWORD and self.tok.lexeme in words

    def fail(self, *expected: str) -> ParseError:
        return ParseError(self.tok.line, self.tok.column, list(expected), self.tok.describe())

    def expect(self, kind: TokenKind, what: str, lexeme: str | None = None) -> Token:
        if not self.at(kind, lexeme):
            raise self.fail(what)
        return self.advance()

    def skip_newlines(self) -> None:
        while self.at(TokenKind.NEWLINE):
            self.advance()

    def end_of_statement(self) -> None:
        if self.at(TokenKind.EOF):
            return
        self.expect(TokenKind.NEWLINE, "end of line")

    @staticmethod
    def where(tok: Token) -> Pos:
        return Pos(tok.line, tok.column)

    # -- productions ---------------------------------------------------

    def specification(self) -> WorkflowSpec:
        self.skip_newlines()
        descriptions: list[Description] = []
        services: list[ServiceDef] = []
        ports: list[PortDef] = []
        schemas: list[SchemaDef] = []
        while self.at_keyword(*_DEFINITION_KEYWORDS):
            word = self.tok.lexeme
            if word == "description":
                descriptions.append(self.description())
            elif word == "service":
                services.append(self.service())
            elif word == "port":
                ports.append(self.port())
            else:
                schemas.append(self.schema())
            self.skip_newlines()
        interface = self.interface()
        statements = self.dataflow()
        return WorkflowSpec(
            tuple(descriptions), tuple(services), tuple(ports), tuple(schemas), interface, statements
        )

    def _url_definition(self) -> tuple[Token, str, str]:
        head = self.advance()
        name = self.expect(TokenKind.IDENT, "identifier").lexeme
        self.expect(TokenKind.KEYWORD, "'is'", "is")
        url = self.expect(TokenKind.URL, "URL").lexeme
        self.end_of_statement()
        return head, name, url

    def _dotted_definition(self) -> tuple[Token, str, str, str]:
        head = self.advance()
        name = self.expect(TokenKind.IDENT, "identifier").lexeme
        self.expect(TokenKind.KEYWORD, "'is'", "is")
        left = self.expect(TokenKind.IDENT, "identifier").lexeme
        self.expect(TokenKind.DOT, "'.'")
        right = self.expect(TokenKind.IDENT, "identifier").lexeme
        self.end_of_statement()
        return head, name, left, right

    def description(self) -> Description:
        head, name, url = self._url_definition()
        return Description(name, url, self.where(head))

    def schema(self) -> SchemaDef:
        head, name, url = self._url_definition()
        return SchemaDef(name, url, self.where(head))

    def service(self) -> ServiceDef:
        head, name, desc, svc = self._dotted_definition()
        return ServiceDef(name, desc, svc, self.where(head))

    def port(self) -> PortDef:
        head, name, svc, port = self._dotted_definition()
        return PortDef(name, svc, port, self.where(head))

    def interface(self) -> Interface:
        if not self.at_keyword("input"):
            raise self.fail("definition", "'input'")
        inputs = self.variable_block("input")
        if not self.at_keyword("output"):
            raise self.fail("type", "'output'")
        outputs = self.variable_block("output")
        return Interface(inputs, outputs)

    def variable_block(self, keyword: str) -> tuple[VarDecl, ...]:
        self.expect(TokenKind.KEYWORD, f"'{keyword}'", keyword)
        self.expect(TokenKind.COLON, "':'")
        self.skip_newlines()
        decls: list[VarDecl] = []
        while self.at_type_start():
            decls.extend(self.variables())
            self.end_of_statement()
            self.skip_newlines()
        return tuple(decls)

    def at_type_start(self) -> bool:
        if self.tok.kind is TokenKind.KEYWORD:
            return self.tok.lexeme in BASE_TYPES
        return self.tok.kind is TokenKind.IDENT and self.peek().kind is TokenKind.COLON

    def type_expr(self) -> BaseType | ComplexType:
        if self.tok.kind is TokenKind.KEYWORD and self.tok.lexeme in BASE_TYPES:
            return BaseType(self.advance().lexeme)
        schema = self.expect(TokenKind.IDENT, "type").lexeme
        self.expect(TokenKind.COLON, "':'")
        name = self.expect(TokenKind.IDENT, "type name").lexeme
        return ComplexType(schema, name)

    def variables(self) -> list[VarDecl]:
        t = self.type_expr()
        tok = self.expect(TokenKind.IDENT, "variable name")
        decls = [VarDecl(t, tok.lexeme, self.where(tok))]
        while self.at(TokenKind.COMMA):
            self.advance()
            tok = self.expect(TokenKind.IDENT, "variable name")
            decls.append(VarDecl(t, tok.lexeme, self.where(tok)))
        return decls

    def dataflow(self) -> tuple[DataflowStatement, ...]:
        statements: list[DataflowStatement] = []
        self.skip_newlines()
        while not self.at(TokenKind.EOF):
            statements.append(self.statement())
            self.end_of_statement()
            self.skip_newlines()
        return tuple(statements)

    def statement(self) -> DataflowStatement:
        first = self.tok
        here = self.where(first)
        if first.kind is TokenKind.SCALAR:
            scalar = self.literal()
            self.expect(TokenKind.ARROW, "'->'")
            return FeedScalar(scalar, self.invocation_list(), here)
        if first.kind is not TokenKind.IDENT:
            raise self.fail("variable", "invocation", "scalar")
        if self.peek().kind is TokenKind.DOT:
            source = self.invocation()
            if not self.at(TokenKind.ARROW):
                if source.parameter is not None:
                    raise self.fail("'->'")
                return BareInvocation(source, here)
            arrow = self.advance()
            if source.parameter is not None:
                raise ParseError(arrow.line, arrow.column, ["end of line"], "'->'")
            if self.at(TokenKind.IDENT) and self.peek().kind is TokenKind.DOT:
                return Compose(source, self.invocation_list(), here)
            if self.at(TokenKind.IDENT):
                return Retrieve(source, self.advance().lexeme, here)
            raise self.fail("variable", "invocation")
        name = self.advance().lexeme
        if self.at(TokenKind.EQUALS):
            self.advance()
            return Assign(name, self.assignment_rhs(), here)
        if self.at(TokenKind.ARROW):
            self.advance()
            return FeedVariable(name, self.invocation_list(), here)
        raise self.fail("'->'", "'='", "'.'")

    def invocation(self) -> Invocation:
        port = self.expect(TokenKind.IDENT, "invocation")
        self.expect(TokenKind.DOT, "'.'")
        op = self.expect(TokenKind.IDENT, "operation name").lexeme
        param = None
        if self.at(TokenKind.DOT):
            self.advance()
            param = self.expect(TokenKind.IDENT, "parameter name").lexeme
        return Invocation(port.lexeme, op, param, self.where(port))

    def invocation_list(self) -> tuple[Invocation, ...]:
        if not (self.at(TokenKind.IDENT) and self.peek().kind is TokenKind.DOT):
            raise self.fail("invocation")
        targets = [self.invocation()]
        while self.at(TokenKind.COMMA):
            self.advance()
            targets.append(self.invocation())
        return tuple(targets)

    def assignment_rhs(self) -> Literal | VarRef | TupleExpr:
        if self.at(TokenKind.SCALAR):
            return self.literal()
        if self.at(TokenKind.IDENT):
            tok = self.advance()
            return VarRef(tok.lexeme, self.where(tok))
        if self.at(TokenKind.LPAREN):
            open_tok = self.advance()
            elements = [self.tuple_element()]
            while self.at(TokenKind.COMMA):
                self.advance()
                elements.append(self.tuple_element())
            self.expect(TokenKind.RPAREN, "')'")
            return TupleExpr(tuple(elements), self.where(open_tok))
        raise self.fail("scalar", "variable", "'('")

    def tuple_element(self) -> VarRef | Literal:
        if self.at(TokenKind.SCALAR):
            return self.literal()
        if self.at(TokenKind.IDENT):
            tok = self.advance()
            return VarRef(tok.lexeme, self.where(tok))
        raise self.fail("variable", "scalar")

    def literal(self) -> Literal:
        tok = self.expect(TokenKind.SCALAR, "scalar")
        text = tok.lexeme
        here = self.where(tok)
        if text in ("true", "false"):
            return Literal("boolean", text == "true", here)
        if text.startswith('"'):
            return Literal("string", decode_string(text), here)
        if "." in text:
            return Literal("double", float(text), here)
        return Literal("int", int(text), here)


def parse(tokens: list[Token]) -> WorkflowSpec:
    """Parse a token stream (ending in EOF) into a :class:`WorkflowSpec`."""
    return Parser(tokens).specification()


def parse_source(source: str) -> WorkflowSpec:
    return parse(tokenize(source))
