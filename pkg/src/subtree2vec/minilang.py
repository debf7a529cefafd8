"""Recursive-descent parser for MiniLang, the small C-like language used for the
built-in corpus.  The grammar is documented in ``docs/minilang.md``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Optional

from .trees import Ast, AstNode, SourceSpan, renumber

TYPE_KEYWORDS = frozenset({"int", "long", "float", "double", "char", "bool", "void"})
KEYWORDS = TYPE_KEYWORDS | {"if", "else", "while", "for", "return"}

# binary operators by precedence, loosest first
BINARY_LEVELS = (
    ("||",),
    ("&&",),
    ("==", "!="),
    ("<", ">", "<=", ">="),
    ("+", "-"),
    ("*", "/", "%"),
)
ASSIGN_OPS = ("=", "+=", "-=", "*=", "/=", "%=")

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+|//[^\n]*|/\*.*?\*/)
  | (?P<int>\d+(?:\.\d+)?)
  | (?P<str>"(?:[^"\\\n]|\\.)*"|'(?:[^'\\\n]|\\.)*')
  | (?P<name>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op>\+\+|--|\+=|-=|\*=|/=|%=|==|!=|<=|>=|&&|\|\||[-+*/%<>=!(){}\[\];,.])
    """,
    re.VERBOSE | re.DOTALL,
)


class ParseError(ValueError):
    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"{line}:{column}: {message}")
        self.line = line
        self.column = column


@dataclass(frozen=True)
class Token:
    kind: str  # "int" (any number), "str" (string or char), "name", "op", "eof"
    text: str
    start: int
    end: int


def tokenize(source: str) -> list[Token]:
    tokens = []
    pos = 0
    while pos < len(source):
        m = _TOKEN_RE.match(source, pos)
        if m is None:
            line, col = _line_col(source, pos)
            raise ParseError(f"unexpected character {source[pos]!r}", line, col)
        kind = m.lastgroup
        if kind != "ws":
            tokens.append(Token(kind, m.group(), m.start(), m.end()))
        pos = m.end()
    tokens.append(Token("eof", "", len(source), len(source)))
    return tokens


def _line_col(source: str, pos: int) -> tuple[int, int]:
    line = source.count("\n", 0, pos) + 1
    return line, pos - (source.rfind("\n", 0, pos) + 1) + 1


class _Parser:
    def __init__(self, source: str):
        self.source = source
        self.tokens = tokenize(source)
        self.i = 0
        self.nodes: dict[int, AstNode] = {}
        self.spans: dict[int, tuple[int, int]] = {}

    # -- token helpers --

    @property
    def tok(self) -> Token:
        return self.tokens[self.i]

    def peek(self, k: int = 1) -> Token:
        return self.tokens[min(self.i + k, len(self.tokens) - 1)]

    def at(self, *texts: str) -> bool:
        t = self.tok
        return t.kind in ("op", "name") and t.text in texts

    def error(self, message: str, tok: Optional[Token] = None):
        tok = tok or self.tok
        line, col = _line_col(self.source, tok.start)
        found = "end of input" if tok.kind == "eof" else repr(tok.text)
        raise ParseError(f"{message}, found {found}", line, col)

    def expect(self, text: str) -> Token:
        if not self.at(text) or (self.tok.kind == "name" and text not in KEYWORDS):
            self.error(f"expected {text!r}")
        t = self.tok
        self.i += 1
        return t

    def expect_ident(self) -> Token:
        t = self.tok
        if t.kind != "name" or t.text in KEYWORDS:
            self.error("expected identifier")
        self.i += 1
        return t

    def at_type(self) -> bool:
        return self.tok.kind == "name" and self.tok.text in TYPE_KEYWORDS

    # -- node construction --

    def node(self, label: str, start: int, end: int, children=(), token=None) -> int:
        nid = len(self.nodes)
        self.nodes[nid] = AstNode(nid, label, token, tuple(children))
        self.spans[nid] = (start, end)
        return nid

    def span(self, nid: int) -> tuple[int, int]:
        return self.spans[nid]

    def wrap(self, label: str, child: int) -> int:
        start, end = self.span(child)
        return self.node(label, start, end, [child])

    # -- grammar --

    def program(self) -> int:
        if self.tok.kind == "eof":
            self.error("empty program")
        items = []
        while self.tok.kind != "eof":
            if self.at_type() and self.peek().kind == "name" and self.peek(2).text == "(":
                items.append(self.function())
            else:
                items.append(self.statement())
        return self.node("program", 0, len(self.source), items)

    def type_name(self) -> int:
        if not self.at_type():
            self.error("expected type name")
        t = self.tok
        self.i += 1
        text, end = t.text, t.end
        if self.at("[") and self.peek().text == "]":
            self.i += 1
            end = self.expect("]").end
            text += "[]"
        return self.node("type_name", t.start, end, token=text)

    def ident(self) -> int:
        t = self.expect_ident()
        return self.node("ident", t.start, t.end, token=t.text)

    def function(self) -> int:
        ret = self.type_name()
        name = self.ident()
        self.expect("(")
        params = []
        if not self.at(")"):
            while True:
                ptype = self.type_name()
                pname = self.ident()
                params.append(self.node("decl_stmt", self.span(ptype)[0], self.span(pname)[1],
                                        [ptype, pname]))
                if not self.at(","):
                    break
                self.i += 1
        self.expect(")")
        body = self.block()
        return self.node("function", self.span(ret)[0], self.span(body)[1],
                         [ret, name, *params, body])

    def block(self) -> int:
        start = self.expect("{").start
        stmts = []
        while not self.at("}"):
            if self.tok.kind == "eof":
                self.error("expected '}'")
            stmts.append(self.statement())
        end = self.expect("}").end
        return self.node("block", start, end, stmts)

    def statement(self) -> int:
        t = self.tok
        if self.at("{"):
            return self.block()
        if t.kind == "name":
            if t.text in TYPE_KEYWORDS:
                decl = self.declaration()
                end = self.expect(";").end
                return self._extend(decl, end)
            if t.text == "if":
                return self.if_stmt()
            if t.text == "while":
                return self.while_stmt()
            if t.text == "for":
                return self.for_stmt()
            if t.text == "return":
                return self.return_stmt()
            if t.text == "else":
                self.error("'else' without 'if'")
        if self.at(";"):
            self.error("expected statement")
        e = self.full_expr()
        end = self.expect(";").end
        return self.node("expr_stmt", self.span(e)[0], end, [e])

    def _extend(self, nid: int, end: int) -> int:
        self.spans[nid] = (self.spans[nid][0], end)
        return nid

    def declaration(self) -> int:
        ty = self.type_name()
        name = self.ident()
        children = [ty, name]
        end = self.span(name)[1]
        if self.at("="):
            self.i += 1
            init = self.full_expr()
            children.append(init)
            end = self.span(init)[1]
        return self.node("decl_stmt", self.span(ty)[0], end, children)

    def condition(self) -> int:
        self.expect("(")
        cond = self.wrap("condition", self.full_expr())
        self.expect(")")
        return cond

    def if_stmt(self) -> int:
        start = self.expect("if").start
        cond = self.condition()
        then = self.statement()
        children = [cond, then]
        if self.at("else"):
            self.i += 1
            children.append(self.statement())
        return self.node("if", start, self.span(children[-1])[1], children)

    def while_stmt(self) -> int:
        start = self.expect("while").start
        cond = self.condition()
        body = self.statement()
        return self.node("while", start, self.span(body)[1], [cond, body])

    def for_stmt(self) -> int:
        start = self.expect("for").start
        self.expect("(")
        children = []
        if not self.at(";"):
            children.append(self.declaration() if self.at_type() else self.full_expr())
        self.expect(";")
        if not self.at(";"):
            children.append(self.wrap("condition", self.full_expr()))
        self.expect(";")
        if not self.at(")"):
            children.append(self.full_expr())
        self.expect(")")
        body = self.statement()
        children.append(body)
        return self.node("for", start, self.span(body)[1], children)

    def return_stmt(self) -> int:
        start = self.expect("return").start
        children = [] if self.at(";") else [self.full_expr()]
        end = self.expect(";").end
        return self.node("return", start, end, children)

    def full_expr(self) -> int:
        """An expression in statement, condition, initializer, argument or subscript position."""
        return self.wrap("expr", self.assignment())

    def assignment(self) -> int:
        lhs = self.binary(0)
        if self.tok.kind == "op" and self.tok.text in ASSIGN_OPS:
            op = self.tok.text
            self.i += 1
            rhs = self.assignment()
            return self.node("binop", self.span(lhs)[0], self.span(rhs)[1], [lhs, rhs], op)
        return lhs

    def binary(self, level: int) -> int:
        if level == len(BINARY_LEVELS):
            return self.unary()
        lhs = self.binary(level + 1)
        while self.tok.kind == "op" and self.tok.text in BINARY_LEVELS[level]:
            op = self.tok.text
            self.i += 1
            rhs = self.binary(level + 1)
            lhs = self.node("binop", self.span(lhs)[0], self.span(rhs)[1], [lhs, rhs], op)
        return lhs

    def unary(self) -> int:
        if self.tok.kind == "op" and self.tok.text in ("-", "!", "++", "--"):
            t = self.tok
            self.i += 1
            operand = self.unary()
            return self.node("unaryop", t.start, self.span(operand)[1], [operand], t.text)
        return self.postfix()

    def postfix(self) -> int:
        e = self.primary()
        while True:
            if self.at("["):
                self.i += 1
                sub = self.full_expr()
                end = self.expect("]").end
                e = self.node("index", self.span(e)[0], end, [e, sub])
            elif self.at("("):
                self.i += 1
                args = []
                if not self.at(")"):
                    args.append(self.full_expr())
                    while self.at(","):
                        self.i += 1
                        args.append(self.full_expr())
                end = self.expect(")").end
                e = self.node("call", self.span(e)[0], end, [e, *args])
            elif self.at("."):
                # member access is modelled as a binop so the label set stays fixed
                self.i += 1
                member = self.ident()
                e = self.node("binop", self.span(e)[0], self.span(member)[1], [e, member], ".")
            elif self.at("++", "--"):
                t = self.tok
                self.i += 1
                e = self.node("unaryop", self.span(e)[0], t.end, [e], t.text)
            else:
                return e

    def primary(self) -> int:
        t = self.tok
        if t.kind in ("int", "str"):
            self.i += 1
            return self.node("literal", t.start, t.end, token=t.text)
        if t.kind == "name" and t.text not in KEYWORDS:
            return self.ident()
        if self.at("("):
            self.i += 1
            e = self.assignment()
            self.expect(")")
            return e
        self.error("expected expression")


def parse_minilang(source: str, source_id: str = "") -> Ast:
    """Parse MiniLang source text into an Ast with byte-offset spans."""
    p = _Parser(source)
    root = p.program()
    byte_at = _byte_offsets(source)
    spans = {nid: SourceSpan(nid, byte_at[s], byte_at[e]) for nid, (s, e) in p.spans.items()}
    return renumber(Ast(root, p.nodes, source_id, spans))


def _byte_offsets(source: str) -> list[int]:
    if source.isascii():
        return list(range(len(source) + 1))
    out = [0]
    for ch in source:
        out.append(out[-1] + len(ch.encode("utf-8")))
    return out
