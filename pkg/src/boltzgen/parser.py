"""Text format for specifications.

::

    # plane trees
    P = Z * Seq(P);

    @labelled
    T' = 1 + T * T;
    T(0) = 0;

``+`` is disjoint union, ``*`` product (binding tighter), ``1`` the empty
structure, ``Z`` / ``Z_a`` atoms. A primed equation and its ``(0)`` line
together define a class by a differential equation.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .errors import SpecError
from .spec import (
    LABELLED,
    UNLABELLED,
    Atom,
    ClassDef,
    Cycle,
    Empty,
    MSet,
    Product,
    Ref,
    Seq,
    Set,
    Spec,
    Union,
)

CONSTRUCTIONS = {"Seq": Seq, "Cycle": Cycle, "Set": Set, "MSet": MSet}
_RESERVED = set(CONSTRUCTIONS) | {"Z"}


@dataclass(frozen=True)
class SourceSpan:
    line: int
    column: int
    length: int

    def __str__(self):
        return f"line {self.line}, column {self.column}"


class ParseError(SpecError):
    def __init__(self, message: str, span: SourceSpan):
        self.message = message
        self.span = span
        super().__init__(f"{span}: {message}")


_TOKEN = re.compile(
    r"""
    (?P<ws>[ \t\r\n]+)
  | (?P<comment>\#[^\n]*)
  | (?P<header>@[A-Za-z]+)
  | (?P<name>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<nat>[0-9]+)
  | (?P<punct>[=;+*()'])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class Token:
    kind: str
    text: str
    span: SourceSpan


def tokenize(text: str) -> list[Token]:
    tokens = []
    pos, line, col = 0, 1, 1
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            raise ParseError(f"unexpected character {text[pos]!r}", SourceSpan(line, col, 1))
        kind, tok = m.lastgroup, m.group()
        if kind not in ("ws", "comment"):
            tokens.append(Token(kind, tok, SourceSpan(line, col, len(tok))))
        nl = tok.count("\n")
        if nl:
            line += nl
            col = len(tok) - tok.rfind("\n")
        else:
            col += len(tok)
        pos = m.end()
    tokens.append(Token("eof", "", SourceSpan(line, col, 1)))
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.toks = tokenize(text)
        self.i = 0

    @property
    def tok(self) -> Token:
        return self.toks[self.i]

    def peek(self, k=1) -> Token:
        return self.toks[min(self.i + k, len(self.toks) - 1)]

    def advance(self) -> Token:
        t = self.toks[self.i]
        self.i += 1
        return t

    def expect(self, text: str, what: str | None = None) -> Token:
        t = self.tok
        if t.text != text or t.kind == "eof":
            found = "end of input" if t.kind == "eof" else repr(t.text)
            raise ParseError(f"expected {what or repr(text)}, found {found}", t.span)
        return self.advance()

    def spec(self) -> Spec:
        mode = UNLABELLED
        if self.tok.kind == "header":
            h = self.advance()
            if h.text in ("@labelled", "@labeled"):
                mode = LABELLED
            elif h.text in ("@unlabelled", "@unlabeled"):
                mode = UNLABELLED
            else:
                raise ParseError(f"unknown header {h.text!r}", h.span)

        order: list[str] = []
        plain: dict[str, tuple] = {}
        primed: dict[str, tuple] = {}
        initial: dict[str, tuple] = {}
        while self.tok.kind != "eof":
            if self.tok.kind == "header":
                raise ParseError("header must come first", self.tok.span)
            name_tok = self.tok
            if name_tok.kind != "name" or name_tok.text in _RESERVED or name_tok.text.startswith("Z_"):
                raise ParseError("expected a class name", name_tok.span)
            name = self.advance().text
            if self.tok.text == "'":
                self.advance()
                self.expect("=")
                body = self.expr()
                self.expect(";")
                self._declare(name, name_tok, primed, plain, order)
                primed[name] = (body, name_tok.span)
            elif self.tok.text == "(":
                self.advance()
                zero = self.tok
                if zero.text != "0":
                    raise ParseError("expected '0' in initial-count declaration", zero.span)
                self.advance()
                self.expect(")")
                self.expect("=")
                nat = self.tok
                if nat.kind != "nat":
                    raise ParseError("expected a natural number", nat.span)
                self.advance()
                self.expect(";")
                if name in initial:
                    raise ParseError(f"duplicate definition of {name}(0)", name_tok.span)
                initial[name] = (int(nat.text), name_tok.span)
            else:
                self.expect("=", "'=' after class name")
                body = self.expr()
                self.expect(";")
                self._declare(name, name_tok, primed, plain, order)
                plain[name] = (body, name_tok.span)

        for name, (_, span) in initial.items():
            if name in plain:
                raise ParseError(f"{name}(0) given for a non-differential class", span)
            if name not in primed:
                raise ParseError(f"{name}(0) without a primed equation {name}'", span)
        defs = []
        for name in order:
            if name in primed:
                body, span = primed[name]
                if name not in initial:
                    raise ParseError(f"primed equation {name}' without {name}(0)", span)
                defs.append(ClassDef(name, body, True, initial[name][0]))
            else:
                defs.append(ClassDef(name, plain[name][0]))
        if not defs:
            raise ParseError("specification has no definitions", self.tok.span)
        return Spec(mode, tuple(defs))

    def _declare(self, name, tok, primed, plain, order):
        if name in primed or name in plain:
            raise ParseError(f"duplicate definition of {name}", tok.span)
        order.append(name)

    def expr(self):
        left = self.term()
        while self.tok.text == "+":
            self.advance()
            left = Union(left, self.term())
        return left

    def term(self):
        left = self.factor()
        while self.tok.text == "*":
            self.advance()
            left = Product(left, self.factor())
        return left

    def factor(self):
        t = self.tok
        if t.kind == "nat":
            if t.text != "1":
                raise ParseError(f"only '1' is allowed as a constant, found {t.text!r}", t.span)
            self.advance()
            return Empty()
        if t.text == "(":
            self.advance()
            e = self.expr()
            self.expect(")")
            return e
        if t.kind == "name":
            self.advance()
            if t.text == "Z":
                return Atom("")
            if t.text.startswith("Z_"):
                return Atom(t.text[2:])
            if t.text in CONSTRUCTIONS:
                self.expect("(", f"'(' after {t.text}")
                arg = self.expr()
                self.expect(")")
                return CONSTRUCTIONS[t.text](arg)
            return Ref(t.text)
        found = "end of input" if t.kind == "eof" else repr(t.text)
        raise ParseError(f"expected an expression, found {found}", t.span)


def parse_spec(text: str) -> Spec:
    return _Parser(text).spec()


def parse_file(path) -> Spec:
    with open(path, encoding="utf-8") as fh:
        return parse_spec(fh.read())


# --------------------------------------------------------------------------
# printing
# --------------------------------------------------------------------------

_PREC = {Union: 1, Product: 2}


def format_expr(expr, parent_prec: int = 0, right_operand: bool = False) -> str:
    if isinstance(expr, Empty):
        return "1"
    if isinstance(expr, Atom):
        return "Z" if not expr.type else f"Z_{expr.type}"
    if isinstance(expr, Ref):
        return expr.name
    if isinstance(expr, (Union, Product)):
        prec = _PREC[type(expr)]
        op = " + " if isinstance(expr, Union) else " * "
        s = format_expr(expr.left, prec) + op + format_expr(expr.right, prec, True)
        # left association is canonical, so only a right-nested operand of
        # equal precedence needs parentheses
        if prec < parent_prec or (prec == parent_prec and right_operand):
            return f"({s})"
        return s
    return f"{type(expr).__name__}({format_expr(expr.arg)})"


def format_spec(spec: Spec) -> str:
    lines = [f"@{spec.mode}"]
    for d in spec.defs:
        if d.differential:
            lines.append(f"{d.name}' = {format_expr(d.body)};")
            lines.append(f"{d.name}(0) = {d.initial_count};")
        else:
            lines.append(f"{d.name} = {format_expr(d.body)};")
    return "\n".join(lines) + "\n"
