"""Lexer and recursive-descent parser for ``.cell`` files.

``parse_spec`` returns a validated tree: references resolve to ports or
earlier bindings (no forward references), names are singly assigned, every
state port gets exactly one next-state assignment, and affine operand lists
satisfy their kind's arity (non-general kinds take exactly one operand; a
literal ``1`` may close any operand list to request a bias column). Scalar
names inside ``scale[...]`` are parameters, not bindings, and are resolved at
interpretation time.
"""

from __future__ import annotations

from dataclasses import dataclass

from .nodes import (
    Affine,
    Binary,
    CellSpec,
    Const,
    Expr,
    Factor,
    Gate,
    ParseError,
    PortDecl,
    Ref,
    Span,
    Stmt,
    Unary,
)
from .typesys import MatrixKind

__all__ = ["parse_spec"]

_PUNCT = {
    "{": "LBRACE",
    "}": "RBRACE",
    "(": "LPAREN",
    ")": "RPAREN",
    "[": "LBRACKET",
    "]": "RBRACKET",
    ",": "COMMA",
    ";": "SEMI",
    "=": "EQ",
    "+": "PLUS",
    "-": "MINUS",
    "'": "PRIME",
    ":": "COLON",
}

_UNARY_FNS = ("sigmoid", "tanh", "relu")


@dataclass(frozen=True)
class _Token:
    kind: str
    text: str
    span: Span


def _lex(text: str) -> list[_Token]:
    tokens: list[_Token] = []
    line, col = 1, 1
    i, n = 0, len(text)
    while i < n:
        ch = text[i]
        if ch == "\n":
            line += 1
            col = 1
            i += 1
            continue
        if ch in " \t\r":
            i += 1
            col += 1
            continue
        if ch == "#":
            while i < n and text[i] != "\n":
                i += 1
            continue
        span = Span(line, col)
        if text.startswith("(*)", i):
            tokens.append(_Token("GATE", "(*)", span))
            i += 3
            col += 3
            continue
        if ch.isalpha() or ch == "_":
            j = i
            while j < n and (text[j].isalnum() or text[j] == "_"):
                j += 1
            tokens.append(_Token("IDENT", text[i:j], span))
            col += j - i
            i = j
            continue
        if ch.isdigit():
            j = i
            while j < n and text[j].isdigit():
                j += 1
            if j < n and text[j] == "." and j + 1 < n and text[j + 1].isdigit():
                j += 1
                while j < n and text[j].isdigit():
                    j += 1
            tokens.append(_Token("NUMBER", text[i:j], span))
            col += j - i
            i = j
            continue
        if ch in _PUNCT:
            tokens.append(_Token(_PUNCT[ch], ch, span))
            i += 1
            col += 1
            continue
        raise ParseError(f"unexpected character {ch!r}", span)
    tokens.append(_Token("EOF", "", Span(line, col)))
    return tokens


class _Parser:
    def __init__(self, tokens: list[_Token]):
        self.tokens = tokens
        self.pos = 0
        self.affine_count = 0

    def peek(self, ahead: int = 0) -> _Token:
        return self.tokens[min(self.pos + ahead, len(self.tokens) - 1)]

    def next(self) -> _Token:
        tok = self.tokens[self.pos]
        if tok.kind != "EOF":
            self.pos += 1
        return tok

    def expect(self, kind: str, what: str) -> _Token:
        tok = self.peek()
        if tok.kind != kind:
            shown = tok.text if tok.kind != "EOF" else "end of input"
            raise ParseError(f"expected {what}, found {shown!r}", tok.span)
        return self.next()

    def expect_word(self, word: str) -> _Token:
        tok = self.peek()
        if tok.kind != "IDENT" or tok.text != word:
            raise ParseError(f"expected {word!r}, found {tok.text!r}", tok.span)
        return self.next()

    # --- grammar -----------------------------------------------------------

    def cell(self) -> CellSpec:
        self.expect_word("cell")
        name = self.expect("IDENT", "cell name").text
        self.expect("LBRACE", "'{'")
        ports: list[PortDecl] = []
        while self.peek().kind == "IDENT" and self.peek().text in ("state", "input"):
            ports.append(self.port())
        stmts: list[Stmt] = []
        while self.peek().kind != "RBRACE":
            stmts.append(self.stmt())
        self.expect("RBRACE", "'}'")
        self.expect("EOF", "end of input")
        return CellSpec(name, ports, stmts)

    def port(self) -> PortDecl:
        kw = self.next()
        name_tok = self.expect("IDENT", "port name")
        type_name = None
        if self.peek().kind == "COLON":
            self.next()
            type_name = self.expect("IDENT", "type name").text
        self.expect("SEMI", "';'")
        return PortDecl(name_tok.text, kw.text == "state", type_name, name_tok.span)

    def stmt(self) -> Stmt:
        name_tok = self.expect("IDENT", "binding name")
        lhs = name_tok.text
        primed = False
        if self.peek().kind == "PRIME":
            self.next()
            lhs += "'"
            primed = True
        self.expect("EQ", "'='")
        expr = self.expr()
        self.expect("SEMI", "';'")
        return Stmt(lhs, primed, expr, name_tok.span)

    def expr(self) -> Expr:
        left = self.term()
        while self.peek().kind in ("PLUS", "MINUS"):
            op = self.next()
            right = self.term()
            left = Binary(op.text, left, right, op.span)
        return left

    def term(self) -> Expr:
        left = self.atom()
        while self.peek().kind == "GATE":
            op = self.next()
            right = self.atom()
            left = Gate(left, right, op.span)
        return left

    def atom(self) -> Expr:
        tok = self.peek()
        if tok.kind == "LPAREN":
            self.next()
            inner = self.expr()
            self.expect("RPAREN", "')'")
            return inner
        if tok.kind == "NUMBER":
            self.next()
            return Const(float(tok.text), tok.span)
        if tok.kind == "IDENT":
            if tok.text in _UNARY_FNS:
                self.next()
                self.expect("LPAREN", "'('")
                inner = self.expr()
                self.expect("RPAREN", "')'")
                return Unary(tok.text, inner, tok.span)
            if tok.text in ("max", "min"):
                self.next()
                self.expect("LPAREN", "'('")
                left = self.expr()
                self.expect("COMMA", "','")
                right = self.expr()
                self.expect("RPAREN", "')'")
                return Binary(tok.text, left, right, tok.span)
            if tok.text == "scale":
                self.next()
                self.expect("LBRACKET", "'['")
                factor = self.scale_factor()
                self.expect("RBRACKET", "']'")
                self.expect("LPAREN", "'('")
                inner = self.expr()
                self.expect("RPAREN", "')'")
                return Unary("scale", inner, tok.span, factor=factor)
            if tok.text == "affine":
                return self.affine()
            self.next()
            name = tok.text
            if self.peek().kind == "PRIME":
                self.next()
                name += "'"
            return Ref(name, tok.span)
        shown = tok.text if tok.kind != "EOF" else "end of input"
        raise ParseError(f"expected expression, found {shown!r}", tok.span)

    def scale_factor(self) -> Factor:
        tok = self.peek()
        if tok.kind == "NUMBER":
            self.next()
            value = float(tok.text)
            if self.peek().kind == "MINUS":
                if value != 1.0:
                    raise ParseError(
                        "complement factor must be written 1 - base", tok.span
                    )
                self.next()
                base = self.peek()
                if base.kind == "NUMBER":
                    self.next()
                    return Factor(literal=float(base.text), complemented=True)
                name = self.expect("IDENT", "scalar name").text
                return Factor(param=name, complemented=True)
            return Factor(literal=value)
        name = self.expect("IDENT", "scalar factor").text
        return Factor(param=name)

    def affine(self) -> Expr:
        tok = self.expect_word("affine")
        self.expect("LBRACKET", "'['")
        kind_tok = self.expect("IDENT", "matrix kind")
        try:
            kind = MatrixKind(kind_tok.text)
        except ValueError:
            raise ParseError(
                f"unknown matrix kind {kind_tok.text!r}", kind_tok.span
            ) from None
        self.expect("RBRACKET", "']'")
        self.expect("LPAREN", "'('")
        raw: list[Expr] = [self.expr()]
        while self.peek().kind == "COMMA":
            self.next()
            raw.append(self.expr())
        self.expect("RPAREN", "')'")
        operands: list[Expr] = []
        has_bias = False
        for idx, op in enumerate(raw):
            if isinstance(op, Const):
                if op.value != 1.0:
                    raise ParseError(
                        "only the bias marker 1 may appear as an affine operand",
                        op.span,
                    )
                if idx != len(raw) - 1:
                    raise ParseError("bias marker 1 must be last", op.span)
                has_bias = True
            else:
                operands.append(op)
        if not operands:
            raise ParseError("affine needs at least one operand", tok.span)
        if kind != MatrixKind.GENERAL and len(operands) != 1:
            raise ParseError(
                f"affine[{kind.value}] takes exactly one operand", tok.span
            )
        self.affine_count += 1
        return Affine(kind, operands, has_bias, self.affine_count, tok.span)


def _validate(spec: CellSpec) -> None:
    seen_ports: dict[str, PortDecl] = {}
    for p in spec.ports:
        if p.name in seen_ports:
            raise ParseError(f"duplicate port {p.name!r}", p.span)
        seen_ports[p.name] = p

    defined = set(seen_ports)
    assigned_states: set[str] = set()
    state_names = {p.name for p in spec.states()}

    def check_refs(e: Expr) -> None:
        if isinstance(e, Ref) and e.name not in defined:
            raise ParseError(f"unknown identifier {e.name!r}", e.span)
        if isinstance(e, Unary):
            check_refs(e.operand)
        elif isinstance(e, (Binary, Gate)):
            check_refs(e.left)
            check_refs(e.right)
        elif isinstance(e, Affine):
            for op in e.operands:
                check_refs(op)

    for s in spec.stmts:
        check_refs(s.expr)
        if s.is_next_state:
            if s.target not in state_names:
                raise ParseError(f"{s.target!r} is not a state port", s.span)
            if s.target in assigned_states:
                raise ParseError(
                    f"duplicate next-state assignment for {s.target!r}", s.span
                )
            assigned_states.add(s.target)
        else:
            if s.lhs in defined:
                raise ParseError(f"duplicate binding {s.lhs!r}", s.span)
        defined.add(s.lhs)

    for p in spec.states():
        if p.name not in assigned_states:
            raise ParseError(
                f"state {p.name!r} has no next-state assignment", p.span
            )


def parse_spec(text: str) -> CellSpec:
    """Parse one cell description; raises ParseError with line:col on error."""
    spec = _Parser(_lex(text)).cell()
    _validate(spec)
    return spec
