"""Parser for the SDE model language.

The language is line-oriented: ``param`` declarations first, then one or
two equations of the form::

    dV = <drift expr> dt [+ <diffusion expr> dW[1|2]] [+ jump(i, m, s)]

Expressions use ``+ - * / ^``, parentheses, decimal literals and a small
set of named functions.  ``#`` starts a comment, blank lines are skipped,
and whitespace is otherwise insignificant.

Identifier resolution: equation left-hand sides define the state
variables (the first equation must define ``V``); ``t`` is the time
variable.  Any other identifier must be a declared parameter, except in
models with no ``param`` lines at all, where free identifiers are
auto-declared as parameters with initial value 0.1 in first-use order.
That keeps one-liners like ``dV = mu*V dt + sigma*V dW`` convenient while
still rejecting stray symbols in models that do declare their parameters.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Callable, NoReturn

from .nodes import (
    ALLOWED_FUNCTIONS,
    DEFAULT_PARAM_VALUE,
    RESERVED_WORDS,
    Binary,
    Call,
    Const,
    Equation,
    Expr,
    JumpSpec,
    Param,
    ParamDecl,
    SdeModel,
    StateVar,
    TimeVar,
    Unary,
    iter_subexprs,
    model_exprs,
)

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<number>\d+(?:\.\d*)?(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?)"
    r"|(?P<ident>[A-Za-z_][A-Za-z0-9_]*)"
    r"|(?P<op>[-+*/^(),=]))"
)

_DIFFERENTIALS = {"dW": 1, "dW1": 1, "dW2": 2}


class ParseError(ValueError):
    """Syntax or symbol-resolution failure, with a 1-based source position."""

    def __init__(self, message: str, line: int, column: int = 0) -> None:
        super().__init__(f"line {line}: {message}")
        self.line = line
        self.column = column


@dataclass
class _Token:
    kind: str  # "number" | "ident" | "op" | "end"
    text: str
    column: int


def _tokenize(text: str, line_no: int) -> list[_Token]:
    tokens: list[_Token] = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            stripped = text[pos:].lstrip()
            if not stripped:
                break
            col = pos + (len(text[pos:]) - len(stripped)) + 1
            raise ParseError(f"unexpected character {stripped[0]!r}", line_no, col)
        pos = m.end()
        for kind in ("number", "ident", "op"):
            val = m.group(kind)
            if val is not None:
                tokens.append(_Token(kind, val, m.start(kind) + 1))
                break
    tokens.append(_Token("end", "", len(text) + 1))
    return tokens


class _LineParser:
    """Recursive-descent expression parser over one logical line."""

    def __init__(self, tokens: list[_Token], line_no: int, resolve) -> None:
        self.tokens = tokens
        self.pos = 0
        self.line_no = line_no
        self.resolve = resolve  # ident -> Expr, may raise ParseError

    def peek(self) -> _Token:
        return self.tokens[self.pos]

    def next(self) -> _Token:
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def expect_op(self, op: str, context: str) -> None:
        tok = self.next()
        if tok.kind != "op" or tok.text != op:
            raise ParseError(
                f"expected {op!r} {context}, got {tok.text!r}", self.line_no, tok.column
            )

    def fail(self, message: str, tok: _Token | None = None) -> "NoReturn":
        tok = tok or self.peek()
        raise ParseError(message, self.line_no, tok.column)

    # Precedence: additive < multiplicative < unary < power < primary.

    def expr(self) -> Expr:
        node = self.term()
        while self.peek().kind == "op" and self.peek().text in "+-":
            op = self.next().text
            node = Binary(op, node, self.term())
        return node

    def term(self) -> Expr:
        node = self.unary()
        while self.peek().kind == "op" and self.peek().text in "*/":
            op = self.next().text
            node = Binary(op, node, self.unary())
        return node

    def unary(self) -> Expr:
        tok = self.peek()
        if tok.kind == "op" and tok.text in "+-":
            self.next()
            operand = self.unary()
            if tok.text == "+":
                return operand
            if isinstance(operand, Const):
                return Const(-operand.value)  # fold so printing round-trips
            return Unary("-", operand)
        return self.power()

    def power(self) -> Expr:
        base = self.primary()
        if self.peek().kind == "op" and self.peek().text == "^":
            self.next()
            return Binary("^", base, self.unary())  # right-associative
        return base

    def primary(self) -> Expr:
        tok = self.next()
        if tok.kind == "number":
            return Const(float(tok.text))
        if tok.kind == "op" and tok.text == "(":
            node = self.expr()
            self.expect_op(")", "to close parenthesis")
            return node
        if tok.kind == "ident":
            name = tok.text
            if name in ALLOWED_FUNCTIONS:
                self.expect_op("(", f"after function {name!r}")
                args = [self.expr()]
                while self.peek().kind == "op" and self.peek().text == ",":
                    self.next()
                    args.append(self.expr())
                self.expect_op(")", f"to close {name!r} call")
                arity = ALLOWED_FUNCTIONS[name]
                if len(args) != arity:
                    self.fail(
                        f"function {name!r} takes {arity} argument(s), got {len(args)}",
                        tok,
                    )
                return Call(name, tuple(args))
            if name in RESERVED_WORDS and name != "t":
                self.fail(f"reserved word {name!r} cannot appear inside an expression", tok)
            next_tok = self.peek()
            if next_tok.kind == "op" and next_tok.text == "(":
                self.fail(f"unknown function {name!r}", tok)
            return self.resolve(name, tok)
        self.fail(f"expected an operand, got {tok.text!r}" if tok.text else "unexpected end of line", tok)


def _strip_comment(line: str) -> str:
    cut = line.find("#")
    return line if cut < 0 else line[:cut]


_EQ_HEAD_RE = re.compile(r"^\s*d([A-Za-z_][A-Za-z0-9_]*)\s*=")
_PARAM_HEAD_RE = re.compile(r"^\s*param\b")


def parse_model(source: str) -> SdeModel:
    """Parse model text into an :class:`SdeModel`.

    Raises :class:`ParseError` with a line number on malformed input:
    unknown tokens, reserved words used as names, a first equation that
    does not define ``V``, more than two equations, or (in models with
    explicit declarations) references to undeclared identifiers.
    """
    lines: list[tuple[int, str]] = []
    for idx, raw in enumerate(source.splitlines(), start=1):
        text = _strip_comment(raw).strip()
        if text:
            lines.append((idx, text))
    if not lines:
        raise ParseError("empty model: expected at least one equation", 1)

    decl_lines = [(n, t) for n, t in lines if _PARAM_HEAD_RE.match(t)]
    eq_lines = [(n, t) for n, t in lines if _EQ_HEAD_RE.match(t)]
    for n, t in lines:
        if (n, t) not in decl_lines and (n, t) not in eq_lines:
            raise ParseError(f"expected a param declaration or an equation, got {t!r}", n)
    if decl_lines and eq_lines and max(n for n, _ in decl_lines) > min(n for n, _ in eq_lines):
        bad = next(n for n, _ in decl_lines if n > min(m for m, _ in eq_lines))
        raise ParseError("param declarations must precede equations", bad)
    if not eq_lines:
        raise ParseError("model has no equations", lines[-1][0])
    if len(eq_lines) > 2:
        raise ParseError("a model may have at most two equations", eq_lines[2][0])

    declared: dict[str, float] = {}
    explicit_decls = bool(decl_lines)
    for n, text in decl_lines:
        declared.update([_parse_decl(text, n, declared)])

    state_names = [
        _EQ_HEAD_RE.match(text).group(1) for _, text in eq_lines  # type: ignore[union-attr]
    ]
    if state_names[0] != "V":
        raise ParseError(
            f"first equation must define dV, got d{state_names[0]}", eq_lines[0][0]
        )
    for i, name in enumerate(state_names):
        if name in RESERVED_WORDS:
            raise ParseError(f"reserved word {name!r} cannot name a state variable", eq_lines[i][0])
        if name in declared:
            raise ParseError(f"state variable {name!r} conflicts with a parameter", eq_lines[i][0])
    if len(state_names) == 2 and state_names[0] == state_names[1]:
        raise ParseError("both equations define the same state variable", eq_lines[1][0])

    auto_order: list[str] = []

    def make_resolver(line_no: int):
        def resolve(name: str, tok: _Token) -> Expr:
            if name == "t":
                return TimeVar()
            if name in state_names:
                return StateVar(name)
            if name in declared:
                return Param(name)
            if explicit_decls:
                raise ParseError(f"undeclared symbol {name!r}", line_no, tok.column)
            declared[name] = DEFAULT_PARAM_VALUE
            auto_order.append(name)
            return Param(name)

        return resolve

    equations = tuple(
        _parse_equation(text, n, make_resolver(n)) for n, text in eq_lines
    )

    model = SdeModel(equations, _ordered_decls(declared, equations), source)
    return model


def _parse_decl(text: str, line_no: int, declared: dict[str, float]) -> tuple[str, float]:
    tokens = _tokenize(text, line_no)
    p = _LineParser(tokens, line_no, None)
    head = p.next()
    assert head.text == "param"
    name_tok = p.next()
    if name_tok.kind != "ident":
        raise ParseError(f"expected a parameter name, got {name_tok.text!r}", line_no, name_tok.column)
    name = name_tok.text
    if name in RESERVED_WORDS:
        raise ParseError(f"reserved word {name!r} cannot name a parameter", line_no, name_tok.column)
    if name in declared:
        raise ParseError(f"duplicate parameter declaration {name!r}", line_no, name_tok.column)
    value = DEFAULT_PARAM_VALUE
    tok = p.next()
    if tok.kind == "op" and tok.text == "=":
        sign = 1.0
        tok = p.next()
        if tok.kind == "op" and tok.text in "+-":
            sign = -1.0 if tok.text == "-" else 1.0
            tok = p.next()
        if tok.kind != "number":
            raise ParseError(f"expected a numeric initial value, got {tok.text!r}", line_no, tok.column)
        value = sign * float(tok.text)
        tok = p.next()
    if tok.kind != "end":
        raise ParseError(f"unexpected trailing text {tok.text!r} in param declaration", line_no, tok.column)
    return name, value


def _parse_equation(text: str, line_no: int, resolve) -> Equation:
    head = _EQ_HEAD_RE.match(text)
    assert head is not None
    state = head.group(1)
    tokens = _tokenize(text[head.end():], line_no)
    p = _LineParser(tokens, line_no, resolve)

    drift = p.expr()
    tok = p.next()
    if not (tok.kind == "ident" and tok.text == "dt"):
        raise ParseError(
            f"unknown differential token {tok.text!r}: expected 'dt' after the drift term",
            line_no,
            tok.column,
        )

    diffusion: Expr | None = None
    driver = 0
    jump: JumpSpec | None = None

    if p.peek().kind == "op" and p.peek().text == "+":
        p.next()
        if p.peek().kind == "ident" and p.peek().text == "jump":
            jump = _parse_jump(p)
        else:
            diffusion = p.expr()
            tok = p.next()
            if tok.kind != "ident" or tok.text not in _DIFFERENTIALS:
                raise ParseError(
                    f"unknown differential token {tok.text!r}: expected 'dW', 'dW1' or 'dW2'",
                    line_no,
                    tok.column,
                )
            driver = _DIFFERENTIALS[tok.text]
            if p.peek().kind == "op" and p.peek().text == "+":
                p.next()
                tok = p.peek()
                if not (tok.kind == "ident" and tok.text == "jump"):
                    raise ParseError(
                        f"expected 'jump(...)' after the diffusion term, got {tok.text!r}",
                        line_no,
                        tok.column,
                    )
                jump = _parse_jump(p)

    tok = p.next()
    if tok.kind != "end":
        raise ParseError(f"unexpected trailing text {tok.text!r}", line_no, tok.column)
    if driver == 0:
        driver = 1
    return Equation(state, drift, diffusion, driver, jump)


def _parse_jump(p: _LineParser) -> JumpSpec:
    jump_tok = p.next()
    p.expect_op("(", "after 'jump'")
    intensity = p.expr()
    p.expect_op(",", "between jump arguments")
    mean = p.expr()
    p.expect_op(",", "between jump arguments")
    std = p.expr()
    p.expect_op(")", "to close 'jump'")
    return JumpSpec(intensity, mean, std)


def _ordered_decls(declared: dict[str, float], equations: tuple[Equation, ...]) -> tuple[ParamDecl, ...]:
    """Normalize parameter order to first use; unused declarations go last."""
    order: list[str] = []
    probe = SdeModel(equations, ())
    for expr in model_exprs(probe):
        for node in iter_subexprs(expr):
            if isinstance(node, Param) and node.name not in order:
                order.append(node.name)
    for name in declared:
        if name not in order:
            order.append(name)
    return tuple(ParamDecl(name, declared[name]) for name in order)
