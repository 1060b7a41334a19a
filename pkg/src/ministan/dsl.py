"""MiniStan abstract syntax, concrete text syntax, parser, and canonical printer.

A MiniStan program is a straight-line sequence of statements, one per line
(or separated by ``;``):

    s ~ normal(0.237, 0.449)
    b ~ normal(s, 0.913)
    logit_o = s * 0.137 + b * 0.852
    o ~ bernoulli(1 / (1 + exp(-logit_o)))

Expressions are a closed arithmetic subset: numeric literals, variable
references, ``+ - * /``, unary minus, ``exp(...)``, and parentheses.
Distributions are exactly ``normal(mean, std)``, ``uniform(lo, hi)``, and
``bernoulli(prob)``.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field

from ministan.errors import MiniStanError


# ---------------------------------------------------------------------------
# Errors
# ---------------------------------------------------------------------------

class MiniStanSyntaxError(MiniStanError):
    """Malformed program text, with 1-based line/column of the offence."""

    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"line {line}, column {column}: {message}")
        self.line = line
        self.column = column


class ScopeError(MiniStanError):
    """A variable was referenced before any statement defined it."""

    def __init__(self, name: str):
        super().__init__(f"variable {name!r} used before definition")
        self.name = name


class RedefinitionError(MiniStanError):
    """A variable was defined by more than one statement."""

    def __init__(self, name: str):
        super().__init__(f"variable {name!r} defined more than once")
        self.name = name


# ---------------------------------------------------------------------------
# Abstract syntax
# ---------------------------------------------------------------------------

@dataclass(frozen=True, slots=True)
class NumLit:
    value: float

    def __post_init__(self):
        object.__setattr__(self, "value", float(self.value))


@dataclass(frozen=True, slots=True)
class VarRef:
    name: str


@dataclass(frozen=True, slots=True)
class BinOp:
    op: str  # one of "+", "-", "*", "/"
    lhs: Expr
    rhs: Expr


@dataclass(frozen=True, slots=True)
class Neg:
    operand: Expr


@dataclass(frozen=True, slots=True)
class Exp:
    operand: Expr


Expr = NumLit | VarRef | BinOp | Neg | Exp


@dataclass(frozen=True, slots=True)
class Normal:
    mean: Expr
    std: Expr


@dataclass(frozen=True, slots=True)
class Uniform:
    lo: Expr
    hi: Expr


@dataclass(frozen=True, slots=True)
class Bernoulli:
    prob: Expr


Dist = Normal | Uniform | Bernoulli


@dataclass(frozen=True, slots=True)
class Assign:
    var: str
    value: Expr


@dataclass(frozen=True, slots=True)
class Sample:
    var: str
    dist: Dist


Stmt = Assign | Sample


@dataclass(frozen=True, slots=True)
class Program:
    stmts: tuple[Stmt, ...]

    def __post_init__(self):
        object.__setattr__(self, "stmts", tuple(self.stmts))

    def defined_vars(self) -> list[str]:
        """Variables defined by the program, in statement order."""
        return [st.var for st in self.stmts]


RESERVED = frozenset({"normal", "uniform", "bernoulli", "exp"})

_IDENT_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")


def is_identifier(name: str) -> bool:
    return bool(_IDENT_RE.fullmatch(name)) and name not in RESERVED


def dist_params(dist: Dist) -> tuple[Expr, ...]:
    """Parameter expressions of a distribution, in positional order."""
    if isinstance(dist, Normal):
        return (dist.mean, dist.std)
    if isinstance(dist, Uniform):
        return (dist.lo, dist.hi)
    return (dist.prob,)


def stmt_exprs(st: Stmt) -> tuple[Expr, ...]:
    """Expressions appearing on the right-hand side of a statement."""
    if isinstance(st, Assign):
        return (st.value,)
    return dist_params(st.dist)


# ---------------------------------------------------------------------------
# Tokenizer
# ---------------------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t]+)
  | (?P<newline>\r?\n)
  | (?P<number>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<punct>[+\-*/=~(),;])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True, slots=True)
class _Token:
    kind: str  # "number" | "ident" | one-char punct | "newline" | "eof"
    text: str
    line: int
    column: int


def _tokenize(text: str) -> list[_Token]:
    tokens: list[_Token] = []
    line, line_start = 1, 0
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise MiniStanSyntaxError(
                f"unexpected character {text[pos]!r}", line, pos - line_start + 1
            )
        kind = m.lastgroup
        col = pos - line_start + 1
        if kind == "newline":
            tokens.append(_Token("newline", m.group(), line, col))
            line += 1
            line_start = m.end()
        elif kind == "number":
            tokens.append(_Token("number", m.group(), line, col))
        elif kind == "ident":
            tokens.append(_Token("ident", m.group(), line, col))
        elif kind == "punct":
            tokens.append(_Token(m.group(), m.group(), line, col))
        pos = m.end()
    tokens.append(_Token("eof", "", line, len(text) - line_start + 1))
    return tokens


# ---------------------------------------------------------------------------
# Parser (recursive descent; standard precedence, left-associative)
# ---------------------------------------------------------------------------

class _Parser:
    def __init__(self, tokens: list[_Token]):
        self.tokens = tokens
        self.pos = 0

    def peek(self) -> _Token:
        return self.tokens[self.pos]

    def advance(self) -> _Token:
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def error(self, message: str, tok: _Token | None = None):
        tok = tok or self.peek()
        raise MiniStanSyntaxError(message, tok.line, tok.column)

    def expect(self, kind: str) -> _Token:
        tok = self.peek()
        if tok.kind != kind:
            self.error(f"expected {kind!r}, found {tok.text or 'end of input'!r}")
        return self.advance()

    def skip_separators(self) -> bool:
        seen = False
        while self.peek().kind in ("newline", ";"):
            self.advance()
            seen = True
        return seen

    def parse_program(self) -> Program:
        stmts = []
        self.skip_separators()
        while self.peek().kind != "eof":
            stmts.append(self.parse_stmt())
            if self.peek().kind == "eof":
                break
            if not self.skip_separators():
                self.error("expected end of statement")
        if not stmts:
            self.error("empty program")
        return Program(tuple(stmts))

    def parse_stmt(self) -> Stmt:
        tok = self.peek()
        if tok.kind != "ident":
            self.error(f"expected a statement, found {tok.text or 'end of input'!r}")
        if tok.text in RESERVED:
            self.error(f"{tok.text!r} is a reserved word and cannot name a variable")
        var = self.advance().text
        tok = self.peek()
        if tok.kind == "=":
            self.advance()
            return Assign(var, self.parse_expr())
        if tok.kind == "~":
            self.advance()
            return Sample(var, self.parse_dist())
        self.error(f"expected '=' or '~' after {var!r}")

    def parse_dist(self) -> Dist:
        tok = self.peek()
        if tok.kind != "ident" or tok.text not in ("normal", "uniform", "bernoulli"):
            self.error("expected a distribution (normal, uniform, or bernoulli)")
        name = self.advance().text
        self.expect("(")
        first = self.parse_expr()
        if name == "bernoulli":
            self.expect(")")
            return Bernoulli(first)
        self.expect(",")
        second = self.parse_expr()
        self.expect(")")
        return Normal(first, second) if name == "normal" else Uniform(first, second)

    def parse_expr(self) -> Expr:
        return self.parse_additive()

    def parse_additive(self) -> Expr:
        node = self.parse_multiplicative()
        while self.peek().kind in ("+", "-"):
            op = self.advance().kind
            node = BinOp(op, node, self.parse_multiplicative())
        return node

    def parse_multiplicative(self) -> Expr:
        node = self.parse_unary()
        while self.peek().kind in ("*", "/"):
            op = self.advance().kind
            node = BinOp(op, node, self.parse_unary())
        return node

    def parse_unary(self) -> Expr:
        if self.peek().kind == "-":
            self.advance()
            operand = self.parse_unary()
            # Fold a negated literal into a negative literal so printed
            # negative parameters round-trip structurally.
            if isinstance(operand, NumLit):
                return NumLit(-operand.value)
            return Neg(operand)
        return self.parse_primary()

    def parse_primary(self) -> Expr:
        tok = self.peek()
        if tok.kind == "number":
            self.advance()
            return NumLit(float(tok.text))
        if tok.kind == "ident":
            if tok.text == "exp":
                self.advance()
                self.expect("(")
                inner = self.parse_expr()
                self.expect(")")
                return Exp(inner)
            if tok.text in RESERVED:
                self.error(f"{tok.text!r} is a reserved word")
            self.advance()
            return VarRef(tok.text)
        if tok.kind == "(":
            self.advance()
            inner = self.parse_expr()
            self.expect(")")
            return inner
        self.error(f"expected an expression, found {tok.text or 'end of input'!r}")


def _walk_refs(e: Expr):
    """Yield VarRef names in left-to-right evaluation order."""
    if isinstance(e, VarRef):
        yield e.name
    elif isinstance(e, BinOp):
        yield from _walk_refs(e.lhs)
        yield from _walk_refs(e.rhs)
    elif isinstance(e, (Neg, Exp)):
        yield from _walk_refs(e.operand)


def parse_program(text: str, *, check_scope: bool = True) -> Program:
    """Parse MiniStan source text into a Program.

    Raises MiniStanSyntaxError (with line/column) for malformed input,
    ScopeError for the first use-before-definition, and RedefinitionError
    for a variable defined twice.  ``check_scope=False`` skips the scope
    and redefinition checks, which is useful for symbolic templates whose
    parameters are substituted later.
    """
    program = _Parser(_tokenize(text)).parse_program()
    if check_scope:
        defined: set[str] = set()
        for st in program.stmts:
            for e in stmt_exprs(st):
                for name in _walk_refs(e):
                    if name not in defined:
                        raise ScopeError(name)
            if st.var in defined:
                raise RedefinitionError(st.var)
            defined.add(st.var)
    return program


def free_check(p: Program) -> list[str]:
    """Variables used before definition, deduplicated, in first-use order."""
    defined: set[str] = set()
    free: list[str] = []
    for st in p.stmts:
        for e in stmt_exprs(st):
            for name in _walk_refs(e):
                if name not in defined and name not in free:
                    free.append(name)
        defined.add(st.var)
    return free


# ---------------------------------------------------------------------------
# Canonical printer
# ---------------------------------------------------------------------------

_PREC_ADD, _PREC_MUL, _PREC_UNARY, _PREC_ATOM = 10, 20, 30, 40


def format_number(v: float) -> str:
    """Shortest round-trip decimal form, dropping a redundant '.0'."""
    s = repr(float(v))
    if s.endswith(".0"):
        s = s[:-2]
    return s


def _prec(e: Expr) -> int:
    if isinstance(e, BinOp):
        return _PREC_ADD if e.op in ("+", "-") else _PREC_MUL
    if isinstance(e, Neg):
        return _PREC_UNARY
    if isinstance(e, NumLit) and (e.value < 0 or str(e.value)[0] == "-"):
        return _PREC_UNARY  # negative literals print with a leading '-'
    return _PREC_ATOM


def print_expr(e: Expr) -> str:
    if isinstance(e, NumLit):
        return format_number(e.value)
    if isinstance(e, VarRef):
        return e.name
    if isinstance(e, Exp):
        return f"exp({print_expr(e.operand)})"
    if isinstance(e, Neg):
        inner = print_expr(e.operand)
        if _prec(e.operand) < _PREC_UNARY:
            inner = f"({inner})"
        return f"-{inner}"
    lhs = print_expr(e.lhs)
    if _prec(e.lhs) < _prec(e):
        lhs = f"({lhs})"
    rhs = print_expr(e.rhs)
    if _prec(e.rhs) <= _prec(e):
        rhs = f"({rhs})"
    return f"{lhs} {e.op} {rhs}"


def _print_dist(d: Dist) -> str:
    if isinstance(d, Normal):
        return f"normal({print_expr(d.mean)}, {print_expr(d.std)})"
    if isinstance(d, Uniform):
        return f"uniform({print_expr(d.lo)}, {print_expr(d.hi)})"
    return f"bernoulli({print_expr(d.prob)})"


def print_stmt(st: Stmt) -> str:
    if isinstance(st, Assign):
        return f"{st.var} = {print_expr(st.value)}"
    return f"{st.var} ~ {_print_dist(st.dist)}"


def print_program(p: Program) -> str:
    """Canonical text: one statement per line, single spaces around
    operators, minimal parentheses, LF separators, no trailing whitespace."""
    return "\n".join(print_stmt(st) for st in p.stmts)
