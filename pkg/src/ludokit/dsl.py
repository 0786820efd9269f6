"""Textual grammar for game systems: parse, expand macros, validate, serialize.

Grammar (one declaration per statement, ``#`` line comments, UTF-8):

    game NAME
    players P1, P2, ...
    track NAME { v1, v2, ... }
    decisions d1, d2, ...              # may repeat; accumulates
    set NAME = EXPR
    action NAME { [when EXPR] set t=v, ... ; ... }
    init EXPR
    legal PLAYER DECISION when EXPR
    consequence (PAT, ...) [when EXPR] -> prob P: ACT[, ACT]* [; prob P: ...]*
    outcome NAME when EXPR
    outcome default NAME
    forall VAR in LIST [if GUARD] { declarations }

Expressions are boolean combinations of ``track = value`` literals, ``not``,
``and``, ``or``, parentheses, and references to named sets.  A parenthesized
comprehension ``(any VAR in LIST[, VAR in LIST]* [if GUARD]: EXPR)`` (or
``all``) expands to the disjunction (conjunction) of the instantiated body.

LIST is ``{a, b, c}`` or an integer range ``lo..hi``.  Macro binders are
interpolated into identifiers with ``$``: inside a ``forall i`` block, the
identifier ``c$i`` becomes ``c1``, ``c2``, ...  GUARD is an integer
comparison (``=``, ``!=``, ``<``, ``<=``, ``>``, ``>=``) over ``+ - *``
arithmetic on binders that hold integer-valued names.

Pattern entries in ``consequence`` are a decision id, ``0`` (null decision
only), or ``*`` (any decision, including null).  Probabilities are exact
rationals ``num/den`` (or ``1``), and each rule's probabilities must sum
to 1.  Rule order is semantic: consequence and outcome rules apply
first-match.

Macro expansion happens before validation and is purely syntactic;
serialization emits the expanded form (macros are not reconstructed), and
``parse(serialize(sys))`` returns a system equal to ``sys`` field for field.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Union

from . import core
from .core import (
    ActionClause,
    ActionDef,
    And,
    ConsequenceRule,
    Expr,
    GameSystem,
    LegalityRule,
    Lit,
    Not,
    Or,
    OutcomeRule,
    Ref,
    TrackSpec,
    WILDCARD,
)
from .errors import LudokitError

KEYWORDS = {
    "game", "players", "track", "decisions", "set", "action", "legal",
    "consequence", "outcome", "init", "forall", "when", "prob", "default",
    "not", "and", "or", "any", "all", "in", "if",
}

_PUNCT = (
    "->", "..", "<=", ">=", "!=", "{", "}", "(", ")", ",", ";", ":", "=",
    "*", "/", "+", "-", "<", ">",
)


@dataclass(frozen=True)
class Diagnostic:
    path: str
    line: int
    col: int
    severity: str
    message: str

    def __str__(self) -> str:
        return f"{self.path}:{self.line}:{self.col}: {self.severity}: {self.message}"


class GameParseError(LudokitError):
    def __init__(self, diagnostics: list[Diagnostic]):
        self.diagnostics = diagnostics
        super().__init__("\n".join(str(d) for d in diagnostics))


# ---------------------------------------------------------------------------
# Lexer
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Token:
    kind: str  # "ident", "punct", "eof"
    value: str
    line: int
    col: int


def _lex(text: str, path: str) -> list[Token]:
    tokens: list[Token] = []
    line, col, i = 1, 1, 0
    n = len(text)
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
        matched = None
        for p in _PUNCT:
            if text.startswith(p, i):
                matched = p
                break
        if matched:
            tokens.append(Token("punct", matched, line, col))
            i += len(matched)
            col += len(matched)
            continue
        if ch.isalnum() or ch in "_$":
            start = i
            while i < n and (text[i].isalnum() or text[i] in "_$"):
                i += 1
            tokens.append(Token("ident", text[start:i], line, col))
            col += i - start
            continue
        raise GameParseError(
            [Diagnostic(path, line, col, "error", f"unexpected character {ch!r}")]
        )
    tokens.append(Token("eof", "", line, col))
    return tokens


# ---------------------------------------------------------------------------
# Raw (pre-expansion) AST with source spans
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Name:
    """An identifier occurrence, possibly containing $binder templates."""

    text: str
    line: int
    col: int


@dataclass(frozen=True)
class RLit:
    track: Name
    value: Name


@dataclass(frozen=True)
class RRef:
    name: Name


@dataclass(frozen=True)
class RNot:
    operand: "RExpr"


@dataclass(frozen=True)
class RAnd:
    parts: tuple["RExpr", ...]


@dataclass(frozen=True)
class ROr:
    parts: tuple["RExpr", ...]


@dataclass(frozen=True)
class Binder:
    var: str
    values: tuple[str, ...]
    line: int
    col: int


# GUARD arithmetic: ("int", k) | ("var", name) | (op, left, right)
Arith = tuple


@dataclass(frozen=True)
class Comparison:
    op: str
    left: Arith
    right: Arith


@dataclass(frozen=True)
class Guard:
    comparisons: tuple[Comparison, ...]
    line: int
    col: int


@dataclass(frozen=True)
class RComprehension:
    kind: str  # "any" | "all"
    binders: tuple[Binder, ...]
    guard: Optional[Guard]
    body: "RExpr"
    line: int
    col: int


RExpr = Union[RLit, RRef, RNot, RAnd, ROr, RComprehension]


@dataclass(frozen=True)
class DGame:
    name: Name


@dataclass(frozen=True)
class DPlayers:
    names: tuple[Name, ...]


@dataclass(frozen=True)
class DTrack:
    name: Name
    values: tuple[Name, ...]


@dataclass(frozen=True)
class DDecisions:
    names: tuple[Name, ...]


@dataclass(frozen=True)
class DSet:
    name: Name
    expr: RExpr


@dataclass(frozen=True)
class RActionClause:
    guard: Optional[RExpr]
    assignments: tuple[tuple[Name, Name], ...]


@dataclass(frozen=True)
class DAction:
    name: Name
    clauses: tuple[RActionClause, ...]


@dataclass(frozen=True)
class DInit:
    expr: RExpr
    line: int
    col: int


@dataclass(frozen=True)
class DLegal:
    player: Name
    decision: Name
    region: RExpr


@dataclass(frozen=True)
class DConsequence:
    pattern: tuple[Name, ...]  # entries "0" and "*" are special
    guard: Optional[RExpr]
    results: tuple[tuple[Fraction, tuple[Name, ...]], ...]
    line: int
    col: int


@dataclass(frozen=True)
class DOutcome:
    name: Name
    region: RExpr


@dataclass(frozen=True)
class DDefaultOutcome:
    name: Name


@dataclass(frozen=True)
class DForall:
    binder: Binder
    guard: Optional[Guard]
    body: tuple["Decl", ...]


Decl = Union[
    DGame, DPlayers, DTrack, DDecisions, DSet, DAction, DInit, DLegal,
    DConsequence, DOutcome, DDefaultOutcome, DForall,
]


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


class _Parser:
    def __init__(self, tokens: list[Token], path: str):
        self.tokens = tokens
        self.path = path
        self.pos = 0

    def peek(self) -> Token:
        return self.tokens[self.pos]

    def next(self) -> Token:
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def fail(self, tok: Token, message: str) -> GameParseError:
        return GameParseError(
            [Diagnostic(self.path, tok.line, tok.col, "error", message)]
        )

    def expect_punct(self, value: str) -> Token:
        tok = self.next()
        if tok.kind != "punct" or tok.value != value:
            raise self.fail(tok, f"expected {value!r}, found {tok.value or 'end of file'!r}")
        return tok

    def at_punct(self, value: str) -> bool:
        tok = self.peek()
        return tok.kind == "punct" and tok.value == value

    def eat_punct(self, value: str) -> bool:
        if self.at_punct(value):
            self.pos += 1
            return True
        return False

    def at_keyword(self, word: str) -> bool:
        tok = self.peek()
        return tok.kind == "ident" and tok.value == word

    def expect_keyword(self, word: str) -> Token:
        tok = self.next()
        if tok.kind != "ident" or tok.value != word:
            raise self.fail(tok, f"expected {word!r}, found {tok.value or 'end of file'!r}")
        return tok

    def expect_name(self, what: str = "identifier") -> Name:
        tok = self.next()
        if tok.kind != "ident":
            raise self.fail(tok, f"expected {what}, found {tok.value or 'end of file'!r}")
        if tok.value in KEYWORDS:
            raise self.fail(tok, f"keyword {tok.value!r} cannot be used as {what}")
        return Name(tok.value, tok.line, tok.col)

    def name_list(self) -> tuple[Name, ...]:
        names = [self.expect_name()]
        while self.eat_punct(","):
            names.append(self.expect_name())
        return tuple(names)

    # -- declarations ------------------------------------------------------

    def parse_file(self) -> list[Decl]:
        decls: list[Decl] = []
        while self.peek().kind != "eof":
            decls.append(self.declaration())
        return decls

    def declaration(self) -> Decl:
        tok = self.peek()
        if tok.kind != "ident":
            raise self.fail(tok, f"expected a declaration, found {tok.value!r}")
        word = tok.value
        if word == "game":
            self.next()
            return DGame(self.expect_name("game name"))
        if word == "players":
            self.next()
            return DPlayers(self.name_list())
        if word == "track":
            self.next()
            name = self.expect_name("track name")
            self.expect_punct("{")
            values = self.name_list()
            self.expect_punct("}")
            return DTrack(name, values)
        if word == "decisions":
            self.next()
            return DDecisions(self.name_list())
        if word == "set":
            self.next()
            name = self.expect_name("set name")
            self.expect_punct("=")
            return DSet(name, self.expression())
        if word == "action":
            self.next()
            name = self.expect_name("action name")
            self.expect_punct("{")
            clauses = [self.action_clause()]
            while self.eat_punct(";"):
                clauses.append(self.action_clause())
            self.expect_punct("}")
            return DAction(name, tuple(clauses))
        if word == "init":
            self.next()
            return DInit(self.expression(), tok.line, tok.col)
        if word == "legal":
            self.next()
            player = self.expect_name("player name")
            decision = self.expect_name("decision name")
            self.expect_keyword("when")
            return DLegal(player, decision, self.expression())
        if word == "consequence":
            return self.consequence()
        if word == "outcome":
            self.next()
            if self.at_keyword("default"):
                self.next()
                return DDefaultOutcome(self.expect_name("outcome name"))
            name = self.expect_name("outcome name")
            self.expect_keyword("when")
            return DOutcome(name, self.expression())
        if word == "forall":
            self.next()
            binder = self.binder()
            guard = self.guard() if self.at_keyword("if") else None
            self.expect_punct("{")
            body: list[Decl] = []
            while not self.at_punct("}"):
                if self.peek().kind == "eof":
                    raise self.fail(self.peek(), "unterminated forall block")
                body.append(self.declaration())
            self.expect_punct("}")
            return DForall(binder, guard, tuple(body))
        raise self.fail(tok, f"unknown declaration {word!r}")

    def action_clause(self) -> RActionClause:
        guard = None
        if self.at_keyword("when"):
            self.next()
            guard = self.expression()
        self.expect_keyword("set")
        assignments = [self.assignment()]
        while self.eat_punct(","):
            assignments.append(self.assignment())
        return RActionClause(guard, tuple(assignments))

    def assignment(self) -> tuple[Name, Name]:
        track = self.expect_name("track name")
        self.expect_punct("=")
        return track, self.expect_name("value")

    def consequence(self) -> DConsequence:
        tok = self.expect_keyword("consequence")
        self.expect_punct("(")
        pattern = [self.pattern_entry()]
        while self.eat_punct(","):
            pattern.append(self.pattern_entry())
        self.expect_punct(")")
        guard = None
        if self.at_keyword("when"):
            self.next()
            guard = self.expression()
        self.expect_punct("->")
        results = [self.result()]
        while self.eat_punct(";"):
            results.append(self.result())
        return DConsequence(tuple(pattern), guard, tuple(results), tok.line, tok.col)

    def pattern_entry(self) -> Name:
        tok = self.next()
        if tok.kind == "punct" and tok.value == "*":
            return Name(WILDCARD, tok.line, tok.col)
        if tok.kind == "ident" and tok.value not in KEYWORDS:
            return Name(tok.value, tok.line, tok.col)
        raise self.fail(tok, "expected a decision, 0, or * in pattern")

    def result(self) -> tuple[Fraction, tuple[Name, ...]]:
        self.expect_keyword("prob")
        tok = self.next()
        if tok.kind != "ident" or not tok.value.isdigit():
            raise self.fail(tok, "expected a probability numerator")
        num = int(tok.value)
        if self.eat_punct("/"):
            den_tok = self.next()
            if den_tok.kind != "ident" or not den_tok.value.isdigit():
                raise self.fail(den_tok, "expected a probability denominator")
            den = int(den_tok.value)
        else:
            den = 1
        if den == 0 or not 0 < Fraction(num, den) <= 1:
            raise self.fail(tok, f"probability {num}/{den} not in (0, 1]")
        self.expect_punct(":")
        actions = [self.expect_name("action name")]
        while self.eat_punct(","):
            actions.append(self.expect_name("action name"))
        return Fraction(num, den), tuple(actions)

    # -- expressions --------------------------------------------------------

    def expression(self) -> RExpr:
        parts = [self.and_expr()]
        while self.at_keyword("or"):
            self.next()
            parts.append(self.and_expr())
        return parts[0] if len(parts) == 1 else ROr(_flatten(ROr, parts))

    def and_expr(self) -> RExpr:
        parts = [self.unary_expr()]
        while self.at_keyword("and"):
            self.next()
            parts.append(self.unary_expr())
        return parts[0] if len(parts) == 1 else RAnd(_flatten(RAnd, parts))

    def unary_expr(self) -> RExpr:
        if self.at_keyword("not"):
            self.next()
            return RNot(self.unary_expr())
        return self.atom()

    def atom(self) -> RExpr:
        tok = self.peek()
        if self.eat_punct("("):
            if self.at_keyword("any") or self.at_keyword("all"):
                expr = self.comprehension()
            else:
                expr = self.expression()
            self.expect_punct(")")
            return expr
        if tok.kind == "ident" and tok.value not in KEYWORDS:
            name = self.expect_name()
            if self.eat_punct("="):
                value = self.expect_name("value")
                return RLit(name, value)
            return RRef(name)
        raise self.fail(tok, f"expected an expression, found {tok.value or 'end of file'!r}")

    def comprehension(self) -> RComprehension:
        tok = self.next()  # any | all
        binders = [self.binder()]
        while self.eat_punct(","):
            binders.append(self.binder())
        guard = self.guard() if self.at_keyword("if") else None
        self.expect_punct(":")
        body = self.expression()
        return RComprehension(tok.value, tuple(binders), guard, body, tok.line, tok.col)

    def binder(self) -> Binder:
        var = self.expect_name("binder variable")
        self.expect_keyword("in")
        tok = self.peek()
        if self.eat_punct("{"):
            values = [self.expect_name().text]
            while self.eat_punct(","):
                values.append(self.expect_name().text)
            self.expect_punct("}")
            return Binder(var.text, tuple(values), var.line, var.col)
        lo_tok = self.next()
        if lo_tok.kind != "ident" or not lo_tok.value.isdigit():
            raise self.fail(tok, "expected a value list {..} or integer range lo..hi")
        self.expect_punct("..")
        hi_tok = self.next()
        if hi_tok.kind != "ident" or not hi_tok.value.isdigit():
            raise self.fail(hi_tok, "expected an integer range bound")
        lo, hi = int(lo_tok.value), int(hi_tok.value)
        if hi < lo:
            raise self.fail(lo_tok, f"empty range {lo}..{hi}")
        return Binder(var.text, tuple(str(v) for v in range(lo, hi + 1)), var.line, var.col)

    def guard(self) -> Guard:
        tok = self.expect_keyword("if")
        comparisons = [self.comparison()]
        while self.at_keyword("and"):
            self.next()
            comparisons.append(self.comparison())
        return Guard(tuple(comparisons), tok.line, tok.col)

    def comparison(self) -> Comparison:
        left = self.arith()
        op_tok = self.next()
        if op_tok.kind != "punct" or op_tok.value not in ("=", "!=", "<", "<=", ">", ">="):
            raise self.fail(op_tok, "expected a comparison operator in guard")
        return Comparison(op_tok.value, left, self.arith())

    def arith(self) -> Arith:
        node = self.arith_term()
        while self.at_punct("+") or self.at_punct("-"):
            op = self.next().value
            node = (op, node, self.arith_term())
        return node

    def arith_term(self) -> Arith:
        node = self.arith_factor()
        while self.at_punct("*"):
            self.next()
            node = ("*", node, self.arith_factor())
        return node

    def arith_factor(self) -> Arith:
        if self.eat_punct("("):
            node = self.arith()
            self.expect_punct(")")
            return node
        tok = self.next()
        if tok.kind != "ident":
            raise self.fail(tok, "expected an integer or binder variable")
        if tok.value.isdigit():
            return ("int", int(tok.value))
        return ("var", tok.value, tok.line, tok.col)


def _flatten(cls, parts: list[RExpr]) -> tuple[RExpr, ...]:
    out: list[RExpr] = []
    for p in parts:
        if isinstance(p, cls):
            out.extend(p.parts)
        else:
            out.append(p)
    return tuple(out)


# ---------------------------------------------------------------------------
# Macro expansion
# ---------------------------------------------------------------------------


class _Expander:
    """Substitutes forall binders into identifiers, purely syntactically."""

    def __init__(self, path: str):
        self.path = path
        self.diagnostics: list[Diagnostic] = []

    def error(self, line: int, col: int, message: str) -> None:
        self.diagnostics.append(Diagnostic(self.path, line, col, "error", message))

    def subst(self, name: Name, env: dict[str, str]) -> Name:
        text = name.text
        if "$" not in text:
            return name
        out = []
        i = 0
        while i < len(text):
            if text[i] == "$":
                j = i + 1
                while j < len(text) and (text[j].isalnum() or text[j] == "_"):
                    j += 1
                var = text[i + 1 : j]
                if var in env:
                    out.append(env[var])
                else:
                    self.error(name.line, name.col, f"unbound macro variable ${var}")
                    out.append(text[i:j])
                i = j
            else:
                out.append(text[i])
                i += 1
        return Name("".join(out), name.line, name.col)

    def eval_arith(self, node: Arith, env: dict[str, str]) -> Optional[int]:
        if node[0] == "int":
            return node[1]
        if node[0] == "var":
            _, var, line, col = node
            value = env.get(var)
            if value is None:
                self.error(line, col, f"unbound macro variable {var} in guard")
                return None
            try:
                return int(value)
            except ValueError:
                self.error(line, col, f"binder {var}={value!r} is not integer-valued")
                return None
        op, left, right = node
        lv, rv = self.eval_arith(left, env), self.eval_arith(right, env)
        if lv is None or rv is None:
            return None
        return {"+": lv + rv, "-": lv - rv, "*": lv * rv}[op]

    def eval_guard(self, guard: Guard, env: dict[str, str]) -> bool:
        for comparison in guard.comparisons:
            lv = self.eval_arith(comparison.left, env)
            rv = self.eval_arith(comparison.right, env)
            if lv is None or rv is None:
                return False
            ok = {
                "=": lv == rv, "!=": lv != rv, "<": lv < rv,
                "<=": lv <= rv, ">": lv > rv, ">=": lv >= rv,
            }[comparison.op]
            if not ok:
                return False
        return True

    def expand_decls(self, decls, env: dict[str, str]) -> list[Decl]:
        out: list[Decl] = []
        for decl in decls:
            if isinstance(decl, DForall):
                for value in decl.binder.values:
                    inner = dict(env)
                    inner[decl.binder.var] = value
                    if decl.guard is not None and not self.eval_guard(decl.guard, inner):
                        continue
                    out.extend(self.expand_decls(decl.body, inner))
            else:
                out.append(self.expand_decl(decl, env))
        return out

    def expand_decl(self, decl: Decl, env: dict[str, str]) -> Decl:
        s = lambda n: self.subst(n, env)
        if isinstance(decl, DGame):
            return DGame(s(decl.name))
        if isinstance(decl, DPlayers):
            return DPlayers(tuple(s(n) for n in decl.names))
        if isinstance(decl, DTrack):
            return DTrack(s(decl.name), tuple(s(v) for v in decl.values))
        if isinstance(decl, DDecisions):
            return DDecisions(tuple(s(n) for n in decl.names))
        if isinstance(decl, DSet):
            return DSet(s(decl.name), self.expand_expr(decl.expr, env))
        if isinstance(decl, DAction):
            clauses = tuple(
                RActionClause(
                    None if c.guard is None else self.expand_expr(c.guard, env),
                    tuple((s(t), s(v)) for t, v in c.assignments),
                )
                for c in decl.clauses
            )
            return DAction(s(decl.name), clauses)
        if isinstance(decl, DInit):
            return DInit(self.expand_expr(decl.expr, env), decl.line, decl.col)
        if isinstance(decl, DLegal):
            return DLegal(s(decl.player), s(decl.decision), self.expand_expr(decl.region, env))
        if isinstance(decl, DConsequence):
            return DConsequence(
                tuple(s(p) for p in decl.pattern),
                None if decl.guard is None else self.expand_expr(decl.guard, env),
                tuple((p, tuple(s(a) for a in acts)) for p, acts in decl.results),
                decl.line,
                decl.col,
            )
        if isinstance(decl, DOutcome):
            return DOutcome(s(decl.name), self.expand_expr(decl.region, env))
        if isinstance(decl, DDefaultOutcome):
            return DDefaultOutcome(s(decl.name))
        raise TypeError(decl)

    def expand_expr(self, expr: RExpr, env: dict[str, str]) -> RExpr:
        if isinstance(expr, RLit):
            return RLit(self.subst(expr.track, env), self.subst(expr.value, env))
        if isinstance(expr, RRef):
            return RRef(self.subst(expr.name, env))
        if isinstance(expr, RNot):
            return RNot(self.expand_expr(expr.operand, env))
        if isinstance(expr, RAnd):
            # comprehensions may expand to same-class conjunctions; flatten
            # so the printed form re-parses to an identical node
            return RAnd(_flatten(RAnd, [self.expand_expr(p, env) for p in expr.parts]))
        if isinstance(expr, ROr):
            return ROr(_flatten(ROr, [self.expand_expr(p, env) for p in expr.parts]))
        if isinstance(expr, RComprehension):
            parts: list[RExpr] = []
            for combo in itertools.product(*(b.values for b in expr.binders)):
                inner = dict(env)
                for b, value in zip(expr.binders, combo):
                    inner[b.var] = value
                if expr.guard is not None and not self.eval_guard(expr.guard, inner):
                    continue
                parts.append(self.expand_expr(expr.body, inner))
            if not parts:
                self.error(expr.line, expr.col, "comprehension expands to no terms")
                return RAnd(())
            if len(parts) == 1:
                return parts[0]
            cls = ROr if expr.kind == "any" else RAnd
            return cls(_flatten(cls, parts))
        raise TypeError(expr)


# ---------------------------------------------------------------------------
# Semantic analysis and system construction
# ---------------------------------------------------------------------------


class _Builder:
    def __init__(self, path: str):
        self.path = path
        self.diagnostics: list[Diagnostic] = []

    def error(self, name_or_line, col: Optional[int] = None, message: str = "") -> None:
        if isinstance(name_or_line, Name):
            line, col = name_or_line.line, name_or_line.col
        else:
            line = name_or_line
        self.diagnostics.append(Diagnostic(self.path, line, col, "error", message))

    def build(self, decls: list[Decl]) -> Optional[GameSystem]:
        game_name: Optional[str] = None
        players: list[str] = []
        players_seen = False
        tracks: list[TrackSpec] = []
        track_map: dict[str, TrackSpec] = {}
        decisions: list[str] = []
        named_sets: dict[str, Expr] = {}
        set_spans: dict[str, Name] = {}
        actions: dict[str, ActionDef] = {}
        init_expr: Optional[Expr] = None
        legality: list[LegalityRule] = []
        cons_rules: list[ConsequenceRule] = []
        outcome_rules: list[OutcomeRule] = []
        default_outcome: Optional[str] = None

        # First pass: declarations that define namespaces.
        for decl in decls:
            if isinstance(decl, DGame):
                if game_name is not None:
                    self.error(decl.name, message="duplicate game declaration")
                game_name = decl.name.text
            elif isinstance(decl, DPlayers):
                if players_seen:
                    self.error(decl.names[0], message="duplicate players declaration")
                players_seen = True
                for n in decl.names:
                    if n.text in players:
                        self.error(n, message=f"duplicate player {n.text!r}")
                    else:
                        players.append(n.text)
            elif isinstance(decl, DTrack):
                if decl.name.text in track_map:
                    self.error(decl.name, message=f"duplicate track {decl.name.text!r}")
                    continue
                values: list[str] = []
                for v in decl.values:
                    if v.text in values:
                        self.error(v, message=f"duplicate value {v.text!r} in track {decl.name.text!r}")
                    else:
                        values.append(v.text)
                spec = TrackSpec(decl.name.text, tuple(values))
                tracks.append(spec)
                track_map[spec.name] = spec
            elif isinstance(decl, DDecisions):
                for n in decl.names:
                    if n.text in ("0", WILDCARD):
                        self.error(n, message=f"decision name {n.text!r} is reserved")
                    elif n.text in decisions:
                        self.error(n, message=f"duplicate decision {n.text!r}")
                    else:
                        decisions.append(n.text)
            elif isinstance(decl, DSet):
                if decl.name.text in set_spans:
                    self.error(decl.name, message=f"duplicate set {decl.name.text!r}")
                else:
                    set_spans[decl.name.text] = decl.name
            elif isinstance(decl, DAction):
                if decl.name.text in actions:
                    self.error(decl.name, message=f"duplicate action {decl.name.text!r}")
                actions[decl.name.text] = ActionDef(decl.name.text, ())  # placeholder

        if not players:
            self.error(1, 1, "no players declared")

        def resolve_expr(expr: RExpr) -> Expr:
            if isinstance(expr, RLit):
                track = track_map.get(expr.track.text)
                if track is None:
                    self.error(expr.track, message=f"unknown track {expr.track.text!r}")
                elif expr.value.text not in track.values:
                    self.error(
                        expr.value,
                        message=f"track {expr.track.text!r} has no value {expr.value.text!r}",
                    )
                return Lit(expr.track.text, expr.value.text)
            if isinstance(expr, RRef):
                if expr.name.text not in set_spans:
                    self.error(expr.name, message=f"unknown named set {expr.name.text!r}")
                return Ref(expr.name.text)
            if isinstance(expr, RNot):
                return Not(resolve_expr(expr.operand))
            if isinstance(expr, RAnd):
                return And(tuple(resolve_expr(p) for p in expr.parts))
            if isinstance(expr, ROr):
                return Or(tuple(resolve_expr(p) for p in expr.parts))
            raise TypeError(f"unexpanded node {expr!r}")

        # Second pass: bodies (namespaces now known).
        for decl in decls:
            if isinstance(decl, DSet):
                named_sets[decl.name.text] = resolve_expr(decl.expr)
            elif isinstance(decl, DAction):
                clauses = []
                for clause in decl.clauses:
                    guard = None if clause.guard is None else resolve_expr(clause.guard)
                    assignments = []
                    for track_name, value in clause.assignments:
                        track = track_map.get(track_name.text)
                        if track is None:
                            self.error(track_name, message=f"unknown track {track_name.text!r}")
                        elif value.text not in track.values:
                            self.error(
                                value,
                                message=f"track {track_name.text!r} has no value {value.text!r}",
                            )
                        assignments.append((track_name.text, value.text))
                    clauses.append(ActionClause(guard, tuple(assignments)))
                actions[decl.name.text] = ActionDef(decl.name.text, tuple(clauses))
            elif isinstance(decl, DInit):
                if init_expr is not None:
                    self.error(decl.line, decl.col, "duplicate init declaration")
                init_expr = resolve_expr(decl.expr)
            elif isinstance(decl, DLegal):
                if decl.player.text not in players:
                    self.error(decl.player, message=f"unknown player {decl.player.text!r}")
                if decl.decision.text not in decisions:
                    self.error(decl.decision, message=f"unknown decision {decl.decision.text!r}")
                legality.append(
                    LegalityRule(decl.player.text, decl.decision.text, resolve_expr(decl.region))
                )
            elif isinstance(decl, DConsequence):
                if players and len(decl.pattern) != len(players):
                    self.error(
                        decl.line,
                        decl.col,
                        f"pattern arity {len(decl.pattern)} does not match {len(players)} players",
                    )
                pattern: list[Optional[str]] = []
                for entry in decl.pattern:
                    if entry.text == "0":
                        pattern.append(None)
                    elif entry.text == WILDCARD:
                        pattern.append(WILDCARD)
                    else:
                        if entry.text not in decisions:
                            self.error(entry, message=f"unknown decision {entry.text!r} in pattern")
                        pattern.append(entry.text)
                guard = None if decl.guard is None else resolve_expr(decl.guard)
                total = sum((p for p, _ in decl.results), Fraction(0))
                if total != 1:
                    self.error(
                        decl.line, decl.col, f"consequence probabilities sum to {total}, not 1"
                    )
                results = []
                for p, act_names in decl.results:
                    for a in act_names:
                        if a.text not in actions:
                            self.error(a, message=f"unknown action {a.text!r}")
                    results.append((p, tuple(a.text for a in act_names)))
                cons_rules.append(ConsequenceRule(tuple(pattern), guard, tuple(results)))
            elif isinstance(decl, DOutcome):
                outcome_rules.append(OutcomeRule(resolve_expr(decl.region), decl.name.text))
            elif isinstance(decl, DDefaultOutcome):
                if default_outcome is not None:
                    self.error(decl.name, message="duplicate default outcome")
                default_outcome = decl.name.text

        # The outcome list is derived in canonical order (rule order, then the
        # default) so serialization round-trips regardless of where the
        # default was declared in the source.
        outcomes: list[str] = []
        for rule in outcome_rules:
            if rule.outcome not in outcomes:
                outcomes.append(rule.outcome)
        if default_outcome is not None and default_outcome not in outcomes:
            outcomes.append(default_outcome)

        # Named-set cycle detection.
        visiting: set[str] = set()
        done: set[str] = set()

        def visit(name: str) -> None:
            if name in done or name not in named_sets:
                return
            if name in visiting:
                self.error(set_spans[name], message=f"cyclic named-set reference through {name!r}")
                done.add(name)
                return
            visiting.add(name)
            stack = [named_sets[name]]
            while stack:
                node = stack.pop()
                if isinstance(node, Ref):
                    visit(node.name)
                elif isinstance(node, Not):
                    stack.append(node.operand)
                elif isinstance(node, (And, Or)):
                    stack.extend(node.parts)
            visiting.discard(name)
            done.add(name)

        for name in named_sets:
            visit(name)

        if init_expr is None:
            self.error(1, 1, "missing init declaration")
        if default_outcome is None:
            self.error(1, 1, "missing default outcome declaration")
        if not tracks:
            self.error(1, 1, "no tracks declared")

        if self.diagnostics:
            return None

        sys = GameSystem(
            players=tuple(players),
            tracks=tuple(tracks),
            init=init_expr,
            decisions=tuple(decisions),
            actions=actions,
            consequence_rules=tuple(cons_rules),
            legality_rules=tuple(legality),
            outcomes=tuple(outcomes),
            outcome_rules=tuple(outcome_rules),
            default_outcome=default_outcome,
            named_sets=named_sets,
            name=game_name,
        )
        problems = core.validate_system(sys)
        if problems:  # anything span-aware checks missed
            for p in problems:
                self.error(1, 1, p)
            return None
        if not core.initial_states(sys):
            self.error(1, 1, "no state satisfies the init expression")
            return None
        return sys


def parse_game(text: str, path: str = "<string>") -> GameSystem:
    """Parse and validate a game description; raises GameParseError on problems."""
    decls = _Parser(_lex(text, path), path).parse_file()
    expander = _Expander(path)
    expanded = expander.expand_decls(decls, {})
    if expander.diagnostics:
        raise GameParseError(expander.diagnostics)
    builder = _Builder(path)
    sys = builder.build(expanded)
    if builder.diagnostics:
        raise GameParseError(builder.diagnostics)
    assert sys is not None
    return sys


def parse_file(path: str) -> GameSystem:
    with open(path, encoding="utf-8") as handle:
        return parse_game(handle.read(), path)


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------


def _format_expr(expr: Expr, parent: str = "or") -> str:
    if isinstance(expr, Lit):
        return f"{expr.track}={expr.value}"
    if isinstance(expr, Ref):
        return expr.name
    if isinstance(expr, Not):
        return f"not {_format_expr(expr.operand, 'not')}"
    if isinstance(expr, And):
        body = " and ".join(_format_expr(p, "and") for p in expr.parts)
        return f"({body})" if parent == "not" else body
    if isinstance(expr, Or):
        body = " or ".join(_format_expr(p, "or") for p in expr.parts)
        return body if parent == "or" else f"({body})"
    raise TypeError(expr)


def serialize_game(sys: GameSystem) -> str:
    """Render a system to canonical source; parse(serialize(sys)) == sys.

    Macros are not reconstructed: an expanded system serializes to expanded
    rules.  Rule order is preserved so first-match semantics survive the
    round trip.
    """
    lines: list[str] = []
    if sys.name is not None:
        lines.append(f"game {sys.name}")
    lines.append("players " + ", ".join(sys.players))
    for track in sys.tracks:
        lines.append(f"track {track.name} {{ " + ", ".join(track.values) + " }")
    if sys.decisions:
        lines.append("decisions " + ", ".join(sys.decisions))
    for name, expr in sys.named_sets.items():
        lines.append(f"set {name} = " + _format_expr(expr))
    for action in sys.actions.values():
        clauses = []
        for clause in action.clauses:
            assigns = ", ".join(f"{t}={v}" for t, v in clause.assignments)
            if clause.guard is None:
                clauses.append(f"set {assigns}")
            else:
                clauses.append(f"when {_format_expr(clause.guard)} set {assigns}")
        lines.append(f"action {action.name} {{ " + " ; ".join(clauses) + " }")
    lines.append("init " + _format_expr(sys.init))
    for rule in sys.legality_rules:
        lines.append(f"legal {rule.player} {rule.decision} when " + _format_expr(rule.region))
    for rule in sys.consequence_rules:
        pattern = ", ".join("0" if e is None else e for e in rule.pattern)
        results = " ; ".join(
            f"prob {p}: " + ", ".join(names) for p, names in rule.results
        )
        guard = "" if rule.guard is None else f" when {_format_expr(rule.guard)}"
        lines.append(f"consequence ({pattern}){guard} -> {results}")
    for rule in sys.outcome_rules:
        lines.append(f"outcome {rule.outcome} when " + _format_expr(rule.region))
    lines.append(f"outcome default {sys.default_outcome}")
    return "\n".join(lines) + "\n"
