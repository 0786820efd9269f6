"""Executable game-system semantics: states, legality, consequences, outcomes, play.

A game system is a finite description of a discrete game without hidden
information: a list of players, a factored state space (one finite value
track per factor), a set of decisions players may take, state-modifying
actions, and three rule families tying them together (legality, consequence,
outcome).  Everything here is exact: probabilities are `fractions.Fraction`
end to end, so downstream equality checks never depend on float tolerance.

Systems are immutable after construction and safe to share across threads.
All operations are pure functions of their inputs plus an explicit seed.
"""

from __future__ import annotations

import itertools
import random
import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Iterator, Optional, Union

from .errors import (
    AmbiguityWarning,
    IllegalDecisionError,
    InvalidSystemError,
    NoRuleMatchesError,
    NonTerminalStateError,
    TerminalStateError,
)

# A probability is an exact rational in (0, 1]; Fraction already stores
# lowest terms and gives exact arithmetic.
Probability = Fraction

# One value identifier per track, in track-list order.
GameState = tuple[str, ...]

# One entry per player: a decision identifier, or None for the null decision.
DecisionTuple = tuple[Optional[str], ...]

# In consequence-rule patterns, "*" matches any decision including null.
WILDCARD = "*"


def parse_probability(text: str) -> Fraction:
    """Parse a probability literal like ``1/2`` or ``1``."""
    frac = Fraction(text.strip())
    if not 0 < frac <= 1:
        raise ValueError(f"probability {text!r} not in (0, 1]")
    return frac


def format_probability(p: Fraction) -> str:
    return str(p)


# ---------------------------------------------------------------------------
# State-set expressions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Lit:
    """Literal ``track = value``: the set of states where the track holds value."""

    track: str
    value: str


@dataclass(frozen=True)
class Not:
    operand: "Expr"


@dataclass(frozen=True)
class And:
    parts: tuple["Expr", ...]


@dataclass(frozen=True)
class Or:
    parts: tuple["Expr", ...]


@dataclass(frozen=True)
class Ref:
    """Reference to a named state set."""

    name: str


Expr = Union[Lit, Not, And, Or, Ref]


# ---------------------------------------------------------------------------
# Declarations
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TrackSpec:
    """One factor of the state space: a named, ordered finite value set."""

    name: str
    values: tuple[str, ...]


@dataclass(frozen=True)
class ActionClause:
    guard: Optional[Expr]  # None means the whole state space
    assignments: tuple[tuple[str, str], ...]  # (track, value) pairs


@dataclass(frozen=True)
class ActionDef:
    """A state transformer: first matching clause applies, else identity."""

    name: str
    clauses: tuple[ActionClause, ...]


@dataclass(frozen=True)
class ConsequenceRule:
    """Maps matching decision tuples in a state region to weighted action lists.

    Pattern entries are a decision id, None (null only), or ``"*"`` (any,
    including null).  Result probabilities must sum to exactly 1.
    """

    pattern: tuple[Optional[str], ...]
    guard: Optional[Expr]
    results: tuple[tuple[Fraction, tuple[str, ...]], ...]


@dataclass(frozen=True)
class LegalityRule:
    player: str
    decision: str
    region: Expr


@dataclass(frozen=True)
class OutcomeRule:
    region: Expr
    outcome: str


@dataclass
class GameSystem:
    """A complete game description; immutable after construction.

    Rule lists are ordered: consequence and outcome rules use first-match
    semantics, so serialization must preserve their order.
    """

    players: tuple[str, ...]
    tracks: tuple[TrackSpec, ...]
    init: Expr
    decisions: tuple[str, ...]
    actions: dict[str, ActionDef]
    consequence_rules: tuple[ConsequenceRule, ...]
    legality_rules: tuple[LegalityRule, ...]
    outcomes: tuple[str, ...]
    outcome_rules: tuple[OutcomeRule, ...]
    default_outcome: str
    named_sets: dict[str, Expr] = field(default_factory=dict)
    name: Optional[str] = None

    _engine: Optional["_Engine"] = field(
        default=None, compare=False, repr=False, init=False
    )

    def engine(self) -> "_Engine":
        if self._engine is None:
            self._engine = _Engine(self)
        return self._engine

    def track_names(self) -> tuple[str, ...]:
        return tuple(t.name for t in self.tracks)

    def state_from_dict(self, assignment: dict[str, str]) -> GameState:
        """Build a state from a full track->value mapping, validating it."""
        missing = [t.name for t in self.tracks if t.name not in assignment]
        if missing:
            raise ValueError(f"state literal missing tracks: {', '.join(missing)}")
        extra = set(assignment) - set(self.track_names())
        if extra:
            raise ValueError(f"unknown tracks in state literal: {', '.join(sorted(extra))}")
        values = []
        for track in self.tracks:
            v = assignment[track.name]
            if v not in track.values:
                raise ValueError(f"track {track.name!r} has no value {v!r}")
            values.append(v)
        return tuple(values)

    def state_to_dict(self, state: GameState) -> dict[str, str]:
        return {t.name: v for t, v in zip(self.tracks, state)}


def format_state(sys: GameSystem, state: GameState) -> str:
    return ",".join(f"{t.name}={v}" for t, v in zip(sys.tracks, state))


def format_decision_tuple(t: DecisionTuple) -> str:
    return "(" + ",".join("0" if d is None else d for d in t) + ")"


# ---------------------------------------------------------------------------
# Structural validation
# ---------------------------------------------------------------------------


def validate_system(sys: GameSystem) -> list[str]:
    """Return structural problems (empty list means the system is well formed).

    Checks reference resolution, probability sums, named-set acyclicity, and
    pattern arity.  Does not enumerate states; see `check_completeness` for
    the behavioral checks.
    """
    problems: list[str] = []
    if not sys.players:
        problems.append("player list is empty")
    if len(set(sys.players)) != len(sys.players):
        problems.append("duplicate player names")
    if not sys.tracks:
        problems.append("no tracks declared")
    track_names = [t.name for t in sys.tracks]
    if len(set(track_names)) != len(track_names):
        problems.append("duplicate track names")
    tracks = {t.name: t for t in sys.tracks}
    for t in sys.tracks:
        if not t.values:
            problems.append(f"track {t.name!r} has no values")
        if len(set(t.values)) != len(t.values):
            problems.append(f"track {t.name!r} has duplicate values")
    if len(set(sys.decisions)) != len(sys.decisions):
        problems.append("duplicate decision names")
    for d in sys.decisions:
        if d in ("0", WILDCARD):
            problems.append(f"decision name {d!r} is reserved")
    if len(set(sys.outcomes)) != len(sys.outcomes):
        problems.append("duplicate outcome names")

    def check_expr(expr: Expr, where: str, stack: tuple[str, ...] = ()) -> None:
        if isinstance(expr, Lit):
            track = tracks.get(expr.track)
            if track is None:
                problems.append(f"{where}: unknown track {expr.track!r}")
            elif expr.value not in track.values:
                problems.append(
                    f"{where}: track {expr.track!r} has no value {expr.value!r}"
                )
        elif isinstance(expr, Not):
            check_expr(expr.operand, where, stack)
        elif isinstance(expr, (And, Or)):
            for part in expr.parts:
                check_expr(part, where, stack)
        elif isinstance(expr, Ref):
            if expr.name not in sys.named_sets:
                problems.append(f"{where}: unknown named set {expr.name!r}")
            elif expr.name in stack:
                problems.append(
                    f"{where}: cyclic named-set reference through {expr.name!r}"
                )
            else:
                check_expr(
                    sys.named_sets[expr.name], f"set {expr.name}", stack + (expr.name,)
                )

    for name, expr in sys.named_sets.items():
        check_expr(expr, f"set {name}", (name,))
    check_expr(sys.init, "init")

    decisions = set(sys.decisions)
    for action in sys.actions.values():
        for clause in action.clauses:
            if clause.guard is not None:
                check_expr(clause.guard, f"action {action.name}")
            for track_name, value in clause.assignments:
                track = tracks.get(track_name)
                if track is None:
                    problems.append(
                        f"action {action.name}: unknown track {track_name!r}"
                    )
                elif value not in track.values:
                    problems.append(
                        f"action {action.name}: track {track_name!r} has no value {value!r}"
                    )
    for rule in sys.legality_rules:
        if rule.player not in sys.players:
            problems.append(f"legality rule: unknown player {rule.player!r}")
        if rule.decision not in decisions:
            problems.append(f"legality rule: unknown decision {rule.decision!r}")
        check_expr(rule.region, f"legal {rule.player} {rule.decision}")
    for i, rule in enumerate(sys.consequence_rules):
        where = f"consequence rule #{i + 1}"
        if len(rule.pattern) != len(sys.players):
            problems.append(
                f"{where}: pattern arity {len(rule.pattern)} != {len(sys.players)} players"
            )
        for entry in rule.pattern:
            if entry is not None and entry != WILDCARD and entry not in decisions:
                problems.append(f"{where}: unknown decision {entry!r} in pattern")
        if rule.guard is not None:
            check_expr(rule.guard, where)
        if not rule.results:
            problems.append(f"{where}: no results")
        total = sum((p for p, _ in rule.results), Fraction(0))
        if rule.results and total != 1:
            problems.append(f"{where}: probabilities sum to {total}, not 1")
        for p, names in rule.results:
            if not 0 < p <= 1:
                problems.append(f"{where}: probability {p} not in (0, 1]")
            for action_name in names:
                if action_name not in sys.actions:
                    problems.append(f"{where}: unknown action {action_name!r}")
    for i, rule in enumerate(sys.outcome_rules):
        where = f"outcome rule #{i + 1}"
        if rule.outcome not in sys.outcomes:
            problems.append(f"{where}: unknown outcome {rule.outcome!r}")
        check_expr(rule.region, where)
    if sys.default_outcome not in sys.outcomes:
        problems.append(f"default outcome {sys.default_outcome!r} not declared")
    return problems


def require_valid(sys: GameSystem) -> GameSystem:
    problems = validate_system(sys)
    if problems:
        raise InvalidSystemError(problems)
    return sys


# ---------------------------------------------------------------------------
# Compiled evaluation engine
# ---------------------------------------------------------------------------

_EvalFn = Callable[[GameState, list], bool]


class _Engine:
    """Per-system compiled tables and caches.

    Expressions compile to closures over track indices; named sets get one
    memo slot per state evaluation so shared sets (like a win condition used
    in every legality rule) are computed once per state.  Legal-set,
    consequence, action, and outcome lookups are cached by state, which makes
    tree construction fast on transposition-heavy games.
    """

    def __init__(self, sys: GameSystem):
        self.sys = sys
        self.track_index = {t.name: i for i, t in enumerate(sys.tracks)}
        self.value_lists = tuple(t.values for t in sys.tracks)
        self.ref_index = {name: i for i, name in enumerate(sys.named_sets)}
        self._ref_fns: list[Optional[_EvalFn]] = [None] * len(sys.named_sets)
        for name, expr in sys.named_sets.items():
            self._ref_fns[self.ref_index[name]] = self.compile(expr)
        self.init_fn = self.compile(sys.init)
        self._rules_by_player: dict[str, list[tuple[str, _EvalFn]]] = {
            p: [] for p in sys.players
        }
        for rule in sys.legality_rules:
            self._rules_by_player[rule.player].append(
                (rule.decision, self.compile(rule.region))
            )
        self._cons_compiled = [
            (rule.pattern, None if rule.guard is None else self.compile(rule.guard), rule.results)
            for rule in sys.consequence_rules
        ]
        self._outcome_compiled = [
            (self.compile(rule.region), rule.outcome) for rule in sys.outcome_rules
        ]
        self._action_compiled: dict[str, list[tuple[Optional[_EvalFn], tuple[tuple[int, str], ...]]]] = {}
        for name, action in sys.actions.items():
            clauses = []
            for clause in action.clauses:
                guard_fn = None if clause.guard is None else self.compile(clause.guard)
                assigns = tuple(
                    (self.track_index[t], v) for t, v in clause.assignments
                )
                clauses.append((guard_fn, assigns))
            self._action_compiled[name] = clauses

        self._legal_cache: dict[GameState, tuple[frozenset[str], ...]] = {}
        self._cons_cache: dict[tuple[DecisionTuple, GameState], tuple] = {}
        self._apply_cache: dict[tuple[tuple[str, ...], GameState], GameState] = {}
        self._outcome_cache: dict[GameState, str] = {}

    # -- expression compilation -------------------------------------------

    def compile(self, expr: Expr) -> _EvalFn:
        if isinstance(expr, Lit):
            idx = self.track_index[expr.track]
            val = expr.value
            return lambda s, m: s[idx] == val
        if isinstance(expr, Not):
            inner = self.compile(expr.operand)
            return lambda s, m: not inner(s, m)
        if isinstance(expr, And):
            parts = tuple(self.compile(p) for p in expr.parts)
            return lambda s, m: all(f(s, m) for f in parts)
        if isinstance(expr, Or):
            parts = tuple(self.compile(p) for p in expr.parts)
            return lambda s, m: any(f(s, m) for f in parts)
        if isinstance(expr, Ref):
            ridx = self.ref_index[expr.name]
            fns = self._ref_fns

            def ref_fn(s, m, _ridx=ridx, _fns=fns):
                v = m[_ridx]
                if v is None:
                    v = m[_ridx] = _fns[_ridx](s, m)
                return v

            return ref_fn
        raise TypeError(f"not a state-set expression: {expr!r}")

    def fresh_memo(self) -> list:
        return [None] * len(self._ref_fns)

    def eval(self, fn: _EvalFn, state: GameState) -> bool:
        return fn(state, self.fresh_memo())

    # -- cached semantic lookups ------------------------------------------

    def legal_sets(self, state: GameState) -> tuple[frozenset[str], ...]:
        cached = self._legal_cache.get(state)
        if cached is None:
            memo = self.fresh_memo()
            cached = tuple(
                frozenset(
                    d for d, fn in self._rules_by_player[p] if fn(state, memo)
                )
                for p in self.sys.players
            )
            self._legal_cache[state] = cached
        return cached

    def consequences(self, dtuple: DecisionTuple, state: GameState, strict: bool = False):
        key = (dtuple, state)
        cached = self._cons_cache.get(key)
        if cached is None or strict:
            memo = self.fresh_memo()
            matches = []
            for pattern, guard_fn, results in self._cons_compiled:
                if _pattern_matches(pattern, dtuple) and (
                    guard_fn is None or guard_fn(state, memo)
                ):
                    matches.append(results)
                    if not strict:
                        break
            if not matches:
                raise NoRuleMatchesError(state, dtuple)
            if strict and len(matches) > 1:
                warnings.warn(
                    AmbiguityWarning(
                        f"{len(matches)} consequence rules match "
                        f"{format_decision_tuple(dtuple)}; first-match applies"
                    )
                )
            cached = matches[0]
            self._cons_cache[key] = cached
        return cached

    def apply_actions(self, names: tuple[str, ...], state: GameState) -> GameState:
        key = (names, state)
        cached = self._apply_cache.get(key)
        if cached is None:
            current = state
            for name in names:
                clauses = self._action_compiled.get(name)
                if clauses is None:
                    raise KeyError(f"unknown action {name!r}")
                memo = self.fresh_memo()
                for guard_fn, assigns in clauses:
                    if guard_fn is None or guard_fn(current, memo):
                        values = list(current)
                        for idx, v in assigns:
                            values[idx] = v
                        current = tuple(values)
                        break
            cached = current
            self._apply_cache[key] = cached
        return cached

    def outcome(self, state: GameState) -> str:
        cached = self._outcome_cache.get(state)
        if cached is None:
            memo = self.fresh_memo()
            cached = self.sys.default_outcome
            for fn, outcome_id in self._outcome_compiled:
                if fn(state, memo):
                    cached = outcome_id
                    break
            self._outcome_cache[state] = cached
        return cached


def _pattern_matches(pattern: tuple[Optional[str], ...], dtuple: DecisionTuple) -> bool:
    for want, got in zip(pattern, dtuple):
        if want == WILDCARD:
            continue
        if want != got:
            return False
    return True


# ---------------------------------------------------------------------------
# Operations
# ---------------------------------------------------------------------------


def eval_state_set(expr: Expr, state: GameState, sys: GameSystem) -> bool:
    """True iff the state lies in the subset denoted by the expression."""
    engine = sys.engine()
    return engine.eval(engine.compile(expr), state)


def apply_action(sys: GameSystem, names, state: GameState) -> GameState:
    """Apply an action or product of actions, left to right as written."""
    if isinstance(names, str):
        names = (names,)
    return sys.engine().apply_actions(tuple(names), state)


def legal_set(sys: GameSystem, player: str, state: GameState) -> frozenset[str]:
    """All decisions legal for the player at the state (union over rules)."""
    idx = sys.players.index(player)
    return sys.engine().legal_sets(state)[idx]


def is_terminal(sys: GameSystem, state: GameState) -> bool:
    """True iff no player has a legal decision."""
    return not any(sys.engine().legal_sets(state))


def legal_decision_tuples(sys: GameSystem, state: GameState) -> list[DecisionTuple]:
    """All joint decision tuples at a non-terminal state.

    The product over players of their legal sets, substituting the null
    decision for players with no legal decision.  Deterministic order:
    per-player decisions sorted, then the cartesian product.
    """
    sets = sys.engine().legal_sets(state)
    if not any(sets):
        raise TerminalStateError(f"state {state!r} is terminal")
    choices = [sorted(s) if s else [None] for s in sets]
    return [tuple(combo) for combo in itertools.product(*choices)]


def consequences(
    sys: GameSystem, dtuple: DecisionTuple, state: GameState, strict: bool = False
) -> tuple[tuple[Fraction, tuple[str, ...]], ...]:
    """Resolve the first matching consequence rule for a legal tuple.

    In strict mode a match by more than one rule emits `AmbiguityWarning`
    (first-match still decides the result).
    """
    return sys.engine().consequences(dtuple, state, strict=strict)


def outcome(sys: GameSystem, state: GameState) -> str:
    """Outcome of a terminal state: first matching rule, else the default."""
    if not is_terminal(sys, state):
        raise NonTerminalStateError(f"state {state!r} is not terminal")
    return sys.engine().outcome(state)


def enumerate_states(
    sys: GameSystem, within: Optional[Expr] = None
) -> Iterator[GameState]:
    """Yield every state of the track product once, in lexicographic track order.

    With `within`, yield only states inside that set.
    """
    engine = sys.engine()
    if within is None:
        yield from itertools.product(*engine.value_lists)
        return
    fn = engine.compile(within)
    for state in itertools.product(*engine.value_lists):
        if fn(state, engine.fresh_memo()):
            yield state


def initial_states(sys: GameSystem) -> list[GameState]:
    """All initial states, in lexicographic enumeration order."""
    return list(enumerate_states(sys, within=sys.init))


def reachable_states(sys: GameSystem) -> set[GameState]:
    """Forward closure of the initial states under all legal consequences.

    Tuples without a covering consequence rule contribute no successors (the
    gap itself is reported by `check_completeness`, which revisits every
    reachable state).
    """
    engine = sys.engine()
    seen: set[GameState] = set()
    frontier = initial_states(sys)
    seen.update(frontier)
    while frontier:
        next_frontier: list[GameState] = []
        for state in frontier:
            if not any(engine.legal_sets(state)):
                continue
            for dtuple in legal_decision_tuples(sys, state):
                try:
                    results = engine.consequences(dtuple, state)
                except NoRuleMatchesError:
                    continue
                for _, action_names in results:
                    succ = engine.apply_actions(action_names, state)
                    if succ not in seen:
                        seen.add(succ)
                        next_frontier.append(succ)
        frontier = next_frontier
    return seen


# ---------------------------------------------------------------------------
# Completeness
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Violation:
    kind: str
    message: str
    state: Optional[GameState] = None
    decision_tuple: Optional[DecisionTuple] = None


@dataclass
class CompletenessReport:
    scope: str
    states_checked: int
    violations: list[Violation]

    @property
    def complete(self) -> bool:
        return not self.violations


def check_completeness(sys: GameSystem, scope: str = "reachable") -> CompletenessReport:
    """Verify the gameplay loop can always run over the given state scope.

    Checks that the initial set is nonempty, that every legal decision tuple
    at every in-scope non-terminal state resolves to consequences whose
    probabilities sum to exactly 1, and that outcomes resolve on in-scope
    terminal states.  Violations are reported with state witnesses, never
    raised.
    """
    if scope not in ("reachable", "all"):
        raise ValueError(f"scope must be 'reachable' or 'all', not {scope!r}")
    engine = sys.engine()
    violations: list[Violation] = []

    for i, rule in enumerate(sys.consequence_rules):
        total = sum((p for p, _ in rule.results), Fraction(0))
        if total != 1:
            violations.append(
                Violation(
                    "probability-sum",
                    f"consequence rule #{i + 1} probabilities sum to {total}, not 1",
                )
            )

    if not initial_states(sys):
        violations.append(Violation("empty-initial-set", "no state satisfies init"))
        return CompletenessReport(scope, 0, violations)

    if scope == "reachable":
        states: Iterator[GameState] = iter(reachable_states(sys))
    else:
        states = enumerate_states(sys)

    checked = 0
    for state in states:
        checked += 1
        if not any(engine.legal_sets(state)):
            engine.outcome(state)  # default outcome guarantees resolution
            continue
        for dtuple in legal_decision_tuples(sys, state):
            try:
                results = engine.consequences(dtuple, state)
            except NoRuleMatchesError:
                violations.append(
                    Violation(
                        "no-consequence",
                        f"no consequence rule matches {format_decision_tuple(dtuple)} "
                        f"at {format_state(sys, state)}",
                        state=state,
                        decision_tuple=dtuple,
                    )
                )
                continue
            for _, action_names in results:
                engine.apply_actions(action_names, state)
    return CompletenessReport(scope, checked, violations)


# ---------------------------------------------------------------------------
# Gameplay
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PlayStep:
    state: GameState
    decision_tuple: DecisionTuple
    consequence_index: int
    actions: tuple[str, ...]
    next_state: GameState


@dataclass(frozen=True)
class Playthrough:
    initial_state: GameState
    steps: tuple[PlayStep, ...]
    outcome: str


# A policy maps (player, legal set, state) to one of the legal decisions.
Policy = Callable[[str, frozenset[str], GameState], str]


def first_policy(player: str, legal: frozenset[str], state: GameState) -> str:
    """Pick the lexicographically first legal decision."""
    return min(legal)


def play(
    sys: GameSystem,
    s0: GameState,
    policy: Optional[Policy] = None,
    seed: int = 0,
) -> Playthrough:
    """Run one full playthrough from s0 and return the trace.

    Each round every player with a nonempty legal set picks a decision (from
    `policy`, default uniform random), the joint tuple resolves to its
    consequence distribution, one weighted entry is sampled, and its actions
    apply left to right.  The random generator is `random.Random(seed)`
    (Mersenne Twister, stable across platforms), consumed by consequence
    sampling and by the default uniform policy, so a fixed seed and policy
    reproduce the playthrough exactly.
    """
    engine = sys.engine()
    rng = random.Random(seed)
    if policy is None:
        def policy(player: str, legal: frozenset[str], state: GameState) -> str:
            return rng.choice(sorted(legal))

    steps: list[PlayStep] = []
    state = s0
    while True:
        sets = engine.legal_sets(state)
        if not any(sets):
            break
        decisions: list[Optional[str]] = []
        for player, legal in zip(sys.players, sets):
            if not legal:
                decisions.append(None)
                continue
            d = policy(player, legal, state)
            if d not in legal:
                raise IllegalDecisionError(
                    f"policy chose {d!r} for {player} but legal set is {sorted(legal)}"
                )
            decisions.append(d)
        dtuple = tuple(decisions)
        results = engine.consequences(dtuple, state)
        if len(results) == 1:
            index = 0
        else:
            u = rng.random()
            acc = Fraction(0)
            index = len(results) - 1
            for i, (p, _) in enumerate(results):
                acc += p
                if u < acc:
                    index = i
                    break
        action_names = results[index][1]
        next_state = engine.apply_actions(action_names, state)
        steps.append(PlayStep(state, dtuple, index, action_names, next_state))
        state = next_state
    return Playthrough(s0, tuple(steps), engine.outcome(state))
