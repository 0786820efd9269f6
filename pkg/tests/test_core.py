"""Core semantics: state sets, actions, legality, consequences, play."""

from __future__ import annotations

import dataclasses
from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from ludokit import core
from ludokit.core import (
    And,
    GameSystem,
    Lit,
    Not,
    Ref,
    TrackSpec,
    first_policy,
)
from ludokit.errors import (
    IllegalDecisionError,
    NonTerminalStateError,
    TerminalStateError,
)


def state_of(sys, **assignment):
    base = {t.name: t.values[0] for t in sys.tracks}
    base.update(assignment)
    return sys.state_from_dict(base)


def board(sys, turn="start", **cells):
    base = {f"c{i}": "e" for i in range(1, 10)}
    base.update(cells)
    return state_of(sys, turn=turn, **base)


class TestEvalStateSet:
    def test_initial_state_in_init(self, ttt):
        s0 = core.initial_states(ttt)[0]
        assert core.eval_state_set(ttt.init, s0, ttt)

    def test_complement(self, ttt):
        s0 = core.initial_states(ttt)[0]
        assert not core.eval_state_set(Not(Lit("turn", "start")), s0, ttt)

    def test_winning_disjunction_on_sum15_triple(self, systems):
        # In the number-claiming rendering the triple {2, 7, 6} sums to 15.
        sys = systems["3to15"]
        s = state_of(sys, turn="O", n2="X", n7="X", n6="X",
                     **{f"n{i}": "e" for i in (1, 3, 4, 5, 8, 9)})
        assert core.eval_state_set(Ref("EX"), s, sys)
        assert core.eval_state_set(Ref("E"), s, sys)

    def test_row_win_on_grid(self, ttt):
        s = board(ttt, turn="O", c1="X", c2="X", c3="X")
        assert core.eval_state_set(Ref("EX"), s, ttt)
        assert not core.eval_state_set(Ref("EO"), s, ttt)


class TestApplyAction:
    def test_first_move_action(self, ttt):
        s0 = core.initial_states(ttt)[0]
        s1 = core.apply_action(ttt, "X_first", s0)
        assert ttt.state_to_dict(s1)["turn"] == "X"
        assert s1[1:] == s0[1:]

    def test_identity_when_no_clause_matches(self, ttt):
        s0 = core.initial_states(ttt)[0]
        assert core.apply_action(ttt, "next", s0) == s0

    def test_product_left_to_right(self, ttt):
        s = board(ttt, turn="X")
        s2 = core.apply_action(ttt, ("X_1", "next"), s)
        d = ttt.state_to_dict(s2)
        assert d["turn"] == "O" and d["c1"] == "X"

    def test_total_on_all_states(self, ttt):
        # apply_action never fails, whatever the state
        for s in list(core.enumerate_states(ttt))[:300]:
            for name in ("X_first", "next", "X_5"):
                out = core.apply_action(ttt, name, s)
                assert len(out) == len(ttt.tracks)


class TestLegalSets:
    def test_initial_legal_set(self, ttt):
        s0 = core.initial_states(ttt)[0]
        assert core.legal_set(ttt, "X", s0) == {"flip"}

    def test_wrong_turn_empty(self, ttt):
        s = board(ttt, turn="O")
        assert core.legal_set(ttt, "X", s) == frozenset()

    def test_nine_moves_on_empty_board(self, ttt):
        s = board(ttt, turn="X")
        assert core.legal_set(ttt, "X", s) == set(str(i) for i in range(1, 10))

    def test_win_blocks_play(self, ttt):
        s = board(ttt, turn="O", c1="X", c2="X", c3="X")
        assert core.legal_set(ttt, "O", s) == frozenset()


class TestTerminality:
    def test_initial_not_terminal(self, ttt):
        assert not core.is_terminal(ttt, core.initial_states(ttt)[0])

    def test_full_board_draw_terminal(self, ttt):
        s = board(ttt, turn="X", c1="X", c2="X", c3="O", c4="O", c5="O",
                  c6="X", c7="X", c8="X", c9="O")
        assert core.is_terminal(ttt, s)
        assert core.outcome(ttt, s) == "draw"

    def test_win_state_terminal(self, ttt):
        s = board(ttt, turn="O", c1="X", c2="X", c3="X")
        assert core.is_terminal(ttt, s)
        assert core.outcome(ttt, s) == "X_wins"

    def test_terminal_iff_no_legal_tuples(self, ttt):
        # cross-check the two code paths on a state sample
        states = list(core.enumerate_states(ttt))[::601]
        for s in states:
            empty = all(
                not core.legal_set(ttt, p, s) for p in ttt.players
            )
            assert core.is_terminal(ttt, s) == empty
            if empty:
                with pytest.raises(TerminalStateError):
                    core.legal_decision_tuples(ttt, s)


class TestDecisionTuples:
    def test_initial_tuple(self, ttt):
        s0 = core.initial_states(ttt)[0]
        assert core.legal_decision_tuples(ttt, s0) == [("flip", "flip")]

    def test_eight_replies(self, ttt):
        s = board(ttt, turn="O", c1="X")
        tuples = core.legal_decision_tuples(ttt, s)
        assert tuples == [(None, str(i)) for i in range(2, 10)]
        assert len(tuples) == 8

    def test_nine_openings(self, ttt):
        s = board(ttt, turn="X")
        tuples = core.legal_decision_tuples(ttt, s)
        assert tuples == [(str(i), None) for i in range(1, 10)]


class TestConsequences:
    def test_coin_flip(self, ttt):
        s0 = core.initial_states(ttt)[0]
        results = core.consequences(ttt, ("flip", "flip"), s0)
        assert results == (
            (Fraction(1, 2), ("X_first",)),
            (Fraction(1, 2), ("O_first",)),
        )

    def test_move_consequence(self, ttt):
        s = board(ttt, turn="X")
        assert core.consequences(ttt, ("1", None), s) == ((Fraction(1), ("X_1", "next")),)

    def test_probability_sum_enforced_at_validation(self, ttt):
        bad_rule = dataclasses.replace(
            ttt.consequence_rules[0],
            results=((Fraction(1, 2), ("X_first",)), (Fraction(1, 3), ("O_first",))),
        )
        bad = dataclasses.replace(
            ttt, consequence_rules=(bad_rule,) + ttt.consequence_rules[1:]
        )
        problems = core.validate_system(bad)
        assert any("sum" in p for p in problems)

    def test_strict_mode_flags_overlap(self, ttt):
        dup = dataclasses.replace(
            ttt, consequence_rules=ttt.consequence_rules + (ttt.consequence_rules[0],)
        )
        s0 = core.initial_states(dup)[0]
        with pytest.warns(core.AmbiguityWarning):
            core.consequences(dup, ("flip", "flip"), s0, strict=True)


class TestOutcome:
    def test_triple_outcome(self, systems):
        sys = systems["3to15"]
        s = state_of(sys, turn="O", n2="X", n7="X", n6="X",
                     **{f"n{i}": "e" for i in (1, 3, 4, 5, 8, 9)})
        # opponent can still move: block all wins first
        s = state_of(sys, turn="O", n2="X", n7="X", n6="X", n1="O", n3="O",
                     n4="O", n5="O", n8="O", n9="O")
        assert core.outcome(sys, s) == "X_wins"

    def test_non_terminal_errors(self, ttt):
        with pytest.raises(NonTerminalStateError):
            core.outcome(ttt, core.initial_states(ttt)[0])


class TestEnumerateStates:
    def test_product_size(self, ttt):
        expected = 1
        for t in ttt.tracks:
            expected *= len(t.values)
        assert expected == 3 ** 10 == 59049
        assert sum(1 for _ in core.enumerate_states(ttt)) == expected

    def test_filter_by_init(self, ttt):
        assert len(core.initial_states(ttt)) == 1

    def test_single_track_stream(self):
        sys = _tiny_system()
        assert list(core.enumerate_states(sys)) == [("a",), ("b",)]


def _tiny_system() -> GameSystem:
    track = TrackSpec("t", ("a", "b"))
    return GameSystem(
        players=("P",),
        tracks=(track,),
        init=Lit("t", "a"),
        decisions=("m",),
        actions={"go": core.ActionDef("go", (core.ActionClause(Lit("t", "a"), (("t", "b"),)),))},
        consequence_rules=(core.ConsequenceRule(("m",), None, ((Fraction(1), ("go",)),)),),
        legality_rules=(core.LegalityRule("P", "m", Lit("t", "a")),),
        outcomes=("done",),
        outcome_rules=(),
        default_outcome="done",
    )


class TestCompleteness:
    def test_tictactoe_reachable_complete(self, ttt):
        report = core.check_completeness(ttt, scope="reachable")
        assert report.complete
        assert report.states_checked > 5000

    def test_tictactoe_all_complete(self, ttt):
        report = core.check_completeness(ttt, scope="all")
        assert report.complete
        assert report.states_checked == 59049

    def test_missing_consequence_detected(self, ttt):
        broken = dataclasses.replace(ttt, consequence_rules=ttt.consequence_rules[1:])
        report = core.check_completeness(broken, scope="reachable")
        kinds = {v.kind for v in report.violations}
        assert "no-consequence" in kinds
        witness = next(v for v in report.violations if v.kind == "no-consequence")
        assert witness.decision_tuple == ("flip", "flip")

    def test_probability_sum_violation_reported(self, ttt):
        bad_rule = dataclasses.replace(
            ttt.consequence_rules[0],
            results=((Fraction(1, 2), ("X_first",)), (Fraction(1, 3), ("O_first",))),
        )
        bad = dataclasses.replace(
            ttt, consequence_rules=(bad_rule,) + ttt.consequence_rules[1:]
        )
        report = core.check_completeness(bad, scope="reachable")
        assert any(v.kind == "probability-sum" for v in report.violations)

    def test_empty_initial_set(self, ttt):
        impossible = dataclasses.replace(
            ttt, init=And((Lit("turn", "start"), Lit("turn", "X")))
        )
        report = core.check_completeness(impossible)
        assert any(v.kind == "empty-initial-set" for v in report.violations)


class TestPlay:
    def test_playthrough_legal_and_ends(self, ttt):
        s0 = core.initial_states(ttt)[0]
        result = core.play(ttt, s0, seed=7)
        assert result.outcome in ("X_wins", "O_wins", "draw")
        for step in result.steps:
            for player, decision in zip(ttt.players, step.decision_tuple):
                legal = core.legal_set(ttt, player, step.state)
                if decision is None:
                    assert not legal
                else:
                    assert decision in legal
        assert core.is_terminal(ttt, result.steps[-1].next_state)

    def test_determinism(self, ttt):
        s0 = core.initial_states(ttt)[0]
        assert core.play(ttt, s0, seed=123) == core.play(ttt, s0, seed=123)
        assert core.play(ttt, s0, seed=123) != core.play(ttt, s0, seed=124)

    def test_first_policy(self, ttt):
        s0 = core.initial_states(ttt)[0]
        result = core.play(ttt, s0, policy=first_policy, seed=5)
        # after the coin, the mover always claims the lowest open cell
        moves = [step.decision_tuple for step in result.steps[1:]]
        claimed = [d for t in moves for d in t if d is not None]
        assert claimed == sorted(claimed)

    def test_coin_frequency(self, ttt):
        s0 = core.initial_states(ttt)[0]
        x_first = 0
        n = 10_000
        for seed in range(n):
            result = core.play(ttt, s0, seed=seed)
            if result.steps[0].actions == ("X_first",):
                x_first += 1
        assert abs(x_first / n - 0.5) < 0.02

    def test_illegal_policy_rejected(self, ttt):
        s0 = core.initial_states(ttt)[0]
        with pytest.raises(IllegalDecisionError):
            core.play(ttt, s0, policy=lambda p, legal, s: "9", seed=0)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10**9))
def test_apply_action_total_property(seed):
    """Actions are total state transformers on random small systems."""
    import random as _random

    import generators

    rng = _random.Random(seed)
    sys = generators.random_system(rng)
    assert core.validate_system(sys) == []
    states = list(core.enumerate_states(sys))
    for _ in range(10):
        s = rng.choice(states)
        name = rng.choice(sorted(sys.actions))
        result = core.apply_action(sys, name, s)
        assert len(result) == len(sys.tracks)
        for value, track in zip(result, sys.tracks):
            assert value in track.values
