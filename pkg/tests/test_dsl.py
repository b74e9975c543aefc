import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import generators
from stochcls.aedes import load_rules
from stochcls.dsl import ParseError, parse_events, parse_model, parse_pattern, parse_rule, parse_term, serialize
from stochcls.errors import StochCLSError


@settings(max_examples=200, deadline=None)
@given(st.randoms(use_true_random=False))
def test_term_round_trip(rng):
    t = parse_term(generators.term(rng))
    assert parse_term(serialize(t)) == t


@settings(max_examples=200, deadline=None)
@given(st.randoms(use_true_random=False), st.integers(0, 999))
def test_rule_round_trip(rng, k):
    r = parse_rule(generators.rule(rng, k))
    again = parse_rule(serialize(r))
    assert again == r
    assert again.left == r.left and again.right == r.right
    assert again.guard == r.guard and again.rate.text == r.rate.text


def test_bundled_rules():
    rules = load_rules()
    assert [r.id for r in rules] == [f"R{i}" for i in range(1, 30)]
    text = "\n".join(serialize(r) for r in rules)
    assert parse_model(text) == list(rules)


def test_comments_and_whitespace():
    rules = parse_model("-- header\nrule A1  A\n=> B @ 1.5 ; -- trailing\n")
    assert rules[0].text == "rule A1 A => B @ 1.5;"


def test_strategy_syntax():
    r = parse_rule("rule F {En}<@x>[$Y | {a}<>[Adult | Blood^#q]] => {En}<@x>[$Y] @ 1 by fewest(#q);")
    assert r.strategy.text == "fewest(#q)"
    r = parse_rule("rule T {En}<@x>[$Y | {a}<>[Egg] | {C}<@y>[$Z]] => {En}<@x>[$Y | {C}<@y>[$Z | {a}<>[Egg]]] @ 1 by into(@y);")
    assert r.target is not None and r.strategy.target == "y"


def test_events_parse_sorted():
    ev = parse_events("(Desic, 1, 3.25) (Desic, 2, 2.75)")
    assert ev.text == "(Desic, 2, 2.75)\n(Desic, 1, 3.25)"


@pytest.mark.parametrize("text, where", [
    ("{a}<>[", "column 7"),
    ("A^-1", "column 3"),
    ("{a}<x:1; x:2>[0]", "column 9"),
])
def test_term_errors_have_positions(text, where):
    with pytest.raises(ParseError, match=where):
        parse_term(text)


@pytest.mark.parametrize("text", [
    "rule x A => $Z @ 1;",                 # unbound right-side variable
    "rule x [#q > 1] A => A @ 1;",         # guard on unbound variable
    "rule x A => A @ nosuch(1);",          # unknown rate
    "rule x A => A @ -1;",                 # negative rate
    "rule x A => A @ 1",                   # missing semicolon
    "rule x A^#q => A^(#q+1) @ 1 by most(#z);",
])
def test_bad_rules_rejected(text):
    with pytest.raises(ParseError):
        parse_rule(text)


def test_pattern_variables_only_in_patterns():
    with pytest.raises(ParseError):
        parse_term("$X | A")
    assert parse_pattern("$X | A").rest == "X"


def test_fuzz_never_crashes():
    rng = random.Random(7)
    seeds = [serialize(r) for r in load_rules()] + [generators.term(rng) for _ in range(20)]
    for _ in range(3000):
        text = generators.fuzz_input(rng, seeds)
        for parse in (parse_term, parse_model, parse_events):
            try:
                parse(text)
            except StochCLSError:
                pass


def test_deep_nesting_is_an_error_not_a_crash():
    with pytest.raises(ParseError):
        parse_term("{a}<>[" * 500 + "x" + "]" * 500)
