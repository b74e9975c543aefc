from stochcls.dsl import parse_pattern, parse_term
from stochcls.patterns import match_all, substitute, variables, weight


def test_level_weight_counts_combinations():
    p = parse_pattern("A | B | $X")
    t = parse_term("A^3 | B^2 | C")
    assert weight(match_all(p, t), ()) == 6
    p2 = parse_pattern("A^2 | $X")
    assert weight(match_all(p2, t), ()) == 3


def test_level_without_rest_must_consume_everything_below_top():
    p = parse_pattern("{m}<>[A]")
    assert weight(match_all(p, parse_term("{m}<>[A] | {m}<>[A | B]")), ()) == 0
    assert weight(match_all(p, parse_term("{m}<>[A]^4")), ()) == 0  # anchored: loop must be the compartment
    anchored = match_all(p, parse_term("{m}<>[A]"))
    assert weight(anchored, ()) == 1


def test_nat_variable_binds_all_copies():
    p = parse_pattern("{a}<>[Adult | Blood^#q | $X]")
    [m] = match_all(p, parse_term("{a}<>[Adult | 1 | Blood^3]"))
    assert m.binding["#q"] == 3
    [m0] = match_all(p, parse_term("{a}<>[Adult | 1]"))
    assert m0.binding["#q"] == 0


def test_info_variable_binds_rest_of_info():
    p = parse_pattern("{C}<Vol:full; @x>[$Y]")
    [m] = match_all(p, parse_term("{C}<Vol:full; ind:2; Temp:3>[0]"))
    assert m.binding["@x"].text == "Temp:3; ind:2"
    assert not match_all(p, parse_term("{C}<Vol:empty; ind:2>[0]"))


def test_substitute_rebuilds_term():
    left = parse_pattern("{C}<@x>[$Y | {a}<>[Egg | $X]]")
    right = parse_pattern("{C}<@x>[$Y | {a}<>[Larva | 1 | $X]]", rhs=True)
    t = parse_term("{C}<ind:1>[{a}<>[Egg]^2 | {a}<>[Pupa]]")
    [m] = match_all(left, t)
    out = substitute(right, m.binding)
    assert out == parse_term("{C}<ind:1>[{a}<>[Egg] | {a}<>[Larva | 1] | {a}<>[Pupa]]")


def test_variables_collects_sigils():
    p = parse_pattern("{En}<@x>[$Y | {a}<>[Adult | Blood^#q | $X]]")
    assert variables(p) == {"@x", "$Y", "$X", "#q"}
