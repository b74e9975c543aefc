import pytest

from stochcls.dsl import parse_term, serialize
from stochcls.errors import InvalidAddressError, UnknownInfoNameError
from stochcls.terms import (
    EnvInfo, Loop, Seq, Term, canonicalize, compartment_at, compartments, congruent,
    count_individuals, normalize_value, replace_content, resolve, total_size, update_info,
)

ECO = "{En}<Temp:1>[{C}<ind:1; Vol:full>[{a}<>[Egg]^2 | {a}<>[Larva | 1]] | {a}<>[Adult | 1]]"


def test_identical_siblings_merge():
    assert serialize(parse_term("C | C | C | C | C")) == "C^5"
    assert serialize(parse_term("{a}<>[Egg]^2 | {a}<>[Egg]^3")) == "{a}<>[Egg]^5"


def test_empty_term_and_epsilon():
    assert Term() == parse_term("0")
    assert serialize(Term()) == "0"
    assert parse_term("eps | a") == parse_term("a")
    assert Seq().is_empty


def test_canonicalize_is_idempotent():
    t = parse_term(ECO)
    assert canonicalize(canonicalize(t)) == canonicalize(t) == t


def test_congruence_ignores_sibling_order_only():
    assert congruent(parse_term("{a}<>[Egg] | {a}<>[Larva | 1]"),
                     parse_term("{a}<>[Larva | 1] | {a}<>[Egg]"))
    assert not congruent(parse_term("a.b"), parse_term("b.a"))


def test_term_constructor_merges_and_drops_zero():
    t = Term([(Seq("a"), 2), (Seq("a"), 1), (Seq("b"), 0)])
    assert t.items == ((Seq("a"), 3),)
    assert Term.of((Seq("x"), 1), t).size == 4


def test_values_normalize():
    assert normalize_value(2.0) == 2 and isinstance(normalize_value(2.0), int)
    assert normalize_value(True) is True
    assert EnvInfo({"Temp": 10.0}).text == "Temp:10"


def test_info_union_rejects_clashes():
    info = EnvInfo({"a": 1})
    assert info.union({"b": 2}).text == "a:1; b:2"
    with pytest.raises(ValueError):
        info.union({"a": 3})
    with pytest.raises(UnknownInfoNameError):
        info.replace("zz", 1)


def test_compartment_addresses():
    t = parse_term(ECO)
    comps = {c.address: c for c in compartments(t)}
    assert set(comps) == {(), (0,), (0, 0), (0, 1), (1,)}
    assert comps[()].loop.wrap.text == "En"
    assert comps[(0, 1)].multiplicity == 2  # "{a}<>[1 | Larva]" sorts before "{a}<>[Egg]"
    assert compartment_at(t, (0,)).info["Vol"] == "full"
    info, content = resolve(t, (0,))
    assert info["ind"] == 1 and count_individuals(content, "Egg") == 2


def test_bad_address_raises():
    t = parse_term(ECO)
    with pytest.raises(InvalidAddressError):
        compartment_at(t, (7,))
    with pytest.raises(InvalidAddressError):
        compartment_at(t, (1, 0, 0))


def test_update_info_and_replace_content():
    t = parse_term(ECO)
    t2 = update_info(t, (0,), "Vol", "empty")
    assert compartment_at(t2, (0,)).info["Vol"] == "empty"
    assert compartment_at(t, (0,)).info["Vol"] == "full"  # original untouched
    with pytest.raises(UnknownInfoNameError):
        update_info(t, (0,), "Nope", 1)
    t3 = replace_content(t, (0,), Term())
    assert total_size(t3) == 1


def test_total_size_counts_nested_copies():
    assert total_size(parse_term(ECO)) == 4
    assert total_size(parse_term("{C}<>[{a}<>[Egg]^3]^2")) == 6


def test_loop_equality_is_structural():
    a = Loop("a", {"x": 1}, parse_term("Egg"))
    b = Loop(Term([(Seq("a"), 1)]), EnvInfo({"x": 1.0}), parse_term("Egg"))
    assert a == b and hash(a) == hash(b)
