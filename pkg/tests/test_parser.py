import random
from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from foldlog.logic import Atom, Clause, Const, Literal, Var, format_clause, num
from foldlog.parser import ParseError, parse_clause, parse_program, parse_program_with_diagnostics, tokenize

from _gen import FIXTURES, load


def test_sections_and_roles():
    p = load("horn_ic")
    assert p.role("p1") == "EDB" and p.role("r") == "RES"
    assert len(p.ics) == 1 and len(p.res) == 1
    assert p.query.name == "q" and p.query.answer == (Var("X"), Var("Y"))


def test_disjunctive_body_becomes_dnf():
    p = load("four_cases")
    assert len(p.query.disjuncts) == 4


def test_key_and_cwa_declarations():
    assert load("key_combine").keys == {"patients": 1}
    assert "p3" in load("disjunctive_cwa").cwa


def test_negation_and_idb():
    p = load("negation_compiled")
    assert p.has_negation
    assert {r.head[0].pred for r in p.idb} == {"e11", "e12", "e21"}


def test_facts_section():
    p = load("edge_pairs")
    assert {f.head[0] for f in p.facts} == {Atom("r", (Const("a"), Const("b"))), Atom("r", (Const("b"), Const("c")))}


def test_unsafe_rule_is_reported_with_variables():
    prog, diags = parse_program_with_diagnostics("#res\nr(X,Y) :- p(X).\n")
    assert prog is None
    assert any("unsafe" in d.message and "Y" in d.message for d in diags)


def test_unknown_section_and_position():
    prog, diags = parse_program_with_diagnostics("#edb p/1.\n#bogus\n")
    assert prog is None
    assert diags[0].line == 2


def test_parse_program_raises_with_diagnostics():
    with pytest.raises(ParseError) as e:
        parse_program("#query\nq(X) :- p(X\n")
    assert e.value.diagnostics


def test_skolem_tokens_rejected_in_programs():
    prog, diags = parse_program_with_diagnostics("#query\nq(X) :- p(X, $sk_r_0_U(X)).\n")
    assert prog is None


def test_numbers_are_exact():
    c = parse_clause("p(0.1, 1/3, -2).")
    assert c.head[0].args == (num(Fraction(1, 10)), num(Fraction(1, 3)), num(-2))


def test_tokenize_reports_bad_characters():
    _, diags = tokenize("p(X) :- q(X) @ r.")
    assert diags


@pytest.mark.parametrize("path", sorted(FIXTURES.glob("*.fl")), ids=lambda p: p.stem)
def test_every_fixture_parses(path):
    prog, diags = parse_program_with_diagnostics(path.read_text())
    assert prog is not None, diags


# ----------------------------------------------------------- round trip

SYMBOLS = ["a", "bob", "x_1", "Hello world", "it's", "mike"]
OPS = ["=", "!=", "<", "<=", ">", ">="]


def _random_term(rng):
    k = rng.random()
    if k < 0.4:
        return Var(rng.choice(["X", "Y", "Z1", "_", "Abc"]))
    if k < 0.7:
        return Const(rng.choice(SYMBOLS))
    return num(Fraction(rng.randint(-20, 20), rng.choice([1, 2, 4, 3])))


def _random_atom(rng):
    p = rng.choice(["p", "q2", "edge", "r_x"])
    return Atom(p, tuple(_random_term(rng) for _ in range(rng.randint(0, 3))))


def _random_clause(rng):
    head = tuple(_random_atom(rng) for _ in range(rng.randint(0, 2)))
    body = []
    for _ in range(rng.randint(0 if head else 1, 4)):
        if rng.random() < 0.25:
            body.append(Literal(Atom(rng.choice(OPS), (_random_term(rng), _random_term(rng)))))
        else:
            body.append(Literal(_random_atom(rng), rng.random() < 0.2))
    return Clause(head, tuple(body))


def test_round_trip_500_random_clauses():
    rng = random.Random(11)
    for _ in range(500):
        c = _random_clause(rng)
        text = format_clause(c)
        back = parse_clause(text)
        assert back.head == c.head and back.body == c.body, text
        assert format_clause(back) == text


@settings(max_examples=300, deadline=None)
@given(st.text(alphabet=st.sampled_from(list("pqX(),.;:- #%'\nabc01=<>!_")), max_size=80))
def test_fuzz_never_crashes(text):
    prog, diags = parse_program_with_diagnostics(text)
    assert prog is not None or diags
