import itertools
import random

import pytest

from foldlog.completion import clark_completion, find_mccrr
from foldlog.evaluator import (
    DisjunctiveHeads,
    FactStore,
    NotStratified,
    SubcomputationBlowup,
    _naive,
    brute_force_oracle,
    certain_answers,
    eval_mccrr,
    evaluate,
    filter_answers,
    invert_facts,
    materialize,
    seminaive_eval,
    subcomputations,
)
from foldlog.logic import Atom, Const, Skolem
from foldlog.parser import parse_clause, parse_program

from _gen import load

a, b, c, d = (Const(x) for x in "abcd")


def facts(text):
    return FactStore(parse_clause(f + ".").head[0] for f in text.split(";") if f.strip())


def pairs(store, pred):
    return {tuple(str(x) for x in t) for t in store.tuples(pred)}


# ------------------------------------------------------------- inversion

EDGE_RES = "#edb edge/2.\n#res\nr(X,Y) :- edge(X,Z), edge(Z,Y).\n"


def test_invert_single_fact():
    cc = clark_completion(list(parse_program(EDGE_RES).res))
    out = invert_facts(facts("r(a,b)"), cc)
    edges = sorted(out.tuples("edge"), key=str)
    assert len(edges) == 2
    mids = {x for t in edges for x in t if isinstance(x, Skolem)}
    assert len(mids) == 1
    (f,) = mids
    assert f.args == (a, b)
    assert (a, f) in out.tuples("edge") and (f, b) in out.tuples("edge")


def test_invert_two_facts_distinct_skolems():
    cc = clark_completion(list(parse_program(EDGE_RES).res))
    out = invert_facts(facts("r(a,b); r(b,c)"), cc)
    assert len(out.tuples("edge")) == 4
    assert len({x for t in out.tuples("edge") for x in t if isinstance(x, Skolem)}) == 2


def test_invert_empty():
    cc = clark_completion(list(parse_program(EDGE_RES).res))
    assert len(invert_facts(FactStore(), cc)) == 0


def test_invert_refuses_disjunctive_rules():
    with pytest.raises(DisjunctiveHeads):
        invert_facts(facts("r(a)"), clark_completion(list(load("certain").res)))


# -------------------------------------------------------------- semi-naive

def test_transitive_closure():
    rules = [parse_clause("q(X,Y) :- edge(X,Y)."), parse_clause("q(X,Y) :- edge(X,Z), q(Z,Y).")]
    out = seminaive_eval(rules, facts("edge(a,b); edge(b,c)"))
    assert pairs(out, "q") >= {("a", "b"), ("b", "c"), ("a", "c")}


def test_stratified_negation_truth_table():
    rule = parse_clause("t(X,Y) :- s(X,Y), not p(X,Y).")
    dom = [a, b]
    tuples = list(itertools.product(dom, repeat=2))
    for s_bits in itertools.product([0, 1], repeat=4):
        for p_bits in itertools.product([0, 1], repeat=4):
            base = FactStore()
            for t, sb, pb in zip(tuples, s_bits, p_bits):
                if sb:
                    base.add(Atom("s", t))
                if pb:
                    base.add(Atom("p", t))
            got = seminaive_eval([rule], base).tuples("t")
            want = {t for t, sb, pb in zip(tuples, s_bits, p_bits) if sb and not pb}
            assert got == want


def test_recursion_through_negation_rejected():
    rules = [parse_clause("p(X) :- e(X), not q(X)."), parse_clause("q(X) :- e(X), not p(X).")]
    with pytest.raises(NotStratified):
        seminaive_eval(rules, facts("e(a)"))


def _random_rules(rng):
    idb = ["t1", "t2", "t3"]
    edb = ["e1", "e2"]
    rules = []
    for k, h in enumerate(idb):
        for _ in range(rng.randint(1, 2)):
            lower = edb + idb[: k + 1]  # recursion allowed, negation only downward
            body = []
            for _ in range(rng.randint(1, 3)):
                p = rng.choice(lower)
                body.append(f"{p}({rng.choice('XYZ')},{rng.choice('XYZ')})")
            bv = sorted({ch for atom in body for ch in atom if ch in "XYZ"})
            if rng.random() < 0.3 and k > 0:
                neg = rng.choice(edb + idb[:k])
                body.append(f"not {neg}({rng.choice(bv)},{rng.choice(bv)})")
            if rng.random() < 0.2:
                body.append(f"{rng.choice(bv)} != a")
            rules.append(parse_clause(f"{h}({rng.choice(bv)},{rng.choice(bv)}) :- {', '.join(body)}."))
    return rules


def test_seminaive_matches_naive_on_random_programs():
    rng = random.Random(17)
    dom = [a, b, c]
    for _ in range(100):
        rules = _random_rules(rng)
        base = FactStore()
        for p in ("e1", "e2"):
            for _ in range(rng.randint(0, 6)):
                base.add(Atom(p, (rng.choice(dom), rng.choice(dom))))
        fast = seminaive_eval(rules, base)
        slow = _naive(rules, base)
        for p in ("t1", "t2", "t3"):
            assert fast.tuples(p) == slow.get(p, set())


# ----------------------------------------------------------------- filter

def test_filter_drops_skolem_tuples():
    f = Skolem("$sk_r_0_Z", (a, b))
    store = FactStore([Atom("q", (a, b)), Atom("q", (a, f))])
    assert filter_answers(store, "q") == [(a, b)]
    assert filter_answers(FactStore(), "q") == []
    plain = FactStore([Atom("q", (a,)), Atom("q", (b,))])
    assert filter_answers(plain, "q") == [(a,), (b,)]


# ------------------------------------------------------------------ MCCrr

def _mccrr():
    return find_mccrr(list(load("all_paths").res))["r"]


def test_mccrr_examples():
    m = _mccrr()
    assert pairs(eval_mccrr(facts("r(a,b); r(b,c); r(a,c)"), m), "edge") == {("a", "b"), ("b", "c")}
    assert pairs(eval_mccrr(facts("r(a,b)"), m), "edge") == {("a", "b")}
    assert len(eval_mccrr(FactStore(), m)) == 0


def _closure(edges):
    out = set(edges)
    while True:
        new = {(x, w) for x, y in out for z, w in out if y == z} - out
        if not new:
            return out
        out |= new


def test_mccrr_property_random_graphs():
    m = _mccrr()
    rng = random.Random(23)
    for _ in range(100):
        n = rng.randint(1, 8)
        nodes = [Const(f"n{i}") for i in range(n)]
        e = {(rng.choice(nodes), rng.choice(nodes)) for _ in range(rng.randint(0, 2 * n))}
        r = _closure(e)
        got = eval_mccrr(FactStore(Atom("r", t) for t in r), m).tuples("edge")
        assert got <= e
        # for a DAG the undecomposable pairs regenerate the whole closure
        if not any(x == y for x, y in r):
            assert _closure(got) == r


# ------------------------------------------------------ certain answers

def test_three_subcomputations():
    cc = clark_completion(list(load("certain").res))
    subs = list(subcomputations(facts("r(a)"), cc))
    stores = [{str(x) for x in s.store.atoms()} for s in subs]
    assert len(subs) == 3
    assert {"p1(a)", "p2(a)"} in stores and {"p3(a)"} in stores and {"p1(a)", "p2(a)", "p3(a)"} in stores


def test_certain_disjunctive_example():
    assert certain_answers(load("certain"), facts("r(a)")) == [(a,)]
    assert certain_answers(load("certain_none"), facts("r(a)")) == []


def test_certain_without_disjunction_matches_inversion():
    p = parse_program(EDGE_RES + "#query\nq(X,Y) :- edge(X,Z), edge(Z,Y).\n")
    rf = facts("r(a,b); r(b,c)")
    with_facts = p.with_(facts=tuple(parse_clause(f"{x}.") for x in ("r(a,b)", "r(b,c)")))
    assert certain_answers(p, rf) == evaluate(with_facts, "invert").answers


def test_blowup_cap():
    p = load("certain")
    rf = FactStore(Atom("r", (Const(f"c{i}"),)) for i in range(10))
    with pytest.raises(SubcomputationBlowup):
        certain_answers(p, rf, cap=100)


def test_certain_answers_sound_and_monotone():
    p = load("certain")
    rng = random.Random(4)
    dom = [a, b, c, d]
    for _ in range(60):
        base = FactStore()
        for pred in ("p1", "p2", "p3"):
            for x in dom:
                if rng.random() < 0.4:
                    base.add(Atom(pred, (x,)))
        rf = materialize(p, base).restrict({"r"})
        cert = set(certain_answers(p, rf))
        assert cert <= set(brute_force_oracle(p, base))
        extra = FactStore(list(rf.atoms()) + [Atom("r", (rng.choice(dom),))])
        assert cert <= set(certain_answers(p, extra))


# -------------------------------------------------------------- front end

def test_edge_example_end_to_end():
    rep = evaluate(load("edge_pairs"))
    assert rep.route == "invert"
    assert rep.answers == [(a, b), (a, c), (b, c)]


def test_disjunctive_route():
    rep = evaluate(load("certain"))
    assert rep.route == "certain" and rep.answers == [(a,)]


def test_all_paths_route_names_pattern():
    rep = evaluate(load("all_paths"))
    assert rep.route == "mccrr"
    assert any("modified completion" in n for n in rep.notes)
    assert set(rep.answers) == {(a, b), (a, c), (a, d), (b, c), (b, d), (c, d)}


def test_oracle_hand_example():
    p = load("horn_ic")
    assert brute_force_oracle(p, facts("p1(a,b,2); p2(a,c); p3(a,b)")) == [(a, b)]
    assert brute_force_oracle(p, FactStore()) == []


def test_unknown_mode():
    with pytest.raises(ValueError):
        evaluate(load("edge_pairs"), "bogus")
