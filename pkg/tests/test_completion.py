import itertools
import random

import pytest

from foldlog.completion import (
    CompileError,
    PatternMismatch,
    clark_completion,
    cnf_of_dnf,
    combine_all,
    combine_ccrr,
    compile_negation,
    find_mccrr,
    mccrr,
)
from foldlog.evaluator import FactStore, seminaive_eval
from foldlog.logic import Atom, Clause, Const, Literal, Skolem, Var, subsumes, variant
from foldlog.parser import parse_clause, parse_program
from foldlog.program import check_extra_safety

from _gen import load


def C(text):
    return parse_clause(text)


def _variant_set(got, want):
    want = [C(w) for w in want]
    return len(got) == len(want) and all(any(variant(g, w) for g in got) for w in want)


def _skolem_free(c: Clause) -> Clause:
    """Replace Skolem terms by named variables so clauses can be compared
    against hand-written text."""
    seen = {}

    def walk(t):
        if isinstance(t, Skolem):
            return seen.setdefault(t, Var(f"F{len(seen)}"))
        return t

    head = tuple(Atom(a.pred, tuple(walk(t) for t in a.args)) for a in c.head)
    return Clause(head, c.body)


# --------------------------------------------------------- completion

def test_single_definition_ccrr():
    cc = clark_completion(list(load("horn_ic").res))
    assert [r.label for r in cc.rules] == ["CCrr1", "CCrr2"]
    assert variant(cc.rules[0], C("p1(X,Y,Z) :- r(X,Y,Z)."))
    sk = cc.rules[1].head[0].args[1]
    assert isinstance(sk, Skolem) and sk.args == (Var("X"), Var("Y"), Var("Z"))


def test_skolem_arguments_are_head_variables():
    for name in ("horn_ic", "medical_join", "key_combine", "key_decomposition"):
        p = load(name)
        for r in clark_completion(list(p.res)).rules:
            head_vars = set(r.body[0].atom.args)
            for a in r.head:
                for t in a.args:
                    if isinstance(t, Skolem):
                        assert set(t.args) == head_vars


def test_second_resource_three_rules():
    cc = clark_completion(list(load("medical_join").res))
    r2 = [r for r in cc.rules if r.body[0].pred == "r2"]
    assert sorted(r.head[0].pred for r in r2) == ["drugs", "notes", "prescription"]
    presc = next(r for r in r2 if r.head[0].pred == "prescription")
    g1, y3, g3 = presc.head[0].args
    assert isinstance(g1, Skolem) and isinstance(g3, Skolem) and y3 == Var("Y3")


def test_two_definitions_give_disjunctive_ccrr():
    cc = clark_completion(list(load("disjunctive").res))
    assert cc.is_disjunctive
    assert _variant_set(cc.rules, ["p1(X) ; p3(X) :- r(X).", "p2(X) ; p3(X) :- r(X)."])


def test_cnf_of_dnf_drops_absorbed_factors():
    p, q = C("p(X).").head[0], C("q(X).").head[0]
    lp, lq = Literal(p), Literal(q)
    # (p & q) | p  ==  p
    assert cnf_of_dnf([(lp, lq), (lp,)]) == [(lp,)]


def test_cnf_cap():
    dnf = [tuple(Literal(Atom(f"p{i}{j}", (Var("X"),))) for j in range(3)) for i in range(5)]
    with pytest.raises(CompileError):
        cnf_of_dnf(dnf)


# -------------------------------------------------------- combination

def test_combined_patients_rule():
    p = load("key_combine")
    cc = clark_completion(list(p.res))
    c1, c3 = cc.rules[0], cc.rules[2]
    got = combine_ccrr(c1, c3, 1)
    assert variant(_skolem_free(got), C("patients(X1,X2,Y2,F0) :- r1(X1,X2,X3,X4), r2(X1,Y2,Y3)."))


def test_combine_with_itself_is_identity():
    cc = clark_completion(list(load("key_combine").res))
    assert combine_ccrr(cc.rules[0], cc.rules[0], 1) == cc.rules[0]


def test_combination_order_insensitive():
    text = """
#edb t/4, a/1, b/1, c/1.
#ic
X2 = Y2 :- t(K,X2,X3,X4), t(K,Y2,Y3,Y4).
#res
r1(K,X) :- t(K,X,U,V), a(K).
r2(K,Y) :- t(K,U,Y,V), b(K).
r3(K,Z) :- t(K,U,V,Z), c(K).
"""
    cc = clark_completion(list(parse_program(text).res))
    rs = [r for r in cc.rules if r.head[0].pred == "t"]
    results = []
    for order in itertools.permutations(rs):
        acc = order[0]
        for nxt in order[1:]:
            acc = combine_ccrr(acc, nxt, 1)
        results.append(acc)
    assert len(results) == 6
    for r in results[1:]:
        assert _same_up_to_body_order(r, results[0])


def _same_up_to_body_order(a, b):
    a, b = _skolem_free(a), _skolem_free(b)
    return subsumes(a, b) and subsumes(b, a)


def test_combine_all_for_key():
    p = load("key_combine")
    cc = clark_completion(list(p.res))
    combos = combine_all(cc, p.keys)
    assert len(combos) == 1
    assert combos[0].label.startswith("CCrrK1")


# ----------------------------------------------------- negation compile

def test_negation_compile_substitutes_extra_safe_preds():
    p = load("negation_compiled")
    cp = compile_negation(p)
    head, dnf = cp.idb_c["e21"]
    preds = {l.pred for conj in dnf for l in conj}
    assert preds <= {"e01", "e02", "e03", "e04"}
    # r's negated e12 became primed base atoms
    r_preds = {l.pred for c in cp.res_clauses() for l in c.body}
    assert "e03'" in r_preds and "e04'" in r_preds
    assert len(cp.added_ics) == 2


def test_compiled_definitions_stay_extra_safe():
    p = load("negation_compiled")
    assert all(check_extra_safety(r) for r in p.idb)
    cp = compile_negation(p)
    for head, dnf in cp.idb_c.values():
        for conj in dnf:
            assert check_extra_safety(Clause((head,), conj))


def test_non_extra_safe_idb_is_left_alone():
    p = load("negation_kept")
    cp = compile_negation(p)
    assert "p" not in cp.compiled
    assert {str(c) for c in cp.res_clauses()} == {"r(X,Y,Z) :- s(X,Y), p'(X,Y), l(Y,Z,U)."}


def test_negation_free_program_identity():
    p = load("horn_ic")
    cp = compile_negation(p)
    assert not cp.renames and not cp.added_ics


def test_compiled_idb_equivalent_on_random_facts():
    p = load("negation_compiled")
    cp = compile_negation(p)
    flat = [Clause((h,), conj) for h, dnf in cp.idb_c.values() for conj in dnf]
    rng = random.Random(5)
    dom = [Const(c) for c in "ab"]
    arity = {"e01": 2, "e02": 3, "e03": 2, "e04": 2}
    for _ in range(40):
        base = FactStore()
        for pred, n in arity.items():
            for tup in itertools.product(dom, repeat=n):
                if rng.random() < 0.4:
                    base.add(Atom(pred, tup))
        idb = {"e11", "e12", "e21"}
        assert seminaive_eval(list(p.idb), base).restrict(idb) == seminaive_eval(flat, base).restrict(idb)


# ---------------------------------------------------------------- MCCrr

def test_all_paths_mccrr():
    m = find_mccrr(list(load("all_paths").res))["r"]
    assert m.head == Atom("edge", (Var("X"), Var("Y")))
    assert [str(l) for l in m.conj] == ["r(X,Z)", "r(Z,Y)"]
    assert m.exists == (Var("Z"),)


def test_bounded_variant_reads_base_as_resource():
    m = mccrr(C("r(X,Y) :- e(X,Y)."), C("r(X,Y) :- e(X,Z), e(Z,Y)."))
    assert str(m) == "e(X,Y) :- r(X,Y), not exists Z (r(X,Z), r(Z,Y))."


def test_base_only_resource_mismatch():
    with pytest.raises(PatternMismatch):
        mccrr(C("r(X,Y) :- e(X,Y)."), C("s(X,Y) :- e(X,Y)."))
    assert find_mccrr([C("r(X,Y) :- e(X,Y).")]) == {}
