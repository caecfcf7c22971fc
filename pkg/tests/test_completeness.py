import random

import pytest

from foldlog.completeness import (
    DEPTH_BOUND_REACHED,
    NOT_PROVEN,
    PROVEN,
    SEARCH_EXHAUSTED,
    assertion_constants,
    asserted_clauses,
    check_completeness,
    residual_query,
)
from foldlog.folding import SearchConfig, fold
from foldlog.logic import is_ground
from foldlog.parser import parse_program

import _gen as G
from _gen import load


def _verdict(name, cfg=None):
    r = fold(load(name))
    return r, check_completeness(r.prepared, r.outcomes, cfg)


@pytest.mark.parametrize("name", ["horn_ic", "disjunctive", "medical_partial"])
def test_proven_with_replayable_refutation(name):
    _, v = _verdict(name)
    assert v.status == PROVEN and v.proven
    assert v.replays()
    last = v.refutation[-1].clause
    assert not last.head and not last.body


def test_ancestry_step_in_disjunctive_refutation():
    _, v = _verdict("disjunctive")
    labels = [n.step.label for n in v.refutation]
    assert "ancestor" in labels
    assert v.refutation[-1].step.label == "ancestor"


def test_identical_leaf_proven():
    p = parse_program("#edb p/1.\n#res\nr(X) :- p(X).\n#query\nq(X) :- p(X).\n")
    r = fold(p)
    v = check_completeness(r.prepared, r.outcomes)
    assert v.status == PROVEN
    assert len(v.refutation) <= 4


def test_uncovered_disjunct_not_proven():
    r, v = _verdict("residual")
    assert v.status == NOT_PROVEN and v.reason == SEARCH_EXHAUSTED
    rq = residual_query(r.prepared.query, r.outcomes)
    assert [[str(l) for l in d] for d in rq.disjuncts] == [["p4(X)", "p5(X)"]]


def test_depth_bound_reported():
    _, v = _verdict("disjunctive", SearchConfig(depth_bound=1))
    assert v.status == NOT_PROVEN and v.reason == DEPTH_BOUND_REACHED


@pytest.mark.parametrize("name", ["key_combine", "medical_join", "fd_constant", "negation_kept"])
def test_resources_needing_extra_facts_not_proven(name):
    # these resources join in predicates the query never mentions
    _, v = _verdict(name)
    assert not v.proven


def test_assertion_uses_one_constant_per_variable():
    q = load("four_cases").query
    consts = assertion_constants(q)
    names = {c.value for c in consts.values()}
    assert len(names) == len(consts)
    clauses = asserted_clauses(q, consts)
    for c in clauses:
        assert not c.body and all(is_ground(a) for a in c.head)


def test_residual_query_edges():
    r = fold(load("disjunctive"))
    assert residual_query(r.prepared.query, r.outcomes).disjuncts == ()
    assert residual_query(r.prepared.query, []).disjuncts == r.prepared.query.disjuncts


def test_proven_is_sound_on_small_random_sample():
    """Proven means folded answers equal the oracle answers."""
    checked = 0
    for seed in range(60):
        rng = random.Random(seed)
        p = parse_program(G.random_program(rng))
        r = fold(p, SearchConfig(depth_bound=4, max_nodes=400))
        v = check_completeness(r.prepared, r.outcomes, SearchConfig(depth_bound=4, max_nodes=2000))
        if not v.proven:
            continue
        for _ in range(10):
            edb = G.random_facts(p, rng)
            if edb is None:
                continue
            assert G.folded_answers(r.outcomes, p, edb) == G.oracle_answers(p, edb), seed
            checked += 1
    assert checked > 20
