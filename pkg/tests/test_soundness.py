"""Structural properties of foldings on random programs (the answer-level
soundness suite lives in the acceptance tests)."""
import random

import pytest

import _gen as G
from foldlog.folding import SearchConfig, fold, replay
from foldlog.logic import Skolem
from foldlog.parser import parse_program
from foldlog.program import check_safety

CFG = SearchConfig(max_nodes=1000)


@pytest.fixture(scope="module")
def folded():
    out = []
    for seed in range(300, 360):
        rng = random.Random(seed)
        p = parse_program(G.random_program(rng))
        out.append((seed, rng, p, fold(p, CFG)))
    return out


def test_every_proof_replays(folded):
    for seed, _, _, r in folded:
        for o in r.outcomes:
            assert all(replay(n) for n in o.proof), seed


def test_foldings_safe_and_skolem_free(folded):
    for seed, _, _, r in folded:
        for o in r.foldings:
            assert not check_safety(o.clause), (seed, str(o.clause))
            assert not any(isinstance(t, Skolem) for l in o.clause.body for t in l.atom.args)


def test_folded_answers_within_oracle(folded):
    for seed, rng, p, r in folded:
        for _ in range(3):
            edb = G.random_facts(p, rng)
            if edb is None:
                continue
            assert G.folded_answers(r.outcomes, p, edb) <= G.oracle_answers(p, edb), seed


def test_deterministic_output():
    rng = random.Random(5)
    text = G.random_program(rng)
    one = [str(o.clause) for o in fold(parse_program(text), CFG).outcomes]
    two = [str(o.clause) for o in fold(parse_program(text), CFG).outcomes]
    assert one == two
