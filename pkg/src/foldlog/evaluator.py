"""Bottom-up answering from resource facts.

Resource facts are inverted through the inverse rules into base facts, with
Skolem terms standing for unknown values, then the query is evaluated by a
stratified semi-naive fixpoint. Disjunctive inverse rules are handled by
evaluating every subcomputation and keeping the answers common to all.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

from .completion import CCrrSet, MCCrr, clark_completion, find_mccrr, is_recursive_resource
from .logic import Atom, Clause, Const, Skolem, Var, compare, match, skolem_depth, subst
from .program import Program, ProgramError, stratify

DEFAULT_CAP = 4096


class DisjunctiveHeads(ValueError):
    pass


class SubcomputationBlowup(RuntimeError):
    def __init__(self, count, cap):
        self.count, self.cap = count, cap
        super().__init__(f"{count} subcomputations exceed the cap of {cap}")


class NotStratified(ProgramError):
    pass


class FactStore:
    """Ground atoms grouped by predicate, with set semantics."""

    def __init__(self, atoms=()):
        self._rel = {}
        for a in atoms:
            self.add(a)

    @classmethod
    def from_facts(cls, facts):
        return cls(f.head[0] if isinstance(f, Clause) else f for f in facts)

    def add(self, atom: Atom) -> bool:
        rel = self._rel.setdefault(atom.pred, set())
        if atom.args in rel:
            return False
        rel.add(atom.args)
        return True

    def tuples(self, pred) -> set:
        return self._rel.get(pred, set())

    def atoms(self):
        for p in sorted(self._rel):
            for t in sorted(self._rel[p], key=_sort_key):
                yield Atom(p, t)

    @property
    def predicates(self):
        return set(self._rel)

    def restrict(self, preds) -> "FactStore":
        out = FactStore()
        for p in preds:
            if p in self._rel:
                out._rel[p] = set(self._rel[p])
        return out

    def copy(self) -> "FactStore":
        out = FactStore()
        out._rel = {p: set(t) for p, t in self._rel.items()}
        return out

    def union(self, other: "FactStore") -> "FactStore":
        out = self.copy()
        for a in other.atoms():
            out.add(a)
        return out

    def __contains__(self, atom: Atom):
        return atom.args in self._rel.get(atom.pred, ())

    def __len__(self):
        return sum(len(t) for t in self._rel.values())

    def __eq__(self, other):
        if not isinstance(other, FactStore):
            return NotImplemented
        mine = {p: t for p, t in self._rel.items() if t}
        theirs = {p: t for p, t in other._rel.items() if t}
        return mine == theirs

    def __repr__(self):
        return "FactStore({" + ", ".join(map(str, self.atoms())) + "})"


def _sort_key(args):
    return tuple(str(a) for a in args)


# ------------------------------------------------------------ inversion

def invert_facts(res_facts: FactStore, ccrr: CCrrSet) -> FactStore:
    """Base facts implied by the resource facts through single-head inverse
    rules."""
    out = FactStore()
    for rule in ccrr.rules:
        if len(rule.head) > 1:
            raise DisjunctiveHeads(f"{rule.label} has a disjunctive head; use certain_answers")
        _apply_inverse(rule, res_facts, out)
    return out


def _apply_inverse(rule: Clause, res_facts: FactStore, out: FactStore):
    r = rule.body[0].atom
    h = rule.head[0]
    if not _storable(h):
        return
    for t in res_facts.tuples(r.pred):
        theta = match(r, Atom(r.pred, t), {})
        if theta is not None:
            out.add(subst(h, theta))


def _storable(a: Atom) -> bool:
    # built-in and negated (primed) conjuncts constrain but generate nothing
    return not a.is_builtin and not a.pred.endswith("'")


def _instantiate(head: Atom, body, fact: Atom):
    theta = match(head, fact, {})
    if theta is None:
        return []
    return [subst(l.atom, theta) for l in body if _storable(l.atom) and not l.negated]


def eval_mccrr(res_facts: FactStore, m: MCCrr) -> FactStore:
    """``e`` facts recovered from ``r`` facts that admit no decomposition."""
    out = FactStore()
    for t in sorted(res_facts.tuples(m.resource.pred), key=_sort_key):
        theta = match(m.resource, Atom(m.resource.pred, t), {})
        if theta is None:
            continue
        if next(_solutions(m.conj, 0, theta, res_facts, None), None) is None:
            out.add(subst(m.head, theta))
    return out


# ------------------------------------------------------------ evaluation

def _holds(op, a, b) -> bool:
    if isinstance(a, Skolem) or isinstance(b, Skolem):
        # an unknown value only equals itself
        return op in ("=", "<=", ">=") and a == b
    return bool(compare(op, a, b))


def _order(body):
    """Positive atoms first; tests run once their variables are bound."""
    pos = [l for l in body if not l.is_builtin and not l.negated]
    binds = [l for l in body if l.is_builtin and l.pred == "=" and not l.negated]
    rest = [l for l in body if l not in pos and l not in binds]
    return pos + binds + rest


def _solutions(body, k, theta, store: FactStore, delta, delta_at=None):
    if k == len(body):
        yield theta
        return
    l = body[k]
    a = subst(l.atom, theta)
    if l.is_builtin:
        x, y = a.args
        if l.pred == "=" and not l.negated and (isinstance(x, Var) or isinstance(y, Var)):
            if isinstance(x, Var) and isinstance(y, Var):
                return  # unsafe: nothing binds either side
            v, t = (x, y) if isinstance(x, Var) else (y, x)
            yield from _solutions(body, k + 1, {**theta, v: t}, store, delta, delta_at)
            return
        if isinstance(x, Var) or isinstance(y, Var):
            return
        if _holds(l.pred, x, y) != l.negated:
            yield from _solutions(body, k + 1, theta, store, delta, delta_at)
        return
    if l.negated:
        if any(isinstance(t, Var) for t in a.args):
            return
        if a not in store:
            yield from _solutions(body, k + 1, theta, store, delta, delta_at)
        return
    source = delta if k == delta_at else store
    for t in list(source.tuples(a.pred)):
        th = match(a, Atom(a.pred, t), dict(theta))
        if th is not None:
            yield from _solutions(body, k + 1, th, store, delta, delta_at)


def _check_nesting(store: FactStore):
    for a in store.atoms():
        for t in a.args:
            if skolem_depth(t) > 1:
                raise AssertionError(f"nested Skolem term in {a}")


def seminaive_eval(rules, base: FactStore, strata: dict | None = None) -> FactStore:
    """Stratified semi-naive fixpoint of ``rules`` over ``base``."""
    rules = [Clause(r.head, tuple(_order(r.body)), r.origin, r.support, r.label) for r in rules]
    if strata is None:
        try:
            strata = stratify(rules, base.predicates)
        except ProgramError as e:
            raise NotStratified(str(e)) from e
    store = base.copy()
    levels = sorted({strata.get(r.head[0].pred, 0) for r in rules})
    for level in levels:
        layer = [r for r in rules if strata.get(r.head[0].pred, 0) == level]
        own = {r.head[0].pred for r in layer}
        delta = FactStore()
        for r in layer:
            for theta in _solutions(r.body, 0, {}, store, None):
                h = subst(r.head[0], theta)
                if store.add(h):
                    delta.add(h)
        while len(delta):
            new = FactStore()
            for r in layer:
                for k, l in enumerate(r.body):
                    if l.is_builtin or l.negated or l.pred not in own:
                        continue
                    for theta in _solutions(r.body, 0, {}, store, delta, k):
                        h = subst(r.head[0], theta)
                        if h not in store:
                            new.add(h)
            for a in new.atoms():
                store.add(a)
            delta = new
    _check_nesting(store)
    return store


def filter_answers(raw: FactStore, query) -> list:
    """Query-head tuples made of constants only, sorted."""
    name = query if isinstance(query, str) else query.name
    return sorted(
        (t for t in raw.tuples(name) if all(isinstance(x, Const) for x in t)),
        key=_sort_key,
    )


def query_rules(program: Program) -> list:
    q = program.query
    rules = list(q.rules) if q.rules else [Clause((q.head,), d, "QUERY") for d in q.disjuncts]
    return list(program.idb) + rules


# ------------------------------------------------------- subcomputations

@dataclass
class Subcomputation:
    choice: tuple  # (resource fact, chosen definition indices) pairs
    store: FactStore = field(default_factory=FactStore)


def subcomputations(res_facts: FactStore, ccrr: CCrrSet, cap: int = DEFAULT_CAP):
    """Every way of explaining each resource fact by a non-empty subset of
    its definitions."""
    fixed = FactStore()
    choices = []
    single = [r for r in ccrr.rules if r.body[0].pred not in _multi(ccrr)]
    for rule in single:
        _apply_inverse(rule, res_facts, fixed)
    for res in sorted(_multi(ccrr)):
        head, bodies = ccrr.definitions[res]
        subsets = [
            s for n in range(1, len(bodies) + 1) for s in itertools.combinations(range(len(bodies)), n)
        ]
        for t in sorted(res_facts.tuples(res), key=_sort_key):
            choices.append((Atom(res, t), head, bodies, subsets))
    count = 1
    for c in choices:
        count *= len(c[3])
        if count > cap:
            raise SubcomputationBlowup(count, cap)
    for pick in itertools.product(*(c[3] for c in choices)):
        store = fixed.copy()
        for (fact, head, bodies, _), subset in zip(choices, pick):
            for k in subset:
                for a in _instantiate(head, bodies[k], fact):
                    store.add(a)
        yield Subcomputation(tuple((c[0], s) for c, s in zip(choices, pick)), store)


def _multi(ccrr: CCrrSet):
    return {res for res, (_, bodies) in ccrr.definitions.items() if len(bodies) > 1}


def certain_answers(program: Program, res_facts: FactStore, ccrr: CCrrSet | None = None,
                    cap: int = DEFAULT_CAP, edb: FactStore | None = None) -> list:
    """Answers holding in every subcomputation."""
    ccrr = ccrr or clark_completion(_plain_resources(program), program.decls)
    rules = query_rules(program)
    common = None
    for sub in subcomputations(res_facts, ccrr, cap):
        base = sub.store if edb is None else sub.store.union(edb)
        ans = set(filter_answers(seminaive_eval(rules, base.union(res_facts)), program.query))
        common = ans if common is None else common & ans
        if not common:
            break
    return sorted(common or (), key=_sort_key)


def _plain_resources(program: Program):
    return [r for r in program.res if not is_recursive_resource(program.res, r.head[0].pred)]


# ------------------------------------------------------------- front end

@dataclass
class EvalReport:
    answers: list
    route: str  # invert | certain | mccrr
    store: FactStore
    notes: list = field(default_factory=list)


def split_facts(program: Program):
    """Resource facts and base facts given in the program."""
    res, edb = FactStore(), FactStore()
    for f in program.facts:
        a = f.head[0]
        (res if program.is_res(a.pred) else edb).add(a)
    return res, edb


def evaluate(program: Program, mode: str = "auto", cap: int = DEFAULT_CAP) -> EvalReport:
    """Two-step answering: recover base facts, then run the query."""
    if program.query is None:
        raise ValueError("program has no query")
    res_facts, edb = split_facts(program)
    plain = _plain_resources(program)
    ccrr = clark_completion(plain, program.decls)
    mcc = find_mccrr(program.res)
    notes = []
    if mode == "auto":
        mode = "certain" if ccrr.is_disjunctive else "invert"
    if mode not in ("invert", "certain"):
        raise ValueError(f"unknown mode {mode!r}")
    base = edb.copy()
    for p, m in sorted(mcc.items()):
        notes.append(f"recursive resource {p}: modified completion {m}")
        base = base.union(eval_mccrr(res_facts, m))
    skipped = {r.head[0].pred for r in program.res} - {r.head[0].pred for r in plain} - set(mcc)
    for p in sorted(skipped):
        notes.append(f"recursive resource {p} does not fit the modified-completion pattern; its facts are used as is")
    rules = query_rules(program)
    if mode == "certain":
        answers = certain_answers(program, res_facts, ccrr, cap, edb=base)
        return EvalReport(answers, "mccrr" if mcc else "certain", base, notes)
    base = base.union(invert_facts(res_facts, ccrr)).union(res_facts)
    store = seminaive_eval(rules, base)
    return EvalReport(filter_answers(store, program.query), "mccrr" if mcc else "invert", store, notes)


# ---------------------------------------------------------------- oracle

def brute_force_oracle(program: Program, edb_facts: FactStore, query=None) -> list:
    """Naive fixpoint of IDB and query rules straight over base facts."""
    query = query or program.query
    rules = list(program.idb) + (
        list(query.rules) if query.rules else [Clause((query.head,), d, "QUERY") for d in query.disjuncts]
    )
    return sorted(_naive(rules, edb_facts).get(query.name, set()), key=_sort_key)


def materialize(program: Program, edb_facts: FactStore) -> FactStore:
    """Resource extensions computed from base facts (plus the base facts)."""
    rel = _naive(list(program.idb) + list(program.res), edb_facts)
    return FactStore(Atom(p, t) for p, ts in rel.items() for t in ts)


def _naive(rules, edb_facts: FactStore) -> dict:
    try:
        strata = stratify(rules, edb_facts.predicates)
    except ProgramError as e:
        raise NotStratified(str(e)) from e
    rel = {p: set(edb_facts.tuples(p)) for p in edb_facts.predicates}
    for level in sorted({strata.get(r.head[0].pred, 0) for r in rules}):
        layer = [r for r in rules if strata.get(r.head[0].pred, 0) == level]
        while True:
            added = False
            for r in layer:
                for theta in _naive_match(list(r.body), {}, rel):
                    h = subst(r.head[0], theta)
                    if h.args not in rel.setdefault(h.pred, set()):
                        rel[h.pred].add(h.args)
                        added = True
            if not added:
                break
    return rel


def _naive_match(body, theta, rel):
    # pick any literal that can be decided now; positive atoms enumerate
    if not body:
        yield theta
        return
    for k, l in enumerate(body):
        a = subst(l.atom, theta)
        ground = not any(isinstance(t, Var) for t in a.args)
        if l.is_builtin:
            x, y = a.args
            if ground:
                if bool(compare(l.pred, x, y)) != l.negated:
                    yield from _naive_match(body[:k] + body[k + 1:], theta, rel)
                return
            if l.pred == "=" and not l.negated and isinstance(x, Var) != isinstance(y, Var):
                v, t = (x, y) if isinstance(x, Var) else (y, x)
                yield from _naive_match(body[:k] + body[k + 1:], {**theta, v: t}, rel)
                return
            continue
        if l.negated:
            if ground:
                if a.args not in rel.get(a.pred, ()):
                    yield from _naive_match(body[:k] + body[k + 1:], theta, rel)
                return
            continue
        rest = body[:k] + body[k + 1:]
        for t in list(rel.get(a.pred, ())):
            th = dict(theta)
            ok = True
            for p, v in zip(a.args, t):
                p = th.get(p, p) if isinstance(p, Var) else p
                if isinstance(p, Var):
                    th[p] = v
                elif p != v:
                    ok = False
                    break
            if ok:
                yield from _naive_match(rest, th, rel)
        return
    # only undecidable tests left (unsafe rule): no answers


def answers_of(clauses, store: FactStore, name: str) -> list:
    """Constant tuples produced by evaluating folded queries over a store."""
    out = set()
    for c in clauses:
        body = tuple(_order(c.body))
        for theta in _solutions(body, 0, {}, store, None):
            h = subst(c.head[0], theta)
            if all(isinstance(x, Const) for x in h.args):
                out.add(h.args)
    return sorted(out, key=_sort_key)
