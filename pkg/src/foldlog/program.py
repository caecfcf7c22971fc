"""The four-part database and its static analyses."""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field, replace

from .logic import (
    Atom,
    Clause,
    Const,
    Fresh,
    Literal,
    Var,
    atom_vars,
    clause_vars,
    compose,
    rename_apart,
    subst,
    unify,
)


class ProgramError(Exception):
    """Raised for semantic problems that make an analysis inapplicable."""


class RecursionThroughNegation(ProgramError):
    def __init__(self, cycle):
        self.cycle = list(cycle)
        super().__init__("recursion through negation: " + " -> ".join(self.cycle))


class CyclicIDB(ProgramError):
    pass


@dataclass(frozen=True)
class PredicateDecl:
    name: str
    arity: int
    role: str  # EDB | IDB | RES | BUILTIN
    cwa: bool = False
    key: int | None = None


@dataclass(frozen=True)
class Query:
    """``name(answer) :- D1 ; D2 ; ...`` with each disjunct a literal tuple.

    ``rules`` keeps the query as ordinary clauses (needed when the query is
    recursive and only evaluation makes sense).
    """

    name: str
    answer: tuple
    disjuncts: tuple
    rules: tuple = ()

    @property
    def head(self) -> Atom:
        return Atom(self.name, self.answer)

    @property
    def is_recursive(self):
        return any(l.pred == self.name for r in self.rules for l in r.body)

    def __str__(self):
        return " ;\n    ".join(
            f"{self.head} :- " + ", ".join(map(str, d)) for d in self.disjuncts
        )


@dataclass(frozen=True)
class Program:
    decls: dict = field(default_factory=dict)
    idb: tuple = ()
    ics: tuple = ()
    res: tuple = ()
    facts: tuple = ()
    query: Query | None = None

    def role(self, pred) -> str:
        d = self.decls.get(pred)
        if d is not None:
            return d.role
        if pred.endswith("'") and pred[:-1] in self.decls:
            return self.decls[pred[:-1]].role
        return "EDB"

    def is_res(self, pred):
        return self.role(pred) == "RES"

    @property
    def cwa(self):
        return frozenset(d.name for d in self.decls.values() if d.cwa)

    @property
    def keys(self):
        return {d.name: d.key for d in self.decls.values() if d.key}

    @property
    def has_negation(self):
        rules = list(self.idb) + list(self.res)
        if self.query is not None:
            rules += list(self.query.rules)
        return any(l.negated for r in rules for l in r.body)

    @property
    def is_disjunctive(self):
        by_res = {}
        for r in self.res:
            by_res.setdefault(r.head[0].pred, []).append(r)
        return (
            any(len(c.head) > 1 for c in self.ics)
            or any(len(v) > 1 for v in by_res.values())
            or (self.query is not None and len(self.query.disjuncts) > 1)
        )

    def with_(self, **kw) -> "Program":
        return replace(self, **kw)


# ------------------------------------------------------------------ safety

def check_safety(rule: Clause) -> frozenset:
    """Unsafe variables of ``rule`` (empty when the rule is safe)."""
    limited = set()
    for l in rule.body:
        if not l.negated and not l.is_builtin:
            limited.update(atom_vars(l.atom))
    eqs = [l.atom.args for l in rule.body if l.is_builtin and l.pred == "=" and not l.negated]
    changed = True
    while changed:
        changed = False
        for x, y in eqs:
            for a, b in ((x, y), (y, x)):
                if isinstance(a, Var) and a not in limited:
                    if isinstance(b, Const) or b in limited:
                        limited.add(a)
                        changed = True
    return frozenset(v for v in clause_vars(rule) if v not in limited)


def is_safe(rule: Clause) -> bool:
    return not check_safety(rule)


def check_extra_safety(rule: Clause) -> bool:
    """Body variables coincide with head variables."""
    hv = {v for a in rule.head for v in atom_vars(a)}
    bv = {v for l in rule.body for v in atom_vars(l.atom)}
    return hv == bv


# ----------------------------------------------------------- stratification

def dependency_edges(rules):
    """``(head_pred, body_pred, negative)`` triples."""
    for r in rules:
        for h in r.head:
            for l in r.body:
                if not l.is_builtin:
                    yield h.pred, l.pred, l.negated


def _sccs(nodes, succ):
    index, low, on, stack, out = {}, {}, set(), [], []
    counter = itertools.count()

    def visit(v):
        index[v] = low[v] = next(counter)
        stack.append(v)
        on.add(v)
        for w in succ.get(v, ()):
            if w not in index:
                visit(w)
                low[v] = min(low[v], low[w])
            elif w in on:
                low[v] = min(low[v], index[w])
        if low[v] == index[v]:
            comp = []
            while True:
                w = stack.pop()
                on.discard(w)
                comp.append(w)
                if w == v:
                    break
            out.append(sorted(comp))

    for n in sorted(nodes):
        if n not in index:
            visit(n)
    return out  # reverse topological: dependencies first


def stratify(rules, edb=()) -> dict:
    """Stratum per predicate, one defined component per stratum.

    EDB predicates (anything never appearing in a head) get stratum 0.
    Raises ``RecursionThroughNegation`` when no stratification exists.
    """
    rules = list(rules)
    heads = {h.pred for r in rules for h in r.head}
    nodes = set(heads) | set(edb)
    succ = {}
    neg = set()
    for h, b, n in dependency_edges(rules):
        nodes.add(b)
        succ.setdefault(h, set()).add(b)
        if n:
            neg.add((h, b))
    comps = _sccs(nodes, succ)
    comp_of = {p: i for i, c in enumerate(comps) for p in c}
    for h, b in neg:
        if comp_of[h] == comp_of[b]:
            raise RecursionThroughNegation(_neg_cycle(h, b, succ, comps[comp_of[h]]))
    # components come out dependencies-first; ties resolved by name in _sccs
    strata = {}
    level = 0
    for comp in _topo(comps, succ, comp_of):
        if any(p in heads for p in comp):
            level += 1
            for p in comp:
                strata[p] = level
        else:
            for p in comp:
                strata[p] = 0
    return strata


def _topo(comps, succ, comp_of):
    deps = {i: set() for i in range(len(comps))}
    for i, c in enumerate(comps):
        for p in c:
            for q in succ.get(p, ()):
                if comp_of[q] != i:
                    deps[i].add(comp_of[q])
    done, order = set(), []
    while len(order) < len(comps):
        ready = sorted((i for i in deps if i not in done and deps[i] <= done), key=lambda i: comps[i])
        i = ready[0]
        done.add(i)
        order.append(comps[i])
    return order


def _neg_cycle(h, b, succ, comp):
    # path b -> ... -> h inside the component, closing the negative edge h -> b
    comp = set(comp)
    prev = {b: None}
    frontier = [b]
    while frontier:
        nxt = []
        for v in frontier:
            for w in sorted(succ.get(v, ())):
                if w in comp and w not in prev:
                    prev[w] = v
                    nxt.append(w)
        frontier = nxt
    path = [h]
    v = h
    while v != b and prev.get(v) is not None:
        v = prev[v]
        path.append(v)
    path.reverse()
    return [h] + path if path[0] != h else path


def check_stratification(strata: dict, rules) -> bool:
    for h, b, n in dependency_edges(rules):
        if n and not strata.get(h, 0) > strata.get(b, 0):
            return False
        if not n and not strata.get(h, 0) >= strata.get(b, 0):
            return False
    return True


# ------------------------------------------------------- IC classification

def is_singular(rule: Clause) -> bool:
    """Singular recursive rule (bounded recursion certificate).

    Raises ``ProgramError`` for a non-recursive rule.
    """
    if len(rule.head) != 1:
        return False
    head = rule.head[0]
    rec = [l.atom for l in rule.body if l.pred == head.pred and not l.negated]
    if not rec:
        raise ProgramError("NotRecursive")
    others = [l.atom for l in rule.body if not (l.pred == head.pred and not l.negated)]
    hv = set(atom_vars(head))
    # (1) variables private to a recursive atom stay private
    for i, r in enumerate(rec):
        for v in set(atom_vars(r)) - hv:
            if any(v in set(atom_vars(o)) for j, o in enumerate(rec) if j != i):
                return False
            if any(v in set(atom_vars(o)) for o in others):
                return False
    # (2) head variables keep their argument positions
    hpos = {}
    for k, t in enumerate(head.args):
        if isinstance(t, Var):
            hpos.setdefault(t, set()).add(k)
    exempt_used = False
    for r in rec:
        ok = all(
            k in hpos[t]
            for k, t in enumerate(r.args)
            if isinstance(t, Var) and t in hpos
        )
        if ok:
            continue
        if not exempt_used and hv <= set(atom_vars(r)):
            exempt_used = True
            continue
        return False
    return True


def classify_ic_case(ics) -> int:
    """1, 2 or 3 following the three IC cases."""
    ics = list(ics)
    if any(h.is_builtin for c in ics for h in c.head):
        return 3
    succ = {}
    nodes = set()
    for c in ics:
        for h in c.head:
            for l in c.body:
                if not l.is_builtin:
                    succ.setdefault(l.pred, set()).add(h.pred)
                    nodes.update((l.pred, h.pred))
    cyclic = set()
    for comp in _sccs(nodes, succ):
        if len(comp) > 1 or comp[0] in succ.get(comp[0], ()):
            cyclic.update(comp)
    if not cyclic:
        return 1
    for c in ics:
        if any(h.pred in cyclic for h in c.head) and any(l.pred in cyclic for l in c.body):
            try:
                if not is_singular(c):
                    return 3
            except ProgramError:
                return 3
    return 2


# --------------------------------------------------------------- expansion

def expand_literals(body, fresh: Fresh, keep=()):
    """Rectify a literal list: constants and repeated variables in ordinary
    atoms become fresh variables tied back with equalities."""
    seen = set(keep)
    out, eqs = [], []
    for l in body:
        if l.is_builtin:
            out.append(l)
            continue
        args = []
        for t in l.atom.args:
            if isinstance(t, Var) and t not in seen:
                seen.add(t)
                args.append(t)
            else:
                w = fresh.var()
                args.append(w)
                eqs.append(Literal(Atom("=", (t, w) if isinstance(t, Var) else (w, t))))
        out.append(Literal(Atom(l.atom.pred, tuple(args)), l.negated))
    return tuple(out) + tuple(eqs)


def expand_rule(rule: Clause, fresh: Fresh | None = None) -> Clause:
    """Rectified, equivalent rule with equalities appended to the body."""
    fresh = fresh or Fresh(_first_free(rule))
    body = expand_literals(rule.body, fresh)
    return Clause(rule.head, body, rule.origin, rule.support, rule.label)


def _first_free(rule):
    n = 0
    for v in clause_vars(rule):
        if v.name.startswith("_V") and v.name[2:].isdigit():
            n = max(n, int(v.name[2:]) + 1)
    return n


# ------------------------------------------------------------ IDB unfolding

def unfold_conjunction(body, defs: dict, fresh: Fresh, keep=lambda p: True, theta=None):
    """All ``(conjunction, theta)`` pairs from unfolding positive IDB literals.

    ``defs`` maps a predicate to its rules. Literals whose predicate is not in
    ``defs`` (or rejected by ``keep``) are left alone. ``theta`` carries the
    bindings the unfolding imposed on the caller's variables. Callers rule out
    recursive definitions first.
    """
    results = [((), dict(theta or {}))]
    for lit in body:
        nxt = []
        for acc, th in results:
            l = subst(lit, th)
            if l.negated or l.is_builtin or l.pred not in defs or not keep(l.pred):
                nxt.append((acc + (l,), th))
                continue
            for rule in defs[l.pred]:
                r, _ = rename_apart(rule, fresh)
                m = unify(l.atom, r.head[0])
                if m is None:
                    continue
                th2 = compose(th, m)
                nxt.extend(
                    (acc + conj, th3)
                    for conj, th3 in unfold_conjunction(subst(r.body, th2), defs, fresh, keep, th2)
                )
        results = nxt
    return [(tuple(dict.fromkeys(subst(c, t))), t) for c, t in results]


def compile_nonrecursive_idb(program: Program) -> Program:
    """Unfold every IDB rule down to EDB predicates."""
    defs = {}
    for r in program.idb:
        defs.setdefault(r.head[0].pred, []).append(r)
    try:
        strata = stratify(program.idb)
    except RecursionThroughNegation as e:
        raise CyclicIDB(str(e)) from e
    for h, b, _ in dependency_edges(program.idb):
        if h == b or (strata.get(h) == strata.get(b) and b in defs):
            raise CyclicIDB(f"recursive IDB predicate {h}")
    if any(l.negated for r in program.idb for l in r.body):
        raise ProgramError("compile_nonrecursive_idb needs a negation-free IDB")
    fresh = Fresh(max((_first_free(r) for r in program.idb), default=0))
    out = []
    for r in program.idb:
        for conj, theta in unfold_conjunction(r.body, defs, fresh):
            out.append(Clause(subst(r.head, theta), conj, "IDB", False, r.label))
    return program.with_(idb=tuple(out))
