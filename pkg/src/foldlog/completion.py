"""Clark completion of resource rules, key-based combination, negation
compilation and the modified completion for recursive resources."""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

from .logic import (
    Atom,
    Clause,
    Fresh,
    Literal,
    Skolem,
    Var,
    atom_vars,
    clause_vars,
    negate_builtin,
    rename_apart,
    subst,
    unify_pairs,
    variant,
)
from .program import (
    Program,
    ProgramError,
    check_extra_safety,
    stratify,
)

CNF_CAP = 64


class CompileError(ProgramError):
    pass


class PatternMismatch(CompileError):
    pass


class NotApplicable(CompileError):
    pass


def primed(pred: str) -> str:
    return pred + "'"


def unprimed(pred: str) -> str:
    return pred[:-1] if pred.endswith("'") else pred


def as_atom(l: Literal) -> Atom:
    """Positive reading of a literal: ``not p(t)`` becomes ``p'(t)``."""
    if l.negated:
        return Atom(primed(l.atom.pred), l.atom.args)
    return l.atom


def negate(l: Literal) -> Literal:
    if l.is_builtin:
        return Literal(negate_builtin(l.atom))
    return Literal(l.atom, not l.negated)


@dataclass
class CCrrSet:
    rules: list
    forward: list
    skolems: dict = field(default_factory=dict)
    # resource -> (head atom, [skolemised definition bodies])
    definitions: dict = field(default_factory=dict)
    combined: list = field(default_factory=list)

    @property
    def all_rules(self):
        return list(self.rules) + list(self.combined)

    @property
    def is_disjunctive(self):
        return any(len(r.head) > 1 for r in self.rules)

    def __str__(self):
        return "\n".join(f"{r.label}: {r}" for r in self.all_rules)


# ------------------------------------------------------------- completion

def skolem_functor(resource: str, def_index: int, var: Var) -> str:
    return f"$sk_{resource}_{def_index}_{var.name}"


def _rectify_definitions(rules, fresh: Fresh):
    """Align every definition of one resource on a common head tuple."""
    if len(rules) == 1:
        return rules[0].head[0], [tuple(rules[0].body)]
    head = _rectified_head(rules)
    return head, [_rule_dnf(r, head, fresh) for r in rules]


def _skolemise(head: Atom, body, resource: str, def_index: int, registry: dict):
    hv = tuple(dict.fromkeys(atom_vars(head)))
    theta = {}
    for l in body:
        for v in atom_vars(l.atom):
            if v not in hv and v not in theta:
                f = skolem_functor(resource, def_index, v)
                registry[(resource, def_index, v)] = f
                theta[v] = Skolem(f, hv)
    return tuple(subst(body, theta))


def _tautology(factor) -> bool:
    s = set(factor)
    for l in factor:
        if negate(l) in s:
            return True
        if l.is_builtin and l.pred in ("=", "<=", ">=") and l.atom.args[0] == l.atom.args[1]:
            return True
    return False


def cnf_of_dnf(dnf, cap=CNF_CAP):
    """Clause list (each a literal tuple) equivalent to the disjunction."""
    total = 1
    for conj in dnf:
        total *= max(1, len(conj))
    if total > cap * 64:
        raise CompileError(f"CNF of resource definition needs {total} factors; split the resource")
    factors = []
    for choice in itertools.product(*dnf):
        f = tuple(dict.fromkeys(choice))
        if _tautology(f):
            continue
        factors.append(f)
    factors = _absorb(factors)
    if len(factors) > cap:
        raise CompileError(f"CNF of resource definition has {len(factors)} factors (cap {cap}); split the resource")
    return sorted(factors, key=len)


def _absorb(sets):
    """Drop duplicates and strict supersets, keeping first-seen order."""
    out = []
    fs = [frozenset(s) for s in sets]
    for i, s in enumerate(fs):
        if any(fs[j] < s or (fs[j] == s and j < i) for j in range(len(fs))):
            continue
        out.append(sets[i])
    return out


def clark_completion(res_rules, decls=None, fresh: Fresh | None = None) -> CCrrSet:
    """Inverse (only-if) rules of the resource definitions."""
    fresh = fresh or Fresh(10_000)
    groups = {}
    for r in res_rules:
        groups.setdefault(r.head[0].pred, []).append(r)
    rules, registry, definitions = [], {}, {}
    n = 0
    for res, defs in groups.items():
        head, bodies = _rectify_definitions(defs, fresh)
        sk_bodies = [
            _skolemise(head, tuple(Literal(as_atom(l)) for l in body), res, k, registry)
            for k, body in enumerate(bodies)
        ]
        definitions[res] = (head, sk_bodies)
        if len(sk_bodies) == 1:
            factors = [(l,) for l in dict.fromkeys(sk_bodies[0])]
        else:
            factors = cnf_of_dnf(sk_bodies)
        for f in factors:
            n += 1
            rules.append(Clause(tuple(l.atom for l in f), (Literal(head),), "CCRR", False, f"CCrr{n}"))
    return CCrrSet(rules, list(res_rules), registry, definitions)


# ------------------------------------------------------------ combination

def combine_ccrr(c1: Clause, c2: Clause, key_len: int, fresh: Fresh | None = None) -> Clause:
    """Merge two inverse rules for the same keyed predicate."""
    if len(c1.head) != 1 or len(c2.head) != 1 or c1.head[0].pred != c2.head[0].pred:
        raise NotApplicable("combination needs two single-head rules for one predicate")
    if variant(c1, c2):
        return c1
    fresh = fresh or Fresh(20_000)
    clash = set(clause_vars(c1))
    c2 = subst(c2, {v: fresh.var() for v in clause_vars(c2) if v in clash})
    h1, h2 = c1.head[0], c2.head[0]
    if key_len > len(h1.args):
        raise NotApplicable("key longer than arity")
    for t in h1.args[:key_len] + h2.args[:key_len]:
        if not isinstance(t, Var):
            raise NotApplicable("key prefix must be variables")
    theta = unify_pairs(zip(h1.args[:key_len], h2.args[:key_len]))
    if theta is None:
        raise NotApplicable("key prefixes do not unify")
    h1, h2 = subst(h1, theta), subst(h2, theta)
    z = []
    for a, b in zip(h1.args, h2.args):
        z.append(b if isinstance(a, Skolem) and isinstance(b, Var) else a)
    body = tuple(dict.fromkeys(subst(c1.body + c2.body, theta)))
    return Clause((Atom(h1.pred, tuple(z)),), body, "CCRR", False, f"{c1.label}+{c2.label}")


def _skolem_count(c: Clause) -> int:
    return sum(isinstance(t, Skolem) for t in c.head[0].args)


def combine_all(ccrr: CCrrSet, keys: dict, fresh: Fresh | None = None) -> list:
    """Greedy pairwise combination for keyed predicates.

    Rules are combined left to right in completion order; a combination is
    kept only when it has fewer Skolem columns than either part.
    """
    fresh = fresh or Fresh(20_000)
    out = []
    for pred, k in keys.items():
        base = [r for r in ccrr.rules if len(r.head) == 1 and r.head[0].pred == pred]
        frontier = [(c, i) for i, c in enumerate(base)]
        while frontier:
            nxt = []
            for c1, last in frontier:
                for j in range(last + 1, len(base)):
                    c2 = base[j]
                    if c2.body[0].pred in {l.pred for l in c1.body}:
                        continue
                    try:
                        c = combine_ccrr(c1, c2, k, fresh)
                    except NotApplicable:
                        continue
                    if _skolem_count(c) >= min(_skolem_count(c1), _skolem_count(c2)):
                        continue
                    nxt.append((c, j))
            out.extend(c for c, _ in nxt)
            frontier = nxt
    for i, c in enumerate(out):
        out[i] = Clause(c.head, c.body, c.origin, c.support, f"CCrrK{i + 1}[{c.label}]")
    return out


# ----------------------------------------------------- integrity clauses

def skolemise_ic(ic: Clause, index: int) -> Clause:
    """Head-only variables of an IC are existential; replace them by
    Skolem terms over the body variables."""
    bv = tuple(dict.fromkeys(v for l in ic.body for v in atom_vars(l.atom)))
    theta = {}
    for a in ic.head:
        for v in atom_vars(a):
            if v not in bv and v not in theta:
                theta[v] = Skolem(f"$sk_ic{index}_{v.name}", bv)
    return subst(ic, theta) if theta else ic


# ---------------------------------------------------- negation compilation

@dataclass
class CompiledProgram:
    # pred -> (head atom, DNF body) for every IDB predicate
    idb_c: dict
    compiled: frozenset  # predicates substituted away
    rules: list  # IDB clauses still needed as resolution inputs
    res_c: list  # (head atom, DNF body)
    renames: dict  # pred -> primed pred
    added_ics: list
    query: object = None  # Query with compiled, renamed disjuncts

    def res_clauses(self):
        out = []
        for head, dnf in self.res_c:
            for conj in dnf:
                out.append(Clause((head,), conj, "RES"))
        return out

    def __str__(self):
        lines = []
        for pred, (head, dnf) in self.idb_c.items():
            lines.append(_format_dnf(head, dnf))
        for head, dnf in self.res_c:
            lines.append(_format_dnf(head, dnf))
        lines.extend(str(c) for c in self.added_ics)
        return "\n".join(lines)


def _format_dnf(head, dnf):
    if not dnf:
        return f"% {head} has no satisfiable definition"
    body = " ; ".join(", ".join(map(str, conj)) if conj else "true" for conj in dnf)
    return f"{head} :- {body}."


def simplify_dnf(dnf):
    out = []
    for conj in dnf:
        conj = tuple(dict.fromkeys(conj))
        s = set(conj)
        if any(negate(l) in s for l in conj):
            continue
        out.append(conj)
    return _absorb(out)


def negate_dnf(dnf):
    """DNF of the negation of a DNF formula (De Morgan then distribution)."""
    if not dnf:
        return [()]
    return simplify_dnf([tuple(negate(l) for l in choice) for choice in itertools.product(*dnf)])


def and_dnf(a, b):
    return simplify_dnf([x + y for x in a for y in b])


def _rectified_head(rules):
    first = rules[0].head[0]
    args = first.args
    if all(isinstance(t, Var) for t in args) and len(set(args)) == len(args):
        return first
    return Atom(first.pred, tuple(Var(f"H{k + 1}") for k in range(len(args))))


def _rule_dnf(rule, head: Atom, fresh: Fresh):
    """Body of ``rule`` re-expressed over ``head``'s variables."""
    r, _ = rename_apart(rule, fresh)
    theta, eqs = {}, []
    for hv, t in zip(head.args, r.head[0].args):
        if isinstance(t, Var) and t not in theta:
            theta[t] = hv
        else:
            eqs.append(Literal(Atom("=", (hv, subst(t, theta)))))
    body = subst(r.body, theta) + tuple(eqs)
    # restore the rule's own names for local variables where possible
    back = {}
    inv = {new: old for old, new in _.items()}
    used = set(head.args)
    for v in clause_vars(Clause((), body)):
        if v in used:
            continue
        o = inv.get(v)
        if o is not None and o not in used:
            back[v] = o
            used.add(o)
    return subst(body, back)


def _substitute(conj, defs: dict, compiled):
    """Replace compiled predicates in a conjunction; returns a DNF."""
    dnf = [()]
    for l in conj:
        if l.is_builtin or l.pred not in compiled:
            dnf = and_dnf(dnf, [(l,)])
            continue
        head, body = defs[l.pred]
        theta = dict(zip(head.args, l.atom.args))
        inst = [tuple(subst(c, theta)) for c in body]
        dnf = and_dnf(dnf, negate_dnf(inst) if l.negated else simplify_dnf(inst))
    return dnf


def compile_negation(program: Program, fresh: Fresh | None = None) -> CompiledProgram:
    """Bottom-up compilation of the stratified IDB with primed renaming."""
    fresh = fresh or Fresh(30_000)
    idb = list(program.idb)
    groups = {}
    for r in idb:
        groups.setdefault(r.head[0].pred, []).append(r)
    has_neg = program.has_negation
    if not has_neg:
        idb_c = {p: (_rectified_head(rs), [tuple(_rule_dnf(r, _rectified_head(rs), fresh)) for r in rs]) for p, rs in groups.items()}
        res_c = _res_dnf(program, {}, frozenset(), fresh)
        return CompiledProgram(idb_c, frozenset(), idb, res_c, {}, [], program.query)

    strata = stratify(idb + list(program.res) + list(program.query.rules if program.query else ()))
    order = sorted(groups, key=lambda p: (strata.get(p, 0), p))
    defs, compiled = {}, set()
    for p in order:
        rs = groups[p]
        head = _rectified_head(rs)
        extra_safe = all(check_extra_safety(r) for r in rs)
        recursive = any(l.pred == p for r in rs for l in r.body)
        dnf = []
        for r in rs:
            body = _rule_dnf(r, head, fresh)
            dnf.extend(_substitute(body, defs, compiled))
        defs[p] = (head, simplify_dnf(dnf))
        if extra_safe and not recursive:
            compiled.add(p)

    res_c = _res_dnf(program, defs, compiled, fresh)
    renames = {}

    def rename(conj):
        out = []
        for l in conj:
            if l.negated:
                renames[l.pred] = primed(l.pred)
                out.append(Literal(as_atom(l)))
            else:
                out.append(l)
        return tuple(out)

    res_c = [(h, [rename(c) for c in dnf]) for h, dnf in res_c]
    rules = []
    for p in order:
        if p in compiled:
            continue
        head, dnf = defs[p]
        for conj in dnf:
            rules.append(Clause((head,), rename(conj), "IDB", False, f"IDB[{p}]"))
    query = program.query
    if query is not None:
        disj = []
        for d in query.disjuncts:
            disj.extend(rename(c) for c in _substitute(d, defs, compiled))
        query = type(query)(query.name, query.answer, tuple(disj), query.rules)
    added = []
    for p in sorted(renames):
        arity = _arity(p, program, defs)
        vs = tuple(Var(f"V{k + 1}") for k in range(arity))
        added.append(Clause((), (Literal(Atom(p, vs)), Literal(Atom(renames[p], vs))), "IC", False, f"IC[{p}']"))
    return CompiledProgram(defs, frozenset(compiled), rules, res_c, renames, added, query)


def _arity(p, program, defs):
    if p in program.decls:
        return program.decls[p].arity
    if p in defs:
        return len(defs[p][0].args)
    raise CompileError(f"unknown predicate {p}")


def _res_dnf(program, defs, compiled, fresh):
    groups = {}
    for r in program.res:
        groups.setdefault(r.head[0].pred, []).append(r)
    out = []
    for p, rs in groups.items():
        head = _rectified_head(rs)
        dnf = []
        for r in rs:
            dnf.extend(_substitute(_rule_dnf(r, head, fresh), defs, compiled))
        out.append((head, simplify_dnf(dnf)))
    return out


def compiled_res_rules(cp: CompiledProgram) -> list:
    return cp.res_clauses()


# ------------------------------------------------------------------ MCCrr

@dataclass(frozen=True)
class MCCrr:
    """``head :- resource, not exists vars (conj)``."""

    head: Atom
    resource: Atom
    exists: tuple
    conj: tuple

    def __str__(self):
        vs = ",".join(v.name for v in self.exists)
        inner = ", ".join(map(str, self.conj))
        return f"{self.head} :- {self.resource}, not exists {vs} ({inner})."


def mccrr(base: Clause, recursive: Clause) -> MCCrr:
    """Modified completion for ``r(X) :- e(X)`` plus ``r(X) :- t(Y)``.

    Occurrences of ``e`` inside ``t`` are read as ``r``: every ``e`` fact is an
    ``r`` fact, so the absence test stays sound when only ``r`` is stored.
    """
    if len(base.head) != 1 or len(recursive.head) != 1 or len(base.body) != 1:
        raise PatternMismatch("expected r(X) :- e(X) and r(X) :- t(Y)")
    r, e = base.head[0], base.body[0]
    if e.negated or e.is_builtin or e.atom.args != r.args or len(set(r.args)) != len(r.args):
        raise PatternMismatch("base rule must copy e's tuple into r")
    if not all(isinstance(t, Var) for t in r.args):
        raise PatternMismatch("base head must be variables")
    r2 = recursive.head[0]
    if r2.pred != r.pred:
        raise PatternMismatch("rules define different resources")
    theta = unify_pairs(zip(r2.args, r.args))
    if theta is None or not all(isinstance(t, Var) for t in r2.args):
        raise PatternMismatch("recursive head must be variables")
    body = subst(recursive.body, theta)
    if any(l.negated or l.is_builtin for l in body):
        raise PatternMismatch("recursive body must be positive atoms")
    xs = set(r.args)
    ys = {v for l in body for v in atom_vars(l.atom)}
    if not xs <= ys:
        raise PatternMismatch("head variables must occur in the recursive body")
    conj = tuple(
        Literal(Atom(r.pred, l.atom.args)) if l.pred == e.pred else l for l in body
    )
    zs = tuple(v for v in dict.fromkeys(v for l in body for v in atom_vars(l.atom)) if v not in xs)
    return MCCrr(e.atom, r, zs, conj)


def find_mccrr(res_rules):
    """MCCrr per resource whose two rules fit the pattern, else nothing."""
    groups = {}
    for r in res_rules:
        groups.setdefault(r.head[0].pred, []).append(r)
    out = {}
    for p, rs in groups.items():
        if len(rs) != 2:
            continue
        recursive = [r for r in rs if any(l.pred == p for l in r.body)]
        if len(recursive) != 1:
            continue
        base = [r for r in rs if r is not recursive[0]][0]
        try:
            out[p] = mccrr(base, recursive[0])
        except PatternMismatch:
            continue
    return out


def is_recursive_resource(res_rules, pred) -> bool:
    return any(r.head[0].pred == pred and any(l.pred == pred for l in r.body) for r in res_rules)
