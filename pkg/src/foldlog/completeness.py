"""Completeness test for a set of folded queries.

The query is asserted over fresh constants and the supported leaf clauses are
refuted against the database rules by linear resolution, where a center
clause may also be resolved with one of its own ancestors.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass

from .completion import as_atom, cnf_of_dnf, primed, unprimed
from .folding import (
    COMPLETE,
    EQ_TRANS,
    PARTIAL,
    DerivationNode,
    Prepared,
    SearchConfig,
    Step,
    _mgu_tuple,
    prepare,
    replay,
)
from .logic import (
    Atom,
    Clause,
    Const,
    Fresh,
    Literal,
    Var,
    canonical,
    clause_vars,
    eval_ground_builtin,
    rename_apart,
    resolvent,
    shape,
    subst,
    unify,
)
from .program import Query

PROVEN = "Proven"
NOT_PROVEN = "NotProven"
DEPTH_BOUND_REACHED = "DepthBoundReached"
SEARCH_EXHAUSTED = "SearchExhausted"

MAX_LITERALS = 8


@dataclass
class CompletenessVerdict:
    status: str
    reason: str | None = None
    refutation: list | None = None  # DerivationNode chain, root first
    constants: dict | None = None  # query variable -> assertion constant
    nodes: int = 0

    @property
    def proven(self):
        return self.status == PROVEN

    def replays(self) -> bool:
        return bool(self.refutation) and all(replay(n) for n in self.refutation)

    def __str__(self):
        if self.proven:
            return f"{PROVEN} ({len(self.refutation) - 1} steps)"
        return f"{NOT_PROVEN} ({self.reason})"


class _Found(Exception):
    def __init__(self, node):
        self.node = node


class _Budget(Exception):
    pass


def assertion_constants(query: Query) -> dict:
    """One ``$k<n>`` constant per distinct query variable, shared by all
    disjuncts."""
    seen = {}
    for v in query.answer:
        if isinstance(v, Var):
            seen.setdefault(v, None)
    for d in query.disjuncts:
        for l in d:
            for t in l.atom.args:
                if isinstance(t, Var):
                    seen.setdefault(t, None)
    return {v: Const(f"$k{i + 1}") for i, v in enumerate(seen)}


def asserted_clauses(query: Query, consts: dict) -> list:
    """The query's body asserted as ground (possibly disjunctive) facts."""
    dnf = [tuple(Literal(as_atom(l)) for l in subst(d, consts)) for d in query.disjuncts]
    if len(dnf) == 1:
        factors = [(l,) for l in dict.fromkeys(dnf[0])]
    else:
        factors = cnf_of_dnf(dnf)
    return [
        Clause(tuple(l.atom for l in f), (), "QUERY", False, f"Q{k + 1}")
        for k, f in enumerate(factors)
    ]


def leaf_clause(outcome, answer: tuple, compiled: bool) -> Clause | None:
    """Denial form of a folded query, with its answer bound to ``answer``."""
    theta = unify(outcome.clause.head[0], Atom(outcome.clause.head[0].pred, answer))
    if theta is None:
        return None
    head, body = [], []
    for l in subst(outcome.clause.body, theta):
        if l.negated and not l.is_builtin:
            if compiled:
                body.append(Literal(Atom(primed(l.pred), l.atom.args)))
            else:
                # not p(t) in a denial body reads as p(t) in the head
                head.append(l.atom)
        else:
            body.append(l)
    return Clause(tuple(head), tuple(body), "LEAF", True)


def _universe(prep: Prepared) -> list:
    rules = []
    for k, r in enumerate(prep.idb):
        rules.append(_relabel(r, r.label or f"IDB{k + 1}"))
    for c in prep.ics + prep.denials:
        rules.append(_relabel(c, c.label or "IC"))
    for k, r in enumerate(prep.res_rules):
        body = tuple(Literal(as_atom(l)) if l.negated and prep.compiled is not None else l for l in r.body)
        rules.append(Clause(r.head, body, "RES", False, r.label or f"RES{k + 1}"))
    return rules


def _relabel(c: Clause, label: str) -> Clause:
    return Clause(c.head, c.body, c.origin, c.support, label)


def _has_builtins(prep: Prepared) -> bool:
    q = prep.query
    clauses = list(prep.idb) + prep.ics + prep.denials + list(prep.res_rules)
    return any(l.is_builtin for d in q.disjuncts for l in d) or any(
        a.is_builtin for c in clauses for a in list(c.head) + [l.atom for l in c.body]
    )


class _Refuter:
    def __init__(self, inputs, cfg: SearchConfig, equality: bool):
        self.cfg = cfg
        self.equality = equality
        self.fresh = Fresh(0)
        self.nodes = 0
        self.ids = 0
        self.cut = False
        self.limit = 0
        self.top = None
        self.by_head, self.by_body = {}, {}
        for c in inputs:
            for j, h in enumerate(c.head):
                self.by_head.setdefault(h.pred, []).append((c, j))
            for i, l in enumerate(c.body):
                if not l.negated:
                    self.by_body.setdefault(l.pred, []).append((c, i))

    def _node(self, clause, parent, step):
        self.ids += 1
        return DerivationNode(clause, (), parent, step, parent.depth + 1 if parent else 0, self.ids)

    def run(self, top: Clause, limit: int):
        self.limit = limit
        self.top = top
        root = self._node(top, None, Step("QUERY", label="leaf"))
        self._search(root, [], 0)

    def _search(self, node, path, depth):
        self.nodes += 1
        if self.nodes > self.cfg.max_nodes:
            raise _Budget
        c = node.clause
        if not c.head and not c.body:
            raise _Found(node)
        key = _key(c)
        if key in path:
            return
        if len(c.head) + len(c.body) > MAX_LITERALS:
            return
        if depth >= self.limit:
            self.cut = True
            return
        path = path + [key]
        for child in self._children(node):
            self._search(child, path, depth + 1)

    # -- steps ------------------------------------------------------------
    def _children(self, node):
        """Factors plus the resolvents on one selected literal.

        The literal with the fewest alternatives is selected; a literal
        nothing resolves with can never be removed, so the node is dead.
        """
        for simple in self._simplifications(node):
            return [simple]
        c = node.clause
        ancestors = node.chain()[:-1]
        options = []
        for i, l in enumerate(c.body):
            if not l.negated:
                options.append(self._body_children(node, i, ancestors))
        for j in range(len(c.head)):
            options.append(self._head_children(node, j, ancestors))
        if not options:
            return []
        best = min(options, key=len)
        if not best:
            return []
        out = list(self._factors(node)) + best
        out.sort(key=lambda n: len(n.clause.head) + len(n.clause.body))
        return out

    def _body_children(self, node, i, ancestors):
        c = node.clause
        l = c.body[i]
        out = []
        if l.pred == "=" and l.is_builtin:
            theta = unify(Atom("$", (l.atom.args[0],)), Atom("$", (l.atom.args[1],)))
            if theta is not None:
                body = c.body[:i] + c.body[i + 1:]
                out.append(self._node(subst(Clause(c.head, body), theta), node,
                                      Step("REFLEXIVITY", literal=i, mgu=_mgu_tuple(theta))))
        sides = [s for s in self.by_head.get(l.pred, ()) if s[0] is not self.top]
        sides += [(a.clause, j) for a in ancestors for j, h in enumerate(a.clause.head) if h.pred == l.pred]
        for side, j in sides:
            ren, _ = rename_apart(side, self.fresh)
            theta = unify(l.atom, ren.head[j])
            if theta is None:
                continue
            label = "ancestor" if any(side is a.clause for a in ancestors) else side.label
            ren = Clause(ren.head, ren.body, ren.origin, ren.support, label)
            got = resolvent(c, i, ren, j, theta)
            if not _tautology(got):
                out.append(self._node(got, node, Step("RESOLVE", ren, label, i, j, _mgu_tuple(theta))))
        return out

    def _head_children(self, node, j, ancestors):
        c = node.clause
        h = c.head[j]
        out = []
        sides = [s for s in self.by_body.get(h.pred, ()) if s[0] is not self.top]
        sides += [(a.clause, i) for a in ancestors for i, l in enumerate(a.clause.body)
                  if l.pred == h.pred and not l.negated]
        for side, i in sides:
            ren, _ = rename_apart(side, self.fresh)
            theta = unify(ren.body[i].atom, h)
            if theta is None:
                continue
            label = "ancestor" if any(side is a.clause for a in ancestors) else side.label
            ren = Clause(ren.head, ren.body, ren.origin, ren.support, label)
            got = resolvent(ren, i, c, j, theta)
            if not _tautology(got):
                out.append(self._node(got, node, Step("HEAD_CANCEL", ren, label, i, j, _mgu_tuple(theta))))
        return out

    def _simplifications(self, node):
        """Deterministic clean-ups, applied one at a time before branching."""
        c = node.clause
        if len(set(c.body)) != len(c.body) or len(set(c.head)) != len(c.head):
            if len(set(c.body)) == len(c.body):
                got = Clause(tuple(dict.fromkeys(c.head)), c.body)
            else:
                got = Clause(c.head, tuple(dict.fromkeys(c.body)))
            yield self._node(got, node, Step("FACTOR"))
            return
        for i, l in enumerate(c.body):
            if l.is_builtin and eval_ground_builtin(l.atom) is True:
                got = Clause(c.head, c.body[:i] + c.body[i + 1:])
                yield self._node(got, node, Step("SIMPLIFY", eliminated=l))
                return
        for j, h in enumerate(c.head):
            if h.is_builtin and eval_ground_builtin(h) is False:
                got = Clause(c.head[:j] + c.head[j + 1:], c.body)
                yield self._node(got, node, Step("SIMPLIFY", head=j))
                return


    def _factors(self, node):
        c = node.clause
        for a, b in itertools.combinations(range(len(c.body)), 2):
            x, y = c.body[a], c.body[b]
            if x.negated != y.negated or x.pred != y.pred:
                continue
            theta = unify(x.atom, y.atom)
            if theta is not None:
                body = c.body[:b] + c.body[b + 1:]
                yield self._node(subst(Clause(c.head, body), theta), node,
                                 Step("FACTOR", literal=a, head=b, mgu=_mgu_tuple(theta)))


def _tautology(c: Clause) -> bool:
    body = {l.atom for l in c.body if not l.negated}
    if any(h in body for h in c.head):
        return True
    return any(h.is_builtin and eval_ground_builtin(h) is True for h in c.head)


def _key(c: Clause):
    return canonical(
        sorted(c.head, key=shape) + [Atom("$|", ())] + sorted(c.body, key=shape)
    )


def check_completeness(program, leaves, cfg: SearchConfig | None = None) -> CompletenessVerdict:
    """Decide whether the union of ``leaves`` returns every query answer."""
    cfg = cfg or SearchConfig()
    prep = program if isinstance(program, Prepared) else prepare(program)
    query = prep.query
    leaves = [o for o in leaves if o.kind in (COMPLETE, PARTIAL)]
    if query is None or not leaves:
        return CompletenessVerdict(NOT_PROVEN, SEARCH_EXHAUSTED)
    consts = assertion_constants(query)
    answer = subst(query.answer, consts)
    compiled = prep.compiled is not None
    supported = [c for c in (leaf_clause(o, answer, compiled) for o in leaves) if c is not None]
    for k, c in enumerate(supported):
        supported[k] = Clause(c.head, c.body, "LEAF", True, f"leaf{k + 1}")
    equality = _has_builtins(prep)
    inputs = _universe(prep) + asserted_clauses(query, consts) + supported
    if equality:
        inputs.append(EQ_TRANS)
    # without built-ins the clause space is finite up to variants; the wider
    # bound is only a guard
    bound = cfg.depth_bound if equality else max(cfg.depth_bound, 4 * cfg.depth_bound)
    ref = _Refuter(inputs, cfg, equality)
    try:
        for limit in range(1, bound + 1):
            ref.cut = False
            for top in supported:
                ref.run(top, limit)
            if not ref.cut:
                return CompletenessVerdict(NOT_PROVEN, SEARCH_EXHAUSTED, None, consts, ref.nodes)
    except _Found as f:
        return CompletenessVerdict(PROVEN, None, f.node.chain(), consts, ref.nodes)
    except _Budget:
        pass
    return CompletenessVerdict(NOT_PROVEN, DEPTH_BOUND_REACHED, None, consts, ref.nodes)


def residual_query(query: Query, leaves) -> Query:
    """Disjuncts of ``query`` that no Case 1/2 leaf was derived from.

    An under-approximation of the answers the folded queries may miss.
    """
    covered = set()
    for o in leaves:
        if o.kind in (COMPLETE, PARTIAL):
            covered |= set(o.disjuncts)
    keep = tuple(d for k, d in enumerate(query.disjuncts) if k not in covered)
    return Query(query.name, query.answer, keep, ())
