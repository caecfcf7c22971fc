"""Resolution search that folds queries onto resource predicates.

A single engine covers both the Horn and the disjunctive setting. Every node
carries the query's answer tuple (as an answer literal would), so bindings of
distinguished variables are never lost and nodes whose answer picks up a
Skolem term are dropped at once.
"""
from __future__ import annotations

import logging
import os
from dataclasses import dataclass, field

from .completion import (
    CCrrSet,
    CompiledProgram,
    as_atom,
    clark_completion,
    combine_all,
    compile_negation,
    is_recursive_resource,
    skolemise_ic,
    unprimed,
)
from .logic import (
    Atom,
    Clause,
    Fresh,
    Literal,
    SYMMETRIC,
    Skolem,
    Var,
    admissible,
    atom_vars,
    builtin_implies,
    canonical,
    clause_vars,
    eval_ground_builtin,
    has_skolem,
    rename_apart,
    resolvent,
    shape,
    subst,
    subsumes,
    unify,
    unify_pairs,
)
from .program import (
    Program,
    Query,
    check_safety,
    classify_ic_case,
    dependency_edges,
    expand_literals,
    stratify,
    unfold_conjunction,
)

log = logging.getLogger(__name__)

COMPLETE = "CompleteFolding"
PARTIAL = "PartialFolding"
NO_RESOURCE = "NoResource"
NON_HORN = "NonHornResidue"

DEFAULT_DEPTH = 12


def default_depth() -> int:
    try:
        return max(1, int(os.environ.get("FOLDLOG_DEPTH", DEFAULT_DEPTH)))
    except ValueError:
        return DEFAULT_DEPTH


@dataclass
class SearchConfig:
    """Search controls.

    ``depth_bound`` counts steps through integrity constraints, IDB rules and
    equality axioms; inverse-rule steps always remove a base literal and are
    not counted. ``clause_order`` ranks input classes, both for choosing the
    literal to resolve and for ordering the alternatives.
    """

    depth_bound: int = field(default_factory=default_depth)
    max_foldings: int = 32
    prune_subsumption: bool = False
    clause_order: tuple = ("IDB", "IC", "CCRR")
    mode: str = "auto"  # auto | horn | disjunctive
    max_nodes: int = 10_000

    def __post_init__(self):
        if self.depth_bound < 1:
            raise ValueError("depth_bound must be >= 1")


# ----------------------------------------------------------- proof records

@dataclass(frozen=True)
class Step:
    kind: str  # QUERY RESOLVE HEAD_CANCEL REFLEXIVITY FACTOR BUILTIN_SUBSUME SIMPLIFY FREEZE CWA
    input: Clause | None = None
    label: str = ""
    literal: int | None = None
    head: int | None = None
    mgu: tuple = ()  # sorted (var, term) pairs
    eliminated: Literal | None = None

    @property
    def theta(self) -> dict:
        return dict(self.mgu)

    def describe(self) -> str:
        if self.kind in ("RESOLVE", "HEAD_CANCEL"):
            return f"{self.kind.lower()} with {self.label}"
        if self.kind == "BUILTIN_SUBSUME":
            return f"subsume {self.eliminated}"
        return self.kind.lower()


def _mgu_tuple(theta):
    return tuple(sorted(theta.items(), key=lambda kv: kv[0].name))


@dataclass(eq=False)
class DerivationNode:
    clause: Clause
    answer: tuple
    parent: "DerivationNode | None"
    step: Step
    depth: int
    id: int
    disjunct: int = 0

    def chain(self) -> list:
        out, n = [], self
        while n is not None:
            out.append(n)
            n = n.parent
        return out[::-1]


@dataclass
class FoldOutcome:
    kind: str
    clause: Clause
    answer: Atom
    used_cwa: bool
    leaf: DerivationNode
    disjuncts: frozenset = frozenset()

    def __str__(self):
        if self.kind == NON_HORN:
            return f"{self.clause}"
        return str(self.clause)

    @property
    def proof(self):
        return self.leaf.chain()


@dataclass
class FoldResult:
    outcomes: list
    warnings: list
    refuted: list
    case: int
    nodes: int
    prepared: "Prepared"

    @property
    def foldings(self):
        return [o for o in self.outcomes if o.kind in (COMPLETE, PARTIAL)]

    def __iter__(self):
        return iter(self.outcomes)

    def __len__(self):
        return len(self.outcomes)


# ------------------------------------------------------------ preparation

EQ_TRANS = Clause(
    (Atom("=", (Var("X"), Var("Z"))),),
    (Literal(Atom("=", (Var("X"), Var("Y")))), Literal(Atom("=", (Var("Y"), Var("Z"))))),
    "IC",
    False,
    "EQ-TRANS",
)


@dataclass
class Prepared:
    """Everything the search needs, computed once per program."""

    program: Program
    query: Query | None
    ccrr: CCrrSet
    idb: list
    ics: list
    denials: list
    res_rules: list
    renames: dict
    added_ics: list
    case: int
    equality: bool
    compiled: CompiledProgram | None = None
    warnings: list = field(default_factory=list)

    def is_res(self, pred) -> bool:
        return self.program.role(unprimed(pred)) == "RES"

    @property
    def recursive_idb(self):
        return _is_recursive(self.idb)


def _is_recursive(rules) -> bool:
    strata = stratify(rules) if rules else {}
    for h, b, _ in dependency_edges(rules):
        if h == b or (b in strata and strata[b] == strata.get(h) and any(r.head[0].pred == b for r in rules)):
            return True
    return False


def _unfold_query(query: Query, defs, fresh) -> Query:
    answer = set(query.answer)
    disj = []
    for d in query.disjuncts:
        for conj, theta in unfold_conjunction(d, defs, fresh):
            eqs = tuple(
                Literal(Atom("=", (v, subst(t, theta))))
                for v, t in theta.items()
                if v in answer and v != subst(t, theta)
            )
            disj.append(tuple(dict.fromkeys(conj + eqs)))
    return Query(query.name, query.answer, tuple(disj), query.rules)


def prepare(program: Program, fresh: Fresh | None = None) -> Prepared:
    """Compile negation / IDB, build inverse rules and integrity inputs."""
    fresh = fresh or Fresh(50_000)
    warnings = []
    compiled = None
    res_rules = [r for r in program.res if not is_recursive_resource(program.res, r.head[0].pred)]
    if len(res_rules) != len(program.res):
        warnings.append("recursive resources are skipped by folding (evaluation handles them)")
    query = program.query
    renames, added = {}, []
    idb = list(program.idb)
    if program.has_negation:
        compiled = compile_negation(program.with_(res=tuple(res_rules)))
        res_rules = compiled.res_clauses()
        idb = list(compiled.rules)
        query = compiled.query
        renames, added = compiled.renames, compiled.added_ics
    elif idb and not _is_recursive(idb):
        defs = {}
        for r in idb:
            defs.setdefault(r.head[0].pred, []).append(r)
        if query is not None:
            query = _unfold_query(query, defs, fresh)
        unfolded = []
        for r in res_rules:
            for conj, theta in unfold_conjunction(r.body, defs, fresh):
                unfolded.append(Clause(subst(r.head, theta), conj, "RES", False, r.label))
        res_rules = unfolded
    ccrr = clark_completion(res_rules, program.decls)
    if program.keys:
        ccrr.combined = combine_all(ccrr, program.keys)
    ics = [skolemise_ic(c, k + 1) for k, c in enumerate(program.ics)]
    ics = [
        Clause(c.head, tuple(Literal(as_atom(l)) for l in c.body), c.origin, c.support, c.label or f"IC{k + 1}")
        for k, c in enumerate(ics)
    ]
    denials = [c for c in ics + list(added) if not c.head]
    heads = [c for c in ics if c.head]
    case = classify_ic_case(ics + list(added))
    equality = any(a.pred == "=" for c in heads + ccrr.all_rules for a in c.head)
    return Prepared(
        program, query, ccrr, idb, heads, denials, res_rules, renames, list(added), case, equality, compiled, warnings
    )


# ----------------------------------------------------------------- search

class _Budget(Exception):
    pass


class _Stop(Exception):
    pass


@dataclass
class _State:
    clause: Clause
    answer: tuple
    frozen: frozenset  # frozen body literals (by value)
    middle: frozenset  # variables introduced as transitivity midpoints
    rdepth: int  # counted steps
    used: frozenset  # disjuncts contributing
    node: DerivationNode
    new: tuple = ()  # body positions eligible for factoring
    key: tuple | None = None


class Folder:
    """One folding run over a prepared program."""

    def __init__(self, prep: Prepared, cfg: SearchConfig):
        self.prep = prep
        self.cfg = cfg
        self.fresh = Fresh(0)
        self.ids = 0
        self.nodes = 0
        self.outcomes = []
        self.residues = {}
        self.covered = set()
        self.warnings = list(prep.warnings)
        self.depth_hit = False
        self.cut = False
        self.limit = cfg.depth_bound
        self.memo = {}
        self.query = prep.query
        self.protected = frozenset()
        rank = {c: i for i, c in enumerate(cfg.clause_order)}
        inputs = []
        for cls, rules in (("IDB", prep.idb), ("IC", prep.ics), ("CCRR", prep.ccrr.all_rules)):
            for r in rules:
                for j, h in enumerate(r.head):
                    inputs.append((rank.get(cls, len(rank)), cls, r, j))
        if prep.equality:
            inputs.append((rank.get("IC", 1), "EQ", EQ_TRANS, 0))
        inputs.sort(key=lambda t: t[0])
        self.rank = rank
        self.by_pred = {}
        probe = Fresh(0)
        for rk, cls, r, j in inputs:
            # heads renamed into a namespace goal clauses never use
            h = subst(r.head[j], {v: Var(f"{v.name}%{probe.n}") for v in atom_vars(r.head[j])})
            probe.n += 1
            self.by_pred.setdefault(r.head[j].pred, []).append((rk, cls, r, j, h))
        self.bounded = prep.case == 3 or prep.recursive_idb

    # -- helpers -----------------------------------------------------------
    def _node(self, clause, answer, parent, step, disjunct=0):
        self.ids += 1
        depth = parent.depth + 1 if parent else 0
        return DerivationNode(clause, answer, parent, step, depth, self.ids, disjunct)

    def _key(self, st: _State):
        body = sorted(
            ((Literal(Atom("!" + l.pred, l.atom.args), l.negated) if l in st.frozen else l) for l in st.clause.body),
            key=shape,
        )
        head = sorted(st.clause.head, key=shape)
        return canonical([Atom("$ans", st.answer)] + head + body)

    def _candidates(self, lit: Literal, st: _State):
        """Input clauses whose head unifies with ``lit``, in clause order."""
        if lit.negated:
            return []
        a = lit.atom
        out = []
        for rk, cls, r, j, h in self.by_pred.get(a.pred, ()):
            if cls == "EQ" and (not has_skolem(a) or a.args[1] in st.middle):
                continue
            if a.is_builtin and not has_skolem(a):
                continue
            ok = unify(a, h) is not None
            if not ok and a.pred in SYMMETRIC and cls != "EQ":
                ok = unify(a, Atom(h.pred, h.args[::-1])) is not None
            if ok:
                out.append((rk, cls, r, j))
        if a.pred == "=" and has_skolem(a) and unify_pairs([a.args]) is not None:
            out.append((self.rank.get("IC", 1), "REFL", None, 0))
        out.sort(key=lambda t: t[0])
        return out

    def _selectable(self, lit, st):
        if lit in st.frozen and not has_skolem(lit):
            return False
        if self.prep.is_res(lit.pred):
            return False
        if lit.is_builtin and not has_skolem(lit):
            return False
        return True

    # -- main loop ---------------------------------------------------------
    def run(self) -> FoldResult:
        q = self.query
        refuted = []
        if q is None:
            raise ValueError("program has no query")
        try:
            for k, d in enumerate(q.disjuncts):
                self.protected = frozenset(v for v in q.answer if isinstance(v, Var))
                body = tuple(d)
                if self.prep.equality:
                    body = expand_literals(body, self.fresh)
                root = Clause((), body, "QUERY", True)
                if self._refuted(root, q.answer):
                    refuted.append(k)
                    self.warnings.append(f"disjunct {k + 1} is refuted by an integrity constraint")
                    continue
                # iterative deepening on counted steps: shallow foldings are
                # found before the node budget can be spent on deep chains
                limits = range(1, self.cfg.depth_bound + 1) if self.bounded else (self.cfg.depth_bound,)
                for limit in limits:
                    self.limit = limit
                    self.memo = {}
                    self.cut = False
                    node = self._node(root, q.answer, None, Step("QUERY", label=f"D{k + 1}"), k)
                    st = _State(root, q.answer, frozenset(), frozenset(), 0, frozenset({k}), node)
                    self._expand(st, [], set())
                    if not self.cut:
                        break
                self.depth_hit |= self.cut
                if k not in self.covered:
                    self.outcomes.extend(self.residues.get(k, ()))
        except _Stop:
            self.depth_hit |= self.cut
            self.warnings.append(f"stopped after {self.cfg.max_foldings} foldings")
        except _Budget:
            self.depth_hit |= self.cut
            self.warnings.append(f"search truncated after {self.cfg.max_nodes} nodes")
        if self.depth_hit:
            self.warnings.append(
                f"derivations cut by the depth bound ({self.cfg.depth_bound}): possibly infinite set of folded queries"
            )
        return FoldResult(self.outcomes, self.warnings, refuted, self.prep.case, self.nodes, self.prep)

    def _refuted(self, clause, answer):
        return any(subsumes(ic, clause) for ic in self.prep.denials)

    def _expand(self, st: _State, path: list, path_keys: set) -> bool:
        """Explore a node; returns whether any leaf was emitted below it."""
        self.nodes += 1
        if self.nodes > self.cfg.max_nodes:
            raise _Budget()
        st = self._simplify(st)
        if st is None:
            return False
        if has_skolem(st.answer):
            return False
        table = self._table(st)
        if table is None:
            return False
        key = st.key or self._key(st)
        if key in path_keys:
            return False
        if self.prep.case == 2 and self._subsumed_by_ancestor(st, path):
            return False
        remaining = self.limit - st.rdepth
        seen = self.memo.get(key)
        if seen is not None and seen[0] >= remaining:
            return seen[1]
        if self.cfg.prune_subsumption and st.node.depth > 0 and self._refuted(st.clause, st.answer):
            return False
        path.append(st)
        path_keys.add(key)
        try:
            produced = self._expand_inner(st, path, path_keys, table)
        finally:
            path.pop()
            path_keys.discard(key)
        self.memo[key] = (remaining, produced)
        return produced

    def _expand_inner(self, st, path, path_keys, table):
        produced = False
        # factoring alternatives come first, the unfactored node after
        for child in self._factor_children(st):
            produced |= self._expand(child, path, path_keys)
        body = st.clause.body
        sel = self._select(st, table)
        if sel is None:
            if any(self._dead(l, st) for l in body):
                return produced
            kids = self._head_cancel_children(st)
            for child in kids:
                produced |= self._expand(child, path, path_keys)
            if not kids:
                produced |= self._leaf(st)
            return produced
        i, cands = sel
        if self.bounded and st.rdepth >= self.limit and any(c[1] != "CCRR" for c in cands):
            cands = [c for c in cands if c[1] == "CCRR"]
            self.cut = True
        child_made = False
        for child in self._resolve_children(st, i, cands):
            child_made = True
            produced |= self._expand(child, path, path_keys)
        lit = body[i]
        if not produced and not has_skolem(lit):
            frozen = st.frozen | {lit}
            node = self._node(st.clause, st.answer, st.node, Step("FREEZE", literal=i), st.node.disjunct)
            child = _State(st.clause, st.answer, frozen, st.middle, st.rdepth, st.used, node)
            produced |= self._expand(child, path, path_keys)
        del child_made
        return produced

    # -- node simplification ----------------------------------------------
    def _simplify(self, st: _State):
        while True:
            body = st.clause.body
            # identical literals
            if len(set(body)) != len(body):
                nb = tuple(dict.fromkeys(body))
                st = self._derive(st, Clause(st.clause.head, nb, "DERIVED", True), Step("FACTOR"), keep_new=False)
                continue
            if len(set(st.clause.head)) != len(st.clause.head):
                nh = tuple(dict.fromkeys(st.clause.head))
                st = self._derive(st, Clause(nh, body, "DERIVED", True), Step("FACTOR"), keep_new=False)
                continue
            changed = False
            for k, l in enumerate(body):
                if not l.is_builtin:
                    continue
                x, y = l.atom.args
                val = eval_ground_builtin(l.atom)
                if val is None and x == y:
                    val = l.pred in ("=", "<=", ">=")
                if val is False:
                    return None
                if val is True:
                    nb = body[:k] + body[k + 1:]
                    st = self._derive(st, Clause(st.clause.head, nb, "DERIVED", True), Step("SIMPLIFY", eliminated=l))
                    changed = True
                    break
                for m, s in enumerate(body):
                    if m != k and s.is_builtin and s != l and builtin_implies(s.atom, l.atom):
                        nb = body[:k] + body[k + 1:]
                        st = self._derive(
                            st, Clause(st.clause.head, nb, "DERIVED", True), Step("BUILTIN_SUBSUME", eliminated=l)
                        )
                        changed = True
                        break
                if changed:
                    break
            if not changed:
                return st

    def _derive(self, st, clause, step, theta=None, keep_new=True):
        theta = theta or {}
        answer = subst(st.answer, theta)
        node = self._node(clause, answer, st.node, step, st.node.disjunct)
        frozen = frozenset(subst(l, theta) for l in st.frozen)
        new = tuple(k for k in st.new if k < len(clause.body)) if keep_new else ()
        return _State(clause, answer, frozen, st.middle, st.rdepth, st.used, node, new)

    def _table(self, st: _State):
        """Candidate inputs per body literal (None where not selectable);
        None overall when some Skolem literal can never be removed."""
        out = []
        for l in st.clause.body:
            sk = has_skolem(l)
            if sk and (l.negated or self.prep.is_res(l.pred)):
                return None
            if not self._selectable(l, st):
                out.append(None)
                continue
            cands = self._candidates(l, st)
            if sk and not cands:
                return None
            out.append(cands)
        return out

    def _dead(self, lit, st):
        """A literal that can never leave the clause and never be a leaf."""
        return has_skolem(lit)

    # -- selection -----------------------------------------------------------
    def _select(self, st: _State, table=None):
        table = table if table is not None else self._table(st) or []
        best = None
        for i, cands in enumerate(table):
            if not cands:
                continue
            rank = cands[0][0]
            if best is None or rank < best[0]:
                best = (rank, i, cands)
        if best is None:
            return None
        return best[1], best[2]

    def _resolve_children(self, st: _State, i: int, cands):
        lit = st.clause.body[i]
        out, keys = [], set()
        for rk, cls, rule, j in cands:
            if cls == "REFL":
                theta = unify_pairs([lit.atom.args])
                if theta is None:
                    continue
                body = st.clause.body[:i] + st.clause.body[i + 1:]
                clause = subst(Clause(st.clause.head, body, "DERIVED", True), theta)
                step = Step("REFLEXIVITY", label="EQ-REFL", literal=i, mgu=_mgu_tuple(theta))
                child = self._child(st, clause, theta, step, 1, (), st.middle)
            else:
                renamed, ren = rename_apart(rule, self.fresh)
                heads = [renamed]
                if lit.is_builtin and lit.pred in SYMMETRIC and cls != "EQ":
                    h = renamed.head[j]
                    flipped = Clause(
                        renamed.head[:j] + (Atom(h.pred, h.args[::-1]),) + renamed.head[j + 1:],
                        renamed.body, renamed.origin, renamed.support, renamed.label,
                    )
                    heads.append(flipped)
                for inp in heads:
                    theta = unify(lit.atom, inp.head[j])
                    if theta is None:
                        continue
                    clause = resolvent(st.clause, i, inp, j, theta)
                    clause = Clause(clause.head, clause.body, "DERIVED", True)
                    new = tuple(range(i, i + len(inp.body)))
                    middle = st.middle
                    if cls == "EQ":
                        middle = middle | {ren[Var("Y")]}
                    step = Step("RESOLVE", inp, inp.label or cls, i, j, _mgu_tuple(theta))
                    child = self._child(st, clause, theta, step, 0 if cls == "CCRR" else 1, new, middle)
                    if child is None:
                        continue
                    k = child.key = self._key(child)
                    if k in keys:
                        continue
                    keys.add(k)
                    out.append(child)
                continue
            if child is not None:
                k = child.key = self._key(child)
                if k not in keys:
                    keys.add(k)
                    out.append(child)
        return out

    def _child(self, st, clause, theta, step, cost, new, middle):
        answer = subst(st.answer, theta)
        if has_skolem(answer):
            return None
        middle = frozenset(m for m in (subst(v, theta) for v in middle) if isinstance(m, Var))
        frozen = frozenset(subst(l, theta) for l in st.frozen)
        node = self._node(clause, answer, st.node, step, st.node.disjunct)
        return _State(clause, answer, frozen, middle, st.rdepth + cost, st.used, node, new)

    # -- factoring -------------------------------------------------------------
    def _factor_children(self, st: _State, resource=False):
        """Admissible factors touching a new literal.

        Inside the search only base literals are factored; merging resource
        literals never enables a later step and is left to the leaves.
        """
        if not st.new:
            return []
        body = st.clause.body
        out, keys = [], set()
        protected = frozenset(v for v in st.answer if isinstance(v, Var))
        pairs = set()
        for n in st.new:
            for o in range(len(body)):
                if o != n:
                    pairs.add((min(n, o), max(n, o)))
        for a, b in sorted(pairs):
            la, lb = body[a], body[b]
            if la.is_builtin or lb.is_builtin or la.negated != lb.negated or la.pred != lb.pred:
                continue
            if self.prep.is_res(la.pred) != resource:
                continue
            theta = unify(la.atom, lb.atom)
            if theta is None or not admissible(theta, protected):
                continue
            nb = body[:b] + body[b + 1:]
            clause = subst(Clause(st.clause.head, nb, "DERIVED", True), theta)
            if has_skolem(subst(st.answer, theta)):
                continue
            changed = tuple(k for k, l in enumerate(nb) if subst(l, theta) != l)
            node = self._node(clause, subst(st.answer, theta), st.node, Step("FACTOR", literal=a, head=b, mgu=_mgu_tuple(theta)), st.node.disjunct)
            frozen = frozenset(subst(l, theta) for l in st.frozen)
            middle = frozenset(m for m in (subst(v, theta) for v in st.middle) if isinstance(m, Var))
            child = _State(clause, subst(st.answer, theta), frozen, middle, st.rdepth, st.used, node, changed)
            k = child.key = self._key(child)
            if k in keys:
                continue
            keys.add(k)
            out.append(child)
        return out

    # -- disjunctive heads ---------------------------------------------------
    def _head_cancel_children(self, st: _State):
        if not st.clause.head:
            return []
        out, keys = [], set()
        q = self.query
        for hi, h in enumerate(st.clause.head):
            for k, d in enumerate(q.disjuncts):
                top = Clause((), tuple(d), "QUERY", True, f"D{k + 1}")
                top_ans = Clause((Atom("$ans", q.answer),), top.body)
                renamed, ren = rename_apart(top_ans, self.fresh)
                dbody = renamed.body
                d_answer = renamed.head[0].args
                for li, l in enumerate(dbody):
                    if l.negated or l.pred != h.pred:
                        continue
                    theta = unify(l.atom, h)
                    if theta is None:
                        continue
                    theta = unify_pairs(zip(st.answer, d_answer), theta)
                    if theta is None:
                        continue
                    goal = Clause((), dbody, "QUERY", True, f"D{k + 1}")
                    clause = resolvent(goal, li, st.clause, hi, theta)
                    clause = Clause(clause.head, clause.body, "DERIVED", True)
                    answer = subst(st.answer, theta)
                    if has_skolem(answer):
                        continue
                    step = Step("HEAD_CANCEL", goal, f"D{k + 1}", li, hi, _mgu_tuple(theta))
                    node = self._node(clause, answer, st.node, step, st.node.disjunct)
                    frozen = frozenset(subst(x, theta) for x in st.frozen)
                    new = tuple(range(len(clause.body)))
                    child = _State(clause, answer, frozen, st.middle, st.rdepth + 1, st.used | {k}, node, new)
                    key = child.key = self._key(child)
                    if key not in keys:
                        keys.add(key)
                        out.append(child)
        return out

    def _subsumed_by_ancestor(self, st, path):
        me = Clause((Atom("$ans", st.answer),) + st.clause.head, st.clause.body)
        for anc in path:
            them = Clause((Atom("$ans", anc.answer),) + anc.clause.head, anc.clause.body)
            if subsumes(them, me):
                return True
        return False

    # -- leaves ----------------------------------------------------------------
    def _leaf(self, st: _State) -> bool:
        st = self._minimise(st)
        produced = self._emit(st)
        if not st.clause.head and not has_skolem(st.clause):
            seen = {self._key(st)}
            todo = [st]
            while todo:
                cur = todo.pop(0)
                cur = _State(cur.clause, cur.answer, cur.frozen, cur.middle, cur.rdepth, cur.used, cur.node,
                             tuple(range(len(cur.clause.body))))
                for child in self._factor_children(cur, resource=True):
                    child = self._minimise(child)
                    k = child.key = self._key(child)
                    if k in seen:
                        continue
                    seen.add(k)
                    produced |= self._emit(child)
                    todo.append(child)
        return produced

    def _minimise(self, st: _State) -> _State:
        """Equivalence-preserving factoring of resource literals."""
        protected = frozenset(v for v in st.answer if isinstance(v, Var))
        changed = True
        while changed:
            changed = False
            body = st.clause.body
            me = Clause((Atom("$ans", st.answer),) + st.clause.head, body)
            for a in range(len(body)):
                for b in range(a + 1, len(body)):
                    la, lb = body[a], body[b]
                    if la.is_builtin or la.pred != lb.pred or la.negated != lb.negated:
                        continue
                    theta = unify(la.atom, lb.atom)
                    if theta is None or not admissible(theta, protected):
                        continue
                    nb = body[:b] + body[b + 1:]
                    clause = subst(Clause(st.clause.head, nb, "DERIVED", True), theta)
                    answer = subst(st.answer, theta)
                    cand = Clause((Atom("$ans", answer),) + clause.head, clause.body)
                    if not subsumes(cand, me):
                        continue
                    step = Step("FACTOR", literal=a, head=b, mgu=_mgu_tuple(theta))
                    node = self._node(clause, answer, st.node, step, st.node.disjunct)
                    frozen = frozenset(subst(l, theta) for l in st.frozen)
                    st = _State(clause, answer, frozen, st.middle, st.rdepth, st.used, node)
                    st = self._simplify(st) or st
                    changed = True
                    break
                if changed:
                    break
        return st

    def _emit(self, st: _State) -> bool:
        c = st.clause
        if has_skolem(c) or has_skolem(st.answer):
            return False
        used_cwa = False
        node = st.node
        if c.head:
            cwa = self.prep.program.cwa
            if all(not h.is_builtin and unprimed(h.pred) == h.pred and h.pred in cwa for h in c.head):
                c = apply_cwa_rewrite(c, cwa)
                node = self._node(c, st.answer, node, Step("CWA"), node.disjunct)
                used_cwa = True
        if c.head:
            kind = NON_HORN
            named = _tidy_names(Clause((Atom("$ans", st.answer),) + c.head, c.body), self.query.answer)
            final = Clause(named.head[1:], _restore_negation(named.body), "DERIVED")
            answer = Atom(self.query.name, named.head[0].args)
        else:
            final = postprocess_clause(c, st.answer, self.query)
            if final is None:
                return False
            kind = classify_leaf(final, self.prep)
            if kind != NO_RESOURCE and check_safety(final):
                return False
            answer = final.head[0]
        outcome = FoldOutcome(kind, final, answer, used_cwa, node, st.used)
        if kind in (NO_RESOURCE, NON_HORN):
            # residues only matter for disjuncts that end up without a folding
            bucket = self.residues.setdefault(node.disjunct, [])
            if kind == NO_RESOURCE and any(o.kind == NO_RESOURCE for o in bucket):
                return False
            if not any(o.kind == kind and equivalent(o, outcome) for o in bucket):
                bucket.append(outcome)
            return kind == NON_HORN
        self.covered.add(node.disjunct)
        for o in self.outcomes:
            if o.kind == kind and equivalent(o, outcome):
                return True
        self.outcomes.append(outcome)
        log.debug("outcome %s %s", kind, final)
        if sum(o.kind in (COMPLETE, PARTIAL) for o in self.outcomes) >= self.cfg.max_foldings:
            raise _Stop()
        return True


def _restore_negation(body):
    out = []
    for l in body:
        if not l.is_builtin and l.pred.endswith("'"):
            out.append(Literal(Atom(unprimed(l.pred), l.atom.args), not l.negated))
        else:
            out.append(l)
    return tuple(out)


def postprocess_clause(c: Clause, answer: tuple, query) -> Clause | None:
    """Turn a goal leaf into the folded query ``q(answer) :- body``.

    Equalities introduced by expansion are inlined again (answer variables
    stay put), primed predicates return to default negation, duplicate and
    implied built-ins are dropped and variables get readable names.
    """
    qname = query.name if isinstance(query, Query) else query
    body = list(c.body)
    protected = {v for v in answer if isinstance(v, Var)}
    changed = True
    while changed:
        changed = False
        for k, l in enumerate(body):
            if not (l.is_builtin and l.pred == "=" and not l.negated):
                continue
            x, y = l.atom.args
            if x == y:
                del body[k]
                changed = True
                break
            theta = None
            if isinstance(x, Var) and x not in protected:
                theta = {x: y}
            elif isinstance(y, Var) and y not in protected:
                theta = {y: x}
            if theta is not None:
                del body[k]
                body = list(subst(tuple(body), theta))
                answer = subst(answer, theta)
                changed = True
                break
    body = _restore_negation(body)
    out = []
    for l in dict.fromkeys(body):
        if l.is_builtin:
            val = eval_ground_builtin(l.atom)
            if val is True:
                continue
            if val is False:
                return None
        out.append(l)
    final = []
    for l in out:
        if l.is_builtin and any(m.is_builtin and m != l and builtin_implies(m.atom, l.atom) for m in out):
            continue
        final.append(l)
    clause = Clause((Atom(qname, answer),), tuple(final), "DERIVED")
    if isinstance(query, Query):
        clause = _tidy_names(clause, query.answer)
    return clause


def _tidy_names(c: Clause, names: tuple) -> Clause:
    """Give answer positions the query's own variable names and number the
    engine's fresh variables."""
    head = c.head[0].args
    theta = {}
    taken = set()
    for t, n in zip(head, names):
        if isinstance(t, Var) and isinstance(n, Var) and t not in theta and n not in taken:
            theta[t] = n
            taken.add(n)

    k = 0
    for v in clause_vars(c):
        if v in theta:
            continue
        if not v.name.startswith("_") and v not in taken:
            theta[v] = v
            taken.add(v)
    for v in clause_vars(c):
        if v in theta:
            continue
        k += 1
        while Var(f"V{k}") in taken:
            k += 1
        theta[v] = Var(f"V{k}")
        taken.add(theta[v])
    return subst(c, theta)


def classify_leaf(c: Clause, prep_or_program) -> str:
    """Kind of a goal leaf (head = answer atom, or empty)."""
    prog = prep_or_program.program if isinstance(prep_or_program, Prepared) else prep_or_program
    qname = prog.query.name if prog.query is not None else None
    if any(h.pred not in (qname, "$ans") for h in c.head):
        return NON_HORN
    res = sum(1 for l in c.body if not l.is_builtin and prog.role(unprimed(l.pred)) == "RES")
    base = sum(1 for l in c.body if not l.is_builtin and prog.role(unprimed(l.pred)) != "RES")
    if res == 0:
        return NO_RESOURCE
    return PARTIAL if base else COMPLETE


def equivalent(a: FoldOutcome, b: FoldOutcome) -> bool:
    ca = Clause((a.answer,) + (a.clause.head if a.kind == NON_HORN else ()), a.clause.body)
    cb = Clause((b.answer,) + (b.clause.head if b.kind == NON_HORN else ()), b.clause.body)
    return subsumes(ca, cb) and subsumes(cb, ca)


def fold(program_or_prep, cfg: SearchConfig | None = None) -> FoldResult:
    cfg = cfg or SearchConfig()
    prep = program_or_prep if isinstance(program_or_prep, Prepared) else prepare(program_or_prep)
    if prep.query is not None and prep.query.is_recursive:
        # no finite proof tree to search; answers come from evaluation
        msg = "recursive query: not folded, answer it with eval"
        return FoldResult([], prep.warnings + [msg], [], prep.case, 0, prep)
    return Folder(prep, cfg).run()


def fold_single(program, cfg=None) -> FoldResult:
    """Horn-mode entry point (single disjunct, Horn inputs)."""
    prep = program if isinstance(program, Prepared) else prepare(program)
    if prep.query is not None and len(prep.query.disjuncts) > 1:
        raise ValueError("fold_single needs a conjunctive query; use fold_multi")
    if prep.ccrr.is_disjunctive or any(len(c.head) > 1 for c in prep.ics):
        raise ValueError("fold_single needs Horn inputs; use fold_multi")
    return fold(prep, cfg)


def fold_multi(program, cfg=None) -> FoldResult:
    return fold(program, cfg)


def apply_cwa_rewrite(c: Clause, cwa) -> Clause | None:
    """Move head atoms into the body as negated literals (None if not allowed)."""
    if not c.head or not all(not h.is_builtin and h.pred in cwa for h in c.head):
        return None
    return Clause((), c.body + tuple(Literal(h, True) for h in c.head), "DERIVED", c.support)


def bounding_check(node: DerivationNode) -> str:
    """"Backtrack" when the node's goal is a variant of an ancestor's."""
    me = canonical_node(node)
    n = node.parent
    while n is not None:
        if canonical_node(n) == me:
            return "Backtrack"
        n = n.parent
    return "Continue"


def canonical_node(node: DerivationNode):
    body = sorted(node.clause.body, key=shape)
    head = sorted(node.clause.head, key=shape)
    return canonical([Atom("$ans", node.answer)] + head + body)


def replay(node: DerivationNode) -> bool:
    """Re-execute the step that produced ``node`` from its parent."""
    p, s = node.parent, node.step
    if p is None:
        return s.kind == "QUERY"
    theta = s.theta
    if s.kind == "RESOLVE":
        lit = p.clause.body[s.literal]
        if subst(lit.atom, theta) != subst(s.input.head[s.head], theta):
            return False
        got = resolvent(p.clause, s.literal, s.input, s.head, theta)
    elif s.kind == "HEAD_CANCEL":
        if subst(s.input.body[s.literal].atom, theta) != subst(p.clause.head[s.head], theta):
            return False
        got = resolvent(s.input, s.literal, p.clause, s.head, theta)
    elif s.kind == "REFLEXIVITY":
        x, y = p.clause.body[s.literal].atom.args
        if subst(x, theta) != subst(y, theta):
            return False
        body = p.clause.body[: s.literal] + p.clause.body[s.literal + 1:]
        got = subst(Clause(p.clause.head, body), theta)
    elif s.kind == "FACTOR":
        if s.literal is None:
            # merging identical literals, in the body or in the head
            c = p.clause
            options = [Clause(c.head, tuple(dict.fromkeys(c.body))), Clause(tuple(dict.fromkeys(c.head)), c.body)]
            return any(o.head == node.clause.head and o.body == node.clause.body for o in options)
        else:
            a, b = p.clause.body[s.literal], p.clause.body[s.head]
            if subst(a, theta) != subst(b, theta):
                return False
            body = p.clause.body[: s.head] + p.clause.body[s.head + 1:]
            got = subst(Clause(p.clause.head, body), theta)
    elif s.kind == "SIMPLIFY" and s.head is not None:
        h = p.clause.head[s.head]
        if not h.is_builtin or eval_ground_builtin(h) is not False:
            return False
        got = Clause(p.clause.head[: s.head] + p.clause.head[s.head + 1:], p.clause.body)
    elif s.kind in ("BUILTIN_SUBSUME", "SIMPLIFY"):
        body = list(p.clause.body)
        if s.eliminated not in body:
            return False
        body.remove(s.eliminated)
        if s.kind == "BUILTIN_SUBSUME" and not any(
            m.is_builtin and builtin_implies(m.atom, s.eliminated.atom) for m in body
        ):
            return False
        got = Clause(p.clause.head, tuple(body))
    elif s.kind == "FREEZE":
        got = p.clause
    elif s.kind == "CWA":
        got = apply_cwa_rewrite(p.clause, {h.pred for h in p.clause.head})
    else:
        return False
    return got is not None and got.head == node.clause.head and got.body == node.clause.body
