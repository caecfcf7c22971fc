"""Terms, atoms, clauses and the resolution kernel.

Everything here is immutable. Substitutions are plain dicts mapping
``Var`` to terms; every function returning one returns it idempotent.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Iterator

BUILTINS = frozenset({"=", "!=", "<", "<=", ">", ">="})
SYMMETRIC = frozenset({"=", "!="})
# operator for `not (a op b)`
NEGATE_OP = {"=": "!=", "!=": "=", "<": ">=", "<=": ">", ">": "<=", ">=": "<"}
# operator for `b op' a` equivalent to `a op b`
FLIP_OP = {"=": "=", "!=": "!=", "<": ">", "<=": ">=", ">": "<", ">=": "<="}


@dataclass(frozen=True, slots=True)
class Var:
    name: str

    def __hash__(self):
        return hash(self.name)

    def __str__(self):
        return self.name


@dataclass(frozen=True, slots=True)
class Const:
    """A symbol (``str``) or an exact rational (``Fraction``)."""

    value: str | Fraction

    @property
    def is_number(self):
        return isinstance(self.value, Fraction)

    def __str__(self):
        v = self.value
        if isinstance(v, Fraction):
            return format_number(v)
        if v and v[0].islower() and (v.replace("_", "a").isalnum()) and v.isascii():
            return v
        if v.startswith("$") and v[1:].replace("_", "a").isalnum():
            return v  # internal constants live in their own namespace
        return "'" + v.replace("'", "\\'") + "'"


@dataclass(frozen=True, slots=True)
class Skolem:
    functor: str
    args: tuple
    _h: int = field(default=0, init=False, repr=False, compare=False)

    def __hash__(self):
        # cached: terms are hashed constantly during search
        h = self._h
        if not h:
            h = hash((self.functor, self.args)) or 1
            object.__setattr__(self, "_h", h)
        return h

    def __str__(self):
        return f"{self.functor}({','.join(map(str, self.args))})"


Term = Var | Const | Skolem


def format_number(v: Fraction) -> str:
    if v.denominator == 1:
        return str(v.numerator)
    # finite decimals print as such, anything else as a ratio
    d = v.denominator
    for p in (2, 5):
        while d % p == 0:
            d //= p
    if d != 1:
        return f"{v.numerator}/{v.denominator}"
    digits = 0
    x = v
    while x.denominator != 1:
        x *= 10
        digits += 1
    sign = "-" if v < 0 else ""
    n = abs(x.numerator)
    s = str(n).rjust(digits + 1, "0")
    return f"{sign}{s[:-digits]}.{s[-digits:]}"


def num(x) -> Const:
    return Const(Fraction(x))


@dataclass(frozen=True, slots=True)
class Atom:
    pred: str
    args: tuple = ()
    _h: int = field(default=0, init=False, repr=False, compare=False)

    def __hash__(self):
        # cached: terms are hashed constantly during search
        h = self._h
        if not h:
            h = hash((self.pred, self.args)) or 1
            object.__setattr__(self, "_h", h)
        return h

    @property
    def is_builtin(self):
        return self.pred in BUILTINS

    @property
    def arity(self):
        return len(self.args)

    def __str__(self):
        if self.is_builtin:
            return f"{self.args[0]} {self.pred} {self.args[1]}"
        if not self.args:
            return self.pred
        return f"{self.pred}({','.join(map(str, self.args))})"


@dataclass(frozen=True, slots=True)
class Literal:
    atom: Atom
    negated: bool = False
    _h: int = field(default=0, init=False, repr=False, compare=False)

    def __hash__(self):
        # cached: terms are hashed constantly during search
        h = self._h
        if not h:
            h = hash((self.atom, self.negated)) or 1
            object.__setattr__(self, "_h", h)
        return h

    @property
    def pred(self):
        return self.atom.pred

    @property
    def is_builtin(self):
        return self.atom.is_builtin

    def __str__(self):
        return ("not " if self.negated else "") + str(self.atom)


@dataclass(frozen=True, slots=True)
class Clause:
    """``head[0] ; head[1] ; ... :- body``.

    ``origin`` is one of QUERY, IC, IDB, RES, CCRR, FACT, DERIVED. ``label``
    names input clauses in proofs (``CCrr1``, ``IC2``...) and is ignored by
    equality.
    """

    head: tuple = ()
    body: tuple = ()
    origin: str = "DERIVED"
    support: bool = False
    label: str = field(default="", compare=False)

    def __str__(self):
        return format_clause(self)

    @property
    def is_horn(self):
        return len(self.head) <= 1


def format_clause(c: Clause) -> str:
    head = " ; ".join(map(str, c.head))
    if not c.body:
        return (head or ":-") + "."
    body = ", ".join(map(str, c.body))
    return f"{head} :- {body}." if head else f":- {body}."


def pos(pred, *args) -> Literal:
    return Literal(Atom(pred, tuple(args)))


# --------------------------------------------------------------- traversal

def term_vars(t) -> Iterator[Var]:
    if isinstance(t, Var):
        yield t
    elif isinstance(t, Skolem):
        for a in t.args:
            yield from term_vars(a)


def atom_vars(a: Atom) -> Iterator[Var]:
    for t in a.args:
        yield from term_vars(t)


def clause_vars(c: Clause) -> list:
    """Variables in order of first occurrence (head first)."""
    seen = {}
    for a in c.head:
        for v in atom_vars(a):
            seen.setdefault(v, None)
    for lit in c.body:
        for v in atom_vars(lit.atom):
            seen.setdefault(v, None)
    return list(seen)


def has_skolem(x) -> bool:
    if isinstance(x, Skolem):
        return True
    if isinstance(x, Var | Const):
        return False
    if isinstance(x, Literal):
        x = x.atom
    if isinstance(x, Atom):
        return any(isinstance(t, Skolem) for t in x.args)
    if isinstance(x, Clause):
        return any(has_skolem(a) for a in x.head) or any(has_skolem(l) for l in x.body)
    return any(has_skolem(t) for t in x)


def skolem_depth(t) -> int:
    if isinstance(t, Skolem):
        return 1 + max((skolem_depth(a) for a in t.args), default=0)
    return 0


def is_ground(x) -> bool:
    if isinstance(x, Var):
        return False
    if isinstance(x, Const):
        return True
    if isinstance(x, Skolem):
        return all(is_ground(a) for a in x.args)
    if isinstance(x, Literal):
        x = x.atom
    return all(is_ground(t) for t in x.args)


# ------------------------------------------------------------ substitution

def subst(x, theta: dict):
    """Apply ``theta`` to a term, atom, literal, clause or tuple of those."""
    if not theta:
        return x
    if isinstance(x, Var):
        return theta.get(x, x)
    if isinstance(x, Const):
        return x
    if isinstance(x, Skolem):
        return Skolem(x.functor, tuple(subst(a, theta) for a in x.args))
    if isinstance(x, Atom):
        return Atom(x.pred, tuple(subst(a, theta) for a in x.args))
    if isinstance(x, Literal):
        return Literal(subst(x.atom, theta), x.negated)
    if isinstance(x, Clause):
        return Clause(
            tuple(subst(a, theta) for a in x.head),
            tuple(subst(l, theta) for l in x.body),
            x.origin,
            x.support,
            x.label,
        )
    return tuple(subst(e, theta) for e in x)


def compose(theta: dict, sigma: dict) -> dict:
    """Substitution equal to applying ``theta`` then ``sigma``."""
    out = {v: subst(t, sigma) for v, t in theta.items()}
    for v, t in sigma.items():
        out.setdefault(v, t)
    return {v: t for v, t in out.items() if v != t}


def _walk(t, theta):
    while isinstance(t, Var) and t in theta:
        t = theta[t]
    return t


def _occurs(v, t, theta) -> bool:
    t = _walk(t, theta)
    if t == v:
        return True
    if isinstance(t, Skolem):
        return any(_occurs(v, a, theta) for a in t.args)
    return False


def _unify_terms(s, t, theta) -> bool:
    s = _walk(s, theta)
    t = _walk(t, theta)
    if s == t:
        return True
    # prefer binding the right-hand variable so left (goal) names survive
    if isinstance(t, Var):
        if _occurs(t, s, theta):
            return False
        theta[t] = s
        return True
    if isinstance(s, Var):
        if _occurs(s, t, theta):
            return False
        theta[s] = t
        return True
    if isinstance(s, Skolem) and isinstance(t, Skolem):
        if s.functor != t.functor or len(s.args) != len(t.args):
            return False
        return all(_unify_terms(a, b, theta) for a, b in zip(s.args, t.args))
    return False


def _resolve_bindings(theta) -> dict:
    def deref(t):
        t = _walk(t, theta)
        if isinstance(t, Skolem):
            return Skolem(t.functor, tuple(deref(a) for a in t.args))
        return t

    return {v: deref(t) for v, t in theta.items()}


def unify_pairs(pairs: Iterable, theta: dict | None = None) -> dict | None:
    """Most general unifier of a sequence of term pairs, extending ``theta``."""
    work = dict(theta) if theta else {}
    for s, t in pairs:
        if not _unify_terms(s, t, work):
            return None
    return _resolve_bindings(work)


def unify(a: Atom, b: Atom, theta: dict | None = None) -> dict | None:
    """Idempotent mgu of two atoms, or None when they do not unify."""
    if a.pred != b.pred or len(a.args) != len(b.args):
        return None
    return unify_pairs(zip(a.args, b.args), theta)


def unify_oriented(a: Atom, b: Atom, theta=None) -> list:
    """Unifiers for both argument orders when the comparison is symmetric."""
    out = []
    m = unify(a, b, theta)
    if m is not None:
        out.append(m)
    if a.pred in SYMMETRIC and a.pred == b.pred:
        m2 = unify(a, Atom(b.pred, b.args[::-1]), theta)
        if m2 is not None and m2 != m:
            out.append(m2)
    return out


def match(pattern, target, theta: dict) -> dict | None:
    """One-way matching: bind only variables of ``pattern``."""
    if isinstance(pattern, Var):
        if pattern in theta:
            return theta if theta[pattern] == target else None
        out = dict(theta)
        out[pattern] = target
        return out
    if isinstance(pattern, Const):
        return theta if pattern == target else None
    if isinstance(pattern, Skolem):
        if not isinstance(target, Skolem) or target.functor != pattern.functor:
            return None
        if len(pattern.args) != len(target.args):
            return None
        for p, t in zip(pattern.args, target.args):
            theta = match(p, t, theta)
            if theta is None:
                return None
        return theta
    if isinstance(pattern, Atom):
        if pattern.pred != target.pred or len(pattern.args) != len(target.args):
            return None
        for p, t in zip(pattern.args, target.args):
            theta = match(p, t, theta)
            if theta is None:
                return None
        return theta
    raise TypeError(pattern)


# ---------------------------------------------------------------- renaming

class Fresh:
    """Source of fresh ``_V<n>`` variables."""

    def __init__(self, start=0):
        self.n = start

    def var(self) -> Var:
        v = Var(f"_V{self.n}")
        self.n += 1
        return v

    def __repr__(self):
        return f"Fresh({self.n})"


def rename_apart(c, fresh: Fresh):
    """Copy of a clause (or atom tuple) with every variable fresh."""
    if isinstance(c, Clause):
        vs = clause_vars(c)
    else:
        seen = {}
        for a in c:
            for v in atom_vars(a.atom if isinstance(a, Literal) else a):
                seen.setdefault(v, None)
        vs = list(seen)
    theta = {v: fresh.var() for v in vs}
    return subst(c, theta), theta


# -------------------------------------------------------------- resolution

def resolvent(goal: Clause, i: int, inp: Clause, j: int, theta: dict) -> Clause:
    """Build the resolvent of ``goal.body[i]`` and ``inp.head[j]`` under ``theta``.

    The input body takes the place of the selected literal.
    """
    head = goal.head + inp.head[:j] + inp.head[j + 1:]
    body = goal.body[:i] + inp.body + goal.body[i + 1:]
    return Clause(
        tuple(subst(a, theta) for a in head),
        tuple(subst(l, theta) for l in body),
        "DERIVED",
        goal.support or inp.support,
    )


def resolve(goal: Clause, i: int, inp: Clause, j: int) -> Clause | None:
    """Binary resolution; clauses must already be renamed apart."""
    lit = goal.body[i]
    if lit.negated:
        return None
    theta = unify(lit.atom, inp.head[j])
    if theta is None:
        return None
    return resolvent(goal, i, inp, j, theta)


def factor(c: Clause, protected: frozenset = frozenset()) -> Clause:
    """Greedy factoring to a fixpoint.

    Merges any two unifiable head atoms or body literals. Variables in
    ``protected`` are never bound to non-variables nor merged together.
    """
    changed = True
    while changed:
        changed = False
        for side in ("head", "body"):
            items = list(getattr(c, side))
            for a in range(len(items)):
                for b in range(a + 1, len(items)):
                    x, y = items[a], items[b]
                    if x == y:
                        theta = {}
                    else:
                        if isinstance(x, Literal):
                            if x.negated != y.negated:
                                continue
                            x, y = x.atom, y.atom
                        theta = unify(x, y)
                        if theta is None or not admissible(theta, protected):
                            continue
                    del items[b]
                    c = subst(_replace(c, side, tuple(items)), theta)
                    c = _dedupe(c)
                    changed = True
                    break
                if changed:
                    break
            if changed:
                break
    return c


def admissible(theta: dict, protected) -> bool:
    for v, t in theta.items():
        if v in protected and (not isinstance(t, Var) or t in protected):
            return False
    return True


def _replace(c: Clause, side: str, items: tuple) -> Clause:
    if side == "head":
        return Clause(items, c.body, c.origin, c.support, c.label)
    return Clause(c.head, items, c.origin, c.support, c.label)


def _dedupe(c: Clause) -> Clause:
    head = tuple(dict.fromkeys(c.head))
    body = tuple(dict.fromkeys(c.body))
    if head == c.head and body == c.body:
        return c
    return Clause(head, body, c.origin, c.support, c.label)


# ------------------------------------------------------ built-in reasoning

def _cmp_form(a: Atom):
    """Normalise a comparison to ``(key, op, const)``.

    ``key`` is a variable, or a pair of variables compared through their
    difference (constant 0). Returns None for shapes we cannot reason about.
    """
    x, y = a.args
    op = a.pred
    if isinstance(x, Var) and isinstance(y, Const):
        return x, op, y.value
    if isinstance(x, Const) and isinstance(y, Var):
        return y, FLIP_OP[op], x.value
    if isinstance(x, Var) and isinstance(y, Var) and x != y:
        if x.name <= y.name:
            return (x, y), op, Fraction(0)
        return (y, x), FLIP_OP[op], Fraction(0)
    return None


def compare(op: str, a, b) -> bool | None:
    """Evaluate ``a op b`` on constant values; None when undefined."""
    if isinstance(a, Const):
        a = a.value
    if isinstance(b, Const):
        b = b.value
    if op == "=":
        return a == b
    if op == "!=":
        return a != b
    if not (isinstance(a, Fraction) and isinstance(b, Fraction)):
        return False
    return {"<": a < b, "<=": a <= b, ">": a > b, ">=": a >= b}[op]


def builtin_implies(stronger: Atom, weaker: Atom) -> bool:
    """True when every assignment satisfying ``stronger`` satisfies ``weaker``."""
    if stronger == weaker:
        return True
    if not (stronger.is_builtin and weaker.is_builtin):
        return False
    if stronger.pred in SYMMETRIC and stronger.args[::-1] == weaker.args and stronger.pred == weaker.pred:
        return True
    s, w = _cmp_form(stronger), _cmp_form(weaker)
    if s is None or w is None or s[0] != w[0]:
        return False
    _, op1, c1 = s
    _, op2, c2 = w
    numeric = isinstance(c1, Fraction) and isinstance(c2, Fraction)
    if not numeric:
        # symbols: only equality-type reasoning on points
        if op1 == "=":
            return op2 in SYMMETRIC and bool(compare(op2, c1, c2))
        return op1 == "!=" and op2 == "!=" and c1 == c2
    lo, hi = min(c1, c2), max(c1, c2)
    # one witness per cell of the partition of the line by c1, c2
    probes = {lo - 1, lo, (lo + hi) / 2, hi, hi + 1}
    return all(compare(op2, x, c2) for x in probes if compare(op1, x, c1))


def eval_ground_builtin(a: Atom) -> bool | None:
    """Truth value of a built-in over constants; None if not decidable."""
    x, y = a.args
    if isinstance(x, Const) and isinstance(y, Const):
        return compare(a.pred, x, y)
    if x == y and is_ground(x):
        return a.pred in ("=", "<=", ">=")
    return None


def negate_builtin(a: Atom) -> Atom:
    return Atom(NEGATE_OP[a.pred], a.args)


# ------------------------------------------------------------- subsumption

def subsumes(c: Clause, d: Clause, fixed: Iterable = ()) -> bool:
    """Theta-subsumption with built-in implication.

    Variables of ``d`` (and any in ``fixed``) are treated as constants;
    only variables of ``c`` may be bound.
    """
    return subsumption_witness(c, d, fixed) is not None


def subsumption_witness(c: Clause, d: Clause, fixed: Iterable = ()) -> dict | None:
    # rename c's free variables apart from d's; d's own variables are then
    # never bound because match() only binds pattern variables
    fixed = set(fixed)
    cv = [v for v in clause_vars(c) if v not in fixed]
    ren = {v: Var(f"?{v.name}") for v in cv}
    c = subst(c, ren)

    head_goals = [(a, list(d.head)) for a in c.head]
    body_plain = [l for l in c.body if not l.is_builtin]
    body_builtin = [l for l in c.body if l.is_builtin]
    d_plain = [l for l in d.body if not l.is_builtin]
    d_builtin = [l.atom for l in d.body if l.is_builtin]

    goals = [(a.pred, a, [x for x in cands if x.pred == a.pred]) for a, cands in head_goals]
    for l in body_plain:
        goals.append((l.negated, l.atom, [m.atom for m in d_plain if m.negated == l.negated and m.pred == l.pred]))
    # most constrained first
    goals.sort(key=lambda g: len(g[2]))

    bvars = [{v for v in atom_vars(l.atom) if v.name.startswith("?")} for l in body_builtin]

    def bound_ok(theta):
        # test built-ins as soon as their variables are bound
        for l, vs in zip(body_builtin, bvars):
            if vs and vs <= theta.keys():
                inst = subst(l.atom, theta)
                if not (eval_ground_builtin(inst) is True or any(builtin_implies(b, inst) for b in d_builtin)):
                    return False
        return True

    def search(k, theta):
        if k == len(goals):
            return check_builtins(theta)
        _, a, cands = goals[k]
        for b in cands:
            t2 = match(a, b, theta)
            if t2 is not None and (not body_builtin or bound_ok(t2)):
                r = search(k + 1, t2)
                if r is not None:
                    return r
        return None

    def check_builtins(theta):
        return _builtin_search(body_builtin, 0, theta, d_builtin)

    theta = search(0, {})
    if theta is None:
        return None
    inv = {ren[v]: v for v in cv}
    return {inv[k]: t for k, t in theta.items() if k in inv}


def _builtin_search(lits, k, theta, d_builtin):
    if k == len(lits):
        return theta
    inst = subst(lits[k].atom, theta)
    if not any(v.name.startswith("?") for v in atom_vars(inst)):
        if eval_ground_builtin(inst) is True or any(builtin_implies(b, inst) for b in d_builtin):
            return _builtin_search(lits, k + 1, theta, d_builtin)
        return None
    for b in d_builtin:
        for cand in (b, Atom(FLIP_OP[b.pred], b.args[::-1])):
            t2 = match(Atom("", inst.args), Atom("", cand.args), theta)
            if t2 is not None and builtin_implies(cand, subst(inst, t2)):
                r = _builtin_search(lits, k + 1, t2, d_builtin)
                if r is not None:
                    return r
    return None


def variant(c: Clause, d: Clause, fixed: Iterable = ()) -> bool:
    """Equal up to a renaming of variables (as literal sets)."""
    if len(set(c.head)) != len(set(d.head)) or len(set(c.body)) != len(set(d.body)):
        return False
    th = subsumption_witness(c, d, fixed)
    if th is None:
        return False
    vals = list(th.values())
    if not all(isinstance(t, Var) for t in vals) or len(set(vals)) != len(vals):
        return False
    return set(subst(c.body, th)) == set(d.body) and set(subst(c.head, th)) == set(d.head)


def canonical(parts) -> tuple:
    """Renaming-invariant key for a sequence of atoms/literals (order kept)."""
    names = {}

    def canon(t):
        if isinstance(t, Var):
            if t not in names:
                names[t] = Var(f"#{len(names)}")
            return names[t]
        if isinstance(t, Skolem):
            return Skolem(t.functor, tuple(canon(a) for a in t.args))
        return t

    out = []
    for p in parts:
        if isinstance(p, Literal):
            out.append(Literal(Atom(p.atom.pred, tuple(canon(a) for a in p.atom.args)), p.negated))
        elif isinstance(p, Atom):
            out.append(Atom(p.pred, tuple(canon(a) for a in p.args)))
        else:
            out.append(canon(p))
    return tuple(out)


def shape(x) -> str:
    """Variable-blind signature used to order literals before canonising."""
    def sh(t):
        if isinstance(t, Var):
            return "?"
        if isinstance(t, Skolem):
            return t.functor + "(" + ",".join(sh(a) for a in t.args) + ")"
        return repr(t.value)

    if isinstance(x, Literal):
        return ("~" if x.negated else "") + shape(x.atom)
    return x.pred + "(" + ",".join(sh(a) for a in x.args) + ")"
