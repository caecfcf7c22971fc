"""Text format for programs.

Sections start with ``#edb``, ``#idb``, ``#ic``, ``#res``, ``#query``,
``#facts``, ``#cwa`` or ``#key``; ``%`` starts a comment. Bodies may use
``;`` and parentheses for disjunction; they are normalised to DNF.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from fractions import Fraction

from .logic import (
    Atom,
    BUILTINS,
    Clause,
    Const,
    Literal,
    Skolem,
    Var,
    atom_vars,
    format_clause,
    is_ground,
    negate_builtin,
    subst,
)
from .program import PredicateDecl, Program, Query, check_safety

SECTIONS = ("edb", "idb", "ic", "res", "query", "facts", "cwa", "key")


@dataclass(frozen=True)
class Diagnostic:
    severity: str
    line: int
    column: int
    message: str

    def __str__(self):
        return f"{self.line}:{self.column}: {self.severity}: {self.message}"


class ParseError(Exception):
    def __init__(self, diagnostics):
        self.diagnostics = list(diagnostics)
        super().__init__("\n".join(map(str, self.diagnostics)))


@dataclass(frozen=True)
class Token:
    kind: str
    text: str
    line: int
    col: int


_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r]+)
  | (?P<nl>\n)
  | (?P<comment>%[^\n]*)
  | (?P<section>\#[A-Za-z_]*)
  | (?P<internal>\$[A-Za-z0-9_]+)
  | (?P<number>-?\d+(?:\.\d+)?(?:/\d+)?)
  | (?P<string>'(?:[^'\\\n]|\\.)*')
  | (?P<var>[A-Z_][A-Za-z0-9_]*)
  | (?P<ident>[a-z][A-Za-z0-9_]*'?)
  | (?P<op>:-|!=|<=|>=|=|<|>|\(|\)|,|;|\.|/)
    """,
    re.VERBOSE,
)


def tokenize(text: str):
    """Tokens plus diagnostics for characters that fit no token."""
    toks, diags = [], []
    line, line_start, i = 1, 0, 0
    while i < len(text):
        m = _TOKEN_RE.match(text, i)
        col = i - line_start + 1
        if m is None:
            diags.append(Diagnostic("error", line, col, f"unexpected character {text[i]!r}"))
            i += 1
            continue
        kind = m.lastgroup
        if kind == "nl":
            line += 1
            line_start = m.end()
        elif kind not in ("ws", "comment"):
            toks.append(Token(kind, m.group(), line, col))
        i = m.end()
    toks.append(Token("eof", "", line, i - line_start + 1))
    return toks, diags


class _Syntax(Exception):
    def __init__(self, tok, msg):
        self.tok = tok
        super().__init__(msg)


class _Parser:
    def __init__(self, toks, allow_internal=False):
        self.toks = toks
        self.i = 0
        self.allow_internal = allow_internal

    # token helpers
    @property
    def tok(self):
        return self.toks[self.i]

    def peek(self, k=1):
        return self.toks[min(self.i + k, len(self.toks) - 1)]

    def next(self):
        t = self.tok
        self.i += 1
        return t

    def expect(self, text):
        if self.tok.text != text or self.tok.kind in ("string",):
            raise _Syntax(self.tok, f"expected {text!r}, found {self.tok.text or 'end of input'!r}")
        return self.next()

    def at(self, *texts):
        return self.tok.kind == "op" and self.tok.text in texts

    def skip_item(self):
        while self.tok.kind not in ("eof", "section") and not self.at("."):
            self.i += 1
        if self.at("."):
            self.i += 1

    # grammar
    def term(self):
        t = self.tok
        if t.kind == "var":
            self.next()
            return Var(t.text)
        if t.kind == "number":
            self.next()
            return Const(Fraction(t.text))
        if t.kind == "string":
            self.next()
            body = t.text[1:-1].replace("\\'", "'").replace("\\\\", "\\")
            if body.startswith("$") and not self.allow_internal:
                raise _Syntax(t, "Skolem-like constant not allowed in input")
            return Const(body)
        if t.kind == "ident":
            if t.text.endswith("'"):
                raise _Syntax(t, f"malformed constant {t.text!r}")
            self.next()
            return Const(t.text)
        if t.kind == "internal":
            if not self.allow_internal:
                raise _Syntax(t, f"Skolem-like token {t.text!r} not allowed in input")
            self.next()
            if self.at("("):
                self.next()
                args = [self.term()]
                while self.at(","):
                    self.next()
                    args.append(self.term())
                self.expect(")")
                return Skolem(t.text, tuple(args))
            return Const(t.text)
        raise _Syntax(t, f"expected a term, found {t.text or 'end of input'!r}")

    def atom(self):
        t = self.tok
        if t.kind != "ident":
            raise _Syntax(t, f"expected a predicate, found {t.text or 'end of input'!r}")
        if t.text.endswith("'") and not self.allow_internal:
            raise _Syntax(t, f"primed predicate names are reserved: {t.text!r}")
        self.next()
        args = []
        if self.at("("):
            self.next()
            args.append(self.term())
            while self.at(","):
                self.next()
                args.append(self.term())
            self.expect(")")
        return Atom(t.text, tuple(args)), t

    def comparison_or_atom(self):
        """Atom or infix comparison, with the token it started at."""
        t = self.tok
        if t.kind == "ident" and not (self.peek().kind == "op" and self.peek().text in BUILTINS):
            return self.atom()
        left = self.term()
        op = self.tok
        if not (op.kind == "op" and op.text in BUILTINS):
            raise _Syntax(op, f"expected a comparison operator, found {op.text or 'end of input'!r}")
        self.next()
        right = self.term()
        return Atom(op.text, (left, right)), t

    def head(self):
        items = [self.comparison_or_atom()]
        while self.at(";"):
            self.next()
            items.append(self.comparison_or_atom())
        return items

    def body(self):
        """Disjunction of conjunctions, as a list of (literal, token) lists."""
        dnf = self.conj()
        while self.at(";"):
            self.next()
            dnf = dnf + self.conj()
        return dnf

    def conj(self):
        dnf = self.item()
        while self.at(","):
            self.next()
            rhs = self.item()
            dnf = [a + b for a in dnf for b in rhs]
        return dnf

    def item(self):
        if self.at("("):
            self.next()
            d = self.body()
            self.expect(")")
            return d
        t = self.tok
        if t.kind == "ident" and t.text == "not":
            self.next()
            a, _ = self.comparison_or_atom()
            if a.is_builtin:
                return [[(Literal(negate_builtin(a)), t)]]
            return [[(Literal(a, True), t)]]
        a, t = self.comparison_or_atom()
        return [[(Literal(a), t)]]

    def rule(self):
        """``(head_items, dnf, start_token)``."""
        start = self.tok
        head = []
        if not self.at(":-"):
            head = self.head()
        if self.at("."):
            self.next()
            return head, [[]], start
        self.expect(":-")
        dnf = self.body()
        self.expect(".")
        return head, dnf, start

    def decls(self, with_key=False):
        out = []
        while True:
            name = self.tok
            if name.kind != "ident":
                raise _Syntax(name, "expected name/arity")
            self.next()
            self.expect("/")
            ar = self.tok
            if ar.kind != "number" or not ar.text.isdigit():
                raise _Syntax(ar, "expected an arity")
            self.next()
            key = None
            if with_key:
                kw = self.tok
                if kw.text != "key":
                    raise _Syntax(kw, "expected 'key'")
                self.next()
                kt = self.tok
                if kt.kind != "number" or not kt.text.isdigit():
                    raise _Syntax(kt, "expected a key length")
                self.next()
                key = (int(kt.text), kt)
            out.append((name, int(ar.text), key))
            if self.at(","):
                self.next()
                continue
            self.expect(".")
            return out


def parse_clause(text: str, allow_internal: bool = True) -> Clause:
    """Parse one clause; disjunctive bodies are rejected."""
    toks, diags = tokenize(text)
    if diags:
        raise ParseError(diags)
    p = _Parser(toks, allow_internal)
    try:
        head, dnf, _ = p.rule()
        if p.tok.kind != "eof":
            raise _Syntax(p.tok, "trailing input after clause")
    except _Syntax as e:
        raise ParseError([Diagnostic("error", e.tok.line, e.tok.col, str(e))]) from None
    if len(dnf) != 1:
        raise ParseError([Diagnostic("error", 1, 1, "disjunctive body")])
    return Clause(tuple(a for a, _ in head), tuple(l for l, _ in dnf[0]))


def parse_program(text: str) -> Program:
    """Parse and validate; raises ``ParseError`` carrying the diagnostics.

    Warnings (no error) are attached as ``program_warnings`` on the error-free
    path through :func:`parse_program_with_diagnostics`.
    """
    prog, diags = parse_program_with_diagnostics(text)
    if prog is None:
        raise ParseError(diags)
    return prog


def parse_program_with_diagnostics(text: str):
    """``(Program | None, diagnostics)``; never raises on bad input."""
    try:
        return _parse_program(text)
    except RecursionError:
        return None, [Diagnostic("error", 1, 1, "input nested too deeply")]


def _parse_program(text):
    toks, diags = tokenize(text)
    p = _Parser(toks)
    section = None
    items = {s: [] for s in SECTIONS}
    seen_query_section = False
    while p.tok.kind != "eof":
        t = p.tok
        if t.kind == "section":
            name = t.text[1:]
            p.next()
            if name not in SECTIONS:
                diags.append(Diagnostic("error", t.line, t.col, f"unknown section {t.text!r}"))
                section = "?"
                continue
            if name == "query":
                if seen_query_section:
                    diags.append(Diagnostic("error", t.line, t.col, "at most one #query section"))
                seen_query_section = True
            section = name
            continue
        if section is None:
            diags.append(Diagnostic("error", t.line, t.col, "clause outside any section"))
            p.skip_item()
            continue
        if section == "?":
            p.skip_item()
            continue
        try:
            if section in ("edb", "cwa"):
                items[section].extend(p.decls())
            elif section == "key":
                items[section].extend(p.decls(with_key=True))
            else:
                items[section].append(p.rule())
        except _Syntax as e:
            diags.append(Diagnostic("error", e.tok.line, e.tok.col, str(e)))
            p.skip_item()
    if not any(items.values()) and not diags:
        diags.append(Diagnostic("warning", 1, 1, "empty program"))
    if any(d.severity == "error" for d in diags):
        return None, diags
    return _build(items, diags)


def _build(items, diags):
    def err(tok, msg):
        diags.append(Diagnostic("error", tok.line, tok.col, msg))

    arity = {}
    role = {}

    def use(pred, n, tok):
        if pred in BUILTINS:
            return
        if arity.setdefault(pred, n) != n:
            err(tok, f"arity clash for {pred}: {arity[pred]} vs {n}")

    def claim(pred, r, tok):
        old = role.setdefault(pred, (r, tok))[0]
        if old != r:
            err(tok, f"role clash: {pred} is {old} but used as {r}")

    for name, n, _ in items["edb"]:
        use(name.text, n, name)
        claim(name.text, "EDB", name)

    def split(section):
        out = []
        for head, dnf, start in items[section]:
            for conj in dnf:
                out.append((head, conj, start))
        return out

    idb = split("idb")
    res = split("res")
    ics = split("ic")
    facts = split("facts")
    query_rules = split("query")

    qname = None
    if query_rules:
        qa, qt = query_rules[0][0][0] if query_rules[0][0] else (None, query_rules[0][2])
        if qa is None or qa.is_builtin:
            err(qt, "query rules need a named head q(...)")
        else:
            qname = qa.pred

    for section, rules, r in (("idb", idb, "IDB"), ("res", res, "RES")):
        for head, conj, start in rules:
            if len(head) != 1:
                err(start, f"{section} rules need exactly one head atom")
                continue
            a, t = head[0]
            if a.is_builtin:
                err(t, f"built-in head not allowed in #{section}")
                continue
            use(a.pred, a.arity, t)
            claim(a.pred, r, t)
    for head, conj, start in query_rules:
        if len(head) != 1 or head[0][0].is_builtin:
            err(start, "query rules need exactly one head atom")
            continue
        a, t = head[0]
        if qname is not None and a.pred != qname:
            err(t, f"all #query rules must define {qname}")
        use(a.pred, a.arity, t)
        claim(a.pred, "QUERY", t)
    for head, conj, start in ics:
        for a, t in head:
            if not a.is_builtin:
                use(a.pred, a.arity, t)
    for head, conj, start in facts:
        if len(head) != 1 or conj:
            err(start, "facts must be single ground atoms")
            continue
        a, t = head[0]
        if a.is_builtin or not is_ground(a):
            err(t, "facts must be single ground atoms")
            continue
        use(a.pred, a.arity, t)
    for rules in (idb, res, ics, facts, query_rules):
        for head, conj, start in rules:
            for l, t in conj:
                use(l.pred, l.atom.arity, t)
    for name, n, key in items["cwa"] + items["key"]:
        use(name.text, n, name)
        if key is not None and key[0] > n:
            err(key[1], f"key length {key[0]} exceeds arity {n}")
    for head, conj, start in ics:
        for a, t in head:
            if not a.is_builtin and role.get(a.pred, ("EDB",))[0] != "EDB":
                err(t, f"IC heads may only use EDB predicates or built-ins, not {a.pred}")

    if any(d.severity == "error" for d in diags):
        return None, diags

    cwa = {n.text for n, _, _ in items["cwa"]}
    keys = {n.text: k[0] for n, _, k in items["key"]}
    decls = {}
    for pred, n in arity.items():
        r = role.get(pred, ("EDB",))[0]
        if r == "QUERY":
            continue
        decls[pred] = PredicateDecl(pred, n, r, pred in cwa, keys.get(pred))

    def clause(head, conj, origin, k):
        return Clause(tuple(a for a, _ in head), tuple(l for l, _ in conj), origin, False, f"{origin}{k}")

    idb_c = [clause(h, c, "IDB", k + 1) for k, (h, c, _) in enumerate(idb)]
    res_c = [clause(h, c, "RES", k + 1) for k, (h, c, _) in enumerate(res)]
    ic_c = [clause(h, c, "IC", k + 1) for k, (h, c, _) in enumerate(ics)]
    fact_c = [clause(h, c, "FACT", k + 1) for k, (h, c, _) in enumerate(facts)]
    q_c = [clause(h, c, "QUERY", k + 1) for k, (h, c, _) in enumerate(query_rules)]

    for c, (_, _, start) in zip(idb_c + res_c + q_c, idb + res + query_rules):
        bad = check_safety(c)
        if bad:
            names = ", ".join(sorted(v.name for v in bad))
            err(start, f"unsafe rule '{format_clause(c)}': variables {names}")
    for c, (_, _, start) in zip(ic_c, ics):
        body_bad = check_safety(Clause((), c.body))
        if body_bad:
            names = ", ".join(sorted(v.name for v in body_bad))
            err(start, f"unsafe integrity constraint '{format_clause(c)}': variables {names}")
    if any(d.severity == "error" for d in diags):
        return None, diags

    query = _make_query(q_c) if q_c else None
    prog = Program(decls, tuple(idb_c), tuple(ic_c), tuple(res_c), tuple(fact_c), query)
    return prog, diags


def _make_query(rules) -> Query:
    """Rectify every query rule onto one answer tuple."""
    first = rules[0].head[0]
    args = first.args
    if all(isinstance(t, Var) for t in args) and len(set(args)) == len(args):
        answer = tuple(args)
    else:
        answer = tuple(Var(f"A{k + 1}") for k in range(len(args)))
    disjuncts = []
    for r in rules:
        theta, eqs = {}, []
        for k, t in enumerate(r.head[0].args):
            if isinstance(t, Var) and t not in theta:
                theta[t] = answer[k]
            else:
                eqs.append((answer[k], t))
        # body-only variables that happen to share an answer name move aside
        for l in r.body:
            for v in atom_vars(l.atom):
                if v not in theta and v in answer:
                    theta[v] = Var(v.name + "_")
        eq_lits = tuple(Literal(Atom("=", (a, subst(t, theta)))) for a, t in eqs)
        disjuncts.append(tuple(dict.fromkeys(subst(r.body, theta) + eq_lits)))
    return Query(first.pred, answer, tuple(disjuncts), tuple(rules))
