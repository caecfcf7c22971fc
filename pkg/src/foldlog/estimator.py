"""Estimator-style wrappers around compilation, folding and evaluation."""
from __future__ import annotations

from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .completeness import check_completeness, residual_query
from .completion import clark_completion, find_mccrr
from .evaluator import DEFAULT_CAP, FactStore, evaluate
from .folding import Folder, SearchConfig, default_depth, prepare
from .logic import Clause
from .parser import parse_program
from .program import Program, Query


def _as_program(X) -> Program:
    if isinstance(X, Program):
        return X
    if isinstance(X, str):
        return parse_program(X)
    raise TypeError(f"expected a Program or program text, got {type(X).__name__}")


class QueryFolder(BaseEstimator):
    """Fold queries onto the resources of one database.

    ``fit`` compiles the database (inverse rules, integrity constraints,
    negation), ``transform`` folds queries against it.

    Parameters
    ----------
    depth_bound : int or None
        Counted-step bound; None reads FOLDLOG_DEPTH (default 12).
    max_foldings : int
    prune_subsumption : bool
    mode : {"auto", "horn", "disjunctive"}
    max_nodes : int
        Node budget of one search.
    """

    def __init__(self, depth_bound=None, max_foldings=32, prune_subsumption=False, mode="auto", max_nodes=10_000):
        self.depth_bound = depth_bound
        self.max_foldings = max_foldings
        self.prune_subsumption = prune_subsumption
        self.mode = mode
        self.max_nodes = max_nodes

    def _config(self):
        return SearchConfig(
            depth_bound=self.depth_bound or default_depth(),
            max_foldings=self.max_foldings,
            prune_subsumption=self.prune_subsumption,
            mode=self.mode,
            max_nodes=self.max_nodes,
        )

    def fit(self, X, y=None):
        self.program_ = _as_program(X)
        self.prepared_ = prepare(self.program_)
        self.ccrr_ = self.prepared_.ccrr
        self.case_ = self.prepared_.case
        return self

    def _prepared_for(self, query):
        if query is None or query is self.program_.query:
            return self.prepared_
        if isinstance(query, str):
            query = parse_program("#query\n" + query).query
        if not isinstance(query, Query):
            raise TypeError("queries must be Query objects or '#query' clause text")
        return prepare(self.program_.with_(query=query))

    def transform(self, X=None):
        """Fold each query in ``X`` (default: the program's own query).

        Returns one ``FoldResult`` per query, or a single result when ``X``
        is None or a single query.
        """
        check_is_fitted(self, "prepared_")
        single = X is None or isinstance(X, (str, Query))
        queries = [X] if single else list(X)
        results = [Folder(self._prepared_for(q), self._config()).run() for q in queries]
        return results[0] if single else results

    def fit_transform(self, X, y=None):
        return self.fit(X).transform()

    def check_completeness(self, result=None):
        """Completeness verdict for the foldings of ``result``."""
        check_is_fitted(self, "prepared_")
        result = result if result is not None else self.transform()
        return check_completeness(result.prepared, result.outcomes, self._config())

    def residual_query(self, result=None):
        check_is_fitted(self, "prepared_")
        result = result if result is not None else self.transform()
        return residual_query(result.prepared.query, result.outcomes)


class AnswerEvaluator(BaseEstimator):
    """Answer a program's query from resource facts.

    ``fit`` takes the program (rules and query), ``predict`` takes the
    resource facts (a FactStore, atoms, or None for the program's own
    ``#facts``) and returns the sorted answer tuples.

    Parameters
    ----------
    mode : {"auto", "invert", "certain"}
    cap : int
        Largest number of subcomputations tried for certain answers.
    """

    def __init__(self, mode="auto", cap=DEFAULT_CAP):
        self.mode = mode
        self.cap = cap

    def fit(self, X, y=None):
        self.program_ = _as_program(X)
        if self.program_.query is None:
            raise ValueError("program has no query")
        res = list(self.program_.res)
        self.mccrr_ = find_mccrr(res)
        self.ccrr_ = clark_completion(
            [r for r in res if r.head[0].pred not in self.mccrr_ and not _recursive(res, r)], self.program_.decls
        )
        return self

    def predict(self, X=None):
        check_is_fitted(self, "program_")
        if X is None:
            self.report_ = evaluate(self.program_, self.mode, self.cap)
            return self.report_.answers
        store = X if isinstance(X, FactStore) else FactStore(X)
        facts = tuple(Clause((a,), (), "FACT") for a in store.atoms())
        self.report_ = evaluate(self.program_.with_(facts=facts), self.mode, self.cap)
        return self.report_.answers


def _recursive(res, r):
    p = r.head[0].pred
    return any(l.pred == p for x in res if x.head[0].pred == p for l in x.body)
