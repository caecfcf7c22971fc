"""Query folding over deductive databases with integrity constraints."""
from .parser import parse_program, parse_clause, ParseError
from .folding import SearchConfig, fold, fold_single, fold_multi

__version__ = "0.1.0"
