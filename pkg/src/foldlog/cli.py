"""``foldlog compile | fold | eval`` command-line front end."""
from __future__ import annotations

import argparse
import json
import sys

from . import __version__
from .completeness import check_completeness, residual_query
from .completion import CompileError, find_mccrr
from .evaluator import NotStratified, SubcomputationBlowup, evaluate
from .folding import COMPLETE, PARTIAL, SearchConfig, default_depth, fold, prepare
from .parser import parse_program_with_diagnostics
from .program import ProgramError

SCHEMA_VERSION = 1

EXIT_OK, EXIT_NONE, EXIT_INVALID, EXIT_BLOWUP = 0, 1, 2, 3


def _report(command):
    return {
        "version": SCHEMA_VERSION,
        "command": command,
        "compiled": None,
        "outcomes": None,
        "completeness": None,
        "residual": None,
        "answers": None,
        "warnings": [],
        "diagnostics": [],
    }


def _mgu(step):
    return [[v.name, str(t)] for v, t in step.mgu]


def _proof(outcome):
    out = []
    for node in outcome.proof:
        s = node.step
        out.append({
            "clause": str(node.clause),
            "step": s.kind,
            "input": (s.label or str(s.input)) if s.input is not None else (s.label or None),
            "mgu": _mgu(s),
        })
    return out


def _load(path, report):
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as e:
        report["diagnostics"].append(f"error: {e}")
        return None
    program, diags = parse_program_with_diagnostics(text)
    report["diagnostics"].extend(str(d) for d in diags)
    return program


def cmd_compile(args, report):
    program = _load(args.file, report)
    if program is None:
        return EXIT_INVALID
    try:
        prep = prepare(program)
    except (ProgramError, CompileError) as e:
        report["diagnostics"].append(f"error: {e}")
        return EXIT_INVALID
    lines = []
    if prep.compiled is not None:
        lines.append("% compiled program")
        lines += str(prep.compiled).splitlines()
    lines.append("% inverse rules")
    lines += [f"{r.label}: {r}" for r in prep.ccrr.rules]
    if prep.ccrr.combined:
        lines.append("% combined inverse rules (keys)")
        lines += [f"{r.label}: {r}" for r in prep.ccrr.combined]
    for p, m in sorted(find_mccrr(program.res).items()):
        lines.append(f"% modified completion for {p}")
        lines.append(f"MCCrr: {m}")
    report["compiled"] = lines
    report["warnings"] += prep.warnings
    return EXIT_OK


def cmd_fold(args, report):
    program = _load(args.file, report)
    if program is None:
        return EXIT_INVALID
    if program.query is None:
        report["diagnostics"].append("error: program has no query")
        return EXIT_INVALID
    cfg = SearchConfig(
        depth_bound=args.depth or default_depth(),
        max_foldings=args.max_foldings,
        prune_subsumption=args.prune_subsumption,
        mode=args.mode,
        max_nodes=args.max_nodes,
    )
    try:
        result = fold(program, cfg)
    except (ProgramError, CompileError, ValueError) as e:
        report["diagnostics"].append(f"error: {e}")
        return EXIT_INVALID
    report["warnings"] += result.warnings
    report["outcomes"] = [
        {"kind": o.kind, "clause": str(o.clause), "usedCWA": o.used_cwa, "proof": _proof(o)}
        for o in result.outcomes
    ]
    if args.check_completeness:
        verdict = check_completeness(result.prepared, result.outcomes, cfg)
        entry = {"status": verdict.status}
        if verdict.reason:
            entry["reason"] = verdict.reason
        if verdict.proven:
            entry["refutation"] = [
                {"clause": str(n.clause), "step": n.step.kind, "input": n.step.label or None, "mgu": _mgu(n.step)}
                for n in verdict.refutation
            ]
        else:
            rq = residual_query(result.prepared.query, result.outcomes)
            report["residual"] = [" , ".join(map(str, d)) for d in rq.disjuncts]
        report["completeness"] = entry
    return EXIT_OK if any(o.kind in (COMPLETE, PARTIAL) for o in result.outcomes) else EXIT_NONE


def cmd_eval(args, report):
    program = _load(args.file, report)
    if program is None:
        return EXIT_INVALID
    if program.query is None or not program.facts:
        report["diagnostics"].append("error: eval needs a query and a #facts section")
        return EXIT_INVALID
    try:
        res = evaluate(program, args.mode, args.cap)
    except SubcomputationBlowup as e:
        report["diagnostics"].append(f"error: {e}")
        return EXIT_BLOWUP
    except (NotStratified, ProgramError, CompileError, ValueError) as e:
        report["diagnostics"].append(f"error: {e}")
        return EXIT_INVALID
    report["answers"] = [[str(x) for x in t] for t in res.answers]
    report["route"] = res.route
    report["warnings"] += res.notes
    return EXIT_OK


def render_text(report, show_proof=False) -> str:
    out = []
    if report["compiled"] is not None:
        out += report["compiled"]
    if report["outcomes"] is not None:
        if not report["outcomes"]:
            out.append("no foldings")
        for o in report["outcomes"]:
            tag = " [CWA]" if o["usedCWA"] else ""
            out.append(f"{o['kind']}{tag}: {o['clause']}")
            if show_proof:
                for k, p in enumerate(o["proof"]):
                    how = p["step"].lower() + (f" {p['input']}" if p["input"] else "")
                    mgu = ", ".join(f"{v}/{t}" for v, t in p["mgu"])
                    out.append(f"    {k:2d}. {p['clause']}   [{how}{' {' + mgu + '}' if mgu else ''}]")
    if report["completeness"] is not None:
        c = report["completeness"]
        out.append(f"completeness: {c['status']}" + (f" ({c['reason']})" if c.get("reason") else ""))
        if show_proof and c.get("refutation"):
            for k, p in enumerate(c["refutation"]):
                out.append(f"    {k:2d}. {p['clause']}   [{p['step'].lower()} {p['input'] or ''}]".rstrip())
        if report["residual"]:
            out.append("residual: " + " ; ".join(report["residual"]))
    if report["answers"] is not None:
        out.append(f"answers ({report.get('route')}): {len(report['answers'])}")
        out += ["  (" + ", ".join(t) + ")" for t in report["answers"]]
    out += [f"% warning: {w}" for w in report["warnings"]]
    return "\n".join(out)


def build_parser():
    ap = argparse.ArgumentParser(prog="foldlog", description="Fold queries onto resource predicates.")
    ap.add_argument("--version", action="version", version=f"foldlog {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("file")
        p.add_argument("--format", choices=("text", "json"), default="text")

    p = sub.add_parser("compile", help="print inverse rules and compiled definitions")
    common(p)
    p = sub.add_parser("fold", help="fold the query onto the resources")
    common(p)
    p.add_argument("--depth", type=int, default=None, help="bound on counted steps (default FOLDLOG_DEPTH or 12)")
    p.add_argument("--max-foldings", type=int, default=32)
    p.add_argument("--max-nodes", type=int, default=10_000)
    p.add_argument("--prune-subsumption", action="store_true")
    p.add_argument("--check-completeness", action="store_true")
    p.add_argument("--mode", choices=("auto", "horn", "disjunctive"), default="auto")
    p.add_argument("--proof", action="store_true", help="print proof trees in text output")
    p = sub.add_parser("eval", help="answer the query from #facts")
    common(p)
    p.add_argument("--mode", choices=("auto", "invert", "certain"), default="auto")
    p.add_argument("--cap", type=int, default=4096, help="largest number of subcomputations")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "depth", None) is not None and args.depth < 1:
        print("error: --depth must be >= 1", file=sys.stderr)
        return EXIT_INVALID
    report = _report(args.command)
    code = {"compile": cmd_compile, "fold": cmd_fold, "eval": cmd_eval}[args.command](args, report)
    for d in report["diagnostics"]:
        print(d, file=sys.stderr)
    if args.format == "json":
        report["exit"] = code
        print(json.dumps(report, indent=2, sort_keys=True))
    elif code != EXIT_INVALID or report["compiled"] is not None:
        text = render_text(report, getattr(args, "proof", False))
        if text:
            print(text)
    return code


if __name__ == "__main__":
    sys.exit(main())
