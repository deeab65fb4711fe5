"""Command line: validate grammars and generate text from structure files.

    surfgen generate --grammar g.tgl --input doc.gil [--start CAT]
                     [--max N] [--criteria file] [--weights] [--trace]
                     [--stats] [--dedupe] [--no-memo] [--lexicon file]
    surfgen validate --grammar g.tgl [--lexicon file]

``generate`` writes one solution per line to stdout (lines may contain
literal tabs for tabular output) and exits 0 when at least one solution was
produced, 1 when there was none, 2 on usage or input errors.  Diagnostics,
traces and statistics go to stderr.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import dataclass
from typing import Optional

from .gil import GilError, parse_gil
from .morpho import MorphoError, default_lexicon, load_lexicon
from .prefs import CriteriaError, CriteriaSpec, load_criteria, make_session
from .tgl import Registries, Severity, TglError, parse_grammar, validate_grammar

EXIT_OK = 0
EXIT_NO_SOLUTION = 1
EXIT_ERROR = 2


@dataclass
class RunConfig:
    grammar: str
    input: str
    start: Optional[str] = None
    max_solutions: int = 1  # 0 means all
    criteria: Optional[str] = None
    lexicon: Optional[str] = None
    weights: bool = False
    trace: bool = False
    stats: bool = False
    dedupe: bool = False
    memo: bool = True


class _Usage(Exception):
    pass


def _read(path: str, what: str) -> str:
    try:
        with open(path, encoding="utf-8") as handle:
            return handle.read()
    except OSError as e:
        raise _Usage(f"cannot read {what} {path!r}: {e.strerror}") from None


def _registries(lexicon_path: Optional[str]) -> Registries:
    try:
        lexicon = load_lexicon(lexicon_path) if lexicon_path else default_lexicon()
    except OSError as e:
        raise _Usage(f"cannot read lexicon {lexicon_path!r}: {e.strerror}") from None
    except MorphoError as e:
        raise _Usage(f"{lexicon_path}: {e}") from None
    return Registries.standard(lexicon)


def _load_grammar(path: str):
    try:
        return parse_grammar(_read(path, "grammar"))
    except TglError as e:
        raise _Usage(f"{path}:{e}") from None


def cmd_generate(cfg: RunConfig, out=None, err=None) -> int:
    out = out or sys.stdout
    err = err or sys.stderr
    try:
        grammar = _load_grammar(cfg.grammar)
        registries = _registries(cfg.lexicon)
        try:
            input_fs = parse_gil(_read(cfg.input, "input"))
        except GilError as e:
            raise _Usage(f"{cfg.input}:{e}") from None
        diagnostics = validate_grammar(grammar, registries)
        errors = [d for d in diagnostics if d.severity is Severity.ERROR]
        for diag in diagnostics:
            print(f"{cfg.grammar}: {diag}", file=err)
        if errors:
            return EXIT_ERROR
        spec = CriteriaSpec()
        if cfg.criteria:
            try:
                mode = "weight-ranked" if cfg.weights else "first-solution-bias"
                spec = load_criteria(cfg.criteria, mode=mode)
            except OSError as e:
                raise _Usage(f"cannot read criteria {cfg.criteria!r}: "
                             f"{e.strerror}") from None
            except CriteriaError as e:
                raise _Usage(f"{cfg.criteria}: {e}") from None
        trace = (lambda event: print(event, file=err)) if cfg.trace else None
        session = make_session(grammar, spec, registries=registries,
                               use_memo=cfg.memo, trace=trace)
        emitted = 0
        seen: set[str] = set()
        try:
            for solution in session.solutions(input_fs, cfg.start):
                if cfg.dedupe:
                    if solution.text in seen:
                        continue
                    seen.add(solution.text)
                line = solution.text
                if cfg.weights:
                    line = f"[w={solution.weight}] {line}"
                print(line, file=out)
                emitted += 1
                if cfg.max_solutions and emitted >= cfg.max_solutions:
                    break
        except MorphoError as e:
            print(f"error: {e}", file=err)
            return EXIT_ERROR
        if cfg.stats:
            for key, value in session.stats.snapshot().items():
                print(f"{key}: {value}", file=err)
        return EXIT_OK if emitted else EXIT_NO_SOLUTION
    except _Usage as e:
        print(f"error: {e}", file=err)
        return EXIT_ERROR


def cmd_validate(grammar_path: str, lexicon_path: Optional[str] = None,
                 out=None, err=None) -> int:
    out = out or sys.stdout
    err = err or sys.stderr
    try:
        grammar = _load_grammar(grammar_path)
        registries = _registries(lexicon_path)
    except _Usage as e:
        print(f"error: {e}", file=err)
        return EXIT_ERROR
    diagnostics = validate_grammar(grammar, registries)
    for diag in diagnostics:
        print(f"{grammar_path}: {diag}", file=err)
    if any(d.severity is Severity.ERROR for d in diagnostics):
        return EXIT_ERROR
    print("OK", file=out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="surfgen",
        description="rule-based surface realization from feature structures",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="realize text from a .gil input")
    gen.add_argument("--grammar", required=True, help="grammar file (.tgl)")
    gen.add_argument("--input", required=True, help="input structure (.gil)")
    gen.add_argument("--start", default=None, help="start category (default TXT)")
    gen.add_argument("--max", type=int, default=1, dest="max_solutions",
                     metavar="N", help="solutions to emit; 0 = all (default 1)")
    gen.add_argument("--criteria", default=None,
                     help="preference criteria file")
    gen.add_argument("--weights", action="store_true",
                     help="weight-ranked choices; prefix lines with [w=...]")
    gen.add_argument("--trace", action="store_true",
                     help="write rule firing events to stderr")
    gen.add_argument("--stats", action="store_true",
                     help="write generation statistics to stderr")
    gen.add_argument("--dedupe", action="store_true",
                     help="collapse identical strings from distinct derivations")
    gen.add_argument("--no-memo", action="store_false", dest="memo",
                     help="disable reuse of memoized partial results")
    gen.add_argument("--lexicon", default=None,
                     help="lexicon file (default: built-in demo lexicon)")

    val = sub.add_parser("validate", help="statically check a grammar")
    val.add_argument("--grammar", required=True, help="grammar file (.tgl)")
    val.add_argument("--lexicon", default=None,
                     help="lexicon file (default: built-in demo lexicon)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "validate":
        return cmd_validate(args.grammar, args.lexicon)
    if args.max_solutions < 0:
        print("error: --max must be >= 0", file=sys.stderr)
        return EXIT_ERROR
    cfg = RunConfig(
        grammar=args.grammar,
        input=args.input,
        start=args.start,
        max_solutions=args.max_solutions,
        criteria=args.criteria,
        lexicon=args.lexicon,
        weights=args.weights,
        trace=args.trace,
        stats=args.stats,
        dedupe=args.dedupe,
        memo=args.memo,
    )
    return cmd_generate(cfg)


if __name__ == "__main__":
    sys.exit(main())
