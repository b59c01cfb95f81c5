"""Command-line driver: check asserts in a program or print loop summaries."""

import argparse
import sys
from typing import Optional

from .frontend import ParseError, parse, parse_precondition, summarize, verify
from .logic import SolverError, SolverHandle, TRUE, formula_to_smt
from .reach import EncodingTooLarge, dump_smt2
from .vas import VasrAbstraction, format_abstraction
from .vasrs import VasrsAbstraction, format_vasrs_abstraction

METHODS = ('vasr', 'vasrs', 'vasrs-prec')


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog='vasr',
        description='Loop summarization and assertion checking for a small '
                    'integer imperative language.')
    sub = ap.add_subparsers(dest='command', required=True)

    def common(p):
        p.add_argument('file', help='program source (.imp)')
        p.add_argument('--method', choices=METHODS, default='vasrs',
                       help='loop closure strategy (default: vasrs)')
        p.add_argument('--timeout-ms', type=int, default=120000,
                       help='per-query solver deadline')

    pv = sub.add_parser('verify', help='check every assert in the program')
    common(pv)
    pv.add_argument('--pre', metavar='TERM', default=None,
                    help='entry precondition as an SMT-LIB2 term')
    pv.add_argument('--dump-abstraction', action='store_true',
                    help='print each loop\'s simulation and system')
    pv.add_argument('--dump-vasrs', action='store_true',
                    help='print each loop\'s control states and edges')
    pv.add_argument('--dump-reach', action='store_true',
                    help='print each loop\'s reachability relation as SMT-LIB2')
    pv.add_argument('--dump-summary', action='store_true',
                    help='print each loop\'s closure formula as SMT-LIB2')

    ps = sub.add_parser('summarize', help='print per-loop summaries')
    common(ps)
    return ap


def _dump_loops(reports, args) -> None:
    for report in reports:
        line, column = report.location
        print('== loop at %d:%d ==' % (line, column))
        art = report.artifacts
        if args.dump_abstraction and art is not None:
            a = art.abstraction
            if isinstance(a, VasrsAbstraction):
                print(format_vasrs_abstraction(a))
            elif isinstance(a, VasrAbstraction):
                print(format_abstraction(a))
        if args.dump_vasrs and art is not None:
            if isinstance(art.abstraction, VasrsAbstraction):
                print(format_vasrs_abstraction(art.abstraction))
            else:
                print('(no control states: method %s)' % art.method)
        if args.dump_reach and art is not None:
            print(dump_smt2(art.reach))
        if args.dump_summary:
            print(formula_to_smt(report.summary.formula))


def _load_program(path: str):
    try:
        with open(path) as fh:
            src = fh.read()
    except OSError as e:
        print('error: %s' % e, file=sys.stderr)
        return None
    try:
        return parse(src)
    except ParseError as e:
        print('%s: %s' % (path, e), file=sys.stderr)
        return None


def cmd_verify(args) -> int:
    program = _load_program(args.file)
    if program is None:
        return 2
    pre = TRUE
    if args.pre is not None:
        try:
            pre = parse_precondition(args.pre, program.vocabulary)
        except ValueError as e:
            print('error: %s' % e, file=sys.stderr)
            return 2
    h = SolverHandle(timeout_ms=args.timeout_ms)
    try:
        result = verify(h, program, pre, args.method)
    except (SolverError, EncodingTooLarge) as e:
        print('analysis failed: %s' % e, file=sys.stderr)
        return 3
    finally:
        h.close()
    for v in result.verdicts:
        line, column = v.location
        note = ' (solver failure)' if v.solver_failed else ''
        print('%s:%d:%d: %s: assert(%s)%s'
              % (args.file, line, column, v.verdict, v.condition, note))
    proved = sum(1 for v in result.verdicts if v.verdict == 'proved')
    print('%d/%d proved in %.1fs [%s]'
          % (proved, len(result.verdicts), result.elapsed, args.method))
    if any((args.dump_abstraction, args.dump_vasrs, args.dump_reach,
            args.dump_summary)):
        _dump_loops(result.loops, args)
    if result.solver_failed:
        return 3
    return 0 if result.all_proved else 1


def cmd_summarize(args) -> int:
    program = _load_program(args.file)
    if program is None:
        return 2
    h = SolverHandle(timeout_ms=args.timeout_ms)
    try:
        reports = summarize(h, program, args.method)
    except (SolverError, EncodingTooLarge) as e:
        print('analysis failed: %s' % e, file=sys.stderr)
        return 3
    finally:
        h.close()
    for report in reports:
        line, column = report.location
        print('; loop at %d:%d [%s]' % (line, column, args.method))
        print(formula_to_smt(report.summary.formula))
    return 0


def main(argv: Optional[list] = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == 'verify':
        return cmd_verify(args)
    return cmd_summarize(args)


if __name__ == '__main__':
    sys.exit(main())
