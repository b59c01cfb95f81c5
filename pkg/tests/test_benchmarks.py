"""Runs every bundled benchmark and checks the verdicts frozen in its header.

Each .imp file opens with a line like

    #! expect vasr=proved,unknown vasrs=proved,unknown vasrs-prec=proved,proved

listing, per method, one verdict per assert in source order.  A second check
replays random concrete executions: an assert that fails on some run is
genuinely false, so no method may expect `proved` for it.
"""

import pathlib
import random
import re
import zlib

import pytest

from qvasr.frontend import parse, program_asserts, run_program

BENCH_DIR = pathlib.Path(__file__).resolve().parent.parent / 'benchmarks'
METHODS = ('vasr', 'vasrs', 'vasrs-prec')

_HEADER = re.compile(
    r'#!\s*expect\s+vasr=(\S+)\s+vasrs=(\S+)\s+vasrs-prec=(\S+)\s*$')


def _load_cases():
    cases = []
    for path in sorted(BENCH_DIR.glob('*.imp')):
        m = _HEADER.match(path.read_text().splitlines()[0])
        assert m is not None, '%s lacks an expectation header' % path.name
        cases.append((path, {method: tuple(m.group(k + 1).split(','))
                             for k, method in enumerate(METHODS)}))
    return cases


CASES = _load_cases()


def test_suite_size():
    assert len(CASES) >= 12


@pytest.mark.parametrize(
    'path,expected', [pytest.param(p, e, id=p.stem) for p, e in CASES])
def test_headers_cover_every_assert(path, expected):
    n = len(program_asserts(parse(path.read_text())))
    assert n >= 1
    for method in METHODS:
        assert len(expected[method]) == n


@pytest.mark.parametrize(
    'path,expected,method',
    [pytest.param(p, e, m, id='%s-%s' % (p.stem, m))
     for p, e in CASES for m in METHODS])
def test_expected_verdicts(bench_verdicts, path, expected, method):
    assert bench_verdicts(path, method) == expected[method]


@pytest.mark.parametrize(
    'path,expected', [pytest.param(p, e, id=p.stem) for p, e in CASES])
def test_runs_never_break_a_proved_assert(path, expected):
    program = parse(path.read_text())
    where = {a.location: i for i, a in enumerate(program_asserts(program))}
    base = zlib.adler32(path.name.encode())
    for trial in range(15):
        rng = random.Random(base + trial)
        initial = {name: rng.randrange(-8, 9) for name in program.variables}
        for loc in run_program(program, rng, initial, max_steps=120):
            i = where[loc]
            for method in METHODS:
                assert expected[method][i] == 'unknown', (
                    '%s assert #%d fails on a concrete run (trial %d) yet '
                    '%s expects proved' % (path.name, i, trial, method))
