import pathlib

import pytest

from qvasr.frontend import parse, verify
from qvasr.logic import SolverHandle

BENCH_DIR = pathlib.Path(__file__).resolve().parent.parent / 'benchmarks'


@pytest.fixture(scope='session')
def solver():
    # Generous per-query deadline: a diverging query should fail the test,
    # not wedge the suite.  The handle dies on timeout, so a hit poisons
    # the rest of the session; that is acceptable for a hard failure.
    h = SolverHandle(timeout_ms=120000)
    yield h
    h.close()


@pytest.fixture(scope='session')
def bench_verdicts(solver):
    """Verdict tuples per (benchmark, method), computed once per session.

    The benchmark expectation tests and the acceptance suite both need the
    full verdict table; the heavier programs take minutes per method, so the
    runs are shared.
    """
    cache = {}

    def get(path: pathlib.Path, method: str):
        key = (str(path), method)
        if key not in cache:
            result = verify(solver, parse(path.read_text()), star=method)
            cache[key] = tuple(v.verdict for v in result.verdicts)
        return cache[key]

    return get
