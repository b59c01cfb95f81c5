"""Shared fixtures-by-hand: worked example formulas and solver checks that
are only needed by tests.

The pipeline itself keeps the right-hand side of every entailment
quantifier-free.  Tests, however, compare quantified summaries against each
other, so they lean on the solver's native quantifier support through a raw
(not ...) wrapper.
"""

from qvasr.linalg import RationalMatrix, RationalVector
from qvasr.logic import (
    Const,
    Eq,
    Exists,
    Formula,
    Lt,
    Sort,
    SolverHandle,
    TransitionFormula,
    Var,
    compose,
    declare_and_assert,
    formula_to_smt,
    free_symbols,
    identity_tf,
    mk_add,
    mk_and,
    mk_exists,
    mk_le,
    mk_mul,
    mk_or,
    negate,
    prime_var,
    substitute,
)
from qvasr.reach import QVasrs, enumerate_reachable, reach_vasrs
from qvasr.vas import QVasr, Transformer, VasrAbstraction, gamma


def entails_q(h: SolverHandle, f: Formula, g: Formula) -> bool:
    """Validity of f => g, allowing existentials on both sides.

    Refuting the negated right-hand side means universal reasoning over
    its bound variables, which diverges under plain MBQI once there are
    more than a handful; eliminate the quantifiers first in that case.
    """
    tactic = '(then qe smt)' if (has_exists(f) or has_exists(g)) else None
    with h.frame():
        syms = declare_and_assert(h, f)
        for name, sort in free_symbols(g).items():
            if name not in syms:
                h.declare(name, sort)
                syms[name] = sort
            elif syms[name] != sort:
                raise ValueError("sort clash on %r" % name)
        h.assert_text('(not %s)' % formula_to_smt(g))
        return not h.check(tactic=tactic)


def equivalent_q(h: SolverHandle, f: Formula, g: Formula) -> bool:
    return entails_q(h, f, g) and entails_q(h, g, f)


def has_exists(f: Formula) -> bool:
    if isinstance(f, Exists):
        return True
    if hasattr(f, 'args'):
        return any(has_exists(a) for a in f.args)
    return False


# The loop that shifts the back stack of a two-stack queue into the front
# stack: one pop plus one push per iteration, three memory operations, total
# size unchanged.
DEQ_VOCAB = (Var('front_len'), Var('back_len'), Var('mem_ops'), Var('size'))


def body_deq() -> TransitionFormula:
    front, back, mem, size = DEQ_VOCAB
    front_p, back_p, mem_p, size_p = (prime_var(v) for v in DEQ_VOCAB)
    formula = mk_and([
        Lt(Const(0), back),
        Eq(front_p, mk_add([front, Const(1)])),
        Eq(back_p, mk_add([back, Const(-1)])),
        Eq(mem_p, mk_add([mem, Const(3)])),
        Eq(size_p, size),
    ])
    return TransitionFormula(formula, DEQ_VOCAB)


def v_deq() -> VasrAbstraction:
    """The faithful abstraction of body_deq: identity simulation, one
    transformer incrementing (1, -1, 3, 0)."""
    return VasrAbstraction(
        RationalMatrix.identity(4),
        QVasr(4, (Transformer((1, 1, 1, 1), (1, -1, 3, 0)),)),
        DEQ_VOCAB)


def dagger_formula():
    """Closed form of iterating body_deq's transformer k times, over the
    abstract names (w, x, y, z), zero-step case included."""
    w, x, y, z = (Var(n) for n in 'wxyz')
    wp, xp, yp, zp = (prime_var(v) for v in (w, x, y, z))
    k = Var('k', Sort.INTEGER)
    steps = mk_and([
        mk_le(Const(0), k),
        Eq(wp, mk_add([w, k])),
        Eq(xp, mk_add([x, mk_mul(-1, k)])),
        Eq(yp, mk_add([y, mk_mul(3, k)])),
        Eq(zp, z),
    ])
    identity = mk_and([Eq(p, v) for v, p in
                       zip((w, x, y, z), (wp, xp, yp, zp))])
    return mk_or([mk_exists([k], steps), identity])


# The queue harness: enqueue, fast dequeue (front stack nonempty), slow
# dequeue (shifts the whole back stack first, modelled abstractly).  The
# five tracked functionals are size, back_len, mem_ops+3*back_len,
# front_len+back_len, nb_ops, in that order.  The concrete variables are
# integers, as in the source program; over the rationals the closed form
# of the reset dimension would admit spurious fractional values.
HAR_ABSTRACT = tuple(Var(n) for n in 'vwxyz')
HAR_CONCRETE = tuple(Var(n, Sort.INTEGER) for n in
                     ('front_len', 'back_len', 'mem_ops', 'size', 'nb_ops'))


def s_har() -> RationalMatrix:
    return RationalMatrix(5, 5, [
        0, 0, 0, 1, 0,
        0, 1, 0, 0, 0,
        0, 3, 1, 0, 0,
        1, 1, 0, 0, 0,
        0, 0, 0, 0, 1,
    ])


def v_har() -> QVasr:
    return QVasr(5, (
        Transformer((1, 1, 1, 1, 1), (1, 1, 4, 1, 1)),
        Transformer((1, 1, 1, 1, 1), (-1, 0, 2, -1, 1)),
        Transformer((1, 0, 1, 1, 1), (-1, 0, 2, -1, 1)),
    ))


def harness_reach_display() -> Formula:
    """Reachability of v_har pulled back through s_har, as a formula over
    the concrete queue variables with per-transformer step counts."""
    front, back, mem, size, nb = HAR_CONCRETE
    front_p, back_p, mem_p, size_p, nb_p = (prime_var(v)
                                            for v in HAR_CONCRETE)
    k1 = Var('k1', Sort.INTEGER)
    k2 = Var('k2', Sort.INTEGER)
    k3 = Var('k3', Sort.INTEGER)
    body = mk_and([
        mk_le(Const(0), k1),
        mk_le(Const(0), k2),
        mk_le(Const(0), k3),
        Eq(size_p, mk_add([size, k1, mk_mul(-1, k2), mk_mul(-1, k3)])),
        mk_or([
            mk_and([Eq(k3, Const(0)), Eq(back_p, mk_add([back, k1]))]),
            mk_and([Lt(Const(0), k3), mk_le(Const(0), back_p),
                    mk_le(back_p, k1)]),
        ]),
        Eq(mk_add([mem_p, mk_mul(3, back_p)]),
           mk_add([mem, mk_mul(3, back), mk_mul(4, k1),
                   mk_mul(2, k2), mk_mul(2, k3)])),
        Eq(mk_add([front_p, back_p]),
           mk_add([front, back, k1, mk_mul(-1, k2), mk_mul(-1, k3)])),
        Eq(nb_p, mk_add([nb, k1, k2, k3])),
    ])
    return mk_exists([k1, k2, k3], body)


# ---------------------------------------------------------------------------
# Random machines and the brute-force reachability oracle


def random_machine(rng) -> QVasrs:
    """Small random machine: d<=3, |Q|<=3, |E|<=4, entries in [-2,2]."""
    d = rng.randint(1, 3)
    nq = rng.randint(1, 3)
    edges = set()
    for _ in range(rng.randint(0, 4)):
        src = rng.randrange(nq)
        dst = rng.randrange(nq)
        reset = tuple(rng.randint(0, 1) for _ in range(d))
        add = tuple(rng.randint(-2, 2) for _ in range(d))
        edges.add((src, Transformer(reset, add), dst))
    return QVasrs(d, tuple(range(nq)), edges)


def reach_oracle_check(h: SolverHandle, machine: QVasrs, rng,
                       max_len: int = 5, max_models: int = 20):
    """Checks reach_vasrs against exhaustive enumeration, both directions.

    Soundness: every enumerated endpoint (with its run length pinned as
    the total step count) satisfies the formula.  Completeness: up to
    max_models solver models with at most max_len steps reach endpoints
    the enumeration also finds.  Returns (endpoints checked, models
    checked); raises AssertionError on any counterexample.
    """
    vocab = tuple(Var('x%d' % i) for i in range(machine.dimension))
    primed = tuple(prime_var(x) for x in vocab)
    rf = reach_vasrs(machine, vocab, expose_total=True)
    watched = {v.name: v.sort for v in rf.selector_vars()}
    watched.update((v.name, v.sort) for v in vocab + primed)

    begin_state = rng.choice(machine.states)
    start = RationalVector([rng.randint(-3, 3)
                            for _ in range(machine.dimension)])
    shortest = {}
    for state, vec, trace in enumerate_reachable(
            machine, (begin_state, start), max_len):
        key = (state, vec)
        length = len(trace.edges)
        if key not in shortest or length < shortest[key]:
            shortest[key] = length

    def selector_pins(p, q):
        pins = []
        for state in machine.states:
            pins.append(Eq(rf.begin_var(state),
                           Const(1 if state == p else 0)))
            pins.append(Eq(rf.end_var(state),
                           Const(1 if state == q else 0)))
        return pins

    checked_points = 0
    checked_models = 0
    with h.frame():
        declare_and_assert(h, rf.formula)
        for (state, vec), length in sorted(
                shortest.items(), key=lambda item: (item[1], str(item[0]))):
            pins = selector_pins(begin_state, state)
            pins.append(Eq(rf.total, Const(length)))
            pins += [Eq(x, Const(u)) for x, u in zip(vocab, start)]
            pins += [Eq(xp, Const(u)) for xp, u in zip(primed, vec)]
            with h.frame():
                h.assert_formula(mk_and(pins))
                assert h.check(), \
                    "missing run %r -> %r in %r" % (start, vec, machine)
            checked_points += 1

    with h.frame():
        declare_and_assert(h, rf.formula)
        h.assert_formula(mk_le(rf.total, Const(max_len)))
        for _ in range(max_models):
            if not h.check():
                break
            m = h.get_model(watched)
            begins = [q for q in machine.states
                      if m.value(rf.begin_var(q).name) == 1]
            ends = [q for q in machine.states
                    if m.value(rf.end_var(q).name) == 1]
            assert len(begins) == 1 and len(ends) == 1
            u = RationalVector([m.value(x.name) for x in vocab])
            v = RationalVector([m.value(xp.name) for xp in primed])
            found = enumerate_reachable(machine, (begins[0], u), max_len)
            assert any(state == ends[0] and vec == v
                       for state, vec, _ in found), \
                "spurious model %r -> %r in %r" % (u, v, machine)
            checked_models += 1
            h.assert_formula(negate(mk_and(
                [Eq(Var(name, sort), Const(m.value(name)))
                 for name, sort in watched.items()])))
    return checked_points, checked_models


# ---------------------------------------------------------------------------
# Oscillating loop: bump one counter on even turns, both on odd turns


def osc_formula() -> TransitionFormula:
    i, x = Var('i'), Var('x')
    k = Var('k', Sort.INTEGER)
    even = Exists(k, Eq(i, mk_mul(2, k)))
    odd = Exists(k, Eq(i, mk_add([mk_mul(2, k), Const(1)])))
    bump = Eq(prime_var(i), mk_add([i, Const(1)]))
    return TransitionFormula(mk_or([
        mk_and([even, bump, Eq(prime_var(x), x)]),
        mk_and([odd, bump, Eq(prime_var(x), mk_add([x, Const(1)]))]),
    ]), (i, x))


def random_tf(rng) -> TransitionFormula:
    """A small guarded loop body over (x, y): 1-2 affine branches."""
    xs = (Var('x'), Var('y'))
    branches = []
    for _ in range(rng.randrange(1, 3)):
        atoms = []
        if rng.random() < 0.7:
            v = xs[rng.randrange(2)]
            bound = Const(rng.randrange(-2, 3))
            atoms.append(mk_le(bound, v) if rng.random() < 0.5
                         else mk_le(v, bound))
        for v in xs:
            c = Const(rng.randrange(-2, 3))
            if rng.random() < 0.3:
                atoms.append(Eq(prime_var(v), c))
            else:
                atoms.append(Eq(prime_var(v), mk_add([v, c])))
        branches.append(mk_and(atoms))
    return TransitionFormula(mk_or(branches), xs)


def tf_power(h: SolverHandle, f: TransitionFormula,
             k: int) -> TransitionFormula:
    out = identity_tf(f.vocabulary)
    for _ in range(k):
        out = compose(h, out, f)
    return out


def vasrs_pair_sound(h: SolverHandle, f: TransitionFormula, a) -> bool:
    """Does every concrete step from p into q stay inside the p -> q edges?"""
    to_primed = {v.name: prime_var(v) for v in a.vocabulary}
    for i, p in enumerate(a.machine.predicates):
        for j, q in enumerate(a.machine.predicates):
            step = mk_and([p, f.formula, substitute(q, to_primed)])
            transformers = [t for s, t, d in a.machine.edges
                            if (s, d) == (i, j)]
            local = VasrAbstraction(
                a.sim, QVasr(a.dimension, transformers), a.vocabulary)
            if not entails_q(h, step, gamma(local).formula):
                return False
    return True
