"""Tests for abstractions: coherence, images, cube abstraction, joins, and
the model-guided abstraction loop."""

import random
from fractions import Fraction

import pytest

from qvasr.linalg import RationalMatrix, RationalVector, in_rowspace, rank
from qvasr.logic import (
    Const,
    Eq,
    FALSE,
    Lt,
    TRUE,
    TransitionFormula,
    Var,
    entails,
    is_sat,
    linear_term,
    mk_add,
    mk_and,
    mk_or,
    prime_var,
)
from qvasr.vas import (
    QVasr,
    Transformer,
    VasrAbstraction,
    abstract_vasr,
    alpha_hat,
    bottom_abstraction,
    check_simulation,
    coherence_classes,
    format_abstraction,
    gamma,
    image,
    is_normal,
    lub,
    top_abstraction,
)

from common import DEQ_VOCAB, body_deq, equivalent_q, v_deq

X = Var('x')
Y = Var('y')
XP = prime_var(X)
YP = prime_var(Y)


def plus(t, c):
    return mk_add([t, Const(c)])


def mat(rows, cols=None):
    return RationalMatrix.from_rows([[Fraction(x) for x in r] for r in rows],
                                    cols=cols)


class TestTransformer:
    def test_validation(self):
        with pytest.raises(ValueError):
            Transformer((0, 2), (1, 1))
        with pytest.raises(ValueError):
            Transformer((0,), (1, 1))

    def test_apply(self):
        t = Transformer((0, 1), (5, -1))
        assert t.apply(RationalVector([7, 10])) == RationalVector([5, 9])

    def test_qvasr_dedup(self):
        t = Transformer((1,), (2,))
        v = QVasr(1, (t, Transformer((1,), (2,))))
        assert len(v.transformers) == 1
        with pytest.raises(ValueError):
            QVasr(2, (t,))


class TestCoherence:
    def test_split_by_reset(self):
        v = QVasr(2, (Transformer((0, 1), (0, 0)),))
        assert coherence_classes(v) == ((0,), (1,))

    def test_agreeing_transformers_share(self):
        v = QVasr(2, (Transformer((0, 0), (1, 2)), Transformer((1, 1), (0, 0))))
        assert coherence_classes(v) == ((0, 1),)

    def test_pairwise_table(self):
        v = QVasr(3, (Transformer((0, 1, 1), (0, 0, 0)),
                      Transformer((0, 0, 1), (0, 0, 0))))
        assert coherence_classes(v) == ((0,), (1,), (2,))

    def test_no_transformers_single_class(self):
        assert coherence_classes(QVasr(3, ())) == ((0, 1, 2),)

    def test_zero_dimension(self):
        assert coherence_classes(QVasr(0, (Transformer((), ()),))) == ()


class TestImage:
    def test_identity(self):
        v = QVasr(2, (Transformer((1, 0), (2, 3)),))
        assert image(v, RationalMatrix.identity(2)) == v

    def test_projection(self):
        v = QVasr(2, (Transformer((1, 0), (2, 3)),))
        assert image(v, mat([[0, 1]])) == QVasr(1, (Transformer((0,), (3,)),))

    def test_combination(self):
        v = QVasr(2, (Transformer((1, 1), (1, -1)),))
        assert image(v, mat([[1, 1]])) == QVasr(1, (Transformer((1,), (0,)),))

    def test_zero_row_rejected(self):
        v = QVasr(2, (Transformer((1, 1), (1, 1)),))
        with pytest.raises(ValueError):
            image(v, mat([[0, 0]]))

    def test_incoherent_rejected(self):
        v = QVasr(2, (Transformer((1, 0), (1, 1)),))
        with pytest.raises(ValueError):
            image(v, mat([[1, 1]]))

    def test_merges_duplicates(self):
        v = QVasr(2, (Transformer((1, 1), (1, 0)), Transformer((1, 1), (0, 1))))
        assert image(v, mat([[1, 1]])) == QVasr(1, (Transformer((1,), (1,)),))


class TestGamma:
    def test_identity_system(self):
        a = VasrAbstraction(RationalMatrix.identity(1),
                            QVasr(1, (Transformer((1,), (0,)),)), (X,))
        assert gamma(a).formula == Eq(XP, X)

    def test_v_deq(self):
        front, back, mem, size = DEQ_VOCAB
        expected = mk_and([
            Eq(prime_var(front), plus(front, 1)),
            Eq(prime_var(back), plus(back, -1)),
            Eq(prime_var(mem), plus(mem, 3)),
            Eq(prime_var(size), size),
        ])
        assert gamma(v_deq()).formula == expected

    def test_reset_combination(self):
        a = VasrAbstraction(mat([[1, 1]]),
                            QVasr(1, (Transformer((0,), (5,)),)), (X, Y))
        assert gamma(a).formula == Eq(mk_add([XP, YP]), Const(5))

    def test_empty_and_top(self):
        assert gamma(bottom_abstraction((X,))).formula == FALSE
        assert gamma(top_abstraction((X,))).formula == TRUE

    def test_body_deq_simulated_by_v_deq(self, solver):
        assert entails(solver, body_deq().formula, gamma(v_deq()).formula)
        assert check_simulation(solver, body_deq(), v_deq())


class TestCheckSimulation:
    def test_bottom_refutes(self, solver):
        f = TransitionFormula(Eq(XP, plus(X, 1)), (X,))
        assert not check_simulation(solver, f, bottom_abstraction((X,)))

    def test_false_simulated_by_anything(self, solver):
        f = TransitionFormula(FALSE, (X,))
        assert check_simulation(solver, f, bottom_abstraction((X,)))
        assert check_simulation(solver, f, top_abstraction((X,)))

    def test_vocabulary_mismatch(self, solver):
        f = TransitionFormula(TRUE, (X, Y))
        with pytest.raises(ValueError):
            check_simulation(solver, f, top_abstraction((X,)))


class TestAlphaHat:
    def test_body_deq(self, solver):
        a = alpha_hat(solver, body_deq().formula, DEQ_VOCAB)
        assert a.sim == RationalMatrix.identity(4)
        assert a.vasr == QVasr(4, (Transformer((1, 1, 1, 1), (1, -1, 3, 0)),))
        assert check_simulation(solver, body_deq(), a)

    def test_reset_and_increment(self, solver):
        c = mk_and([Eq(XP, Const(5)), Eq(YP, plus(Y, 1))])
        a = alpha_hat(solver, c, (X, Y))
        assert a.sim == RationalMatrix.identity(2)
        assert a.vasr == QVasr(2, (Transformer((0, 1), (5, 1)),))

    def test_no_equalities_gives_top(self, solver):
        a = alpha_hat(solver, Lt(XP, X), (X,))
        assert a.sim.rows == 0
        assert a.vasr == QVasr(0, (Transformer((), ()),))
        assert gamma(a).formula == TRUE

    def test_term_both_reset_and_incremented(self, solver):
        # x' = x+y, y' = 2y, w' = w, w = z+1, z' = w: the term z - w is
        # reset to 0 and also always increases by 1, so it shows up in two
        # dimensions with different reset bits.
        w, z = Var('w'), Var('z')
        vocab = (X, Y, w, z)
        wp, zp = prime_var(w), prime_var(z)
        c = mk_and([
            Eq(XP, mk_add([X, Y])),
            Eq(YP, linear_term([2], [Y])),
            Eq(wp, w),
            Eq(w, plus(z, 1)),
            Eq(zp, w),
        ])
        a = alpha_hat(solver, c, vocab)
        assert a.sim == mat([[0, 0, 1, -1],
                             [1, -1, 0, 0],
                             [0, 0, 1, 0],
                             [0, 0, 0, 1]])
        assert a.vasr == QVasr(4, (Transformer((0, 1, 1, 1), (0, 0, 0, 1)),))
        assert is_normal(a)
        assert check_simulation(solver, TransitionFormula(c, vocab), a)
        # Same abstraction with the redundant basis choice (z - w tracked in
        # the last increment dimension): simulation-equivalent.
        rebased = VasrAbstraction(
            mat([[0, 0, -1, 1], [1, -1, 0, 0], [0, 0, 1, 0], [0, 0, -1, 1]]),
            QVasr(4, (Transformer((0, 1, 1, 1), (0, 0, 0, 1)),)), vocab)
        assert equivalent_q(solver, gamma(a).formula, gamma(rebased).formula)

    def test_unsatisfiable_rejected(self, solver):
        with pytest.raises(ValueError):
            alpha_hat(solver, Lt(X, X), (X,))

    def test_normal_by_construction(self, solver):
        rng = random.Random(200)
        for _ in range(10):
            c = rand_conjunctive(rng)
            if is_sat(solver, c) is None:
                continue
            assert is_normal(alpha_hat(solver, c, (X, Y)))


def rand_linear(rng, variables):
    return linear_term([rng.randint(-2, 2) for _ in variables], variables,
                       rng.randint(-3, 3))


def rand_conjunctive(rng):
    """Random conjunction of equalities and strict inequalities over
    (x, y, x', y')."""
    variables = [X, Y, XP, YP]
    atoms = []
    for _ in range(rng.randint(1, 4)):
        cls = Eq if rng.random() < 0.6 else Lt
        atoms.append(cls(rand_linear(rng, variables), rand_linear(rng, variables)))
    return mk_and(atoms)


def rand_transition(rng):
    """Random quantifier-free transition formula with disjunctions."""
    def leaf():
        cls = Eq if rng.random() < 0.6 else Lt
        return cls(rand_linear(rng, [X, Y, XP, YP]),
                   rand_linear(rng, [X, Y, XP, YP]))

    def node(depth):
        if depth == 0 or rng.random() < 0.35:
            return leaf()
        op = mk_and if rng.random() < 0.55 else mk_or
        return op([node(depth - 1) for _ in range(rng.randint(2, 3))])

    return TransitionFormula(node(2), (X, Y))


def rand_normal_abstraction(rng, vocabulary):
    """Random normal abstraction: full-row-rank simulation plus a few
    random transformers."""
    n = len(vocabulary)
    d = rng.randint(1, n)
    while True:
        sim = mat([[rng.randint(-2, 2) for _ in range(n)] for _ in range(d)])
        if rank(sim) == d:
            break
    transformers = []
    for _ in range(rng.randint(1, 3)):
        transformers.append(Transformer(
            tuple(rng.randint(0, 1) for _ in range(d)),
            tuple(Fraction(rng.randint(-3, 3)) for _ in range(d))))
    a = VasrAbstraction(sim, QVasr(d, transformers), vocabulary)
    assert is_normal(a)
    return a


def rand_coherent_matrix(rng, a, max_rows=3):
    """Random zero-row-free matrix whose rows respect a's coherence."""
    classes = coherence_classes(a.vasr)
    rows = []
    for _ in range(rng.randint(1, max_rows)):
        cls = classes[rng.randrange(len(classes))]
        row = [Fraction(0)] * a.dimension
        while all(x == 0 for x in row):
            for j in cls:
                row[j] = Fraction(rng.randint(-2, 2))
        rows.append(row)
    return RationalMatrix.from_rows(rows, cols=a.dimension)


class TestLub:
    def test_worked_example(self, solver):
        vocab = (X, Y)
        a1 = VasrAbstraction(RationalMatrix.identity(2),
                             QVasr(2, (Transformer((1, 1), (1, 0)),)), vocab)
        a2 = VasrAbstraction(mat([[1, 0], [1, 1]]),
                             QVasr(2, (Transformer((0, 1), (0, 0)),)), vocab)
        joined, t1, t2 = lub(a1, a2)
        assert joined.sim == mat([[1, 0], [1, 1]])
        assert joined.vasr == QVasr(2, (Transformer((1, 1), (1, 1)),
                                        Transformer((0, 1), (0, 0))))
        f1 = mk_and([Eq(XP, plus(X, 1)), Eq(YP, Y)])
        f2 = mk_and([Eq(XP, Const(0)), Eq(YP, mk_add([Y, X]))])
        assert entails(solver, f1, gamma(joined).formula)
        assert entails(solver, f2, gamma(joined).formula)

    def test_idempotent_up_to_equivalence(self, solver):
        a = alpha_hat(solver, Eq(XP, plus(X, 1)), (X,))
        joined, _, _ = lub(a, a)
        assert equivalent_q(solver, gamma(joined).formula, gamma(a).formula)

    def test_top_absorbs(self):
        a = VasrAbstraction(RationalMatrix.identity(1),
                            QVasr(1, (Transformer((1,), (1,)),)), (X,))
        joined, _, _ = lub(a, top_abstraction((X,)))
        assert joined.dimension == 0
        assert gamma(joined).formula == TRUE

    def test_bottom_is_unit(self, solver):
        a = VasrAbstraction(RationalMatrix.identity(2),
                            QVasr(2, (Transformer((0, 1), (3, -2)),)), (X, Y))
        joined, _, _ = lub(bottom_abstraction((X, Y)), a)
        assert equivalent_q(solver, gamma(joined).formula, gamma(a).formula)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            lub(bottom_abstraction((X,)), bottom_abstraction((X, Y)))

    def test_non_normal_rejected(self):
        bad = VasrAbstraction(mat([[1, 0], [2, 0]]), QVasr(2, ()), (X, Y))
        assert not is_normal(bad)
        with pytest.raises(ValueError):
            lub(bad, bottom_abstraction((X, Y)))

    def test_upper_bound_witnesses(self):
        rng = random.Random(201)
        vocab = (X, Y, Var('z'))
        for _ in range(25):
            a1 = rand_normal_abstraction(rng, vocab)
            a2 = rand_normal_abstraction(rng, vocab)
            joined, t1, t2 = lub(a1, a2)
            assert t1 * a1.sim == joined.sim
            assert t2 * a2.sim == joined.sim
            assert image(a1.vasr, t1).transformers <= joined.vasr.transformers
            assert image(a2.vasr, t2).transformers <= joined.vasr.transformers
            assert is_normal(joined)

    def test_leastness_against_coherent_quotients(self):
        # A third upper bound built by projecting the join through a random
        # coherent matrix must itself be reachable from the join: recover a
        # simulation row by row from the per-class linear systems.
        rng = random.Random(202)
        vocab = (X, Y)
        for _ in range(25):
            a1 = rand_normal_abstraction(rng, vocab)
            a2 = rand_normal_abstraction(rng, vocab)
            joined, _, _ = lub(a1, a2)
            if joined.dimension == 0:
                continue
            t = rand_coherent_matrix(rng, joined)
            upper = VasrAbstraction(t * joined.sim, image(joined.vasr, t),
                                    vocab)
            classes = coherence_classes(joined.vasr)
            recovered = []
            for i in range(upper.sim.rows):
                target = upper.sim.row(i)
                for cls in classes:
                    sol = in_rowspace(target, joined.sim.select_rows(cls))
                    if sol is not None:
                        row = [Fraction(0)] * joined.dimension
                        for pos, j in enumerate(cls):
                            row[j] = sol[pos]
                        recovered.append(row)
                        break
                else:
                    pytest.fail("no class solves a row of the upper bound")
            rec = RationalMatrix.from_rows(recovered, cols=joined.dimension)
            assert rec * joined.sim == upper.sim
            assert image(joined.vasr, rec).transformers <= upper.vasr.transformers


class TestBestness:
    def test_projections_remain_simulations(self, solver):
        rng = random.Random(203)
        checked = 0
        while checked < 8:
            c = rand_conjunctive(rng)
            if is_sat(solver, c) is None:
                continue
            a = alpha_hat(solver, c, (X, Y))
            if a.dimension == 0:
                checked += 1
                continue
            t = rand_coherent_matrix(rng, a)
            projected = VasrAbstraction(t * a.sim, image(a.vasr, t), (X, Y))
            assert check_simulation(
                solver, TransitionFormula(c, (X, Y)), projected)
            checked += 1

    def test_hand_simulation_factors_through(self, solver):
        # Any hand-built abstraction of body_deq factors through the best
        # one: here (x, y) tracks (front_len + back_len, mem_ops).
        a = alpha_hat(solver, body_deq().formula, DEQ_VOCAB)
        handmade = VasrAbstraction(
            mat([[1, 1, 0, 0], [0, 0, 1, 0]]),
            QVasr(2, (Transformer((1, 1), (0, 3)),)), DEQ_VOCAB)
        assert check_simulation(solver, body_deq(), handmade)
        rows = []
        for i in range(handmade.sim.rows):
            sol = in_rowspace(handmade.sim.row(i), a.sim)
            assert sol is not None
            rows.append(list(sol.entries))
        t = RationalMatrix.from_rows(rows, cols=a.dimension)
        assert t * a.sim == handmade.sim
        assert image(a.vasr, t) == handmade.vasr


class TestAbstractVasr:
    def test_body_deq(self, solver):
        a = abstract_vasr(solver, body_deq())
        g = gamma(a).formula
        assert entails(solver, g, gamma(v_deq()).formula)
        assert entails(solver, gamma(v_deq()).formula, g)

    def test_two_cubes(self, solver):
        f = TransitionFormula(
            mk_or([Eq(XP, plus(X, 1)), Eq(XP, plus(X, 2))]), (X,))
        a = abstract_vasr(solver, f)
        assert a.sim == mat([[1]])
        assert a.vasr == QVasr(1, (Transformer((1,), (1,)),
                                   Transformer((1,), (2,))))

    def test_false_gives_bottom(self, solver):
        f = TransitionFormula(FALSE, (X, Y))
        a = abstract_vasr(solver, f)
        assert a == bottom_abstraction((X, Y))

    def test_soundness_on_random_formulas(self, solver):
        rng = random.Random(204)
        for _ in range(12):
            f = rand_transition(rng)
            a = abstract_vasr(solver, f)
            assert check_simulation(solver, f, a)
            assert is_normal(a)

    def test_deterministic(self):
        from qvasr.logic import SolverHandle
        f = TransitionFormula(
            mk_or([mk_and([Eq(XP, plus(X, 1)), Eq(YP, Y)]),
                   mk_and([Eq(XP, Const(0)), Eq(YP, plus(Y, 1))])]), (X, Y))
        results = []
        for _ in range(2):
            with SolverHandle() as h:
                results.append(abstract_vasr(h, f))
        assert results[0] == results[1]

    def test_iteration_cap(self, solver):
        f = TransitionFormula(
            mk_or([Eq(XP, plus(X, 1)), Eq(XP, plus(X, 2))]), (X,))
        with pytest.raises(RuntimeError):
            abstract_vasr(solver, f, max_cubes=1)


class TestFormatting:
    def test_dump_is_stable(self):
        text = format_abstraction(v_deq())
        assert 'front_len' in text
        assert 'reset=[1, 1, 1, 1]' in text
        assert format_abstraction(v_deq()) == text
